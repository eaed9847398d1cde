"""Future feature anticipation trained with a cycle-consistency loss.

A forward GRU encodes observed frames and, through a shared linear decoder,
rolls out future features by feeding each decoded vector back in. A backward
GRU does the same going back in time. Training closes the loop in two
phases:

1. past -> forward rollout of ``l_g`` futures -> backward rollout over the
   observed span, compared to the real past;
2. reversed past -> backward rollout of ``l_g`` earlier frames -> forward
   rollout over the observed span, compared again.

All sequences are time-major: ``(T, D)`` for one sequence or ``(T, B, D)``
for a batch. Public inputs are always in temporal order; the backward GRU
consumes its input latest frame first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import GruCellParams, LinearParams, ShapeError, kernels, tape as tp
from .numerics.tape import Tape, Var


@dataclass
class AnticipationParams:
    fgru: GruCellParams
    bgru: GruCellParams
    dec: LinearParams

    def __post_init__(self):
        D, H = self.fgru.input_size, self.fgru.hidden_size
        if (self.bgru.input_size, self.bgru.hidden_size) != (D, H):
            raise ShapeError("forward and backward encoders must share (D, H)")
        if (self.dec.in_features, self.dec.out_features) != (H, D):
            raise ShapeError(f"decoder must map H={H} to D={D}")

    @property
    def feature_size(self) -> int:
        return self.fgru.input_size

    @property
    def hidden_size(self) -> int:
        return self.fgru.hidden_size

    @classmethod
    def init(cls, D: int, H: int, rng: np.random.Generator) -> AnticipationParams:
        return cls(GruCellParams.init(D, H, rng), GruCellParams.init(D, H, rng), LinearParams.init(H, D, rng))

    @classmethod
    def zeros(cls, D: int, H: int) -> AnticipationParams:
        return cls(GruCellParams.zeros(D, H), GruCellParams.zeros(D, H), LinearParams.zeros(H, D))


@dataclass
class AnticipationOutput:
    generated: np.ndarray  # (n, D) or (n, B, D), in generation order
    final_hidden: np.ndarray  # (H,) or (B, H)


@dataclass
class PhaseResult:
    loss: float
    grads: dict[str, np.ndarray]
    generated: np.ndarray  # intermediate rollout, temporal order, (l_g, B, D)


def _batched(x, D: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[-1] != D:
        raise ShapeError(f"expected (T, {D}) or (T, B, {D}) features, got {x.shape}")
    return x, single


def encode(x: np.ndarray, cell: GruCellParams, h0: np.ndarray | None = None) -> np.ndarray:
    """Final hidden state after consuming ``x`` (T, B, D) in the given order."""
    B = x.shape[1]
    h = np.zeros((B, cell.hidden_size)) if h0 is None else h0
    if x.shape[0] == 0:
        return h
    hs, _ = kernels.gru_forward(x @ cell.w_in.T + cell.bias, h, cell.w_rec)
    return hs[-1]


def rollout(h: np.ndarray, cell: GruCellParams, dec: LinearParams, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode-and-feed-back ``steps`` times from ``h`` (B, H).

    Returns ``(generated (steps, B, D), final hidden (B, H))``.
    """
    if steps == 0:
        return np.zeros((0, h.shape[0], dec.out_features)), h
    hs, xs, _ = kernels.gru_generate(h, cell.w_in, cell.bias, cell.w_rec, dec.weight, dec.bias, steps)
    return xs, hs[-1]


def _unbatch(out: AnticipationOutput, single: bool) -> AnticipationOutput:
    if single:
        return AnticipationOutput(out.generated[:, 0], out.final_hidden[0])
    return out


def forward_pass(x_obs, l_g: int, p: AnticipationParams) -> AnticipationOutput:
    """Encode ``x_obs`` with the forward GRU from a zero state, then generate ``l_g`` futures."""
    if l_g < 0:
        raise ValueError("l_g must be >= 0")
    x, single = _batched(x_obs, p.feature_size)
    if x.shape[0] < 1:
        raise ValueError("forward_pass needs at least one observed frame")
    h = encode(x, p.fgru)
    gen, h = rollout(h, p.fgru, p.dec, l_g)
    return _unbatch(AnticipationOutput(gen, h), single)


def backward_pass(x_in, n_gen: int, p: AnticipationParams) -> AnticipationOutput:
    """Encode ``x_in`` latest-first with the backward GRU, then generate ``n_gen`` earlier frames.

    ``x_in`` is in temporal order and may be empty. ``generated[k]`` is the
    estimate of the frame ``k + 1`` steps before the earliest input.
    """
    if n_gen < 0:
        raise ValueError("n_gen must be >= 0")
    x, single = _batched(x_in, p.feature_size)
    h = encode(x[::-1], p.bgru)
    gen, h = rollout(h, p.bgru, p.dec, n_gen)
    return _unbatch(AnticipationOutput(gen, h), single)


def cycle_loss(x_ref, x_rec) -> float:
    """Sum of squared entrywise differences, no averaging."""
    a = np.asarray(x_ref, dtype=np.float64)
    b = np.asarray(x_rec, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cycle_loss: {a.shape} vs {b.shape}")
    d = a - b
    return float((d * d).sum())


# -- differentiable versions ---------------------------------------------------


def _tape_encode(t: Tape, cell: dict[str, Var], x: Var) -> Var:
    B = x.shape[1]
    h0 = t.const(np.zeros((B, cell["w_rec"].shape[1])))
    if x.shape[0] == 0:
        return h0
    xp = tp.linear(x, cell["w_in"], cell["bias"])
    return tp.gru_roll(xp, h0, cell["w_rec"])[-1]


def _tape_rollout(t: Tape, h: Var, cell: dict[str, Var], dec: dict[str, Var], steps: int) -> Var:
    if steps == 0:
        return t.const(np.zeros((0, h.shape[0], dec["weight"].shape[0])))
    hs = tp.gru_generate(h, cell, dec, steps)
    prev = tp.concat([h[None], hs[:-1]], axis=0) if steps > 1 else h[None]
    return tp.linear(prev, dec["weight"], dec["bias"])


def _register(t: Tape, p: AnticipationParams):
    return t.gru("fgru", p.fgru), t.gru("bgru", p.bgru), t.linear("dec", p.dec)


def phase1_step(x, l_g: int, p: AnticipationParams) -> PhaseResult:
    """Forward rollout into the future, backward rollout over the past, L2 to the past.

    The loss is averaged over the batch axis (sum over frames and features).
    """
    xb, _ = _batched(x, p.feature_size)
    T, B, _ = xb.shape
    if T < 1:
        raise ValueError("phase1_step needs at least one frame")
    t = Tape()
    f, b, dec = _register(t, p)
    xv = t.const(xb)
    future = _tape_rollout(t, _tape_encode(t, f, xv), f, dec, l_g)
    hb = _tape_encode(t, b, tp.reverse(future)) if l_g else t.const(np.zeros((B, p.hidden_size)))
    rec = _tape_rollout(t, hb, b, dec, T)  # x'_{T-1}, ..., x'_0
    loss = tp.squared_error(tp.reverse(rec), xv) * (1.0 / B)
    return PhaseResult(float(loss.value), t.backward(loss), future.value)


def phase2_step(x, l_g: int, p: AnticipationParams) -> PhaseResult:
    """Mirror of :func:`phase1_step` starting from the reversed past."""
    xb, _ = _batched(x, p.feature_size)
    T, B, _ = xb.shape
    if T < 1:
        raise ValueError("phase2_step needs at least one frame")
    t = Tape()
    f, b, dec = _register(t, p)
    rx = t.const(xb[::-1].copy())
    earlier = _tape_rollout(t, _tape_encode(t, b, rx), b, dec, l_g)  # x̄_{-1}, ..., x̄_{-l_g}
    hf = _tape_encode(t, f, tp.reverse(earlier)) if l_g else t.const(np.zeros((B, p.hidden_size)))
    rec = _tape_rollout(t, hf, f, dec, T)  # x'_0, ..., x'_{T-1}
    loss = tp.squared_error(tp.reverse(rec), rx) * (1.0 / B)
    return PhaseResult(float(loss.value), t.backward(loss), earlier.value[::-1].copy())
