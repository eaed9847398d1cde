"""Past-future aggregation with learned temporal smoothing.

A GRU rolls over the observed frames followed by the anticipated ones; a
GRU-FC-ReLU-FC classifier turns its last state into independent per-class
probabilities ``p_c``. A two-layer weight generator maps the current frame
to a 2-way softmax ``w`` that blends ``p_c`` with the previous frame's output:
``p_t = w[0] * p_c + w[1] * p_{t-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    GruCellParams,
    LinearParams,
    ShapeError,
    kernels,
    relu,
    sigmoid,
    softmax,
    tape as tp,
)
from .numerics.tape import Tape

SMOOTHING_MODES = ("learned", "uniform", "none")
EPS = 1e-12


@dataclass
class PfaParams:
    agg_gru: GruCellParams
    cls1: LinearParams
    cls2: LinearParams
    wgen_f: LinearParams
    wgen_g: LinearParams

    def __post_init__(self):
        Hp = self.agg_gru.hidden_size
        D = self.agg_gru.input_size
        if self.cls1.in_features != Hp or self.cls2.in_features != self.cls1.out_features:
            raise ShapeError("classifier head does not match aggregation GRU")
        if self.wgen_f.in_features != D or self.wgen_g.in_features != self.wgen_f.out_features:
            raise ShapeError("weight generator does not match feature size")
        if self.wgen_g.out_features != 2:
            raise ShapeError("weight generator must output 2 logits")

    @property
    def feature_size(self) -> int:
        return self.agg_gru.input_size

    @property
    def hidden_size(self) -> int:
        return self.agg_gru.hidden_size

    @property
    def num_outputs(self) -> int:
        return self.cls2.out_features

    @classmethod
    def init(cls, D: int, Hp: int, num_outputs: int, rng: np.random.Generator,
             cls_hidden: int = 256, wgen_hidden: int = 64) -> PfaParams:
        return cls(
            GruCellParams.init(D, Hp, rng),
            LinearParams.init(Hp, cls_hidden, rng),
            LinearParams.init(cls_hidden, num_outputs, rng),
            LinearParams.init(D, wgen_hidden, rng),
            LinearParams.init(wgen_hidden, 2, rng),
        )

    @classmethod
    def zeros(cls, D: int, Hp: int, num_outputs: int, cls_hidden: int = 256, wgen_hidden: int = 64) -> PfaParams:
        return cls(
            GruCellParams.zeros(D, Hp),
            LinearParams.zeros(Hp, cls_hidden),
            LinearParams.zeros(cls_hidden, num_outputs),
            LinearParams.zeros(D, wgen_hidden),
            LinearParams.zeros(wgen_hidden, 2),
        )


@dataclass
class SmoothState:
    prev_probs: np.ndarray

    @classmethod
    def initial(cls, num_outputs: int) -> SmoothState:
        return cls(np.full(num_outputs, 0.5))


def head(h, p: PfaParams) -> np.ndarray:
    """Classifier head on aggregation hidden state(s)."""
    z = relu(np.asarray(h) @ p.cls1.weight.T + p.cls1.bias)
    return sigmoid(z @ p.cls2.weight.T + p.cls2.bias)


def classify(features, p: PfaParams) -> np.ndarray:
    """Raw class probabilities after rolling over ``features`` from a zero state.

    ``features`` is (T, D) or (T, B, D): observed frames then generated ones.
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[-1] != p.feature_size:
        raise ShapeError(f"classify expects (T, {p.feature_size}) features, got {np.shape(features)}")
    if x.shape[0] == 0:
        raise ValueError("classify needs a nonempty sequence")
    h0 = np.zeros((x.shape[1], p.hidden_size))
    hs, _ = kernels.gru_forward(x @ p.agg_gru.w_in.T + p.agg_gru.bias, h0, p.agg_gru.w_rec)
    out = head(hs[-1], p)
    return out[0] if single else out


def smooth_weights(x_cur, p: PfaParams) -> np.ndarray:
    """Blend weights ``(w_current, w_previous)`` from the current frame's feature."""
    x = np.asarray(x_cur, dtype=np.float64)
    if x.shape[-1] != p.feature_size:
        raise ShapeError(f"smooth_weights expects dim {p.feature_size}, got {x.shape}")
    z = relu(x @ p.wgen_f.weight.T + p.wgen_f.bias)
    return softmax(z @ p.wgen_g.weight.T + p.wgen_g.bias, axis=-1)


def aggregate(p_c, prev, w) -> np.ndarray:
    """Convex blend of current and previous probabilities."""
    p_c = np.asarray(p_c, dtype=np.float64)
    prev = np.asarray(prev.prev_probs if isinstance(prev, SmoothState) else prev, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if p_c.shape != prev.shape or w.shape[-1] != 2 or w.shape[:-1] != p_c.shape[:-1]:
        raise ShapeError(f"aggregate: p_c {p_c.shape}, prev {prev.shape}, w {w.shape}")
    return w[..., :1] * p_c + w[..., 1:] * prev


def uniform_smoothing_baseline(p_c, prev) -> np.ndarray:
    p_c = np.asarray(p_c, dtype=np.float64)
    return aggregate(p_c, prev, np.full(p_c.shape[:-1] + (2,), 0.5))


def window_smoothing_baseline(history, window: int) -> np.ndarray:
    """Causal per-class mean over the last ``window`` raw predictions.

    ``history`` is (t, C) with the current prediction last.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    h = np.asarray(history, dtype=np.float64)
    if h.ndim != 2 or len(h) == 0:
        raise ShapeError(f"history must be a nonempty (t, C) array, got {h.shape}")
    return h[-window:].mean(axis=0)


def pfa_loss(p_t, y_t, eps: float = EPS) -> float:
    """Per-class binary cross-entropy averaged over the K+1 outputs."""
    p = np.clip(np.asarray(p_t, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(y_t, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"pfa_loss: p {p.shape} vs y {y.shape}")
    return float(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / y.shape[-1])


def blend(p_c, prev, x_cur, p: PfaParams, mode: str) -> np.ndarray:
    """Apply the configured smoothing to raw probabilities."""
    if mode == "learned":
        return aggregate(p_c, prev, smooth_weights(x_cur, p))
    if mode == "uniform":
        return uniform_smoothing_baseline(p_c, prev)
    if mode == "none":
        return np.asarray(p_c, dtype=np.float64)
    raise ValueError(f"unknown smoothing mode {mode!r}")


@dataclass
class PfaStepResult:
    loss: float
    grads: dict[str, np.ndarray]
    probs: np.ndarray  # (B, K+1) smoothed output
    raw: np.ndarray  # (B, K+1) classifier output


def pfa_step(features, x_cur, prev, y, p: PfaParams, mode: str = "learned") -> PfaStepResult:
    """Loss and PfaParams gradients for one frame.

    ``features`` (T, B, D) are constants: gradients stop at the input, so the
    anticipated part does not train the anticipation module. ``prev`` is the
    previous smoothed output, also a constant. The loss is averaged over the
    batch.
    """
    if mode not in SMOOTHING_MODES:
        raise ValueError(f"unknown smoothing mode {mode!r}")
    x = np.asarray(features, dtype=np.float64)
    T, B, D = x.shape
    t = Tape()
    g = t.gru("agg_gru", p.agg_gru)
    c1, c2 = t.linear("cls1", p.cls1), t.linear("cls2", p.cls2)
    wf, wg = t.linear("wgen_f", p.wgen_f), t.linear("wgen_g", p.wgen_g)
    xp = tp.linear(t.const(x), g["w_in"], g["bias"])
    hs = tp.gru_roll(xp, t.const(np.zeros((B, p.hidden_size))), g["w_rec"])
    z = tp.relu(tp.linear(hs[-1], c1["weight"], c1["bias"]))
    p_c = tp.sigmoid(tp.linear(z, c2["weight"], c2["bias"]))
    prev = np.broadcast_to(np.asarray(prev, dtype=np.float64), p_c.shape)
    if mode == "learned":
        wz = tp.relu(tp.linear(t.const(x_cur), wf["weight"], wf["bias"]))
        w = tp.softmax(tp.linear(wz, wg["weight"], wg["bias"]))
        p_t = w[:, 0:1] * p_c + w[:, 1:2] * prev
    elif mode == "uniform":
        p_t = p_c * 0.5 + 0.5 * prev
    else:
        p_t = p_c
    loss = tp.binary_cross_entropy(p_t, y) * (1.0 / B)
    return PfaStepResult(float(loss.value), t.backward(loss), p_t.value, p_c.value)
