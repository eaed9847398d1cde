"""Parameter containers and plain (non-recording) layer functions."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand dimensions disagree."""


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in) if fan_in > 0 else 0.0
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class LinearParams:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"linear weight {self.weight.shape} / bias {self.bias.shape}")

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> LinearParams:
        return cls(_uniform(rng, (n_out, n_in), n_in), np.zeros(n_out))

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> LinearParams:
        return cls(np.zeros((n_out, n_in)), np.zeros(n_out))


@dataclass
class GruCellParams:
    """GRU weights stacked in gate order [update | reset | candidate].

    ``w_in`` is (3H, D), ``w_rec`` is (3H, H), ``bias`` is (3H,). The per-gate
    blocks are available as views through :meth:`gate`.
    """

    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        h3 = self.w_in.shape[0]
        if (
            self.w_in.ndim != 2
            or h3 % 3
            or self.w_rec.shape != (h3, h3 // 3)
            or self.bias.shape != (h3,)
        ):
            raise ShapeError(
                f"gru w_in {self.w_in.shape} / w_rec {self.w_rec.shape} / bias {self.bias.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.w_in.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_rec.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(W, U, b)`` views for ``"update"``, ``"reset"`` or ``"candidate"``."""
        k = ("update", "reset", "candidate").index(name)
        H = self.hidden_size
        sl = slice(k * H, (k + 1) * H)
        return self.w_in[sl], self.w_rec[sl], self.bias[sl]

    @classmethod
    def init(cls, n_in: int, hidden: int, rng: np.random.Generator) -> GruCellParams:
        return cls(
            _uniform(rng, (3 * hidden, n_in), n_in),
            _uniform(rng, (3 * hidden, hidden), hidden),
            np.zeros(3 * hidden),
        )

    @classmethod
    def zeros(cls, n_in: int, hidden: int) -> GruCellParams:
        return cls(np.zeros((3 * hidden, n_in)), np.zeros((3 * hidden, hidden)), np.zeros(3 * hidden))


def named_arrays(params, prefix: str = "") -> dict[str, np.ndarray]:
    """Flatten nested parameter dataclasses into ``{"a.b.weight": array}``.

    The returned arrays are the originals, so in-place updates write through.
    """
    out: dict[str, np.ndarray] = {}
    for f in dataclasses.fields(params):
        value = getattr(params, f.name)
        name = f"{prefix}{f.name}"
        if isinstance(value, np.ndarray):
            out[name] = value
        elif dataclasses.is_dataclass(value):
            out.update(named_arrays(value, name + "."))
    return out


def copy_params(params):
    """Deep copy of a parameter dataclass tree."""
    kwargs = {}
    for f in dataclasses.fields(params):
        value = getattr(params, f.name)
        if isinstance(value, np.ndarray):
            kwargs[f.name] = value.copy()
        elif dataclasses.is_dataclass(value):
            kwargs[f.name] = copy_params(value)
        else:
            kwargs[f.name] = value
    return type(params)(**kwargs)


def sigmoid(v):
    v = np.asarray(v, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(v, axis: int = -1):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def relu(v):
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def linear(x, p: LinearParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.in_features:
        raise ShapeError(f"linear expects last dim {p.in_features}, got {x.shape}")
    return x @ p.weight.T + p.bias


def gru_step(x, h, p: GruCellParams) -> np.ndarray:
    """One GRU update. ``x`` is (D,) or (B, D); ``h`` is (H,) or (B, H)."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.shape[-1] != p.input_size or h.shape[-1] != p.hidden_size or x.shape[:-1] != h.shape[:-1]:
        raise ShapeError(f"gru_step got x {x.shape}, h {h.shape} for D={p.input_size}, H={p.hidden_size}")
    single = x.ndim == 1
    xb = x.reshape(1, -1) if single else x
    hb = h.reshape(1, -1) if single else h
    xp = (xb @ p.w_in.T + p.bias)[None]
    hs, _ = kernels.gru_forward(xp, hb, p.w_rec)
    return hs[0, 0] if single else hs[0]


def gru_roll(xs, p: GruCellParams, h0=None) -> np.ndarray:
    """Run the cell over ``xs`` (T, D) or (T, B, D); returns every hidden state."""
    xs = np.asarray(xs, dtype=np.float64)
    single = xs.ndim == 2
    if single:
        xs = xs[:, None, :]
    if xs.shape[-1] != p.input_size:
        raise ShapeError(f"gru_roll expects input dim {p.input_size}, got {xs.shape}")
    B = xs.shape[1]
    if h0 is None:
        h0 = np.zeros((B, p.hidden_size))
    else:
        h0 = np.asarray(h0, dtype=np.float64).reshape(B, p.hidden_size)
    hs, _ = kernels.gru_forward(xs @ p.w_in.T + p.bias, h0, p.w_rec)
    return hs[:, 0] if single else hs
