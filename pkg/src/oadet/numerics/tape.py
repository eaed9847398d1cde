"""Reverse-mode gradient tape.

Operations are coarse: a whole GRU roll or autoregressive generation is a
single node whose backward rule is one kernel call. Nodes are appended in
execution order, so reverse insertion order is a valid topological order.

``Tape.backward`` never mutates recorded state; calling it twice on the same
tape gives identical gradients.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels
from .layers import GruCellParams, LinearParams, ShapeError


class Var:
    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: Tape, index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __getitem__(self, key) -> Var:
        return getitem(self, key)

    def __add__(self, other) -> Var:
        return add(self, other)

    def __sub__(self, other) -> Var:
        return sub(self, other)

    def __mul__(self, other) -> Var:
        return mul(self, other)

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.value.shape})"


class _Node:
    __slots__ = ("parents", "backward")

    def __init__(self, parents: tuple[int, ...], backward: Callable | None):
        self.parents = parents
        self.backward = backward


class Tape:
    def __init__(self):
        self._nodes: list[_Node] = []
        self._params: dict[str, Var] = {}

    def __len__(self):
        return len(self._nodes)

    def _push(self, value, parents: Sequence[Var], backward) -> Var:
        var = Var(self, len(self._nodes), value)
        self._nodes.append(_Node(tuple(p.index for p in parents), backward))
        return var

    def param(self, name: str, value: np.ndarray) -> Var:
        """Register a parameter leaf; repeated names return the same leaf."""
        if name in self._params:
            return self._params[name]
        var = self._push(value, (), None)
        self._params[name] = var
        return var

    def const(self, value) -> Var:
        return self._push(np.asarray(value, dtype=np.float64), (), None)

    def gru(self, prefix: str, p: GruCellParams) -> dict[str, Var]:
        return {
            "w_in": self.param(prefix + ".w_in", p.w_in),
            "w_rec": self.param(prefix + ".w_rec", p.w_rec),
            "bias": self.param(prefix + ".bias", p.bias),
        }

    def linear(self, prefix: str, p: LinearParams) -> dict[str, Var]:
        return {
            "weight": self.param(prefix + ".weight", p.weight),
            "bias": self.param(prefix + ".bias", p.bias),
        }

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients of scalar ``loss`` for every registered parameter."""
        if loss.tape is not self:
            raise ValueError("loss was recorded on a different tape")
        if np.size(loss.value) != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {np.shape(loss.value)}")
        grads: list[np.ndarray | None] = [None] * len(self._nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            node = self._nodes[i]
            if g is None or node.backward is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if pg is None:
                    continue
                grads[parent] = pg if grads[parent] is None else grads[parent] + pg
        out = {}
        for name, var in self._params.items():
            g = grads[var.index]
            out[name] = np.zeros_like(var.value) if g is None else g
        return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _as_var(tape: Tape, v) -> Var:
    return v if isinstance(v, Var) else tape.const(v)


def add(a: Var, b) -> Var:
    b = _as_var(a.tape, b)
    sa, sb = a.shape, b.shape
    return a.tape._push(
        a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a: Var, b) -> Var:
    b = _as_var(a.tape, b)
    sa, sb = a.shape, b.shape
    return a.tape._push(
        a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))
    )


def mul(a: Var, b) -> Var:
    b = _as_var(a.tape, b)
    av, bv = a.value, b.value
    return a.tape._push(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def getitem(a: Var, key) -> Var:
    shape = a.shape

    fancy = _needs_add_at(key)

    def back(g):
        out = np.zeros(shape)
        if fancy:
            np.add.at(out, key, g)
        else:
            out[key] = g
        return (out,)

    return a.tape._push(np.asarray(a.value[key]), (a,), back)


def _needs_add_at(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def concat(vs: Sequence[Var], axis: int = 0) -> Var:
    vs = list(vs)
    sizes = [v.shape[axis] for v in vs]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return vs[0].tape._push(np.concatenate([v.value for v in vs], axis=axis), vs, back)


def reverse(a: Var, axis: int = 0) -> Var:
    return a.tape._push(np.flip(a.value, axis=axis).copy(), (a,), lambda g: (np.flip(g, axis=axis),))


def detach(a: Var) -> Var:
    return a.tape.const(a.value)


def sum_all(a: Var) -> Var:
    shape = a.shape
    return a.tape._push(np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Var) -> Var:
    shape = a.shape
    n = a.value.size
    return a.tape._push(
        np.asarray(a.value.mean()), (a,), lambda g: (np.broadcast_to(g / n, shape).copy(),)
    )


def relu(a: Var) -> Var:
    mask = a.value > 0
    return a.tape._push(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Var) -> Var:
    from .layers import sigmoid as _sig

    s = _sig(a.value)
    return a.tape._push(s, (a,), lambda g: (g * s * (1.0 - s),))


def softmax(a: Var) -> Var:
    from .layers import softmax as _sm

    s = _sm(a.value, axis=-1)
    return a.tape._push(
        s, (a,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),)
    )


def linear(x: Var, weight: Var, bias: Var) -> Var:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    xv, wv = x.value, weight.value
    if xv.shape[-1] != wv.shape[1] or bias.shape != (wv.shape[0],):
        raise ShapeError(f"linear: x {xv.shape}, weight {wv.shape}, bias {bias.shape}")

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = xv.reshape(-1, xv.shape[-1])
        return g @ wv, g2.T @ x2, g2.sum(axis=0)

    return x.tape._push(xv @ wv.T + bias.value, (x, weight, bias), back)


def gru_roll(xp: Var, h0: Var, w_rec: Var) -> Var:
    """Hidden states (T, B, H) of a GRU over input projections ``xp`` (T, B, 3H)."""
    xv, h0v, wv = xp.value, h0.value, w_rec.value
    if xv.ndim != 3 or xv.shape[2] != wv.shape[0] or h0v.shape != (xv.shape[1], wv.shape[1]):
        raise ShapeError(f"gru_roll: xp {xv.shape}, h0 {h0v.shape}, w_rec {wv.shape}")
    hs, gates = kernels.gru_forward(xv, h0v, wv)

    def back(g):
        dxp, dw_rec, dh0 = kernels.gru_backward(g, h0v, hs, gates, wv)
        return dxp, dh0, dw_rec

    return xp.tape._push(hs, (xp, h0, w_rec), back)


def gru_generate(h0: Var, gru: dict[str, Var], dec: dict[str, Var], steps: int) -> Var:
    """Hidden states (steps, B, H) of the decode-and-feed-back recurrence.

    The decoded inputs themselves are not an output: re-derive them with
    ``linear`` on the preceding states so their consumers get gradients.
    """
    h0v = h0.value
    w_in, b_in, w_rec = gru["w_in"].value, gru["bias"].value, gru["w_rec"].value
    dec_w, dec_b = dec["weight"].value, dec["bias"].value
    if h0v.ndim != 2 or h0v.shape[1] != w_rec.shape[1] or dec_w.shape != (w_in.shape[1], w_rec.shape[1]):
        raise ShapeError(f"gru_generate: h0 {h0v.shape}, w_in {w_in.shape}, dec {dec_w.shape}")
    hs, xs, gates = kernels.gru_generate(h0v, w_in, b_in, w_rec, dec_w, dec_b, steps)

    def back(g):
        dh0, dw_in, db_in, dw_rec, ddec_w, ddec_b = kernels.gru_generate_backward(
            g, h0v, hs, xs, gates, w_in, w_rec, dec_w
        )
        return dh0, dw_in, db_in, dw_rec, ddec_w, ddec_b

    parents = (h0, gru["w_in"], gru["bias"], gru["w_rec"], dec["weight"], dec["bias"])
    return h0.tape._push(hs, parents, back)


def squared_error(a: Var, b: Var) -> Var:
    """Sum over all entries of ``(a - b)**2``, without averaging."""
    if a.shape != b.shape:
        raise ShapeError(f"squared_error: {a.shape} vs {b.shape}")
    d = a.value - b.value
    return a.tape._push(np.asarray((d * d).sum()), (a, b), lambda g: (2.0 * g * d, -2.0 * g * d))


def binary_cross_entropy(p: Var, y: np.ndarray, eps: float = 1e-12) -> Var:
    """Mean over classes (last axis), summed over leading axes.

    Probabilities are clamped to ``[eps, 1 - eps]``; clamped entries pass no
    gradient.
    """
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"binary_cross_entropy: p {p.shape} vs y {y.shape}")
    pc = np.clip(p.value, eps, 1.0 - eps)
    inside = (p.value >= eps) & (p.value <= 1.0 - eps)
    C = y.shape[-1]
    val = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).sum() / C

    def back(g):
        return (g * inside * (-(y / pc) + (1.0 - y) / (1.0 - pc)) / C,)

    return p.tape._push(np.asarray(val), (p,), back)
