"""Pure-numpy GRU kernels.

Reference implementation of the recurrent hot loops. The compiled module
``_kernels_ext`` exposes the same four functions with the same signatures;
``oadet.numerics.kernels`` picks one at import time.

Layout conventions shared by both backends (all float64, C-contiguous):

* ``xp``      (T, B, 3H) input projections ``W x + b`` ordered [update | reset | candidate]
* ``w_rec``   (3H, H) recurrent weights in the same gate order
* ``hs``      (T, B, H) hidden state after each step
* ``gates``   (T, B, 3H) cached activations [z | r | n] per step
"""

import numpy as np


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _cell(xp, h, w_rec, H):
    zr = _sigmoid(xp[:, : 2 * H] + h @ w_rec[: 2 * H].T)
    z = zr[:, :H]
    r = zr[:, H:]
    n = np.tanh(xp[:, 2 * H :] + (r * h) @ w_rec[2 * H :].T)
    h_new = (1.0 - z) * h + z * n
    return h_new, np.concatenate([zr, n], axis=1)


def _cell_backward(dh, hp, g, w_rec, H, dw_rec):
    z = g[:, :H]
    r = g[:, H : 2 * H]
    n = g[:, 2 * H :]
    dxp = np.empty_like(g)
    dn_pre = dh * z * (1.0 - n * n)
    dxp[:, 2 * H :] = dn_pre
    rh = r * hp
    dw_rec[2 * H :] += dn_pre.T @ rh
    drh = dn_pre @ w_rec[2 * H :]
    dz = dh * (n - hp)
    dr = drh * hp
    dxp[:, :H] = dz * z * (1.0 - z)
    dxp[:, H : 2 * H] = dr * r * (1.0 - r)
    dzr = dxp[:, : 2 * H]
    dw_rec[: 2 * H] += dzr.T @ hp
    dhp = dh * (1.0 - z) + drh * r + dzr @ w_rec[: 2 * H]
    return dxp, dhp


def gru_forward(xp, h0, w_rec):
    """Roll a GRU over precomputed input projections.

    Returns ``(hs, gates)``.
    """
    T, B, H3 = xp.shape
    H = H3 // 3
    hs = np.empty((T, B, H))
    gates = np.empty((T, B, H3))
    h = h0
    for t in range(T):
        h, gates[t] = _cell(xp[t], h, w_rec, H)
        hs[t] = h
    return hs, gates


def gru_backward(dhs, h0, hs, gates, w_rec):
    """Backpropagate through :func:`gru_forward`.

    ``dhs`` holds the gradient reaching each emitted hidden state from outside
    the recurrence. Returns ``(dxp, dw_rec, dh0)``.
    """
    T, B, H = hs.shape
    dxp = np.empty((T, B, 3 * H))
    dw_rec = np.zeros_like(w_rec)
    dh = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh + dhs[t]
        hp = hs[t - 1] if t > 0 else h0
        dxp[t], dh = _cell_backward(dh, hp, gates[t], w_rec, H, dw_rec)
    return dxp, dw_rec, dh


def gru_generate(h0, w_in, b_in, w_rec, dec_w, dec_b, steps):
    """Autoregressive roll: each step decodes the current state and feeds it back.

    ``x_k = dec_w h_{k-1} + dec_b`` then ``h_k = GRU(x_k, h_{k-1})``.
    Returns ``(hs, xs, gates)`` with ``xs`` the decoded inputs, shape (steps, B, D).
    """
    B, H = h0.shape
    D = dec_w.shape[0]
    hs = np.empty((steps, B, H))
    xs = np.empty((steps, B, D))
    gates = np.empty((steps, B, 3 * H))
    h = h0
    for k in range(steps):
        x = h @ dec_w.T + dec_b
        xs[k] = x
        h, gates[k] = _cell(x @ w_in.T + b_in, h, w_rec, H)
        hs[k] = h
    return hs, xs, gates


def gru_generate_backward(dhs, h0, hs, xs, gates, w_in, w_rec, dec_w):
    """Backpropagate through :func:`gru_generate`, including the decoder feedback.

    Returns ``(dh0, dw_in, db_in, dw_rec, ddec_w, ddec_b)``.
    """
    steps, B, H = hs.shape
    dw_in = np.zeros_like(w_in)
    db_in = np.zeros(w_in.shape[0])
    dw_rec = np.zeros_like(w_rec)
    ddec_w = np.zeros_like(dec_w)
    ddec_b = np.zeros(dec_w.shape[0])
    dh = np.zeros((B, H))
    for k in range(steps - 1, -1, -1):
        dh = dh + dhs[k]
        hp = hs[k - 1] if k > 0 else h0
        dxp, dh = _cell_backward(dh, hp, gates[k], w_rec, H, dw_rec)
        dw_in += dxp.T @ xs[k]
        db_in += dxp.sum(axis=0)
        dx = dxp @ w_in
        ddec_w += dx.T @ hp
        ddec_b += dx.sum(axis=0)
        dh = dh + dx @ dec_w
    return dh, dw_in, db_in, dw_rec, ddec_w, ddec_b
