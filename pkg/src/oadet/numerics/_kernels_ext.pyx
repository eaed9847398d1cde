# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU kernels; drop-in replacement for ``_kernels_py``.

Matrix products go through BLAS dgemm on row-major buffers, gate arithmetic
is fused into plain C loops. Signatures and return values mirror the numpy
backend exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void mm_abt(double* A, double* Bm, double* C,
                        int m, int n, int k, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ Bm[n,k]^T + beta * C
    cdef double one = 1.0
    cdef char tr = b'T'
    cdef char nt = b'N'
    cdef int i
    if m == 0 or n == 0 or k == 0:
        if beta == 0.0:
            for i in range(m * n):
                C[i] = 0.0
        return
    dgemm(&tr, &nt, &n, &m, &k, &one, Bm, &k, A, &k, &beta, C, &n)


cdef inline void mm_ab(double* A, double* Bm, double* C,
                       int m, int n, int k, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ Bm[k,n] + beta * C
    cdef double one = 1.0
    cdef char nt = b'N'
    cdef int i
    if m == 0 or n == 0 or k == 0:
        if beta == 0.0:
            for i in range(m * n):
                C[i] = 0.0
        return
    dgemm(&nt, &nt, &n, &m, &k, &one, Bm, &n, A, &k, &beta, C, &n)


cdef inline void mm_atb(double* A, double* Bm, double* C,
                        int m, int n, int k, double beta) noexcept nogil:
    # C[m,n] = A[k,m]^T @ Bm[k,n] + beta * C
    cdef double one = 1.0
    cdef char tr = b'T'
    cdef char nt = b'N'
    cdef int i
    if m == 0 or n == 0 or k == 0:
        if beta == 0.0:
            for i in range(m * n):
                C[i] = 0.0
        return
    dgemm(&nt, &tr, &n, &m, &k, &one, Bm, &n, A, &m, &beta, C, &n)


cdef inline double sigm(double v) noexcept nogil:
    cdef double e
    if v >= 0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


cdef void cell_forward(double* xp, double* h, double* w_rec, double* g, double* hnew,
                       double* tmp, double* rh, int B, int H) noexcept nogil:
    # xp, g: (B, 3H); h, hnew, rh: (B, H); tmp: (B, 2H)
    cdef int b, j
    cdef int H2 = 2 * H
    cdef int H3 = 3 * H
    cdef double z, n
    mm_abt(h, w_rec, tmp, B, H2, H, 0.0)
    for b in range(B):
        for j in range(H2):
            g[b * H3 + j] = sigm(xp[b * H3 + j] + tmp[b * H2 + j])
        for j in range(H):
            rh[b * H + j] = g[b * H3 + H + j] * h[b * H + j]
    mm_abt(rh, w_rec + H2 * H, tmp, B, H, H, 0.0)
    for b in range(B):
        for j in range(H):
            n = tanh(xp[b * H3 + H2 + j] + tmp[b * H + j])
            g[b * H3 + H2 + j] = n
            z = g[b * H3 + j]
            hnew[b * H + j] = (1.0 - z) * h[b * H + j] + z * n


cdef void cell_backward(double* dh, double* hp, double* g, double* w_rec, double* dw_rec,
                        double* dxp, double* dhp, double* dn, double* dzr, double* rh,
                        double* drh, int B, int H) noexcept nogil:
    # dh, hp, dhp, dn, rh, drh: (B, H); g, dxp: (B, 3H); dzr: (B, 2H)
    cdef int b, j
    cdef int H2 = 2 * H
    cdef int H3 = 3 * H
    cdef double z, r, n, d
    for b in range(B):
        for j in range(H):
            z = g[b * H3 + j]
            r = g[b * H3 + H + j]
            n = g[b * H3 + H2 + j]
            d = dh[b * H + j] * z * (1.0 - n * n)
            dn[b * H + j] = d
            dxp[b * H3 + H2 + j] = d
            rh[b * H + j] = r * hp[b * H + j]
    mm_atb(dn, rh, dw_rec + H2 * H, H, H, B, 1.0)
    mm_ab(dn, w_rec + H2 * H, drh, B, H, H, 0.0)
    for b in range(B):
        for j in range(H):
            z = g[b * H3 + j]
            r = g[b * H3 + H + j]
            n = g[b * H3 + H2 + j]
            d = dh[b * H + j] * (n - hp[b * H + j]) * z * (1.0 - z)
            dzr[b * H2 + j] = d
            dxp[b * H3 + j] = d
            d = drh[b * H + j] * hp[b * H + j] * r * (1.0 - r)
            dzr[b * H2 + H + j] = d
            dxp[b * H3 + H + j] = d
            dhp[b * H + j] = dh[b * H + j] * (1.0 - z) + drh[b * H + j] * r
    mm_atb(dzr, hp, dw_rec, H2, H, B, 1.0)
    mm_ab(dzr, w_rec, dhp, B, H, H2, 1.0)


def gru_forward(xp_in, h0_in, w_rec_in):
    cdef const double[:, :, ::1] xp = np.ascontiguousarray(xp_in, dtype=np.float64)
    cdef const double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef const double[:, ::1] w_rec = np.ascontiguousarray(w_rec_in, dtype=np.float64)
    cdef int T = xp.shape[0]
    cdef int B = xp.shape[1]
    cdef int H = xp.shape[2] // 3
    hs_arr = np.empty((T, B, H))
    gates_arr = np.empty((T, B, 3 * H))
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, ::1] tmp = np.empty((B, 2 * H))
    cdef double[:, ::1] rh = np.empty((B, H))
    cdef double* hprev
    cdef int t
    if T == 0 or B == 0 or H == 0:
        return hs_arr, gates_arr
    with nogil:
        for t in range(T):
            hprev = <double*>&h0[0, 0] if t == 0 else <double*>&hs[t - 1, 0, 0]
            cell_forward(<double*>&xp[t, 0, 0], hprev, <double*>&w_rec[0, 0], <double*>&gates[t, 0, 0], <double*>&hs[t, 0, 0],
                         &tmp[0, 0], &rh[0, 0], B, H)
    return hs_arr, gates_arr


def gru_backward(dhs_in, h0_in, hs_in, gates_in, w_rec_in):
    cdef const double[:, :, ::1] dhs = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef const double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef const double[:, :, ::1] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef const double[:, :, ::1] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef const double[:, ::1] w_rec = np.ascontiguousarray(w_rec_in, dtype=np.float64)
    cdef int T = hs.shape[0]
    cdef int B = hs.shape[1]
    cdef int H = hs.shape[2]
    dxp_arr = np.empty((T, B, 3 * H))
    dw_arr = np.zeros((3 * H, H))
    dh_arr = np.zeros((B, H))
    cdef double[:, :, ::1] dxp = dxp_arr
    cdef double[:, ::1] dw = dw_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, ::1] dhp = np.empty((B, H))
    cdef double[:, ::1] dn = np.empty((B, H))
    cdef double[:, ::1] dzr = np.empty((B, 2 * H))
    cdef double[:, ::1] rh = np.empty((B, H))
    cdef double[:, ::1] drh = np.empty((B, H))
    cdef double* hprev
    cdef int t, i
    cdef int BH = B * H
    if T == 0 or B == 0 or H == 0:
        return dxp_arr, dw_arr, dh_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for i in range(BH):
                (&dh[0, 0])[i] += (<double*>&dhs[t, 0, 0])[i]
            hprev = <double*>&h0[0, 0] if t == 0 else <double*>&hs[t - 1, 0, 0]
            cell_backward(&dh[0, 0], hprev, <double*>&gates[t, 0, 0], <double*>&w_rec[0, 0], &dw[0, 0],
                          &dxp[t, 0, 0], &dhp[0, 0], &dn[0, 0], &dzr[0, 0], &rh[0, 0],
                          &drh[0, 0], B, H)
            for i in range(BH):
                (&dh[0, 0])[i] = (&dhp[0, 0])[i]
    return dxp_arr, dw_arr, dh_arr


def gru_generate(h0_in, w_in_in, b_in_in, w_rec_in, dec_w_in, dec_b_in, int steps):
    cdef const double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef const double[:, ::1] w_in = np.ascontiguousarray(w_in_in, dtype=np.float64)
    cdef const double[::1] b_in = np.ascontiguousarray(b_in_in, dtype=np.float64)
    cdef const double[:, ::1] w_rec = np.ascontiguousarray(w_rec_in, dtype=np.float64)
    cdef const double[:, ::1] dec_w = np.ascontiguousarray(dec_w_in, dtype=np.float64)
    cdef const double[::1] dec_b = np.ascontiguousarray(dec_b_in, dtype=np.float64)
    cdef int B = h0.shape[0]
    cdef int H = h0.shape[1]
    cdef int D = dec_w.shape[0]
    cdef int H3 = 3 * H
    hs_arr = np.empty((steps, B, H))
    xs_arr = np.empty((steps, B, D))
    gates_arr = np.empty((steps, B, H3))
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] xs = xs_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, ::1] xp = np.empty((B, H3))
    cdef double[:, ::1] tmp = np.empty((B, 2 * H))
    cdef double[:, ::1] rh = np.empty((B, H))
    cdef double* hprev
    cdef int k, b, j
    if steps == 0 or B == 0 or H == 0:
        return hs_arr, xs_arr, gates_arr
    with nogil:
        for k in range(steps):
            hprev = <double*>&h0[0, 0] if k == 0 else <double*>&hs[k - 1, 0, 0]
            for b in range(B):
                for j in range(D):
                    xs[k, b, j] = dec_b[j]
                for j in range(H3):
                    xp[b, j] = b_in[j]
            mm_abt(hprev, <double*>&dec_w[0, 0], <double*>&xs[k, 0, 0], B, D, H, 1.0)
            mm_abt(<double*>&xs[k, 0, 0], <double*>&w_in[0, 0], <double*>&xp[0, 0], B, H3, D, 1.0)
            cell_forward(<double*>&xp[0, 0], hprev, <double*>&w_rec[0, 0], <double*>&gates[k, 0, 0], <double*>&hs[k, 0, 0],
                         &tmp[0, 0], &rh[0, 0], B, H)
    return hs_arr, xs_arr, gates_arr


def gru_generate_backward(dhs_in, h0_in, hs_in, xs_in, gates_in, w_in_in, w_rec_in, dec_w_in):
    cdef const double[:, :, ::1] dhs = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef const double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef const double[:, :, ::1] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef const double[:, :, ::1] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef const double[:, :, ::1] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef const double[:, ::1] w_in = np.ascontiguousarray(w_in_in, dtype=np.float64)
    cdef const double[:, ::1] w_rec = np.ascontiguousarray(w_rec_in, dtype=np.float64)
    cdef const double[:, ::1] dec_w = np.ascontiguousarray(dec_w_in, dtype=np.float64)
    cdef int steps = hs.shape[0]
    cdef int B = h0.shape[0]
    cdef int H = h0.shape[1]
    cdef int D = dec_w.shape[0]
    cdef int H3 = 3 * H
    dh_arr = np.zeros((B, H))
    dw_in_arr = np.zeros((H3, D))
    db_in_arr = np.zeros(H3)
    dw_rec_arr = np.zeros((H3, H))
    ddec_w_arr = np.zeros((D, H))
    ddec_b_arr = np.zeros(D)
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, ::1] dw_in = dw_in_arr
    cdef double[::1] db_in = db_in_arr
    cdef double[:, ::1] dw_rec = dw_rec_arr
    cdef double[:, ::1] ddec_w = ddec_w_arr
    cdef double[::1] ddec_b = ddec_b_arr
    cdef double[:, ::1] dxp = np.empty((B, H3))
    cdef double[:, ::1] dx = np.empty((B, D))
    cdef double[:, ::1] dhp = np.empty((B, H))
    cdef double[:, ::1] dn = np.empty((B, H))
    cdef double[:, ::1] dzr = np.empty((B, 2 * H))
    cdef double[:, ::1] rh = np.empty((B, H))
    cdef double[:, ::1] drh = np.empty((B, H))
    cdef double* hprev
    cdef int k, b, j, i
    cdef int BH = B * H
    if steps == 0 or B == 0 or H == 0:
        return dh_arr, dw_in_arr, db_in_arr, dw_rec_arr, ddec_w_arr, ddec_b_arr
    with nogil:
        for k in range(steps - 1, -1, -1):
            for i in range(BH):
                (&dh[0, 0])[i] += (<double*>&dhs[k, 0, 0])[i]
            hprev = <double*>&h0[0, 0] if k == 0 else <double*>&hs[k - 1, 0, 0]
            cell_backward(&dh[0, 0], hprev, <double*>&gates[k, 0, 0], <double*>&w_rec[0, 0], &dw_rec[0, 0],
                          &dxp[0, 0], &dhp[0, 0], &dn[0, 0], &dzr[0, 0], &rh[0, 0],
                          &drh[0, 0], B, H)
            mm_atb(&dxp[0, 0], <double*>&xs[k, 0, 0], &dw_in[0, 0], H3, D, B, 1.0)
            for b in range(B):
                for j in range(H3):
                    db_in[j] += dxp[b, j]
            mm_ab(&dxp[0, 0], <double*>&w_in[0, 0], &dx[0, 0], B, D, H3, 0.0)
            mm_atb(&dx[0, 0], hprev, &ddec_w[0, 0], D, H, B, 1.0)
            for b in range(B):
                for j in range(D):
                    ddec_b[j] += dx[b, j]
            mm_ab(&dx[0, 0], <double*>&dec_w[0, 0], &dhp[0, 0], B, H, D, 1.0)
            for i in range(BH):
                (&dh[0, 0])[i] = (&dhp[0, 0])[i]
    return dh_arr, dw_in_arr, db_in_arr, dw_rec_arr, ddec_w_arr, ddec_b_arr
