# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled TS-FIS forward/gradient kernels (same contract as _kernels_py).

Memberships are handled in the log domain: log mu = -(x - c)^2 / (2 sigma^2)
needs no exp. Per sample the terms mu^-p - 1 are computed once per fuzzy set,
leaving one log1p and one exp per rule.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport NAN, exp, expm1, log, log1p

cnp.import_array()

cdef double LOG_FLOOR = log(1e-12)
# exp overflows near 709.8
cdef double DIRECT_LIMIT = 700.0


cdef inline void _log_memberships(
    const double* x, const double* centers, const double* widths,
    Py_ssize_t n_in, Py_ssize_t n_mf, double* lg,
) noexcept nogil:
    cdef Py_ssize_t i, j, q
    cdef double diff
    for i in range(n_in):
        for j in range(n_mf):
            q = i * n_mf + j
            diff = x[i] - centers[q]
            lg[q] = -(diff * diff) / (2.0 * widths[q] * widths[q])


cdef inline double _log_firing(
    const double* lg, const double* em, const unsigned char* mask,
    Py_ssize_t n_in, Py_ssize_t n_mf, double p, bint direct,
    double* lmu, Py_ssize_t* jst, unsigned char* usable, double* s_out,
) noexcept nogil:
    """Log firing strength of one rule; fills per-input log memberships.

    ``em[q]`` holds expm1(-p * lmu) for every membership, so the fold is
    w = (1 + sum_i em_i)^(-1/p). When ``direct`` is false (p so large that
    mu^-p may overflow) the fold is rescaled by the smallest operand.
    """
    cdef Py_ssize_t i, j, q
    cdef double best, lm, mp, s, acc
    cdef bint any_bit
    lm = 0.0
    acc = 0.0
    for i in range(n_in):
        any_bit = False
        best = 0.0
        jst[i] = 0
        for j in range(n_mf):
            q = i * n_mf + j
            if mask[q]:
                if not any_bit or lg[q] > best:
                    best = lg[q]
                    jst[i] = j
                any_bit = True
        if not any_bit:
            lmu[i] = 0.0
            usable[i] = 0
            continue
        if best < LOG_FLOOR:
            lmu[i] = LOG_FLOOR
            usable[i] = 0
            if direct:
                acc += expm1(-p * LOG_FLOOR)
        else:
            lmu[i] = best
            usable[i] = 1
            if direct:
                acc += em[i * n_mf + jst[i]]
        if lmu[i] < lm:
            lm = lmu[i]
    if direct:
        s_out[0] = 1.0 + acc
        return -log1p(acc) / p
    mp = exp(p * lm)
    s = mp
    for i in range(n_in):
        if lmu[i] < 0.0:
            s += exp(p * (lm - lmu[i])) - mp
    s_out[0] = NAN  # only meaningful on the direct path
    return lm - log(s) / p


cdef inline bint _fill_em(const double* lg, Py_ssize_t stride, double p, double* em) noexcept nogil:
    cdef Py_ssize_t q
    if p * (-LOG_FLOOR) >= DIRECT_LIMIT:
        return False
    for q in range(stride):
        em[q] = expm1(-p * lg[q])
    return True


def fis_forward(X, centers, widths, masks, coefs, double p):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(widths, dtype=np.float64)
    cdef const unsigned char[:, :, ::1] mv = np.ascontiguousarray(masks, dtype=np.uint8)
    cdef const double[:, ::1] kv = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], n_in = Xv.shape[1]
    cdef Py_ssize_t n_mf = cv.shape[1], R = mv.shape[0]
    cdef Py_ssize_t k, n, i, stride = n_in * n_mf
    cdef double W, num, f, wn
    cdef const double* x
    cdef const double* kn

    y_arr = np.empty(N, dtype=np.float64)
    w_arr = np.empty((N, R), dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef double[:, ::1] w = w_arr
    cdef double[::1] lg = np.empty(stride, dtype=np.float64)
    cdef double[::1] em = np.empty(stride, dtype=np.float64)
    cdef double[::1] lmu = np.empty(n_in, dtype=np.float64)
    cdef Py_ssize_t[::1] jst = np.empty(n_in, dtype=np.intp)
    cdef unsigned char[::1] usable = np.empty(n_in, dtype=np.uint8)
    cdef double S
    cdef bint direct

    if N == 0:
        return y_arr, w_arr
    with nogil:
        for k in range(N):
            x = &Xv[k, 0]
            _log_memberships(x, &cv[0, 0], &sv[0, 0], n_in, n_mf, &lg[0])
            direct = _fill_em(&lg[0], stride, p, &em[0])
            W = 0.0
            num = 0.0
            for n in range(R):
                wn = exp(_log_firing(&lg[0], &em[0], &mv[n, 0, 0], n_in, n_mf, p, direct,
                                     &lmu[0], &jst[0], &usable[0], &S))
                kn = &kv[n, 0]
                f = kn[n_in]
                for i in range(n_in):
                    f += kn[i] * x[i]
                w[k, n] = wn
                W += wn
                num += wn * f
            if W > 0.0:
                y[k] = num / W
            else:
                y[k] = NAN
    return y_arr, w_arr


def fis_gradients(X, d, centers, widths, masks, coefs, double p):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const double[:, ::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(widths, dtype=np.float64)
    cdef const unsigned char[:, :, ::1] mv = np.ascontiguousarray(masks, dtype=np.uint8)
    cdef const double[:, ::1] kv = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], n_in = Xv.shape[1]
    cdef Py_ssize_t n_mf = cv.shape[1], R = mv.shape[0]
    cdef Py_ssize_t k, n, i, j, q, stride = n_in * n_mf
    cdef double W, num, yk, dy, dEdw, wbar, diff, var, E = 0.0
    cdef const double* x
    cdef const double* kn

    gc_arr = np.zeros((n_in, n_mf), dtype=np.float64)
    gs_arr = np.zeros((n_in, n_mf), dtype=np.float64)
    gk_arr = np.zeros((R, n_in + 1), dtype=np.float64)
    cdef double[:, ::1] gc = gc_arr
    cdef double[:, ::1] gs = gs_arr
    cdef double[:, ::1] gk = gk_arr
    cdef double[::1] lg = np.empty(stride, dtype=np.float64)
    cdef double[::1] em = np.empty(stride, dtype=np.float64)
    cdef double[::1] S = np.empty(R, dtype=np.float64)
    cdef double[::1] A = np.empty(stride, dtype=np.float64)
    cdef bint direct
    cdef double[:, ::1] lmu = np.empty((R, n_in), dtype=np.float64)
    cdef Py_ssize_t[:, ::1] jst = np.empty((R, n_in), dtype=np.intp)
    cdef unsigned char[:, ::1] usable = np.empty((R, n_in), dtype=np.uint8)
    cdef double[::1] lw = np.empty(R, dtype=np.float64)
    cdef double[::1] w = np.empty(R, dtype=np.float64)
    cdef double[::1] f = np.empty(R, dtype=np.float64)

    if N == 0:
        return E, gc_arr, gs_arr, gk_arr
    with nogil:
        for k in range(N):
            x = &Xv[k, 0]
            _log_memberships(x, &cv[0, 0], &sv[0, 0], n_in, n_mf, &lg[0])
            direct = _fill_em(&lg[0], stride, p, &em[0])
            W = 0.0
            num = 0.0
            for n in range(R):
                lw[n] = _log_firing(&lg[0], &em[0], &mv[n, 0, 0], n_in, n_mf, p, direct,
                                    &lmu[n, 0], &jst[n, 0], &usable[n, 0], &S[n])
                w[n] = exp(lw[n])
                kn = &kv[n, 0]
                f[n] = kn[n_in]
                for i in range(n_in):
                    f[n] += kn[i] * x[i]
                W += w[n]
                num += w[n] * f[n]
            yk = num / W
            E += (yk - dv[k]) * (yk - dv[k])
            dy = 2.0 * (yk - dv[k])

            for q in range(stride):
                A[q] = 0.0
            for n in range(R):
                wbar = w[n] / W
                for i in range(n_in):
                    gk[n, i] += dy * wbar * x[i]
                gk[n, n_in] += dy * wbar
                dEdw = dy * (f[n] - yk) / W
                for i in range(n_in):
                    if usable[n, i]:
                        # mu_i * dw/dmu_i = (w / mu_i)^(p + 1) * mu_i = (w / S) * mu_i^-p
                        q = i * n_mf + jst[n, i]
                        if direct:
                            A[q] += dEdw * (w[n] / S[n]) * (1.0 + em[q])
                        else:
                            A[q] += dEdw * exp((p + 1.0) * (lw[n] - lmu[n, i]) + lmu[n, i])
            for i in range(n_in):
                for j in range(n_mf):
                    q = i * n_mf + j
                    if A[q] != 0.0:
                        diff = x[i] - cv[i, j]
                        var = sv[i, j] * sv[i, j]
                        gc[i, j] += A[q] * diff / var
                        gs[i, j] += A[q] * diff * diff / (var * sv[i, j])
    return E, gc_arr, gs_arr, gk_arr
