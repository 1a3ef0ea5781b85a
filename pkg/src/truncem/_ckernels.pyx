# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled truncated EM stepping loop for the built-in problems.

Mirrors ``_pykernels.advance`` operation for operation; compiled with
``-ffp-contract=off`` so no fused multiply-adds change the rounding.
"""

from libc.math cimport nextafter, pow, sqrt, INFINITY
from libc.stdint cimport int64_t

import numpy as np

cdef enum:
    EXAMPLE1 = 1
    EXAMPLE2 = 2
    TC2D = 3
    GBM = 4
    OU = 5

KERNEL_IDS = {"example1": EXAMPLE1, "example2": EXAMPLE2, "timechanged2d": TC2D,
              "gbm": GBM, "ou": OU}
KERNEL_DIMS = {"example1": (1, 1), "example2": (1, 1), "timechanged2d": (2, 1),
               "gbm": (1, 1), "ou": (1, 1)}


cdef inline double holder(double s, double e) noexcept nogil:
    if s > 0.0:
        return pow(s, e)
    return 0.0


cdef inline double row_norm(const double* v, Py_ssize_t d) noexcept nogil:
    cdef double sq = v[0] * v[0]
    cdef Py_ssize_t c
    for c in range(1, d):
        sq = sq + v[c] * v[c]
    return sqrt(sq)


cdef void time_factors(int kind, double t, double* tf_mu, double* tf_sig) noexcept nogil:
    if kind == EXAMPLE1:
        tf_mu[0] = holder(t * (1.0 - t), 0.25)
        tf_sig[0] = tf_mu[0]
    elif kind == EXAMPLE2:
        tf_mu[0] = holder((t - 1.0) * (2.0 - t), 0.2)
        tf_sig[0] = holder((t - 1.0) * (2.0 - t), 0.4)
    else:
        tf_mu[0] = 0.0
        tf_sig[0] = 0.0


cdef void coefficients(int kind, const double* par, double tf_mu, double tf_sig,
                       const double* x, double* mu, double* sig) noexcept nogil:
    cdef double y1, y2
    if kind == EXAMPLE1 or kind == EXAMPLE2:
        y1 = x[0]
        mu[0] = tf_mu * y1 * y1 - 2.0 * y1 * y1 * y1 * y1 * y1
        sig[0] = tf_sig * y1 * y1
    elif kind == TC2D:
        y1 = x[0]
        y2 = x[1]
        mu[0] = -2.0 * y1 * y1 * y1 * y1
        mu[1] = -2.0 * y2 * y2 * y2 * y2
        sig[0] = y2 * y2
        sig[1] = y1 * y1
    elif kind == GBM:
        mu[0] = par[0] * x[0]
        sig[0] = par[1] * x[0]
    elif kind == OU:
        mu[0] = -par[0] * x[0]
        sig[0] = par[1]


def advance(str name, params, double[:, ::1] x, const double[:, :, ::1] dW,
            double t0, double dt, int64_t k_start, const double[::1] h, double radius,
            record_idx=None, recorded=None, traj=None):
    """See ``_pykernels.advance``; ``name`` selects the built-in coefficients."""
    cdef int kind = KERNEL_IDS[name]
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], K = dW.shape[1], m = dW.shape[2]
    if (d, m) != KERNEL_DIMS[name]:
        raise ValueError(f"kernel {name} expects (d, m) = {KERNEL_DIMS[name]}")
    cdef double[::1] par = np.zeros(2)
    for i, v in enumerate(params):
        par[i] = v
    cdef double[::1] tfm = np.empty(K)
    cdef double[::1] tfs = np.empty(K)
    cdef Py_ssize_t j, p, c
    cdef int64_t k
    cdef int do_rec = record_idx is not None
    cdef int do_traj = traj is not None
    cdef const int64_t[::1] rec
    cdef double[:, ::1] out_rec
    cdef double[:, :, ::1] out_traj
    if do_rec:
        rec = record_idx
        out_rec = recorded
    if do_traj:
        out_traj = traj
    cdef double xs[2]
    cdef double xt[2]
    cdef double mu[2]
    cdef double sig[2]
    cdef double norm, scale, dw
    cdef int truncate = radius != INFINITY

    with nogil:
        for j in range(K):
            time_factors(kind, t0 + (k_start + j) * dt, &tfm[j], &tfs[j])
        for p in range(n):
            for c in range(d):
                xs[c] = x[p, c]
            for j in range(K + 1):
                k = k_start + j
                if do_rec and rec[p] == k:
                    for c in range(d):
                        out_rec[p, c] = xs[c]
                if do_traj:
                    for c in range(d):
                        out_traj[p, j, c] = xs[c]
                if j == K:
                    break
                for c in range(d):
                    xt[c] = xs[c]
                if truncate:
                    norm = row_norm(xs, d)
                    if norm > radius:
                        scale = radius / norm
                        for c in range(d):
                            xt[c] = xs[c] * scale
                        # keep the clipped norm <= radius in floating point
                        while row_norm(xt, d) > radius:
                            scale = nextafter(scale, 0.0)
                            for c in range(d):
                                xt[c] = xs[c] * scale
                coefficients(kind, &par[0], tfm[j], tfs[j], xt, mu, sig)
                dw = dW[p, j, 0]
                for c in range(d):
                    xs[c] = xs[c] + mu[c] * h[j]
                    xs[c] = xs[c] + sig[c] * dw
            for c in range(d):
                x[p, c] = xs[c]
