# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-cell kernels; see lsirm._kernels_py for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log, log1p, fabs, M_PI

cnp.import_array()


def distance_matrix(double[:, ::1] z, double[:, ::1] w):
    cdef Py_ssize_t n = z.shape[0], p = w.shape[0], dim = z.shape[1]
    cdef Py_ssize_t k, i, d
    cdef double acc, diff
    out = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for k in range(n):
            for i in range(p):
                acc = 0.0
                for d in range(dim):
                    diff = z[k, d] - w[i, d]
                    acc = acc + diff * diff
                o[k, i] = sqrt(acc)
    return out


def cell_loglik(double[:, ::1] y, double[:, ::1] weight, double[::1] theta,
                double[::1] alpha, double[::1] beta, double gamma,
                double[:, ::1] dist, bint binary, sigma_eps_sq):
    cdef Py_ssize_t n = y.shape[0], p = y.shape[1]
    cdef Py_ssize_t k, i
    cdef double eta, s, r, wt, th
    cdef double var = 1.0 if sigma_eps_sq is None else sigma_eps_sq
    cdef double norm_const = -0.5 * (log(2.0 * M_PI) + log(var))
    out = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for k in range(n):
            th = theta[k]
            for i in range(p):
                wt = weight[k, i]
                if wt == 0.0:
                    o[k, i] = 0.0
                    continue
                eta = th * alpha[i] + beta[i] - gamma * dist[k, i]
                if binary:
                    s = -eta if y[k, i] > 0.5 else eta
                    if s > 0.0:
                        o[k, i] = -wt * (s + log1p(exp(-s)))
                    else:
                        o[k, i] = -wt * log1p(exp(s))
                else:
                    r = y[k, i] - eta
                    o[k, i] = wt * (norm_const - 0.5 * r * r / var)
    return out
