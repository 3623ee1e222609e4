# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled mixture-posterior kernel; same contract as _mixture_np.eps_kernel."""

from libc.math cimport exp, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def eps_kernel(double[::1] z, double[:, ::1] means, double[::1] log_weights,
               double sigma, double a):
    cdef Py_ssize_t n_comp = means.shape[0]
    cdef Py_ssize_t n = z.shape[0]
    cdef double s2 = a * sigma * sigma + 1.0 - a
    cdef double sqrt_a = sqrt(a)
    cdef double sqrt_rest = sqrt(1.0 - a)

    eps_arr = np.empty(n, dtype=np.float64)
    resp_arr = np.empty(n_comp, dtype=np.float64)
    cdef double[::1] eps = eps_arr
    cdef double[::1] resp = resp_arr

    cdef Py_ssize_t k, i
    cdef double acc, d, top, total, mu

    top = -1e308
    for k in range(n_comp):
        acc = 0.0
        for i in range(n):
            d = z[i] - sqrt_a * means[k, i]
            acc += d * d
        resp[k] = log_weights[k] - acc / (2.0 * s2)
        if resp[k] > top:
            top = resp[k]
    # max-subtracted softmax, extreme exponents near a in {0, 1}
    total = 0.0
    for k in range(n_comp):
        resp[k] = exp(resp[k] - top)
        total += resp[k]
    for k in range(n_comp):
        resp[k] /= total

    for i in range(n):
        mu = 0.0
        for k in range(n_comp):
            mu += resp[k] * means[k, i]
        eps[i] = sqrt_rest * (z[i] - sqrt_a * mu) / s2

    return eps_arr, resp_arr
