# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gaussian double sums for the mixture L2 cost.

Pairs whose exponent is below ``-CUTOFF`` contribute less than 1e-17 and are
skipped; the model self-sum visits each unordered pair once.
"""
import numpy as np

from libc.math cimport exp

cdef double CUTOFF = 40.0


def gauss_terms(const double[:, ::1] m, const double[:, ::1] s, double sigma):
    """Return (self_sum, cross_sum, self_grad, cross_grad).

    ``self_sum = sum_ij e(m_i, m_j)``, ``cross_sum = sum_ij e(m_i, s_j)`` with
    ``e(a, b) = exp(-|a - b|^2 / (4 sigma^2))``; the gradient arrays hold
    ``sum_j e(m_i, .)(m_i - .)`` per model point.
    """
    cdef Py_ssize_t nm = m.shape[0], ns = s.shape[0], i, j
    cdef double k = 1.0 / (4.0 * sigma * sigma)
    cdef double dx, dy, a, e, ss = 0.0, cs = 0.0
    gs_arr = np.zeros((nm, 2))
    gc_arr = np.zeros((nm, 2))
    cdef double[:, ::1] gs = gs_arr
    cdef double[:, ::1] gc = gc_arr
    with nogil:
        for i in range(nm):
            ss += 1.0
            for j in range(i + 1, nm):
                dx = m[i, 0] - m[j, 0]
                dy = m[i, 1] - m[j, 1]
                a = (dx * dx + dy * dy) * k
                if a > CUTOFF:
                    continue
                e = exp(-a)
                ss += 2.0 * e
                gs[i, 0] += e * dx
                gs[i, 1] += e * dy
                gs[j, 0] -= e * dx
                gs[j, 1] -= e * dy
            for j in range(ns):
                dx = m[i, 0] - s[j, 0]
                dy = m[i, 1] - s[j, 1]
                a = (dx * dx + dy * dy) * k
                if a > CUTOFF:
                    continue
                e = exp(-a)
                cs += e
                gc[i, 0] += e * dx
                gc[i, 1] += e * dy
    return ss, cs, gs_arr, gc_arr
