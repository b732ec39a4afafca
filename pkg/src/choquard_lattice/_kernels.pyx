# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pair sums over all site pairs of a lattice box.

Every routine takes the flat displacement table ``T`` (row-major over
``[-2L, 2L]^d``) plus the per-site offsets from
``LatticeBox.displacement_offsets``: the entry for ``x - y`` is
``T[center + off[x] - off[y]]``. Sites are processed in parallel; each site
accumulates its own sum sequentially, so results do not depend on the
thread count.
"""
import numpy as np

from cython.parallel cimport prange
from libc.stdint cimport int64_t

cdef int _num_threads = 1


def set_num_threads(int n):
    global _num_threads
    _num_threads = max(1, n)


def get_num_threads():
    return _num_threads


cdef inline double _grad_sq_row(const double[::1] u, const int64_t[::1] off,
                                const double[::1] W, int64_t base, double ux,
                                Py_ssize_t M) noexcept nogil:
    cdef double acc = 0.0, diff
    cdef Py_ssize_t y
    for y in range(M):
        diff = ux - u[y]
        acc = acc + W[base - off[y]] * diff * diff
    return 0.5 * acc


cdef inline double _form_row(const double[::1] u, const double[::1] v,
                             const int64_t[::1] off, const double[::1] W,
                             int64_t base, double ux, double vx,
                             Py_ssize_t M) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t y
    for y in range(M):
        acc = acc + W[base - off[y]] * (ux - u[y]) * (vx - v[y])
    return 0.5 * acc


cdef inline double _plap_row(const double[::1] u, const double[::1] g,
                             const int64_t[::1] off, const double[::1] W,
                             int64_t base, double ux, double gx,
                             Py_ssize_t M) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t y
    for y in range(M):
        acc = acc + W[base - off[y]] * (gx + g[y]) * (ux - u[y])
    return 0.5 * acc


cdef inline double _conv_row(const double[::1] f, const int64_t[::1] off,
                             const double[::1] R, int64_t base,
                             Py_ssize_t M) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t y
    for y in range(M):
        acc = acc + R[base - off[y]] * f[y]
    return acc


def gradient_sq(const double[::1] u, const int64_t[::1] off, int64_t center,
                const double[::1] W):
    """``1/2 sum_y W(x-y) (u(x)-u(y))^2`` for every site ``x``."""
    cdef Py_ssize_t M = u.shape[0], x
    out = np.empty(M)
    cdef double[::1] o = out
    for x in prange(M, nogil=True, num_threads=_num_threads, schedule="static"):
        o[x] = _grad_sq_row(u, off, W, center + off[x], u[x], M)
    return out


def gradient_form(const double[::1] u, const double[::1] v, const int64_t[::1] off,
                  int64_t center, const double[::1] W):
    """``1/2 sum_y W(x-y) (u(x)-u(y)) (v(x)-v(y))`` for every site ``x``."""
    cdef Py_ssize_t M = u.shape[0], x
    out = np.empty(M)
    cdef double[::1] o = out
    for x in prange(M, nogil=True, num_threads=_num_threads, schedule="static"):
        o[x] = _form_row(u, v, off, W, center + off[x], u[x], v[x], M)
    return out


def weighted_laplacian(const double[::1] u, const double[::1] g, const int64_t[::1] off,
                       int64_t center, const double[::1] W):
    """``1/2 sum_y W(x-y) (g(x)+g(y)) (u(x)-u(y))`` for every site ``x``."""
    cdef Py_ssize_t M = u.shape[0], x
    out = np.empty(M)
    cdef double[::1] o = out
    for x in prange(M, nogil=True, num_threads=_num_threads, schedule="static"):
        o[x] = _plap_row(u, g, off, W, center + off[x], u[x], g[x], M)
    return out


def convolve(const double[::1] f, const int64_t[::1] off, int64_t center,
             const double[::1] R):
    """``sum_y R(x-y) f(y)`` for every site ``x``."""
    cdef Py_ssize_t M = f.shape[0], x
    out = np.empty(M)
    cdef double[::1] o = out
    for x in prange(M, nogil=True, num_threads=_num_threads, schedule="static"):
        o[x] = _conv_row(f, off, R, center + off[x], M)
    return out
