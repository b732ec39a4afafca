"""NumPy versions of the pair sums in ``_kernels.pyx``.

Same signatures and conventions; rows are processed in blocks so the
``block x M`` displacement-index matrix stays small.
"""
import numpy as np

_BLOCK_ENTRIES = 4_000_000
_num_threads = 1


def set_num_threads(n):
    global _num_threads
    _num_threads = max(1, int(n))


def get_num_threads():
    return _num_threads


def _blocks(M):
    step = max(1, _BLOCK_ENTRIES // max(M, 1))
    for start in range(0, M, step):
        yield slice(start, min(start + step, M))


def _weights(off, center, W, rows):
    return W[center + off[rows, None] - off[None, :]]


def gradient_sq(u, off, center, W):
    out = np.empty(u.shape[0])
    for rows in _blocks(u.shape[0]):
        diff = u[rows, None] - u[None, :]
        out[rows] = 0.5 * np.sum(_weights(off, center, W, rows) * diff * diff, axis=1)
    return out


def gradient_form(u, v, off, center, W):
    out = np.empty(u.shape[0])
    for rows in _blocks(u.shape[0]):
        du = u[rows, None] - u[None, :]
        dv = v[rows, None] - v[None, :]
        out[rows] = 0.5 * np.sum(_weights(off, center, W, rows) * du * dv, axis=1)
    return out


def weighted_laplacian(u, g, off, center, W):
    out = np.empty(u.shape[0])
    for rows in _blocks(u.shape[0]):
        du = u[rows, None] - u[None, :]
        gs = g[rows, None] + g[None, :]
        out[rows] = 0.5 * np.sum(_weights(off, center, W, rows) * gs * du, axis=1)
    return out


def convolve(f, off, center, R):
    out = np.empty(f.shape[0])
    for rows in _blocks(f.shape[0]):
        out[rows] = _weights(off, center, R, rows) @ f
    return out
