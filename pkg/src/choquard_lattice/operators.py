"""Nonlocal operators on a lattice box.

All pair sums range over the box only: fields are extended by zero and
kernel interactions with sites outside the box are dropped. With that
convention the summation-by-parts identity

    sum_x phi(x) (-Delta)_p^s u(x) = sum_x |grad^s u|^(p-2)(x) grad^s u grad^s phi(x)

holds exactly on the finite graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import _backend, spectral
from .errors import KernelBoundError, NumericalConsistencyError, ValidationError
from .lattice import LatticeBox
from .spectral import GreenTable

KERNEL_MODELS = ("power-law", "spectral")
CONV_TOL = 1e-10


def _impl(backend):
    return _backend.kernels if backend is None else _backend.load(backend)


def _displacement_l1(d: int, radius: int) -> np.ndarray:
    side = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([side] * d), indexing="ij", sparse=True)
    return sum(np.abs(g) for g in grids)


@dataclass(frozen=True)
class KernelTable:
    """``W_s(z)`` on ``[-2L, 2L]^d`` (zero at ``z = 0``) with its bound constants."""

    model: str
    s: float
    d: int
    L: int
    values: np.ndarray = field(repr=False)
    c_lo: float
    c_hi: float
    cutoff: float | None = None

    @cached_property
    def box(self) -> LatticeBox:
        return LatticeBox(self.d, self.L)

    @cached_property
    def flat(self) -> np.ndarray:
        return np.ascontiguousarray(self.values.ravel())

    @property
    def radius(self) -> int:
        return 2 * self.L

    def value(self, z) -> float:
        z = tuple(int(c) for c in np.atleast_1d(z))
        if len(z) != self.d or max(abs(c) for c in z) > self.radius:
            raise ValidationError(f"displacement {z} outside the kernel table")
        return float(self.values[tuple(c + self.radius for c in z)])

    def with_values(self, values) -> "KernelTable":
        """Copy with replaced values (bounds kept); used to inject faults in checks."""
        values = np.array(values, dtype=float)
        values.setflags(write=False)
        return KernelTable(self.model, self.s, self.d, self.L, values, self.c_lo, self.c_hi, self.cutoff)


def _check_s(s):
    if not 0.0 < s < 1.0:
        raise ValidationError(f"fractional order s must lie in (0, 1), got {s}")


def build_kernel_table(
    model: str,
    s: float,
    d: int,
    L: int,
    N: int | None = None,
    cutoff: float | None = None,
    tol: float = spectral.DEFAULT_TOL,
) -> KernelTable:
    """Tabulate the fractional kernel for every displacement of a box of radius ``L``.

    ``power-law`` is ``|z|_1^(-d-2s)`` (bounds ``c_lo = c_hi = 1``). ``spectral``
    is minus the Fourier coefficient of ``mu^s`` computed on the torus, with
    ``c_lo, c_hi`` fitted as the extreme values of ``W(z) |z|_1^(d+2s)``.
    ``cutoff`` drops interactions with ``|z|_1 > cutoff`` (benchmarking only).
    """
    _check_s(s)
    if model not in KERNEL_MODELS:
        raise ValidationError(f"unknown kernel model {model!r}; choose from {KERNEL_MODELS}")
    radius = 2 * L
    dist = _displacement_l1(d, radius)
    nonzero = dist > 0
    if model == "power-law":
        values = np.zeros(dist.shape)
        values[nonzero] = dist[nonzero] ** (-d - 2.0 * s)
        c_lo = c_hi = 1.0
    else:
        N = spectral.default_quadrature_N(d) if N is None else N
        octant, refined = spectral.extrapolated_cosine_transform(d, N, s, radius)
        octant, refined = -octant, -refined
        mask = np.ones(octant.shape, dtype=bool)
        mask[(0,) * d] = False
        delta = float(np.max(np.abs(octant - refined)[mask] / np.abs(octant[mask])))
        if delta > tol:
            raise NumericalConsistencyError(
                f"spectral kernel refinement changed values by {delta:.3e} (relative); increase N"
            )
        values = spectral._symmetrize(octant, d)
        values[(radius,) * d] = 0.0
        bad = np.argwhere(nonzero & (values <= 0))
        if len(bad):
            z = tuple(int(c) - radius for c in bad[0])
            raise KernelBoundError(f"spectral kernel is not positive at displacement {z}")
        scaled = values[nonzero] * dist[nonzero] ** (d + 2.0 * s)
        c_lo, c_hi = float(scaled.min()), float(scaled.max())
    if cutoff is not None:
        values[dist > cutoff] = 0.0
    values.setflags(write=False)
    return KernelTable(model, float(s), int(d), int(L), values, c_lo, c_hi, cutoff)


def kernel_cache_path(cache_dir, model, s, d, L, N) -> Path:
    return Path(cache_dir) / f"kernel_{model}_d{d}_s{float(s)!r}_L{L}_N{N}.csv"


def save_kernel_table(kernel: KernelTable, path):
    meta = {"model": kernel.model, "s": kernel.s, "d": kernel.d, "L": kernel.L, "c_lo": kernel.c_lo, "c_hi": kernel.c_hi}
    if kernel.cutoff is not None:
        meta["cutoff"] = kernel.cutoff
    spectral.write_table(path, "kernel", meta, kernel.values)


def load_kernel_table(path) -> KernelTable:
    kind, meta, values = spectral.read_table(path)
    if kind != "kernel":
        raise ValidationError(f"{path} holds a '{kind}' table, not a kernel table")
    values.setflags(write=False)
    cutoff = meta.get("cutoff")
    return KernelTable(
        str(meta["model"]), float(meta["s"]), int(meta["d"]), int(meta["L"]), values,
        float(meta["c_lo"]), float(meta["c_hi"]), None if cutoff is None else float(cutoff),
    )


def cached_kernel_table(model, s, d, L, N=None, cache_dir=None, cutoff=None) -> tuple[KernelTable, bool]:
    """Spectral tables are cached like Green tables; power-law tables are rebuilt (cheap)."""
    if model != "spectral" or cache_dir is None or cutoff is not None:
        return build_kernel_table(model, s, d, L, N=N, cutoff=cutoff), False
    N = spectral.default_quadrature_N(d) if N is None else N
    path = kernel_cache_path(cache_dir, model, s, d, L, N)
    if path.exists():
        return load_kernel_table(path), True
    kernel = build_kernel_table(model, s, d, L, N=N)
    save_kernel_table(kernel, path)
    return kernel, False


@dataclass(frozen=True)
class BoundCheck:
    ok: bool
    margin: float
    worst_displacement: tuple | None


def check_kernel_bounds(kernel: KernelTable, rtol: float = 1e-12) -> BoundCheck:
    """Verify symmetry, positivity and ``c_lo |z|^-(d+2s) <= W <= c_hi |z|^-(d+2s)``.

    ``margin`` is the smallest relative slack over all displacements (negative
    when the bound fails). Entries removed by a cutoff are skipped.
    """
    d, r = kernel.d, kernel.radius
    dist = _displacement_l1(d, r)
    vals = kernel.values
    mask = dist > 0
    if kernel.cutoff is not None:
        mask &= dist <= kernel.cutoff
    sym = np.max(np.abs(vals - np.flip(vals)))
    scaled = vals * dist.astype(float) ** (d + 2.0 * kernel.s)
    slack = np.minimum(scaled - kernel.c_lo, kernel.c_hi - scaled) / kernel.c_hi
    slack = np.where(mask, slack, np.inf)
    worst = np.unravel_index(np.argmin(slack), slack.shape)
    margin = float(slack[worst])
    ok = margin >= -rtol and sym <= rtol * np.max(np.abs(vals))
    z = tuple(int(c) - r for c in worst)
    return BoundCheck(bool(ok), margin, None if ok else z)


@dataclass(frozen=True)
class PotentialField:
    """``h(x) = h0 + a |x - center|_1^beta`` sampled on a box."""

    values: np.ndarray = field(repr=False)
    h0: float
    a: float = 1.0
    beta: float = 1.0
    center: tuple = ()

    def check(self, box: LatticeBox) -> bool:
        """Lower bound ``h >= h0`` and growth along rays from the center."""
        h = self.values
        if np.min(h) < self.h0:
            return False
        dist = np.abs(box.coords - np.asarray(self.center)).sum(axis=1)
        order = np.argsort(dist, kind="stable")
        # h depends on |x - center|_1 only, so sorting by distance must sort h
        return bool(np.all(np.diff(h[order]) >= -1e-12 * np.max(h)))


def make_potential(box: LatticeBox, h0: float = 1.0, a: float = 1.0, beta: float = 1.0, center=None) -> PotentialField:
    if not h0 > 0:
        raise ValidationError(f"potential floor h0 must be positive, got {h0}")
    if not (a > 0 and beta > 0):
        raise ValidationError(f"potential growth needs a > 0 and beta > 0, got a={a}, beta={beta}")
    center = tuple(int(c) for c in (center if center is not None else (0,) * box.d))
    if len(center) != box.d:
        raise ValidationError(f"potential center {center} does not have dimension {box.d}")
    dist = np.abs(box.coords - np.asarray(center)).sum(axis=1)
    values = h0 + a * dist.astype(float) ** beta
    values.setflags(write=False)
    return PotentialField(values, float(h0), float(a), float(beta), center)


def _h_values(h, box: LatticeBox) -> np.ndarray:
    vals = h.values if isinstance(h, PotentialField) else np.broadcast_to(np.asarray(h, dtype=float), (box.M,))
    if vals.shape != (box.M,):
        raise ValidationError("potential does not match the box")
    return vals


def _site(kernel, x):
    return x if isinstance(x, (int, np.integer)) else kernel.box.index_of(x)


# --- fractional gradient ----------------------------------------------------


def gradient_form(u, v, kernel: KernelTable, x=None, backend=None):
    """``1/2 sum_y W(x-y) (u(x)-u(y)) (v(x)-v(y))``; all sites when ``x`` is None."""
    box = kernel.box
    u, v = box.check_field(u, "u"), box.check_field(v, "v")
    off, center = box.offsets
    out = _impl(backend).gradient_form(u, v, off, center, kernel.flat)
    return out if x is None else float(out[_site(kernel, x)])


def gradient_sq(u, kernel: KernelTable, backend=None) -> np.ndarray:
    box = kernel.box
    u = box.check_field(u)
    off, center = box.offsets
    return _impl(backend).gradient_sq(u, off, center, kernel.flat)


def gradient_length(u, kernel: KernelTable, x=None, backend=None):
    """``|grad^s u|(x) = sqrt(gradient_form(u, u, x))``."""
    out = np.sqrt(np.maximum(gradient_sq(u, kernel, backend), 0.0))
    return out if x is None else float(out[_site(kernel, x)])


def _check_p(p):
    if not p >= 2:
        raise ValidationError(f"p must be >= 2, got {p}")


def gradient_weight(length: np.ndarray, p: float) -> np.ndarray:
    """``|grad^s u|^(p-2)``, extended by 0 where the length vanishes (p > 2)."""
    if p == 2:
        return np.ones_like(length)
    return np.power(length, p - 2.0)


def p_laplacian_apply(u, kernel: KernelTable, p: float, backend=None) -> np.ndarray:
    """``1/2 sum_y W(x-y) (|grad u|^(p-2)(x) + |grad u|^(p-2)(y)) (u(x)-u(y))``."""
    _check_p(p)
    box = kernel.box
    u = box.check_field(u)
    impl = _impl(backend)
    off, center = box.offsets
    if p == 2:
        g = np.ones(box.M)
    else:
        g = gradient_weight(np.sqrt(np.maximum(impl.gradient_sq(u, off, center, kernel.flat), 0.0)), p)
    return impl.weighted_laplacian(u, g, off, center, kernel.flat)


def lp_norm(u, q: float) -> float:
    u = np.abs(np.asarray(u, dtype=float))
    if np.isinf(q):
        return float(u.max(initial=0.0))
    return float(np.sum(u**q) ** (1.0 / q))


def sobolev_norm_p(u, kernel: KernelTable, h, p: float, backend=None) -> float:
    """``sum_x (|grad^s u|^p + h |u|^p)``, the p-th power of the weighted norm."""
    _check_p(p)
    box = kernel.box
    u = box.check_field(u)
    G = np.maximum(gradient_sq(u, kernel, backend), 0.0)
    return float(np.sum(G ** (p / 2.0)) + np.sum(_h_values(h, box) * np.abs(u) ** p))


def positive_part(u) -> np.ndarray:
    return np.maximum(np.asarray(u, dtype=float), 0.0)


def negative_part(u) -> np.ndarray:
    return np.minimum(np.asarray(u, dtype=float), 0.0)


def p_inequality_slack(a, b, p):
    """``2^(p-2) p (|a|^(p-2) a - |b|^(p-2) b)(a - b) - |a - b|^p`` (nonnegative for p >= 2)."""
    a, b, p = (np.asarray(v, dtype=float) for v in (a, b, p))
    phi = lambda t: np.abs(t) ** (p - 2.0) * t  # noqa: E731
    return 2.0 ** (p - 2.0) * p * (phi(a) - phi(b)) * (a - b) - np.abs(a - b) ** p


# --- Green convolution ------------------------------------------------------


class GreenConvolver:
    """``(R * g)(x) = sum_{y in box} R(x - y) g(y)`` for a fixed table and box.

    The FFT route zero-pads every axis to at least ``4L + 1`` points, enough
    that circular wrap-around never reaches the box window.
    """

    def __init__(self, table: GreenTable, box: LatticeBox):
        if table.d != box.d:
            raise ValidationError(f"Green table has d={table.d}, box has d={box.d}")
        if not table.covers(box.L):
            raise ValidationError(
                f"Green table radius 2L={table.radius} cannot cover a box with L={box.L}"
            )
        self.table = table
        self.box = box
        dense = np.ascontiguousarray(table.restrict(box.L))
        self._flat = dense.ravel()
        L, d = box.L, box.d
        self.pad = tuple([sfft.next_fast_len(4 * L + 1, real=True)] * d)
        wrapped = np.zeros(self.pad)
        wrapped[(slice(0, 4 * L + 1),) * d] = dense
        wrapped = np.roll(wrapped, shift=(-2 * L,) * d, axis=tuple(range(d)))
        self._spectrum = sfft.rfftn(wrapped)

    def fft(self, g) -> np.ndarray:
        box = self.box
        g = box.check_field(g, "g")
        buf = np.zeros(self.pad)
        buf[(slice(0, box.side),) * box.d] = g.reshape(box.shape)
        out = sfft.irfftn(sfft.rfftn(buf) * self._spectrum, s=self.pad)
        return np.ascontiguousarray(out[(slice(0, box.side),) * box.d]).ravel()

    def direct(self, g, backend=None) -> np.ndarray:
        box = self.box
        g = box.check_field(g, "g")
        off, center = box.offsets
        return _impl(backend).convolve(g, off, center, self._flat)

    def __call__(self, g, method: str = "fft", backend=None) -> np.ndarray:
        if method == "fft":
            return self.fft(g)
        if method == "direct":
            return self.direct(g, backend)
        raise ValidationError(f"unknown convolution method {method!r}")


def convolve_green(table: GreenTable, g, box: LatticeBox, method: str = "fft", backend=None) -> np.ndarray:
    return GreenConvolver(table, box)(g, method, backend)


def check_convolution(conv: GreenConvolver, g, tol: float = CONV_TOL) -> float:
    """Max ``|fft - direct|`` relative to the output scale; raises past ``tol``."""
    a, b = conv.fft(g), conv.direct(g)
    scale = max(np.max(np.abs(b)), np.finfo(float).tiny)
    err = float(np.max(np.abs(a - b)) / scale)
    if err > tol:
        raise NumericalConsistencyError(f"FFT and direct convolution differ by {err:.3e} of scale")
    return err


def hls_ratio(u, v, green: GreenTable, box: LatticeBox, r: float, t: float, conv: GreenConvolver | None = None) -> float:
    """``sum (R * u) v / (||u||_r ||v||_t)`` with ``1/r + 1/t + (d - alpha)/d = 2``."""
    d, alpha = green.d, green.alpha
    if abs(1.0 / r + 1.0 / t + (d - alpha) / d - 2.0) > 1e-12:
        raise ValidationError(f"exponents r={r}, t={t} violate 1/r + 1/t + (d-alpha)/d = 2")
    if not (r > 1 and t > 1):
        raise ValidationError("HLS exponents must exceed 1")
    u, v = box.check_field(u, "u"), box.check_field(v, "v")
    if np.any(u < 0) or np.any(v < 0):
        raise ValidationError("HLS ratio is defined for nonnegative fields")
    nu, nv = lp_norm(u, r), lp_norm(v, t)
    if nu == 0 or nv == 0:
        raise ValidationError("HLS ratio needs nonzero fields")
    conv = conv or GreenConvolver(green, box)
    return float(np.dot(conv(u), v) / (nu * nv))
