"""Torus integrals of powers of the lattice symbol ``mu(k) = 2d - 2 sum_j cos k_j``.

The Riesz-type Green's function ``R_alpha`` and the constant ``K_alpha`` are
both averages over the torus ``[0, 2 pi)^d``. They are evaluated on the
midpoint grid ``k_j = 2 pi (l_j + 1/2) / N``, which never touches the
singular point ``k = 0``. The midpoint rule converges only algebraically
there (error ``~ N^-(d + gamma)`` for an integrand ``~ |k|^gamma``), so each
quantity is computed on the nested grids ``N, 2N, ..., 2^levels N`` and
Richardson-extrapolated through the exponents ``d + gamma + 2j``.

Because the integrand is even in every coordinate and the midpoint grid is
symmetric under ``k_j -> 2 pi - k_j``, the complex exponential reduces to a
product of cosines and only one half of each axis has to be visited.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import permutations, product
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .errors import NumericalConsistencyError, ToleranceError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_LEVELS = 4
IMAG_TOL = 1e-10


def default_quadrature_N(d: int) -> int:
    return 256 if d <= 2 else 96


def mu(k, d: int | None = None):
    """Lattice symbol ``2d - 2 sum_j cos(k_j)``; the last axis of ``k`` runs over ``j``."""
    k = np.asarray(k, dtype=float)
    if k.ndim == 0:
        k = k[None]
    if d is not None and k.shape[-1] != d:
        raise ValidationError(f"torus point has {k.shape[-1]} components, expected {d}")
    dim = k.shape[-1]
    return 2.0 * dim - 2.0 * np.cos(k).sum(axis=-1)


def _check_alpha(d: int, alpha: float):
    if not 0.0 < alpha < d:
        raise ValidationError(f"alpha must lie in (0, d) = (0, {d}), got {alpha}")


def _check_N(N: int, minimum: int):
    if int(N) != N or N < minimum or N % 2:
        raise ValidationError(f"quadrature N must be an even integer >= {minimum}, got {N}")


def midpoint_cosine_sums(d: int, N: int, power: float, zmax: int, chunk: int = 32) -> np.ndarray:
    """``N^-d sum_l mu(k_l)^power prod_j cos(z_j k_lj)`` for ``0 <= z_j <= zmax``.

    Returns an array of shape ``(zmax+1,)*d`` indexed by the nonnegative
    displacement. Memory stays at ``chunk * (N/2)^(d-1)`` grid values.
    """
    half = N // 2
    k = 2.0 * np.pi * (np.arange(half) + 0.5) / N
    cos_table = np.cos(np.outer(np.arange(zmax + 1), k))
    axis_symbol = 2.0 - 2.0 * np.cos(k)
    rest = np.zeros((half,) * (d - 1)) if d > 1 else np.zeros(())
    for j in range(d - 1):
        shape = [1] * (d - 1)
        shape[j] = half
        rest = rest + axis_symbol.reshape(shape)
    out = np.zeros((zmax + 1,) * d)
    for start in range(0, half, chunk):
        sl = slice(start, start + chunk)
        block = np.power(axis_symbol[sl].reshape((-1,) + (1,) * (d - 1)) + rest, power)
        acc = np.tensordot(cos_table[:, sl], block, axes=(1, 0))
        for _ in range(d - 1):
            acc = np.tensordot(acc, cos_table, axes=(1, 1))
        out += acc
    return out / float(half) ** d


def richardson(values, exponents):
    """Eliminate error terms ``h^e`` (``h ~ 1/N``) from estimates on grids ``N 2^j``."""
    vals = list(values)
    for e in exponents:
        f = 2.0**e
        vals = [(f * vals[i + 1] - vals[i]) / (f - 1.0) for i in range(len(vals) - 1)]
    return vals[0]


def extrapolated_cosine_transform(d, N, power, zmax, levels=DEFAULT_LEVELS):
    """Richardson-extrapolated torus average of ``mu^power cos(z.k)``.

    Returns ``(values, refined)``: ``values`` uses the grids ``N .. 2^levels N``;
    ``refined`` is the same construction started at ``2N`` (one level fewer,
    identical finest grid), so ``|values - refined|`` measures what doubling
    the base grid changes.
    """
    if levels < 1:
        raise ValidationError("at least one Richardson level is required")
    sums = [midpoint_cosine_sums(d, N * 2**j, power, zmax) for j in range(levels + 1)]
    exps = [d + 2.0 * power + 2.0 * j for j in range(levels)]
    return richardson(sums, exps), richardson(sums[1:], exps[:-1])


def compute_K_alpha(d: int, alpha: float, N: int = 64, tol: float = DEFAULT_TOL, levels: int = 3) -> float:
    """Fractional degree ``(2 pi)^-d int mu^(alpha/2) dk``."""
    _check_alpha(d, alpha)
    _check_N(N, 16)
    val, refined = extrapolated_cosine_transform(d, N, alpha / 2.0, 0, levels)
    val, refined = float(val.ravel()[0]), float(refined.ravel()[0])
    if not val > 0:
        raise NumericalConsistencyError(f"K_alpha evaluated to {val}")
    if abs(val - refined) > tol * abs(val):
        raise ToleranceError(
            f"K_alpha refinement changed the value by {abs(val - refined) / val:.3e} (relative), "
            f"tolerance {tol:.1e}",
            coarse=val,
            fine=refined,
        )
    return val


def _symmetrize(octant: np.ndarray, d: int) -> np.ndarray:
    """Extend a table over ``z >= 0`` to ``[-zmax, zmax]^d`` by reflection."""
    full = octant
    for ax in range(d):
        mirrored = np.flip(np.take(full, np.arange(1, full.shape[ax]), axis=ax), axis=ax)
        full = np.concatenate([mirrored, full], axis=ax)
    return np.ascontiguousarray(full)


def _imaginary_parts(d, N, power, zmax) -> np.ndarray:
    """Imaginary part of the full complex midpoint sum on ``[-zmax, zmax]^d``."""
    k = 2.0 * np.pi * (np.arange(N) + 0.5) / N
    grids = np.meshgrid(*([k] * d), indexing="ij", sparse=True)
    g = np.power(2.0 * d - 2.0 * sum(np.cos(x) for x in grids), power)
    spec = np.fft.ifftn(g)
    z = np.arange(-zmax, zmax + 1)
    sub = spec[np.ix_(*([z % N] * d))]
    zz = np.meshgrid(*([z] * d), indexing="ij", sparse=True)
    return (sub * np.exp(1j * np.pi * sum(zz) / N)).imag


@dataclass(frozen=True)
class GreenTable:
    """``R_alpha(z)`` for every displacement with ``max_j |z_j| <= 2L``."""

    d: int
    alpha: float
    L: int
    N: int
    K_alpha: float
    values: np.ndarray = field(repr=False)
    refinement_delta: float = 0.0
    imag_ratio: float = 0.0

    @property
    def radius(self) -> int:
        return 2 * self.L

    def value(self, z) -> float:
        z = tuple(int(c) for c in np.atleast_1d(z))
        if len(z) != self.d:
            raise ValidationError(f"displacement {z} does not have dimension {self.d}")
        if max(abs(c) for c in z) > self.radius:
            raise ValidationError(f"displacement {z} outside the table radius {self.radius}")
        return float(self.values[tuple(c + self.radius for c in z)])

    def axis_values(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=int)
        idx = [np.full_like(m, self.radius)] * self.d
        idx[0] = m + self.radius
        return self.values[tuple(idx)]

    def covers(self, L: int) -> bool:
        return self.L >= L

    def restrict(self, L: int) -> np.ndarray:
        """Dense displacement table for a smaller box radius ``L``."""
        if L > self.L:
            raise ValidationError(f"table radius L={self.L} cannot serve a box with L={L}")
        cut = self.radius - 2 * L
        sl = (slice(cut, self.values.shape[0] - cut),) * self.d
        return self.values[sl]


def compute_green_table(
    d: int,
    alpha: float,
    L: int,
    N: int | None = None,
    tol: float = DEFAULT_TOL,
    levels: int = DEFAULT_LEVELS,
) -> GreenTable:
    """Tabulate ``R_alpha(z) = K_alpha (2 pi)^-d int cos(z.k) mu^(-alpha/2) dk``."""
    _check_alpha(d, alpha)
    N = default_quadrature_N(d) if N is None else N
    _check_N(N, 32)
    if L < 1:
        raise ValidationError(f"box radius L must be >= 1, got {L}")
    zmax = 2 * L
    K = compute_K_alpha(d, alpha, max(64, N // 4), tol=tol)
    octant, refined = extrapolated_cosine_transform(d, N, -alpha / 2.0, zmax, levels)
    delta = float(np.max(np.abs(octant - refined) / np.abs(octant)))
    if not np.all(octant > 0):
        bad = np.unravel_index(np.argmin(octant), octant.shape)
        raise NumericalConsistencyError(
            f"Green's function not positive at displacement {tuple(int(b) for b in bad)}: "
            f"{octant[bad]:.3e}"
        )
    if delta > tol:
        raise ToleranceError(
            f"Green table refinement N={N} -> {2 * N} changed values by {delta:.3e} (relative), "
            f"tolerance {tol:.1e}; increase N",
            coarse=refined,
            fine=octant,
        )
    full = _symmetrize(octant, d)
    imag = float(np.max(np.abs(_imaginary_parts(d, N, -alpha / 2.0, zmax)) / full))
    if imag > IMAG_TOL:
        raise NumericalConsistencyError(
            f"residual imaginary part of the Green quadrature reaches {imag:.3e} of the value "
            f"(limit {IMAG_TOL:.0e})"
        )
    values = K * full
    values.setflags(write=False)
    log.info("green table d=%d alpha=%g L=%d N=%d: delta=%.2e", d, alpha, L, N, delta)
    return GreenTable(d, float(alpha), int(L), int(N), K, values, delta, imag)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residual: float


def fit_decay_exponent(table: GreenTable, axis_range) -> DecayFit:
    """Least-squares slope of ``log R(m e_1)`` against ``log m`` over ``[m_lo, m_hi]``."""
    m_lo, m_hi = (int(v) for v in axis_range)
    if not (2 <= m_lo < m_hi):
        raise ValidationError(f"need 2 <= m_lo < m_hi, got [{m_lo}, {m_hi}]")
    if m_hi > table.radius:
        raise ValidationError(f"table radius {table.radius} does not reach m_hi={m_hi}")
    m = np.arange(m_lo, m_hi + 1)
    vals = table.axis_values(m)
    if np.any(vals <= 0):
        raise ValidationError("nonpositive Green values in the fit range")
    x, y = np.log(m), np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return DecayFit(float(slope), float(intercept), resid)


# --- heat-kernel representation (independent route, 1-D integrals) ---------
#
#   mu^(-a/2)      = Gamma(a/2)^-1 int_0^inf t^(a/2-1) exp(-t mu) dt
#   (2pi)^-d int exp(i z.k - t mu) dk = prod_j exp(-2t) I_{z_j}(2t)


def heat_kernel_green(z, alpha: float, K_alpha: float = 1.0) -> float:
    """``R_alpha(z)`` through the subordinated heat kernel (needs ``0 < alpha < d``)."""
    z = [abs(int(c)) for c in np.atleast_1d(z)]
    _check_alpha(len(z), alpha)

    def integrand(t):
        return t ** (alpha / 2.0 - 1.0) * math.prod(special.ive(c, 2.0 * t) for c in z)

    head = integrate.quad(integrand, 0.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-13)[0]
    tail = integrate.quad(integrand, 1.0, np.inf, limit=400, epsabs=0.0, epsrel=1e-13)[0]
    return K_alpha * (head + tail) / special.gamma(alpha / 2.0)


def heat_kernel_K_alpha(d: int, alpha: float) -> float:
    """``K_alpha`` through the heat kernel; valid for ``0 < alpha < min(d, 2)``."""
    _check_alpha(d, alpha)
    if alpha >= 2.0:
        raise ValidationError("heat-kernel formula for K_alpha needs alpha < 2")

    def integrand(t):
        return -np.expm1(d * np.log(special.ive(0, 2.0 * t))) * t ** (-1.0 - alpha / 2.0)

    head = integrate.quad(integrand, 0.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-11)[0]
    tail = integrate.quad(integrand, 1.0, np.inf, limit=400, epsabs=0.0, epsrel=1e-11)[0]
    return (alpha / 2.0) / special.gamma(1.0 - alpha / 2.0) * (head + tail)


# --- cache files -------------------------------------------------------------


def _format_header(kind: str, meta: dict) -> str:
    return "# " + kind + " " + " ".join(f"{k}={v!r}" for k, v in meta.items())


def parse_header(line: str) -> tuple[str, dict]:
    if not line.startswith("# "):
        raise ValidationError("table file lacks its '# kind key=value ...' header")
    kind, *pairs = line[2:].split()
    meta = {}
    for pair in pairs:
        key, _, raw = pair.partition("=")
        meta[key] = _parse_scalar(raw)
    return kind, meta


def _parse_scalar(raw: str):
    raw = raw.strip("'\"")
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    return raw


def write_table(path, kind: str, meta: dict, values: np.ndarray):
    """Dump a dense displacement table as headered CSV, one displacement per row."""
    d = values.ndim
    r = (values.shape[0] - 1) // 2
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ",".join(f"z{j + 1}" for j in range(d))
    lines = [_format_header(kind, meta), f"{cols},value"]
    for z in product(range(-r, r + 1), repeat=d):
        v = values[tuple(c + r for c in z)]
        lines.append(",".join(str(c) for c in z) + "," + repr(float(v)))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_table(path) -> tuple[str, dict, np.ndarray]:
    with open(path) as fh:
        kind, meta = parse_header(fh.readline().rstrip("\n"))
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    d = data.shape[1] - 1
    side = round(len(data) ** (1.0 / d))
    if side**d != len(data):
        raise ValidationError(f"{path}: {len(data)} rows do not form a {d}-dimensional grid")
    values = data[:, -1].reshape((side,) * d)
    return kind, meta, values


def green_cache_path(cache_dir, d, alpha, L, N) -> Path:
    return Path(cache_dir) / f"green_d{d}_a{float(alpha)!r}_L{L}_N{N}.csv"


def save_green_table(table: GreenTable, path):
    meta = {
        "d": table.d,
        "alpha": table.alpha,
        "L": table.L,
        "N": table.N,
        "K_alpha": table.K_alpha,
        "refinement_delta": table.refinement_delta,
        "imag_ratio": table.imag_ratio,
    }
    write_table(path, "green", meta, table.values)


def load_green_table(path) -> GreenTable:
    kind, meta, values = read_table(path)
    if kind != "green":
        raise ValidationError(f"{path} holds a '{kind}' table, not a Green table")
    values.setflags(write=False)
    return GreenTable(
        int(meta["d"]),
        float(meta["alpha"]),
        int(meta["L"]),
        int(meta["N"]),
        float(meta["K_alpha"]),
        values,
        float(meta.get("refinement_delta", 0.0)),
        float(meta.get("imag_ratio", 0.0)),
    )


def cached_green_table(d, alpha, L, N=None, cache_dir=None, tol=DEFAULT_TOL) -> tuple[GreenTable, bool]:
    """Load the table from ``cache_dir`` if present, else build and store it.

    Returns ``(table, cache_hit)``.
    """
    N = default_quadrature_N(d) if N is None else N
    if cache_dir is not None:
        path = green_cache_path(cache_dir, d, alpha, L, N)
        if path.exists():
            return load_green_table(path), True
    table = compute_green_table(d, alpha, L, N, tol=tol)
    if cache_dir is not None:
        save_green_table(table, path)
    return table, False


def symmetry_images(z):
    """All images of ``z`` under coordinate permutations and sign flips."""
    z = tuple(int(c) for c in z)
    out = set()
    for perm in permutations(z):
        for signs in product((1, -1), repeat=len(z)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return sorted(out)
