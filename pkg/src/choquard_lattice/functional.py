"""Choquard energy with the positive-part reduction, its gradient, and the Nehari map.

The functional is

    J(u) = (1/p) ||u||^p - 1/2 sum_x (R * F(u+))(x) F(u+(x)),

with ``||u||^p = sum_x |grad^s u|^p + h |u|^p``. Its gradient against the
site basis is ``(-Delta)_p^s u + h |u|^(p-2) u - (R * F(u+)) f(u+)``, and the
Nehari manifold is ``{u != 0 : ||u||^p = sum (R * F(u+)) f(u+) u+}``.

Every evaluation convolves ``F(u+)`` once and reuses the result for the
energy, the Nehari pairing and the gradient.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend
from .errors import ProjectionError, ValidationError
from .lattice import LatticeBox
from .operators import GreenConvolver, KernelTable, PotentialField, gradient_weight
from .spectral import GreenTable

PROBE_GRID = np.logspace(-6, 3, 400)
F1_GRID = 10.0 ** -np.arange(1, 7)


def tau_threshold(d: int, alpha: float, p: float) -> float:
    return (d + alpha) * p / (2.0 * d)


@dataclass(frozen=True)
class Nonlinearity:
    """``f`` (vanishing on ``t <= 0``), its primitive ``F`` and the exponents."""

    kind: str
    p: float
    tau: float
    theta: float
    f: Callable = field(repr=False)
    F: Callable = field(repr=False)

    @property
    def is_power(self) -> bool:
        return self.kind == "pure-power"


def _power_f(tau):
    def f(t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, np.abs(t) ** (tau - 1.0), 0.0)

    def F(t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, np.abs(t) ** tau / tau, 0.0)

    return f, F


def _check_exponents(tau, p, d, alpha):
    if not p >= 2:
        raise ValidationError(f"p must be >= 2, got {p}")
    if not 0 < alpha < d:
        raise ValidationError(f"alpha must lie in (0, d) = (0, {d}), got {alpha}")
    bound = tau_threshold(d, alpha, p)
    if not tau > bound:
        raise ValidationError(
            f"hypothesis (f2) needs tau > (d+alpha)p/(2d) = {bound:g}, got tau={tau:g}"
        )


def make_power_nonlinearity(tau: float, p: float, d: int, alpha: float) -> Nonlinearity:
    """``f(t) = t^(tau-1)``, ``F(t) = t^tau / tau`` for ``t > 0``; ``theta = 2 tau``."""
    _check_exponents(tau, p, d, alpha)
    f, F = _power_f(float(tau))
    nl = Nonlinearity("pure-power", float(p), float(tau), 2.0 * tau, f, F)
    report = check_hypotheses(nl)
    if not report.ok:
        warnings.warn(f"pure power tau={tau:g}, p={p:g}: {report.summary()}", stacklevel=2)
    return nl


def make_custom_nonlinearity(f, F, tau, theta, p, d, alpha, problem=None) -> Nonlinearity:
    """Register a user nonlinearity; sampled hypothesis failures only warn."""
    _check_exponents(tau, p, d, alpha)
    if not p < theta:
        raise ValidationError(f"theta must exceed p, got theta={theta}, p={p}")

    def f_pos(t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, f(np.maximum(t, 0.0)), 0.0)

    def F_pos(t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, F(np.maximum(t, 0.0)), 0.0)

    nl = Nonlinearity("custom", float(p), float(tau), float(theta), f_pos, F_pos)
    report = check_hypotheses(nl, problem)
    if not report.ok:
        warnings.warn(f"custom nonlinearity: {report.summary()}", stacklevel=2)
    return nl


@dataclass
class HypothesisCheck:
    name: str
    ok: bool
    detail: str
    value: float = float("nan")


@dataclass
class HypothesisReport:
    checks: list
    growth_constants: dict

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def summary(self) -> str:
        bad = [f"{c.name} ({c.detail})" for c in self.checks if not c.ok]
        return "all sampled hypotheses hold" if not bad else "failed: " + "; ".join(bad)


def check_hypotheses(nl: Nonlinearity, problem=None, rays: int = 10, seed: int = 0) -> HypothesisReport:
    """Sampled checks of (f1)-(f4); necessary conditions only, never proofs."""
    p, tau, theta = nl.p, nl.tau, nl.theta
    t = PROBE_GRID
    ft, Ft = nl.f(t), nl.F(t)
    checks = []

    ratio = nl.f(F1_GRID) / F1_GRID ** (p - 1.0)
    f1 = bool(np.all(np.diff(ratio) <= 1e-12 * ratio[:-1]) and ratio[-1] <= 1e-2 * max(ratio[0], 1.0))
    checks.append(HypothesisCheck("f1", f1 and float(nl.f(0.0)) == 0.0, "f(t)/t^(p-1) on t=1e-1..1e-6", float(ratio[-1])))

    C = float(np.max(ft / (1.0 + t ** (tau - 1.0))))
    checks.append(HypothesisCheck("f2", bool(np.isfinite(C)), f"C = {C:.4g}", C))

    lower = float(np.min(theta * Ft))
    gap = 2.0 * ft * t - theta * Ft
    f3 = lower >= 0 and bool(np.all(gap >= -1e-12 * np.abs(2.0 * ft * t)))
    checks.append(HypothesisCheck("f3", f3, f"min slack {float(np.min(gap)):.3g}", float(np.min(gap))))

    if nl.is_power:
        rate = 2.0 * tau - p
        checks.append(HypothesisCheck("f4", rate > 0, f"ray profile grows like t^{rate:g}", rate))
    elif problem is not None:
        rng = np.random.default_rng(seed)
        worst = np.inf
        ts = np.geomspace(0.05, 20.0, 40)
        for _ in range(rays):
            u = rng.random(problem.box.M)
            prof = ray_profile(u, problem, ts)
            worst = min(worst, float(np.min(np.diff(prof) / np.abs(prof[1:]))))
        checks.append(HypothesisCheck("f4", worst > 0, f"{rays} sampled rays, min rel. increment {worst:.3g}", worst))
    else:
        checks.append(HypothesisCheck("f4", True, "not sampled (no problem given)"))

    growth = {}
    for eps in (0.1, 0.01):
        excess = np.maximum(ft - eps * t ** (p - 1.0), 0.0) / t ** (tau - 1.0)
        growth[eps] = float(np.max(excess))
    return HypothesisReport(checks, growth)


# --- problem bundle --------------------------------------------------------


@dataclass
class Problem:
    """Everything a single energy evaluation needs, built for one box."""

    box: LatticeBox
    kernel: KernelTable
    green: GreenTable
    potential: PotentialField
    nonlinearity: Nonlinearity
    p: float
    conv_method: str = "fft"
    backend: str | None = None
    conv: GreenConvolver = field(init=False, repr=False)

    def __post_init__(self):
        box = self.box
        if (self.kernel.d, self.kernel.L) != (box.d, box.L):
            raise ValidationError("kernel table does not match the box")
        if self.green.d != box.d or not self.green.covers(box.L):
            raise ValidationError("Green table does not cover the box")
        if self.potential.values.shape != (box.M,):
            raise ValidationError("potential does not match the box")
        if self.nonlinearity.p != self.p:
            raise ValidationError("nonlinearity was built for a different p")
        self.conv = GreenConvolver(self.green, box)

    @property
    def h(self) -> np.ndarray:
        return self.potential.values

    @property
    def theta(self) -> float:
        return self.nonlinearity.theta

    def kernels(self):
        return _backend.kernels if self.backend is None else _backend.load(self.backend)


def build_problem(
    d: int,
    L: int,
    s: float,
    p: float,
    alpha: float,
    tau: float,
    kernel_model: str = "power-law",
    N: int | None = None,
    h0: float = 1.0,
    a: float = 1.0,
    beta: float = 1.0,
    center=None,
    cache_dir=None,
    conv_method: str = "fft",
) -> Problem:
    from .lattice import build_box
    from .operators import cached_kernel_table, make_potential
    from .spectral import cached_green_table

    nl = make_power_nonlinearity(tau, p, d, alpha)
    box = build_box(d, L)
    kernel, _ = cached_kernel_table(kernel_model, s, d, L, N, cache_dir)
    green, _ = cached_green_table(d, alpha, L, N, cache_dir)
    pot = make_potential(box, h0, a, beta, center)
    return Problem(box, kernel, green, pot, nl, float(p), conv_method)


# --- evaluation ------------------------------------------------------------


@dataclass
class Evaluation:
    """Shared intermediate quantities of one field evaluation."""

    u: np.ndarray
    grad_sq: np.ndarray
    norm_p: float
    up: np.ndarray
    Fu: np.ndarray
    conv: np.ndarray
    choquard: float
    pairing: float

    def energy(self, p) -> float:
        return self.norm_p / p - 0.5 * self.choquard


def evaluate(u, problem: Problem) -> Evaluation:
    box = problem.box
    u = box.check_field(u)
    off, center = box.offsets
    G = np.maximum(problem.kernels().gradient_sq(u, off, center, problem.kernel.flat), 0.0)
    p = problem.p
    norm = float(np.sum(G ** (p / 2.0)) + np.sum(problem.h * np.abs(u) ** p))
    nl = problem.nonlinearity
    up = np.maximum(u, 0.0)
    Fu = nl.F(up)
    if np.any(Fu):
        c = problem.conv(Fu, problem.conv_method, problem.backend)
    else:
        c = np.zeros_like(u)
    chq = float(np.dot(c, Fu))
    pair = float(np.dot(c, nl.f(up) * up))
    return Evaluation(u, G, norm, up, Fu, c, chq, pair)


def gradient_from(ev: Evaluation, problem: Problem) -> np.ndarray:
    p = problem.p
    box = problem.box
    off, center = box.offsets
    g = gradient_weight(np.sqrt(ev.grad_sq), p)
    lap = problem.kernels().weighted_laplacian(ev.u, g, off, center, problem.kernel.flat)
    u = ev.u
    return lap + problem.h * np.abs(u) ** (p - 2.0) * u - ev.conv * problem.nonlinearity.f(ev.up)


@dataclass(frozen=True)
class EnergyBreakdown:
    norm_term: float
    choquard_term: float
    total: float


def choquard_energy(u, problem: Problem) -> float:
    """``sum (R * F(u+)) F(u+)``."""
    return evaluate(u, problem).choquard


def choquard_pairing(u, problem: Problem) -> float:
    """``sum (R * F(u+)) f(u+) u+``."""
    return evaluate(u, problem).pairing


def energy(u, problem: Problem) -> EnergyBreakdown:
    ev = evaluate(u, problem)
    norm_term = ev.norm_p / problem.p
    chq = 0.5 * ev.choquard
    return EnergyBreakdown(norm_term, chq, norm_term - chq)


def energy_gradient(u, problem: Problem) -> np.ndarray:
    return gradient_from(evaluate(u, problem), problem)


def energy_and_gradient(u, problem: Problem):
    ev = evaluate(u, problem)
    return ev.energy(problem.p), gradient_from(ev, problem), ev


def nehari_residual(u, problem: Problem) -> float:
    """``||u||^p - sum (R * F(u+)) f(u+) u+``; zero exactly on the Nehari manifold."""
    u = problem.box.check_field(u)
    if not np.any(u):
        raise ValidationError("the Nehari residual is undefined at u = 0")
    ev = evaluate(u, problem)
    return ev.norm_p - ev.pairing


def ray_profile(u, problem: Problem, ts) -> np.ndarray:
    """``sum (R * F(t u+)) f(t u+) u+ / t^(p-1)`` for each ``t``; increasing under (f4)."""
    u = problem.box.check_field(u)
    return np.array([evaluate(t * u, problem).pairing / t**problem.p for t in ts])


@dataclass(frozen=True)
class Projection:
    t: float
    v: np.ndarray
    method: str
    evaluations: int = 1


def nehari_project(u, problem: Problem, method: str = "auto", rtol: float = 1e-12) -> Projection:
    """Scale ``u`` onto the Nehari manifold: the unique ``t_u > 0`` with ``t_u u`` on it.

    ``closed-form`` (pure powers) uses ``t_u = (||u||^p / A(u))^(1/(2 tau - p))``;
    ``bisection`` brackets the root of the decreasing map
    ``psi(t) = ||u||^p - A(t u) / t^p`` and halves the bracket until its width
    is below ``rtol`` times its midpoint.
    """
    u = problem.box.check_field(u)
    if not np.any(u):
        raise ValidationError("cannot project u = 0")
    if not np.any(u > 0):
        raise ProjectionError("u+ = 0: the ray through u never meets the Nehari manifold")
    nl = problem.nonlinearity
    if method == "auto":
        method = "closed-form" if nl.is_power else "bisection"
    ev = evaluate(u, problem)
    N = ev.norm_p
    if method == "closed-form":
        if not nl.is_power:
            raise ValidationError("closed-form projection needs a pure-power nonlinearity")
        if not ev.pairing > 0:
            raise ProjectionError("Choquard pairing vanishes along this ray")
        t = (N / ev.pairing) ** (1.0 / (2.0 * nl.tau - problem.p))
        return Projection(float(t), t * u, method, 1)
    if method != "bisection":
        raise ValidationError(f"unknown projection method {method!r}")

    p = problem.p
    count = [1]

    def psi(t):
        count[0] += 1
        return N - evaluate(t * u, problem).pairing / t**p

    limit = 2.0**60
    lo = hi = 1.0
    if N - ev.pairing > 0:
        while psi(hi) > 0:
            hi *= 2.0
            if hi > limit:
                raise ProjectionError("bracket expansion passed 2^60; nonlinearity violates (f4)?")
        lo = hi / 2.0
    else:
        while psi(lo) <= 0:
            lo /= 2.0
            if lo < 1.0 / limit:
                raise ProjectionError("bracket contraction passed 2^-60; nonlinearity violates (f1)?")
        hi = lo * 2.0
    while hi - lo > rtol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        if psi(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    return Projection(float(t), t * u, method, count[0])


def negative_ray_point(u, problem: Problem, max_log2: int = 60):
    """Smallest ``t = 2^k`` with ``J(t u) < 0``; returns ``(t, J(t u))``.

    Raises ``GeometryError`` when none exists below ``2^max_log2``.
    """
    from .errors import GeometryError

    u = problem.box.check_field(u)
    for k in range(max_log2 + 1):
        t = 2.0**k
        level = evaluate(t * u, problem).energy(problem.p)
        if level < 0:
            return t, level
    raise GeometryError(f"no negative-energy point on the ray up to t = 2^{max_log2}")


def small_sphere_levels(problem: Problem, rho: float, samples: int, seed: int = 0) -> np.ndarray:
    """``J`` on random fields rescaled to ``||u|| = rho`` (norm of the weighted space)."""
    rng = np.random.default_rng(seed)
    out = np.empty(samples)
    p = problem.p
    for i in range(samples):
        u = rng.standard_normal(problem.box.M)
        if i % 2:
            u = np.abs(u)
        n = evaluate(u, problem).norm_p ** (1.0 / p)
        out[i] = evaluate(rho * u / n, problem).energy(p)
    return out


def norm(u, problem: Problem) -> float:
    """``||u||`` itself (the p-th root of ``sobolev_norm_p``)."""
    return evaluate(u, problem).norm_p ** (1.0 / problem.p)


__all__ = [
    "Nonlinearity",
    "make_power_nonlinearity",
    "make_custom_nonlinearity",
    "check_hypotheses",
    "Problem",
    "build_problem",
    "EnergyBreakdown",
    "choquard_energy",
    "choquard_pairing",
    "energy",
    "energy_gradient",
    "nehari_residual",
    "nehari_project",
    "tau_threshold",
]
