"""Randomized property suite over one configured problem.

Each property draws JSON-serializable samples and maps each to a margin;
a sample passes when its margin is nonnegative. The first failing sample
of every property is kept verbatim, so ``replay`` can re-run it exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import operators as ops
from .functional import (
    Problem,
    check_hypotheses,
    energy,
    energy_gradient,
    evaluate,
    nehari_project,
    negative_ray_point,
    ray_profile,
)
from .lattice import build_box, l1_distance
from .spectral import symmetry_images

SMALL_BOX_L = 4
FD_STEP = 1e-5


@dataclass
class Property:
    name: str
    anchor: str
    draw: Callable
    check: Callable
    count: Callable = lambda samples: samples


@dataclass
class PropertyResult:
    name: str
    anchor: str
    passed: bool
    samples: int
    worst_margin: float
    failing_case: dict | None = field(default=None)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("failing_case")
        return out


class Context:
    """Problem plus the small auxiliary boxes some properties need."""

    def __init__(self, problem: Problem, rho: float):
        self.problem = problem
        self.rho = rho
        self.box = problem.box
        self.kernel = problem.kernel
        self.p = problem.p
        self._small = {}

    def small_kernel(self, d: int):
        if d not in self._small:
            self._small[d] = ops.build_kernel_table("power-law", self.kernel.s, d, SMALL_BOX_L)
        return self._small[d]


def _vec(rng, n, positive=False):
    x = rng.random(n) if positive else rng.standard_normal(n)
    return [float(v) for v in x]


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)


# --- lattice and tables ------------------------------------------------------


def _draw_triangle(rng, ctx):
    d = ctx.box.d
    return {"sites": rng.integers(-50, 51, size=(3, d)).tolist()}


def _check_triangle(ctx, case):
    x, y, z = case["sites"]
    return float(l1_distance(x, y) + l1_distance(y, z) - l1_distance(x, z))


def _check_bijection(ctx, case):
    box = build_box(case["d"], case["L"])
    ok = all(box.index_of(box.site_of(i)) == i for i in range(box.M))
    return 0.0 if ok else -1.0


def _check_green_symmetry(ctx, case):
    table = ctx.problem.green
    worst = 0.0
    for z in case["displacements"]:
        ref = table.value(z)
        worst = max(worst, max(_rel(table.value(w), ref) for w in symmetry_images(z)))
    return 1e-12 - worst


def _draw_displacements(rng, ctx):
    r = ctx.problem.green.radius
    return {"displacements": rng.integers(-r, r + 1, size=(5, ctx.box.d)).tolist()}


def _check_green_positive(ctx, case):
    return float(np.min(ctx.problem.green.values))


def _check_kernel_bound(ctx, case):
    return ops.check_kernel_bounds(ctx.kernel).margin + 1e-12


# --- operators ---------------------------------------------------------------


def _draw_ibp(rng, ctx):
    d = int(rng.integers(1, 3))
    M = (2 * SMALL_BOX_L + 1) ** d
    return {"d": d, "p": float(rng.choice([2.0, 3.0, 4.0])), "u": _vec(rng, M), "phi": _vec(rng, M)}


def _check_ibp(ctx, case):
    k = ctx.small_kernel(case["d"])
    u, phi, p = np.array(case["u"]), np.array(case["phi"]), case["p"]
    lhs = float(np.dot(phi, ops.p_laplacian_apply(u, k, p)))
    g = ops.gradient_weight(ops.gradient_length(u, k), p)
    terms = g * ops.gradient_form(u, phi, k)
    rhs = float(np.sum(terms))
    scale = max(float(np.sum(np.abs(terms))), np.finfo(float).tiny)
    return 1e-10 - abs(lhs - rhs) / scale


def _draw_signed(rng, ctx):
    return {"p": float(rng.uniform(2.0, 4.0)), "u": _vec(rng, ctx.box.M)}


def _check_sign(ctx, case):
    k, p = ctx.kernel, case["p"]
    u = np.array(case["u"])
    up, um = ops.positive_part(u), ops.negative_part(u)
    split = np.max(np.abs(up + um - u))
    product = np.max(np.abs(up * um))
    cross = float(np.min(ops.gradient_form(up, um, k)))
    full = float(np.sum(ops.gradient_length(u, k) ** p))
    neg = float(np.sum(ops.gradient_length(um, k) ** p))
    tol = 1e-12
    return min(tol - split, tol - product, cross + tol, (full - neg) / max(full, 1.0) + tol)


def _draw_scalar(rng, ctx):
    a, b = rng.standard_normal(2) * 10.0 ** rng.uniform(-2, 2)
    return {"a": float(a), "b": float(b), "p": float(rng.uniform(2.0, 4.0))}


def _check_scalar(ctx, case):
    a, b, p = case["a"], case["b"], case["p"]
    slack = float(ops.p_inequality_slack(a, b, p))
    return slack / max(abs(a - b) ** p, np.finfo(float).tiny) + 1e-12


def _draw_positive(rng, ctx):
    return {"g": _vec(rng, ctx.box.M, positive=True)}


def _check_convolution(ctx, case):
    conv = ctx.problem.conv
    g = np.array(case["g"])
    a, b = conv.fft(g), conv.direct(g)
    return 1e-10 - float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), np.finfo(float).tiny))


def _draw_hls(rng, ctx):
    return {"u": _vec(rng, ctx.box.M, True), "v": _vec(rng, ctx.box.M, True), "a": float(rng.uniform(0.1, 10)), "b": float(rng.uniform(0.1, 10))}


def _check_hls(ctx, case):
    pr = ctx.problem
    d, alpha = pr.box.d, pr.green.alpha
    r = t = 2.0 * d / (d + alpha)
    u, v = np.array(case["u"]), np.array(case["v"])
    base = ops.hls_ratio(u, v, pr.green, pr.box, r, t, pr.conv)
    scaled = ops.hls_ratio(case["a"] * u, case["b"] * v, pr.green, pr.box, r, t, pr.conv)
    return 1e-10 - _rel(base, scaled) if base > 0 and np.isfinite(base) else -1.0


# --- functional --------------------------------------------------------------


def _draw_superlinear(rng, ctx):
    return {"u": _vec(rng, ctx.box.M, True), "t": float(rng.choice([1.0, 1.5, 2.0, 4.0]))}


def _check_superlinear(ctx, case):
    pr = ctx.problem
    u, t = np.array(case["u"]), case["t"]
    base, scaled = evaluate(u, pr), evaluate(t * u, pr)
    theta = pr.theta
    e1 = _rel(scaled.choquard, t**theta * base.choquard)
    e2 = _rel(scaled.pairing, t ** (2 * pr.nonlinearity.tau) * base.pairing)
    return 1e-10 - max(e1, e2)


def _draw_gradient(rng, ctx):
    return {"u": _vec(rng, ctx.box.M), "dir": _vec(rng, ctx.box.M)}


def _check_gradient(ctx, case):
    pr = ctx.problem
    u, w = np.array(case["u"]), np.array(case["dir"])
    w /= np.linalg.norm(w)
    fd = (energy(u + FD_STEP * w, pr).total - energy(u - FD_STEP * w, pr).total) / (2 * FD_STEP)
    an = float(np.dot(energy_gradient(u, pr), w))
    tol = 1e-6 if pr.p == 2 else 1e-5
    return tol - abs(fd - an) / max(abs(an), 1.0)


def _check_projection(ctx, case):
    pr = ctx.problem
    u = np.array(case["g"])
    a = nehari_project(u, pr, "closed-form")
    b = nehari_project(u, pr, "bisection")
    ev = evaluate(a.v, pr)
    resid = abs(ev.norm_p - ev.pairing) / ev.norm_p
    again = nehari_project(a.v, pr, "closed-form").t
    c = float(case.get("c", 3.0))
    scaled = nehari_project(c * u, pr, "closed-form").t
    return min(1e-8 - _rel(a.t, b.t), 1e-10 - resid, 1e-10 - abs(again - 1.0), 1e-10 - _rel(scaled, a.t / c))


def _draw_projection(rng, ctx):
    out = _draw_positive(rng, ctx)
    out["c"] = float(rng.uniform(0.2, 5.0))
    return out


def _check_manifold_positive(ctx, case):
    pr = ctx.problem
    v = nehari_project(np.array(case["g"]), pr).v
    ev = evaluate(v, pr)
    level = ev.energy(pr.p)
    floor = (1.0 / pr.p - 1.0 / pr.theta) * ev.norm_p
    return min(level, (level - floor) / level + 1e-10)


def _check_ray(ctx, case):
    pr = ctx.problem
    ts = np.geomspace(0.05, 20.0, 40)
    prof = ray_profile(np.array(case["g"]), pr, ts)
    return float(np.min(np.diff(prof) / np.abs(prof[1:])))


def _check_eta(ctx, case):
    pr = ctx.problem
    etas = []
    for seed in case["seeds"]:
        rng = np.random.default_rng(seed)
        norms = [evaluate(nehari_project(rng.random(pr.box.M), pr).v, pr).norm_p ** (1 / pr.p) for _ in range(case["batch"])]
        etas.append(min(norms))
    lo, hi = min(etas), max(etas)
    return min(lo, 0.2 - (hi - lo) / hi)


def _draw_direction(rng, ctx):
    u = rng.standard_normal(ctx.box.M)
    if rng.random() < 0.5:
        u = np.abs(u)
    return {"u": [float(x) for x in u]}


def _check_sphere(ctx, case):
    pr = ctx.problem
    u = np.array(case["u"])
    n = evaluate(u, pr).norm_p ** (1 / pr.p)
    return energy(ctx.rho * u / n, pr).total


def _check_endpoint(ctx, case):
    pr = ctx.problem
    u = np.array(case["g"])
    t, level = negative_ray_point(u, pr)
    norm_e = evaluate(t * u, pr).norm_p ** (1 / pr.p)
    return min(-level, norm_e - ctx.rho)


def _check_hypotheses(ctx, case):
    report = check_hypotheses(ctx.problem.nonlinearity, ctx.problem)
    return 0.0 if report.ok else -1.0


def _once(rng, ctx):
    return {}


def registry(samples: int) -> list:
    one = lambda n: 1  # noqa: E731
    return [
        Property("lattice-index-bijection", "site indexing round trip", lambda r, c: {"d": c.box.d, "L": min(c.box.L, 6)}, _check_bijection, one),
        Property("l1-triangle-inequality", "graph distance", _draw_triangle, _check_triangle),
        Property("green-symmetry", "Green function symmetry group", _draw_displacements, _check_green_symmetry, lambda n: min(n, 50)),
        Property("green-positivity", "Green function positivity", _once, _check_green_positive, one),
        Property("kernel-two-sided-bound", "kernel power-law bounds", _once, _check_kernel_bound, one),
        Property("integration-by-parts", "summation by parts for the p-Laplacian", _draw_ibp, _check_ibp),
        Property("sign-decomposition", "positive and negative parts", _draw_signed, _check_sign),
        Property("scalar-p-inequality", "monotonicity of |t|^(p-2) t", _draw_scalar, _check_scalar),
        Property("fft-direct-convolution", "Green convolution", _draw_positive, _check_convolution),
        Property("hls-scaling", "discrete HLS ratio homogeneity", _draw_hls, _check_hls),
        Property("choquard-superlinearity", "t^theta growth of the Choquard term", _draw_superlinear, _check_superlinear),
        Property("gradient-finite-difference", "derivative of the energy", _draw_gradient, _check_gradient, lambda n: min(n, 20)),
        Property("nehari-projection", "unique Nehari scaling t_u", _draw_projection, _check_projection, lambda n: min(n, 50)),
        Property("nehari-energy-positivity", "energy bound on the Nehari manifold", _draw_positive, _check_manifold_positive),
        Property("ray-monotonicity", "hypothesis (f4) on sampled rays", _draw_positive, _check_ray, lambda n: min(n, 50)),
        Property("nehari-floor-stability", "Nehari manifold stays away from 0", lambda r, c: {"seeds": [int(x) for x in r.integers(0, 2**31, 2)], "batch": 100}, _check_eta, one),
        Property("small-sphere-positivity", "mountain-pass geometry near 0", _draw_direction, _check_sphere, lambda n: max(n, 1000)),
        Property("negative-endpoint", "mountain-pass geometry far out", _draw_positive, _check_endpoint, lambda n: min(n, 20)),
        Property("nonlinearity-hypotheses", "hypotheses (f1)-(f4), sampled", _once, _check_hypotheses, one),
    ]


def inject_fault(problem: Problem, fault: str) -> Problem:
    """``negative-kernel`` flips the nearest-neighbor kernel entries along axis 1 to -1."""
    if fault == "none":
        return problem
    if fault != "negative-kernel":
        raise ValueError(f"unknown fault {fault!r}")
    vals = np.array(problem.kernel.values)
    r, d = problem.kernel.radius, problem.box.d
    for sign in (1, -1):
        vals[(r + sign,) + (r,) * (d - 1)] = -1.0
    problem.kernel = problem.kernel.with_values(vals)
    return problem


def run_suite(problem: Problem, samples: int = 200, seed: int = 0, rho: float = 0.5) -> list:
    ctx = Context(problem, rho)
    results = []
    for idx, prop in enumerate(registry(samples)):
        rng = np.random.default_rng([seed, idx])
        n = prop.count(samples)
        worst, failing = np.inf, None
        for i in range(n):
            case = prop.draw(rng, ctx)
            try:
                margin = float(prop.check(ctx, case))
            except Exception as exc:  # a crash is a failure of that case
                margin = -np.inf
                case = dict(case, error=f"{type(exc).__name__}: {exc}")
            if not margin >= 0 and failing is None:
                failing = {"property": prop.name, "seed": seed, "sample": i, "case": case}
            worst = min(worst, margin)
        results.append(PropertyResult(prop.name, prop.anchor, failing is None, n, worst, failing))
    return results


def replay(problem: Problem, failing: dict, rho: float = 0.5) -> float:
    """Re-run one serialized failing case; returns its margin."""
    props = {p.name: p for p in registry(1)}
    case = {k: v for k, v in failing["case"].items() if k != "error"}
    return float(props[failing["property"]].check(Context(problem, rho), case))


def report_json(results: list, meta: dict) -> str:
    body = {
        "meta": meta,
        "passed": all(r.passed for r in results),
        "properties": [r.summary() for r in results],
    }
    return json.dumps(body, indent=2, sort_keys=True, default=float) + "\n"
