"""Ground states by Nehari projected descent, a mountain-pass path solver, and certificates.

Nehari descent alternates a gradient step with the ray projection onto the
Nehari manifold; on the manifold the level is ``(1/p - 1/theta) ||v||^p``
for pure powers, so trial steps cost one field evaluation each.

The mountain-pass route keeps a piecewise-linear path of ``P`` nodes from
``0`` to a negative-energy endpoint ``e`` and moves its highest node with
climbing-image dynamics: the gradient component along the local path
chord is reversed, so the node climbs along the path while descending
across it.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GeometryError, ProjectionError, ValidationError
from .functional import Problem, evaluate, gradient_from, nehari_project, negative_ray_point

log = logging.getLogger(__name__)

ALGORITHMS = ("nehari-descent", "mountain-pass")
INITS = ("bump", "random-positive", "file")
#: scaled gradient below which the mountain-pass top node starts climbing
CLIMB_SWITCH = 1e-2


@dataclass
class SolverConfig:
    algorithm: str = "nehari-descent"
    tol_grad: float = 1e-6
    max_iter: int = 20000
    step0: float = 1.0
    c1: float = 1e-4
    backtrack: float = 0.5
    init: str = "bump"
    init_file: str | None = None
    seed: int = 0
    restarts: int = 1
    init_noise: float = 0.25
    path_nodes: int = 32
    reequalize_every: int = 10
    min_step: float = 1e-14

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.init not in INITS:
            raise ValidationError(f"init must be one of {INITS}, got {self.init!r}")
        if self.init == "file" and not self.init_file:
            raise ValidationError("init = 'file' needs init_file")
        if not self.tol_grad > 0:
            raise ValidationError("tol_grad must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValidationError("max_iter must be an integer >= 1")
        if int(self.restarts) != self.restarts or self.restarts < 1:
            raise ValidationError("restarts must be an integer >= 1")
        if not self.step0 > 0:
            raise ValidationError("step0 must be positive")
        if not 0 < self.c1 < 1 or not 0 < self.backtrack < 1:
            raise ValidationError("Armijo constants c1 and backtrack must lie in (0, 1)")
        if not 0 <= self.init_noise < 1:
            raise ValidationError("init_noise must lie in [0, 1)")
        if self.path_nodes < 3 or self.reequalize_every < 1:
            raise ValidationError("path_nodes must be >= 3 and reequalize_every >= 1")


@dataclass
class Solution:
    u: np.ndarray = field(repr=False)
    level: float
    nehari_residual: float
    norm_p: float
    grad_supnorm: float
    scaled_grad: float
    min_value: float
    iterations: int
    wall_time: float
    converged: bool
    algorithm: str
    message: str = ""
    restart_levels: list = field(default_factory=list)
    projection_failures: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def restart_spread(self) -> float:
        """``(max - min) / |min|`` over restart levels; 0 for a single run."""
        if len(self.restart_levels) < 2:
            return 0.0
        lo, hi = min(self.restart_levels), max(self.restart_levels)
        return (hi - lo) / abs(lo)


@dataclass
class PathState:
    nodes: list
    levels: np.ndarray
    max_index: int

    @property
    def max_level(self) -> float:
        return float(self.levels[self.max_index])


class TraceWriter:
    """One JSON record per iteration; a no-op without a stream."""

    def __init__(self, stream=None):
        self.stream = stream
        self.count = 0

    def __call__(self, **record):
        self.count += 1
        if self.stream is not None:
            self.stream.write(json.dumps(record, sort_keys=True) + "\n")


def scaled_supnorm(g: np.ndarray, u: np.ndarray, p: float) -> float:
    return float(np.max(np.abs(g)) / max(1.0, float(np.max(np.abs(u))) ** (p - 1.0)))


def initial_field(config: SolverConfig, problem: Problem, restart: int = 0) -> np.ndarray:
    """Restart 0 uses ``config.init``; later restarts draw random positive fields.

    Random fields are ``exp(-|x|_1) (1 + noise U(-1, 1))``. The envelope keeps
    the origin, where ``h`` is smallest, as the largest entry: on the lattice
    each site pins its own local minimizer, so an unshaped random start
    usually settles into an off-center state with a higher level.
    """
    box = problem.box
    kind = config.init if restart == 0 else "random-positive"
    if kind == "bump":
        return np.exp(-box.l1_norms.astype(float) ** 2 / box.L)
    if kind == "random-positive":
        rng = np.random.default_rng(config.seed + restart)
        noise = rng.uniform(-1.0, 1.0, box.M)
        return np.exp(-box.l1_norms.astype(float)) * (1.0 + config.init_noise * noise)
    return read_field(config.init_file, box)


def read_field(path, box) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (box.M, box.d + 1):
        raise ValidationError(f"field file {path} has shape {data.shape}, expected ({box.M}, {box.d + 1})")
    idx = [box.index_of(row[:-1].astype(int)) for row in data]
    u = np.zeros(box.M)
    u[idx] = data[:, -1]
    return box.check_field(u)


def write_field(path, u: np.ndarray, box) -> None:
    cols = ",".join(f"x{j + 1}" for j in range(box.d))
    with open(path, "w") as fh:
        fh.write(f"{cols},u\n")
        for site, val in zip(box.coords, u):
            fh.write(",".join(str(int(c)) for c in site) + f",{float(val)!r}\n")


# --- Nehari projected descent ---------------------------------------------


def _manifold_level(w, problem: Problem):
    """Project ``w`` and return ``(t, v, level)``; one evaluation for pure powers."""
    nl = problem.nonlinearity
    p = problem.p
    if nl.is_power:
        ev = evaluate(w, problem)
        if not ev.pairing > 0:
            raise ProjectionError("Choquard pairing vanishes; u+ collapsed")
        t = (ev.norm_p / ev.pairing) ** (1.0 / (2.0 * nl.tau - p))
        return t, t * ev.u, (1.0 / p - 1.0 / nl.theta) * t**p * ev.norm_p
    proj = nehari_project(w, problem)
    return proj.t, proj.v, evaluate(proj.v, problem).energy(p)


def _descent_run(u0, config: SolverConfig, problem: Problem, trace: TraceWriter, restart: int):
    p = problem.p
    if not np.any(u0 > 0):
        log.info("initial field has u+ = 0; negating it before projection")
        u0 = -u0
    t, v, level = _manifold_level(u0, problem)
    ev = evaluate(v, problem)
    g = gradient_from(ev, problem)
    history = [level]
    message = "max_iter reached"
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        gnorm = scaled_supnorm(g, v, p)
        if gnorm <= config.tol_grad:
            converged, message, it = True, "converged", it - 1
            break
        g2 = float(np.dot(g, g))
        step = config.step0
        while True:
            t_new, v_new, lvl_new = _manifold_level(v - step * g, problem)
            if lvl_new <= level - config.c1 * step * g2:
                break
            step *= config.backtrack
            if step < config.min_step:
                lvl_new = None
                break
        if lvl_new is None:
            message = "line search stalled"
            it -= 1
            break
        v, level = v_new, lvl_new
        ev = evaluate(v, problem)
        g = gradient_from(ev, problem)
        history.append(level)
        trace(restart=restart, iteration=it, level=level, grad_norm=scaled_supnorm(g, v, p), t_u=t_new, step=step)
    else:
        if scaled_supnorm(g, v, p) <= config.tol_grad:
            converged, message = True, "converged"
    return v, ev, g, it, converged, message, history


def _solution(v, ev, g, problem, iters, wall, converged, algorithm, message, history=()) -> Solution:
    p = problem.p
    return Solution(
        u=v,
        level=ev.energy(p),
        nehari_residual=ev.norm_p - ev.pairing,
        norm_p=ev.norm_p,
        grad_supnorm=float(np.max(np.abs(g))),
        scaled_grad=scaled_supnorm(g, v, p),
        min_value=float(np.min(v)),
        iterations=iters,
        wall_time=wall,
        converged=converged,
        algorithm=algorithm,
        message=message,
        history=list(history),
    )


def solve_ground_state(config: SolverConfig, problem: Problem, trace_stream=None) -> Solution:
    """Minimize the energy over the Nehari manifold; best of ``config.restarts`` runs."""
    start = time.perf_counter()
    trace = TraceWriter(trace_stream)
    best, levels, failures, total_iters = None, [], 0, 0
    restart, attempts = 0, 0
    while restart < config.restarts:
        attempts += 1
        if attempts > 4 * config.restarts:
            break
        u0 = initial_field(config, problem, restart + failures)
        try:
            v, ev, g, iters, conv, msg, hist = _descent_run(u0, config, problem, trace, restart)
        except ProjectionError as exc:
            failures += 1
            log.warning("restart %d: projection failed (%s); retrying with a fresh field", restart, exc)
            continue
        total_iters += iters
        sol = _solution(v, ev, g, problem, iters, 0.0, conv, "nehari-descent", msg, hist)
        levels.append(sol.level)
        if best is None or (sol.converged, -sol.level) > (best.converged, -best.level):
            best = sol
        restart += 1
    if best is None:
        raise ProjectionError(f"every initial field collapsed under projection ({failures} failures)")
    best.iterations = total_iters
    best.restart_levels = levels
    best.projection_failures = failures
    best.converged = best.converged and len(levels) == config.restarts
    best.wall_time = time.perf_counter() - start
    return best


# --- mountain pass ----------------------------------------------------------


def _straight_path(e: np.ndarray, P: int) -> list:
    return [(i / (P - 1)) * e for i in range(P)]


def _resample(nodes: list, count: int) -> list:
    """``count`` points equally spaced in arc length along a polyline."""
    pts = np.array(nodes)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0:
        return [pts[0].copy() for _ in range(count)]
    targets = np.linspace(0.0, arc[-1], count)
    out = []
    for s in targets:
        j = min(int(np.searchsorted(arc, s, side="right")) - 1, len(seg) - 1)
        lam = 0.0 if seg[j] == 0 else (s - arc[j]) / seg[j]
        out.append((1 - lam) * pts[j] + lam * pts[j + 1])
    out[0], out[-1] = pts[0].copy(), pts[-1].copy()
    return out


def reequalize(state: PathState, problem: Problem) -> PathState:
    """Redistribute nodes evenly on each side of the max node, which stays fixed."""
    P = len(state.nodes)
    k = state.max_index
    arcs = [np.linalg.norm(state.nodes[i + 1] - state.nodes[i]) for i in range(P - 1)]
    left, right = sum(arcs[:k]), sum(arcs[k:])
    n_left = int(round((P - 1) * left / (left + right))) if left + right > 0 else k
    n_left = min(max(n_left, 1), P - 2)
    nodes = _resample(state.nodes[: k + 1], n_left + 1)[:-1] + _resample(state.nodes[k:], P - n_left)
    levels = np.array([evaluate(n, problem).energy(problem.p) for n in nodes])
    levels[n_left] = state.levels[k]
    return PathState(nodes, levels, n_left)


def _locate_max(state: PathState) -> PathState:
    # endpoints are fixed, so only interior nodes may carry the maximum
    state.max_index = 1 + int(np.argmax(state.levels[1:-1]))
    return state


def _mp_direction(g, state: PathState, climbing: bool) -> np.ndarray:
    if not climbing:
        return -g
    k = state.max_index
    chord = state.nodes[k + 1] - state.nodes[k - 1]
    tau = chord / np.linalg.norm(chord)
    return -g + 2.0 * float(np.dot(g, tau)) * tau


def solve_mountain_pass(config: SolverConfig, problem: Problem, trace_stream=None, direction=None) -> Solution:
    """Deform a path from 0 to a negative-energy endpoint until its top node is critical.

    Far from a critical point the top node takes Armijo steps down its
    gradient, which lowers the path maximum. Once the scaled gradient falls
    below ``CLIMB_SWITCH`` it switches to climbing-image steps, accepted when
    the climbing force does not grow, and falls back if the force rises ten
    times above the switch level. Every step is capped at half the distance
    to the neighboring nodes so the node cannot hop across the ridge between
    two samples of the path.
    """
    start = time.perf_counter()
    p = problem.p
    trace = TraceWriter(trace_stream)
    u0 = initial_field(config, problem) if direction is None else problem.box.check_field(direction)
    if not np.any(u0 > 0):
        u0 = -u0
    scale, _ = negative_ray_point(u0, problem)
    P = config.path_nodes
    nodes = _straight_path(scale * u0, P)
    levels = np.array([evaluate(n, problem).energy(p) for n in nodes])
    state = _locate_max(PathState(nodes, levels, 0))
    eta = config.step0
    climbing = False
    converged, message, it = False, "max_iter reached", 0
    history = [state.max_level]
    for it in range(1, config.max_iter + 1):
        k = state.max_index
        u = state.nodes[k]
        ev = evaluate(u, problem)
        g = gradient_from(ev, problem)
        gnorm = scaled_supnorm(g, u, p)
        if gnorm <= config.tol_grad:
            converged, message, it = True, "converged", it - 1
            break
        if not climbing and gnorm < CLIMB_SWITCH:
            climbing = True
        elif climbing and gnorm > 10.0 * CLIMB_SWITCH:
            climbing = False
        d = _mp_direction(g, state, climbing)
        dnorm = float(np.linalg.norm(d))
        reach = 0.5 * min(np.linalg.norm(u - state.nodes[k - 1]), np.linalg.norm(state.nodes[k + 1] - u))
        eta = min(eta, reach / dnorm)
        g2 = float(np.dot(g, g))
        while True:
            u_new = u + eta * d
            ev_new = evaluate(u_new, problem)
            if climbing:
                d_new = _mp_direction(gradient_from(ev_new, problem), state, True)
                ok = np.linalg.norm(d_new) <= dnorm
            else:
                ok = ev_new.energy(p) <= state.levels[k] - config.c1 * eta * g2
            if ok or eta < config.min_step:
                break
            eta *= config.backtrack
        state.nodes[k] = u_new
        state.levels[k] = ev_new.energy(p)
        eta = min(config.step0, 1.5 * eta)
        if it % config.reequalize_every == 0:
            state = reequalize(state, problem)
        state = _locate_max(state)
        history.append(state.max_level)
        trace(iteration=it, level=state.max_level, grad_norm=gnorm, t_u=scale, step=eta, max_index=state.max_index, climbing=climbing)
    else:
        u = state.nodes[state.max_index]
        ev = evaluate(u, problem)
        if scaled_supnorm(gradient_from(ev, problem), u, p) <= config.tol_grad:
            converged, message = True, "converged"
    # a final ray projection removes the O(tol) Nehari residual of the top node
    v = nehari_project(state.nodes[state.max_index], problem).v
    ev = evaluate(v, problem)
    g = gradient_from(ev, problem)
    converged = converged and scaled_supnorm(g, v, p) <= config.tol_grad
    sol = _solution(v, ev, g, problem, it, time.perf_counter() - start, converged, "mountain-pass", message, history)
    sol.restart_levels = [sol.level]
    return sol


# --- certificate ------------------------------------------------------------


@dataclass
class CertificateReport:
    accepted: bool
    reason: str
    residual_sup: float = math.nan
    residual_rel: float = math.nan
    min_value: float = math.nan
    strictly_positive: bool = False
    level: float = math.nan
    norm_p: float = math.nan
    nehari_residual: float = math.nan
    manifold_floor: float = math.nan
    identity_defect: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)


def certify_solution(sol: Solution | np.ndarray, problem: Problem, tol_grad: float = 1e-6) -> CertificateReport:
    """Pointwise residual, positivity and the on-manifold energy identity of a candidate.

    The identity checked is
    ``J(u) - (1/p - 1/theta)||u||^p - 1/2 sum (R*F(u+))(2 f(u+) u+ / theta - F(u+)) = (||u||^p - A(u)) / theta``.
    """
    u = sol.u if isinstance(sol, Solution) else sol
    u = problem.box.check_field(u)
    if not np.any(u):
        return CertificateReport(False, "trivial solution u = 0")
    p, theta = problem.p, problem.theta
    ev = evaluate(u, problem)
    r = gradient_from(ev, problem)
    sup = float(np.max(np.abs(r)))
    rel = scaled_supnorm(r, u, p)
    min_u = float(np.min(u))
    level = ev.energy(p)
    nl = problem.nonlinearity
    side = 0.5 * float(np.dot(ev.conv, 2.0 * nl.f(ev.up) * ev.up / theta - ev.Fu))
    resid = ev.norm_p - ev.pairing
    floor = (1.0 / p - 1.0 / theta) * ev.norm_p
    defect = abs(level - floor - side - resid / theta) / max(abs(level), np.finfo(float).tiny)
    positive = min_u > 0
    checks = [
        (positive, f"not strictly positive (min u = {min_u:.3e})"),
        (rel <= 10.0 * tol_grad, f"residual {rel:.3e} exceeds 10 tol_grad"),
        (abs(resid) <= 1e-8 * ev.norm_p, f"Nehari residual {resid:.3e} too large"),
        (level > 0, "level is not positive"),
        (defect <= 1e-10, f"energy identity defect {defect:.3e}"),
    ]
    failed = [msg for ok, msg in checks if not ok]
    return CertificateReport(
        accepted=not failed,
        reason="; ".join(failed) if failed else "certified",
        residual_sup=sup,
        residual_rel=rel,
        min_value=min_u,
        strictly_positive=positive,
        level=level,
        norm_p=ev.norm_p,
        nehari_residual=resid,
        manifold_floor=floor,
        identity_defect=defect,
    )


def solve(config: SolverConfig, problem: Problem, trace_stream=None) -> Solution:
    if config.algorithm == "mountain-pass":
        return solve_mountain_pass(config, problem, trace_stream)
    return solve_ground_state(config, problem, trace_stream)


__all__ = [
    "SolverConfig",
    "Solution",
    "PathState",
    "CertificateReport",
    "solve_ground_state",
    "solve_mountain_pass",
    "certify_solution",
    "solve",
    "GeometryError",
]
