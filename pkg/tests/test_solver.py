import io
import json

import numpy as np
import pytest

from choquard_lattice import functional as fn
from choquard_lattice import solver as sv
from choquard_lattice.errors import ValidationError


@pytest.fixture(scope="module")
def ground_1d(problem_1d):
    return sv.solve_ground_state(sv.SolverConfig(restarts=2), problem_1d)


def test_config_validation():
    for bad in (
        dict(tol_grad=0.0),
        dict(max_iter=0),
        dict(restarts=0),
        dict(algorithm="newton"),
        dict(init="file"),
        dict(c1=1.0),
        dict(backtrack=0.0),
        dict(path_nodes=2),
    ):
        with pytest.raises(ValidationError):
            sv.SolverConfig(**bad)


def test_ground_state_1d(ground_1d, problem_1d):
    sol = ground_1d
    assert sol.converged and sol.message == "converged"
    assert sol.scaled_grad <= 1e-6
    assert sol.min_value > 0
    assert abs(sol.nehari_residual) <= 1e-8 * sol.norm_p
    assert sol.restart_spread <= 1e-4 and len(sol.restart_levels) == 2
    floor = (1 / problem_1d.p - 1 / problem_1d.theta) * sol.norm_p
    assert sol.level >= floor * (1 - 1e-12) > 0


def test_bump_and_random_inits_agree(ground_1d, problem_1d):
    other = sv.solve_ground_state(sv.SolverConfig(init="random-positive", seed=11), problem_1d)
    assert other.converged
    assert other.level == pytest.approx(ground_1d.level, rel=1e-4)


def test_history_non_increasing(ground_1d):
    h = np.array(ground_1d.history)
    assert len(h) > 1
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[1:]))


def test_negative_initial_field_is_flipped(tmp_path, problem_small):
    path = tmp_path / "neg.csv"
    sv.write_field(path, -sv.initial_field(sv.SolverConfig(), problem_small), problem_small.box)
    sol = sv.solve_ground_state(sv.SolverConfig(init="file", init_file=str(path)), problem_small)
    assert sol.converged and sol.min_value > 0


def test_field_round_trip(tmp_path, problem_p3, rng):
    u = rng.standard_normal(problem_p3.box.M)
    path = tmp_path / "f.csv"
    sv.write_field(path, u, problem_p3.box)
    assert path.read_text().splitlines()[0] == "x1,x2,u"
    assert np.array_equal(sv.read_field(path, problem_p3.box), u)
    with pytest.raises(ValidationError):
        sv.read_field(path, fn.build_problem(1, 4, 0.5, 2.0, 0.5, 2.5).box)


def test_max_iter_gives_flagged_report(problem_1d):
    sol = sv.solve_ground_state(sv.SolverConfig(max_iter=2), problem_1d)
    assert not sol.converged and sol.message == "max_iter reached"
    assert sol.iterations == 2


def test_trace_lines_match_iterations(problem_1d):
    buf = io.StringIO()
    sol = sv.solve_ground_state(sv.SolverConfig(restarts=2), problem_1d, trace_stream=buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == sol.iterations
    rec = json.loads(lines[0])
    assert {"iteration", "level", "grad_norm", "t_u", "step"} <= set(rec)


def test_seeded_runs_are_identical(problem_1d):
    cfg = sv.SolverConfig(init="random-positive", seed=5, restarts=2)
    a, b = io.StringIO(), io.StringIO()
    s1 = sv.solve_ground_state(cfg, problem_1d, a)
    s2 = sv.solve_ground_state(cfg, problem_1d, b)
    assert a.getvalue() == b.getvalue()
    assert np.array_equal(s1.u, s2.u)


def test_certificate_accepts_converged(ground_1d, problem_1d):
    rep = sv.certify_solution(ground_1d, problem_1d)
    assert rep.accepted and rep.reason == "certified"
    assert rep.residual_rel <= 1e-5 and rep.strictly_positive
    assert rep.identity_defect <= 1e-10


def test_certificate_declines_zero_and_zero_site(ground_1d, problem_1d):
    rep = sv.certify_solution(np.zeros(problem_1d.box.M), problem_1d)
    assert not rep.accepted and "trivial" in rep.reason
    u = ground_1d.u.copy()
    u[0] = 0.0
    rep = sv.certify_solution(u, problem_1d)
    assert not rep.accepted and "not strictly positive" in rep.reason


def test_certificate_rejects_off_manifold(ground_1d, problem_1d):
    rep = sv.certify_solution(1.01 * ground_1d.u, problem_1d)
    assert not rep.accepted and "Nehari" in rep.reason


def test_mountain_pass_matches_nehari(ground_1d, problem_1d):
    sol = sv.solve_mountain_pass(sv.SolverConfig(algorithm="mountain-pass"), problem_1d)
    assert sol.converged
    assert sol.level == pytest.approx(ground_1d.level, rel=5e-3)
    assert sv.certify_solution(sol, problem_1d).accepted


def test_mountain_pass_geometry(problem_1d):
    P = problem_1d
    rho = 0.5
    sigma = float(np.min(fn.small_sphere_levels(P, rho, 200)))
    u0 = sv.initial_field(sv.SolverConfig(), P)
    t, level = fn.negative_ray_point(u0, P)
    e = t * u0
    assert level < 0 and fn.norm(e, P) > rho
    cfg = sv.SolverConfig(algorithm="mountain-pass", max_iter=1)
    sol = sv.solve_mountain_pass(cfg, P)
    assert sol.history[0] >= sigma > 0


def test_reequalize_keeps_max_and_endpoints(problem_small):
    P = problem_small
    e = 4.0 * sv.initial_field(sv.SolverConfig(), P)
    nodes = sv._straight_path(e, 9)
    nodes[3] = nodes[3] + 0.1
    levels = np.array([fn.energy(n, P).total for n in nodes])
    state = sv._locate_max(sv.PathState(nodes, levels, 0))
    top = state.nodes[state.max_index].copy()
    new = sv.reequalize(state, P)
    assert len(new.nodes) == 9
    assert np.array_equal(new.nodes[0], nodes[0]) and np.array_equal(new.nodes[-1], nodes[-1])
    assert np.array_equal(new.nodes[new.max_index], top)
    assert new.max_level == state.levels[state.max_index]


def test_solve_dispatch(problem_small):
    sol = sv.solve(sv.SolverConfig(algorithm="mountain-pass"), problem_small)
    assert sol.algorithm == "mountain-pass"
    assert sv.solve(sv.SolverConfig(), problem_small).algorithm == "nehari-descent"
