"""Command line: ``choquard-lattice {green,solve,verify,bench} --config FILE``.

Exit codes: 0 success, 1 invalid input, 2 no convergence, 3 a property or
consistency check failed.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import time
from pathlib import Path

from . import _backend, bench, verify
from .config import RunConfig, default_config, from_dict, help_text, load_config
from .errors import (
    ChoquardError,
    GeometryError,
    KernelBoundError,
    NumericalConsistencyError,
    ProjectionError,
    ToleranceError,
    ValidationError,
)
from .functional import Problem, make_power_nonlinearity
from .lattice import build_box
from .operators import cached_kernel_table, make_potential
from .solver import certify_solution, solve, write_field
from .spectral import cached_green_table, fit_decay_exponent

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_PROPERTY = 0, 1, 2, 3

log = logging.getLogger("choquard_lattice")


def build_problem_from(cfg: RunConfig) -> Problem:
    pr, pot, io = cfg.problem, cfg.potential, cfg.io
    nl = make_power_nonlinearity(pr["tau"], pr["p"], pr["d"], pr["alpha"])
    box = build_box(pr["d"], pr["L"])
    kernel, _ = cached_kernel_table(pr["kernel_model"], pr["s"], pr["d"], pr["L"], pr["quadrature_N"], io["cache_dir"], pr["cutoff"])
    green, _ = cached_green_table(pr["d"], pr["alpha"], pr["L"], pr["quadrature_N"], io["cache_dir"])
    potential = make_potential(box, pot["h0"], pot["a"], pot["beta"], pot["center"])
    return Problem(box, kernel, green, potential, nl, float(pr["p"]))


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fit_range(radius: int):
    hi = min(30, radius)
    lo = min(10, max(2, hi // 3))
    return (lo, hi) if hi > lo else None


def cmd_green(cfg: RunConfig, args) -> int:
    pr = cfg.problem
    t0 = time.perf_counter()
    table, hit = cached_green_table(pr["d"], pr["alpha"], pr["L"], pr["quadrature_N"], cfg.io["cache_dir"])
    elapsed = time.perf_counter() - t0
    out = {
        "d": table.d,
        "alpha": table.alpha,
        "L": table.L,
        "N": table.N,
        "K_alpha": table.K_alpha,
        "refinement_delta": table.refinement_delta,
        "imag_ratio": table.imag_ratio,
        "cache_hit": hit,
        "build_seconds": elapsed,
    }
    rng = _fit_range(table.radius)
    if rng is not None:
        fit = fit_decay_exponent(table, rng)
        out.update(decay_slope=fit.slope, decay_range=list(rng), decay_residual=fit.residual)
    for key, val in out.items():
        print(f"{key} = {val}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    problem = build_problem_from(cfg)
    scfg = cfg.solver_config()
    outdir = Path(cfg.io["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    with contextlib.ExitStack() as stack:
        trace = stack.enter_context(open(outdir / "trace.jsonl", "w")) if cfg.io["trace"] else None
        sol = solve(scfg, problem, trace)
    cert = certify_solution(sol, problem, scfg.tol_grad)
    report = {
        "algorithm": sol.algorithm,
        "converged": sol.converged,
        "message": sol.message,
        "level": sol.level,
        "nehari_residual": sol.nehari_residual,
        "norm_p": sol.norm_p,
        "grad_supnorm": sol.grad_supnorm,
        "scaled_grad_supnorm": sol.scaled_grad,
        "min_value": sol.min_value,
        "iterations": sol.iterations,
        "restart_levels": sol.restart_levels,
        "restart_spread": sol.restart_spread,
        "projection_failures": sol.projection_failures,
        "wall_time": sol.wall_time,
        "backend": _backend.NAME,
        "certificate": cert.to_dict(),
        "config": cfg.to_dict(),
    }
    _dump(outdir / "report.json", report)
    _dump(outdir / "config.json", cfg.to_dict())
    write_field(outdir / "field.csv", sol.u, problem.box)
    print(f"level = {sol.level!r}\nconverged = {sol.converged}\ncertified = {cert.accepted} ({cert.reason})")
    print(f"report written to {outdir / 'report.json'}")
    if not sol.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK if cert.accepted else EXIT_PROPERTY


def cmd_verify(cfg: RunConfig, args) -> int:
    if args.replay:
        return replay_failures(args.replay)
    v = cfg.verify
    problem = verify.inject_fault(build_problem_from(cfg), v["fault"])
    results = verify.run_suite(problem, v["samples"], v["seed"], v["rho"])
    meta = {"samples": v["samples"], "seed": v["seed"], "rho": v["rho"], "fault": v["fault"], "config": cfg.to_dict()}
    outdir = Path(cfg.io["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "verify_report.json").write_text(verify.report_json(results, meta))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} [{r.anchor}] n={r.samples} worst margin {r.worst_margin:.3e}")
    failures = [r.failing_case for r in results if not r.passed]
    if failures:
        _dump(outdir / "verify_failures.json", {"config": cfg.to_dict(), "failures": failures})
        print(f"{len(failures)} properties failed; cases saved to {outdir / 'verify_failures.json'}")
        return EXIT_PROPERTY
    return EXIT_OK


def replay_failures(path) -> int:
    """Re-run the cases saved by a failing ``verify``; exit 3 if any still fails."""
    try:
        saved = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read replay file {path}: {exc}") from exc
    cfg = from_dict(saved["config"])
    problem = verify.inject_fault(build_problem_from(cfg), cfg.verify["fault"])
    still = 0
    for case in saved["failures"]:
        margin = verify.replay(problem, case, cfg.verify["rho"])
        still += not margin >= 0
        print(f"{'FAIL' if not margin >= 0 else 'PASS'}  {case['property']} sample {case['sample']}: margin {margin:.3e}")
    return EXIT_PROPERTY if still else EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    b = cfg.bench
    rows = bench.run_benchmark(b["d"], b["sizes"], b["alpha"], cfg.problem["s"], b["repeats"], cfg.io["cache_dir"])
    print(bench.format_table(rows))
    outdir = Path(cfg.io["output_dir"])
    _dump(outdir / "bench.json", bench.rows_as_dicts(rows))
    if not all(r.agrees for r in rows):
        print("direct and FFT convolution disagree beyond 1e-10 of scale")
        return EXIT_PROPERTY
    return EXIT_OK


COMMANDS = {"green": cmd_green, "solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choquard-lattice",
        description="Fractional p-Laplacian Choquard ground states on lattice boxes.",
        epilog=help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="TOML or JSON configuration file (defaults apply when omitted)")
    parser.add_argument("--threads", type=int, help="cap worker threads of the compiled kernels")
    parser.add_argument("--seed", type=int, help="override [solver] seed and [verify] seed")
    parser.add_argument("--trace", action="store_true", help="write per-iteration trace records")
    parser.add_argument("--replay", metavar="FILE", help="verify: re-run cases from a verify_failures.json")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = cfg.with_overrides(seed=args.seed, trace=args.trace)
        if args.threads is not None:
            if args.threads < 1:
                raise ValidationError("--threads must be >= 1")
            _backend.set_num_threads(args.threads)
        return COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ProjectionError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ToleranceError, NumericalConsistencyError, KernelBoundError, ChoquardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
