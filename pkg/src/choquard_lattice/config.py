"""Run configuration: a TOML (or JSON) file with fixed sections and keys.

Unknown sections or keys are rejected, and every constraint on the model
parameters is checked at load time, before any table is built.
"""
from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError
from .functional import tau_threshold
from .operators import KERNEL_MODELS
from .solver import SolverConfig

# section -> key -> (default, accepted types, help text)
SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {
        "d": (1, (int,), "lattice dimension"),
        "L": (8, (int,), "box radius; the box is [-L, L]^d"),
        "s": (0.5, (float,), "fractional order, in (0, 1)"),
        "p": (2.0, (float,), "p-Laplacian exponent, >= 2"),
        "alpha": (0.5, (float,), "Riesz order of the Green function, in (0, d)"),
        "tau": (2.5, (float,), "pure-power exponent, > (d + alpha) p / (2 d)"),
        "kernel_model": ("power-law", (str,), "power-law | spectral"),
        "quadrature_N": (None, (int,), "torus grid per axis (default 256 for d <= 2, else 96)"),
        "cutoff": (None, (float,), "drop kernel pairs with |z|_1 > cutoff (benchmarks only)"),
    },
    "potential": {
        "h0": (1.0, (float,), "h(x) = h0 + a |x - center|_1^beta; h0 > 0"),
        "a": (1.0, (float,), "growth coefficient, > 0"),
        "beta": (1.0, (float,), "growth exponent, > 0"),
        "center": (None, (list,), "potential minimum (default: origin)"),
    },
    "solver": {
        "algorithm": ("nehari-descent", (str,), "nehari-descent | mountain-pass"),
        "tol_grad": (1e-6, (float,), "stop when sup|grad| / max(1, sup|u|^(p-1)) <= tol_grad"),
        "max_iter": (20000, (int,), "iteration cap per run"),
        "step0": (1.0, (float,), "initial Armijo trial step"),
        "c1": (1e-4, (float,), "Armijo sufficient-decrease constant"),
        "backtrack": (0.5, (float,), "Armijo step reduction factor"),
        "init": ("bump", (str,), "bump | random-positive | file"),
        "init_file": (None, (str,), "field CSV for init = 'file'"),
        "seed": (0, (int,), "seed for random restarts"),
        "restarts": (1, (int,), "independent runs; the lowest level wins"),
        "init_noise": (0.25, (float,), "relative noise of random-positive starts, in [0, 1)"),
        "path_nodes": (32, (int,), "mountain-pass path nodes"),
        "reequalize_every": (10, (int,), "mountain-pass sweeps between node re-spacing"),
    },
    "io": {
        "output_dir": ("out", (str,), "directory for reports, field dumps and traces"),
        "cache_dir": (".cache", (str,), "directory for Green and kernel tables"),
        "trace": (False, (bool,), "write one JSON record per iteration"),
    },
    "verify": {
        "samples": (200, (int,), "random cases per property"),
        "seed": (0, (int,), "seed for the property suite"),
        "rho": (0.5, (float,), "small-sphere radius for the mountain-pass geometry check"),
        "fault": ("none", (str,), "none | negative-kernel (inject a corrupted kernel entry)"),
    },
    "bench": {
        "d": (2, (int,), "dimension of benchmark boxes"),
        "sizes": ([8, 16, 32], (list,), "box radii to time"),
        "repeats": (3, (int,), "timing repetitions (best is reported)"),
        "alpha": (1.0, (float,), "Green order for the benchmark tables"),
    },
}

FAULTS = ("none", "negative-kernel")


def _coerce(section, key, value):
    default, types, _ = SCHEMA[section][key]
    if value is None:
        return None
    if float in types and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if bool not in types and isinstance(value, bool):
        raise ValidationError(f"[{section}] {key} must be {types[0].__name__}, got a boolean")
    if not isinstance(value, types):
        raise ValidationError(f"[{section}] {key} must be {types[0].__name__}, got {type(value).__name__}")
    return value


@dataclass
class RunConfig:
    problem: dict
    potential: dict
    solver: dict
    io: dict
    verify: dict
    bench: dict

    def to_dict(self) -> dict:
        return {name: {k: v for k, v in getattr(self, name).items() if v is not None} for name in SCHEMA}

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def with_overrides(self, seed=None, trace=None) -> "RunConfig":
        new = copy.deepcopy(self)
        if seed is not None:
            new.solver["seed"] = seed
            new.verify["seed"] = seed
        if trace:
            new.io["trace"] = True
        return new


def from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("configuration must be a table of sections")
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ValidationError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    parts = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ValidationError(f"[{section}] must be a table")
        bad = set(given) - set(keys)
        if bad:
            raise ValidationError(f"unknown key(s) in [{section}]: {', '.join(sorted(bad))}")
        parts[section] = {k: _coerce(section, k, given.get(k, copy.deepcopy(v[0]))) for k, v in keys.items()}
    cfg = RunConfig(**parts)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check every parameter constraint; raises ``ValidationError`` naming the violated one."""
    pr, pot = cfg.problem, cfg.potential
    d, L = pr["d"], pr["L"]
    if d < 1 or L < 1:
        raise ValidationError(f"need d >= 1 and L >= 1, got d={d}, L={L}")
    if not 0 < pr["s"] < 1:
        raise ValidationError(f"s must lie in (0, 1), got {pr['s']}")
    if not pr["p"] >= 2:
        raise ValidationError(f"p must be >= 2, got {pr['p']}")
    if not 0 < pr["alpha"] < d:
        raise ValidationError(f"alpha must lie in (0, d) = (0, {d}), got {pr['alpha']}")
    bound = tau_threshold(d, pr["alpha"], pr["p"])
    if not pr["tau"] > bound:
        raise ValidationError(
            f"hypothesis (f2) needs tau > (d+alpha)p/(2d) = {bound:g}, got tau={pr['tau']:g}"
        )
    if pr["kernel_model"] not in KERNEL_MODELS:
        raise ValidationError(f"kernel_model must be one of {KERNEL_MODELS}")
    N = pr["quadrature_N"]
    if N is not None and (N < 32 or N % 2):
        raise ValidationError(f"quadrature_N must be even and >= 32, got {N}")
    if not pot["h0"] > 0:
        raise ValidationError(f"hypothesis (h1) needs h0 > 0, got {pot['h0']}")
    if not (pot["a"] > 0 and pot["beta"] > 0):
        raise ValidationError("potential growth needs a > 0 and beta > 0 (hypothesis (h2))")
    if pot["center"] is not None and len(pot["center"]) != d:
        raise ValidationError(f"potential center must have {d} coordinates")
    cfg.solver_config()
    v = cfg.verify
    if v["samples"] < 1:
        raise ValidationError("[verify] samples must be >= 1")
    if not v["rho"] > 0:
        raise ValidationError("[verify] rho must be positive")
    if v["fault"] not in FAULTS:
        raise ValidationError(f"[verify] fault must be one of {FAULTS}")
    b = cfg.bench
    if not b["sizes"]:
        raise ValidationError("[bench] sizes is empty; nothing to benchmark")
    if any(not isinstance(x, int) or x < 1 for x in b["sizes"]):
        raise ValidationError("[bench] sizes must be positive integers")
    if b["repeats"] < 1 or b["d"] < 1 or not 0 < b["alpha"] < b["d"]:
        raise ValidationError("[bench] needs repeats >= 1, d >= 1 and alpha in (0, d)")


def load_config(path) -> RunConfig:
    """Read a ``.toml`` or ``.json`` config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ValidationError(f"cannot parse config {path}: {exc}") from exc
    return from_dict(raw)


def default_config() -> RunConfig:
    return from_dict({})


def help_text() -> str:
    lines = ["configuration keys (TOML sections):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (default, _, doc) in keys.items():
            lines.append(f"    {key} = {default!r}: {doc}")
    return "\n".join(lines)
