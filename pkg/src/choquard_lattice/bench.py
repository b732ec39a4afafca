"""Timings of the pair-sum backends and of the two convolution routes."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import _backend
from .lattice import build_box
from .operators import GreenConvolver, build_kernel_table
from .spectral import cached_green_table


@dataclass
class BenchRow:
    d: int
    L: int
    sites: int
    backend: str
    direct_s: float
    fft_s: float
    gradient_sq_s: float
    laplacian_s: float
    max_diff: float
    scale: float

    @property
    def agrees(self) -> bool:
        return self.max_diff <= 1e-10 * self.scale


def _best(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(d: int, sizes, alpha: float, s: float = 0.5, repeats: int = 3, cache_dir=None, backends=None, seed: int = 0) -> list:
    backends = list(backends or _backend.available())
    rng = np.random.default_rng(seed)
    rows = []
    for L in sizes:
        box = build_box(d, L)
        green, _ = cached_green_table(d, alpha, L, cache_dir=cache_dir)
        kernel = build_kernel_table("power-law", s, d, L)
        conv = GreenConvolver(green, box)
        off, center = box.offsets
        g = rng.random(box.M)
        ref = conv.fft(g)
        fft_s = _best(lambda: conv.fft(g), repeats)
        weight = np.ones(box.M)
        for name in backends:
            impl = _backend.load(name)
            out = impl.convolve(g, off, center, conv._flat)
            rows.append(
                BenchRow(
                    d, L, box.M, name,
                    direct_s=_best(lambda: impl.convolve(g, off, center, conv._flat), repeats),
                    fft_s=fft_s,
                    gradient_sq_s=_best(lambda: impl.gradient_sq(g, off, center, kernel.flat), repeats),
                    laplacian_s=_best(lambda: impl.weighted_laplacian(g, weight, off, center, kernel.flat), repeats),
                    max_diff=float(np.max(np.abs(out - ref))),
                    scale=float(np.max(np.abs(out))),
                )
            )
    return rows


def format_table(rows) -> str:
    head = f"{'d':>2} {'L':>4} {'sites':>7} {'backend':>9} {'direct':>10} {'fft':>10} {'grad_sq':>10} {'laplace':>10} {'max_diff':>10}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r.d:>2} {r.L:>4} {r.sites:>7} {r.backend:>9} {r.direct_s:>10.4g} {r.fft_s:>10.4g} "
            f"{r.gradient_sq_s:>10.4g} {r.laplacian_s:>10.4g} {r.max_diff:>10.3g}"
        )
    return "\n".join(lines)


def rows_as_dicts(rows) -> list:
    return [dict(asdict(r), agrees=r.agrees) for r in rows]
