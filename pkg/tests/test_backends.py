import os
import subprocess
import sys

import numpy as np
import pytest

from choquard_lattice import _backend, bench
from choquard_lattice.lattice import build_box
from choquard_lattice.operators import build_kernel_table

compiled_only = pytest.mark.skipif("compiled" not in _backend.available(), reason="extension not built")


@compiled_only
@pytest.mark.parametrize("d,L", [(1, 9), (2, 5), (3, 2)])
def test_compiled_matches_python(d, L):
    box = build_box(d, L)
    k = build_kernel_table("power-law", 0.4, d, L)
    off, center = box.offsets
    rng = np.random.default_rng(d)
    u, v, g = rng.standard_normal((3, box.M))
    c, py = _backend.load("compiled"), _backend.load("python")
    for name, args in [
        ("gradient_sq", (u, off, center, k.flat)),
        ("gradient_form", (u, v, off, center, k.flat)),
        ("weighted_laplacian", (u, np.abs(g), off, center, k.flat)),
        ("convolve", (np.abs(u), off, center, k.flat)),
    ]:
        a, b = getattr(c, name)(*args), getattr(py, name)(*args)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.max(np.abs(b))), name


@compiled_only
def test_thread_count_does_not_change_results():
    box = build_box(2, 6)
    k = build_kernel_table("power-law", 0.5, 2, 6)
    off, center = box.offsets
    u = np.random.default_rng(0).standard_normal(box.M)
    c = _backend.load("compiled")
    before = c.get_num_threads()
    try:
        c.set_num_threads(1)
        one = c.gradient_sq(u, off, center, k.flat)
        c.set_num_threads(4)
        four = c.gradient_sq(u, off, center, k.flat)
    finally:
        c.set_num_threads(before)
    assert np.array_equal(one, four)


def test_environment_forces_fallback():
    env = dict(os.environ, CHOQUARD_LATTICE_PURE_PYTHON="1")
    res = subprocess.run(
        [sys.executable, "-c", "import choquard_lattice as c; print(c.BACKEND)"],
        capture_output=True, text=True, env=env,
    )
    assert res.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.load("fortran")


def test_benchmark_rows_agree(tmp_path):
    rows = bench.run_benchmark(2, [4, 8], 1.0, repeats=1, cache_dir=tmp_path)
    assert len(rows) == 2 * len(_backend.available())
    assert all(r.agrees for r in rows)
    table = bench.format_table(rows)
    assert table.splitlines()[0].split()[:4] == ["d", "L", "sites", "backend"]
