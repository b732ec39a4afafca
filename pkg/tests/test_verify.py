import json

import numpy as np
import pytest

from choquard_lattice import verify
from choquard_lattice.functional import build_problem


@pytest.fixture(scope="module")
def results(problem_1d):
    return verify.run_suite(problem_1d, samples=30, seed=3)


def test_every_property_passes(results):
    assert [r.name for r in results if not r.passed] == []
    assert len(results) == len(verify.registry(1))
    assert all(r.worst_margin >= 0 for r in results)


def test_sample_counts(results):
    counts = {r.name: r.samples for r in results}
    assert counts["small-sphere-positivity"] == 1000
    assert counts["gradient-finite-difference"] == 20
    assert counts["integration-by-parts"] == 30


def test_report_is_deterministic(problem_1d, results):
    again = verify.run_suite(problem_1d, samples=30, seed=3)
    meta = {"seed": 3}
    assert verify.report_json(results, meta) == verify.report_json(again, meta)
    body = json.loads(verify.report_json(results, meta))
    assert body["passed"] and {"name", "anchor", "passed", "samples", "worst_margin"} <= set(body["properties"][0])


def test_fault_is_caught_and_replayed(cache_dir):
    bad = verify.inject_fault(build_problem(1, 8, 0.5, 2.0, 0.5, 2.5, cache_dir=cache_dir), "negative-kernel")
    res = {r.name: r for r in verify.run_suite(bad, samples=5)}
    kb = res["kernel-two-sided-bound"]
    assert not kb.passed and kb.worst_margin < 0
    assert verify.replay(bad, kb.failing_case) < 0
    with pytest.raises(ValueError):
        verify.inject_fault(bad, "bitflip")


def test_nonlinearity_check_on_2d_p3(problem_p3):
    res = verify.run_suite(problem_p3, samples=10, seed=1)
    failed = [r.name for r in res if not r.passed]
    assert failed == []
    assert np.isfinite([r.worst_margin for r in res]).all()
