import json

import pytest

from choquard_lattice.config import SCHEMA, default_config, from_dict, help_text, load_config
from choquard_lattice.errors import ValidationError


def test_defaults_are_the_1d_problem():
    cfg = default_config()
    pr = cfg.problem
    assert (pr["d"], pr["L"], pr["s"], pr["p"], pr["alpha"], pr["tau"]) == (1, 8, 0.5, 2.0, 0.5, 2.5)
    assert cfg.solver_config().tol_grad == 1e-6


def test_toml_and_json_load(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text('[problem]\nd = 2\nL = 5\nalpha = 1\n\n[solver]\nrestarts = 2\n')
    cfg = load_config(toml)
    assert cfg.problem["alpha"] == 1.0 and isinstance(cfg.problem["alpha"], float)
    assert cfg.solver["restarts"] == 2
    js = tmp_path / "c.json"
    js.write_text(json.dumps(cfg.to_dict()))
    assert load_config(js).to_dict() == cfg.to_dict()


@pytest.mark.parametrize(
    "raw,needle",
    [
        ({"problem": {"tau": 1.4, "d": 2, "alpha": 1.0}}, r"\(f2\)"),
        ({"problem": {"tua": 3.0}}, "unknown key"),
        ({"probelm": {}}, "unknown config section"),
        ({"potential": {"h0": 0.0}}, r"\(h1\)"),
        ({"problem": {"alpha": 1.5}}, "alpha"),
        ({"problem": {"s": 1.0}}, "s must"),
        ({"problem": {"L": "8"}}, "must be int"),
        ({"bench": {"sizes": []}}, "empty"),
        ({"solver": {"restarts": 0}}, "restarts"),
        ({"verify": {"fault": "flip"}}, "fault"),
        ({"problem": {"quadrature_N": 33}}, "quadrature_N"),
    ],
)
def test_rejections(raw, needle):
    with pytest.raises(ValidationError, match=needle):
        from_dict(raw)


def test_unreadable_files(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[problem\n")
    with pytest.raises(ValidationError):
        load_config(bad)


def test_overrides_do_not_mutate():
    cfg = default_config()
    new = cfg.with_overrides(seed=9, trace=True)
    assert new.solver["seed"] == new.verify["seed"] == 9 and new.io["trace"]
    assert cfg.solver["seed"] == 0 and not cfg.io["trace"]


def test_help_lists_every_key():
    text = help_text()
    for section, keys in SCHEMA.items():
        assert f"[{section}]" in text
        for key in keys:
            assert f"    {key} = " in text
