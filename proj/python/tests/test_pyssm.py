import json
import math

import numpy as np
import pytest

import pyssm


def test_models_are_listed():
    ids = [m["id"] for m in pyssm.list_models()]
    assert "duffing" in ids and "pipe" in ids
    duffing = next(m for m in pyssm.list_models() if m["id"] == "duffing")
    assert duffing["defaults"]["gamma"] == pytest.approx(0.1)


def test_duffing_backbone_slope():
    s = pyssm.compute("duffing", {"gamma": 0.1}, order=3)
    assert s.eigenvalues.shape == (2,)
    assert s.eigenvalues[0].imag > 0
    assert [r[0] for r in s.resonances] == [(2, 1), (1, 2)]
    bb = s.backbone([1e-3, 2e-3])
    w0 = s.eigenvalues[0].imag
    slope = (bb[1]["frequency"] - w0) / bb[1]["amplitude"] ** 2
    assert slope == pytest.approx(3 * 0.1 / 8, rel=5e-3)


def test_residual_decays_with_amplitude():
    s = pyssm.compute("vonkarman_beam", order=5)
    r1 = s.residual(s.point(np.array([1e-3]), np.array([0.3])))
    r2 = s.residual(s.point(np.array([2e-3]), np.array([0.3])))
    assert math.log2(r2 / r1) == pytest.approx(6.0, abs=0.3)


def test_table_round_trip(tmp_path):
    s = pyssm.compute("spring_chain", {"n": 3, "k2": 0.5, "k3": 1.0}, order=4)
    t = s.table
    t.save(str(tmp_path / "c.bin"))
    u = pyssm.Table.load(str(tmp_path / "c.bin"))
    assert len(u) == len(t) and u.max_order == 4
    p = np.array([0.01 + 0.02j, 0.01 - 0.02j])
    np.testing.assert_array_equal(u.W(p), t.W(p))
    exps, W, R = u.coefficients()[1]
    assert sum(exps) == 1 and W.shape == (6,) and R.shape == (2,)


def test_verify_matches_tensors():
    assert pyssm.verify("random_chain", {"n": 3, "seed": 1}, order=5) < 1e-10
    with pytest.raises(pyssm.ValidationError):
        pyssm.verify("vonkarman_beam")


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "run"
    rep = pyssm.run({"analysis": "backbone", "backbone": {"points": 5}, "output_dir": str(out)})
    assert rep["summary"]["backbone"]["rho_max"] > 0
    assert (out / "backbone.csv").read_text().count("\n") == 6
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"


def test_config_errors_name_the_field():
    cfg = pyssm.default_config()
    assert cfg["ssm"]["max_order"] == 5
    with pytest.raises(pyssm.ValidationError, match="ssm.max_order"):
        pyssm.validate_config({"ssm": {"max_order": 0}})
    with pytest.raises(pyssm.ValidationError, match="frc.omega: unknown field"):
        pyssm.run({"frc": {"omega": 1.0}})
    with pytest.raises(ValueError):
        pyssm.compute("no_such_model")
