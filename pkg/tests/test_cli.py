from __future__ import annotations

import json

import numpy as np
import pytest

from hitchin_sov import cli
from hitchin_sov import sov_engine as se


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_usage_errors(capsys):
    assert _run(capsys, "bogus")[0] == cli.EXIT_USAGE
    assert _run(capsys, "verify", "nothing")[0] == cli.EXIT_USAGE
    assert _run(capsys, "sov", "forward", "--seed", "1", "--scenario", "x.json")[0] == cli.EXIT_USAGE


def test_malformed_json_is_usage_error(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = _run(capsys, "sov", "forward", "--scenario", bad)
    assert code == cli.EXIT_USAGE
    assert "malformed JSON" in err


def test_unknown_tolerance_name(capsys):
    code, _, err = _run(capsys, "verify", "theta", "--tolerance", "nope=1")
    assert code == cli.EXIT_USAGE
    assert "unknown name" in err


def test_unknown_field_rejected(capsys, tmp_path):
    doc = {"schema_version": 1, "kind": "curve", "genus": 2, "colour": "red"}
    code, _, err = _run(capsys, "sov", "forward", "--curve", _write(tmp_path / "c.json", doc))
    assert code == cli.EXIT_USAGE
    assert "unknown field" in err


def test_verify_report(capsys, tmp_path):
    out = tmp_path / "report.json"
    code, _, err = _run(capsys, "verify", "theta", "--out", out)
    assert code == cli.EXIT_OK
    report = json.loads(out.read_text())
    assert report["pass"] and report["schema_version"] == 1
    assert all(r["pass"] for r in report["checks"])
    assert err.startswith("PASS")


def test_impossible_tolerance_fails(capsys):
    code, _, err = _run(capsys, "sov", "roundtrip", "--tolerance", "roundtrip=1e-20")
    assert code == cli.EXIT_FAIL
    assert "FAIL" in err


def test_forward_then_inverse(capsys, tmp_path):
    code, out, _ = _run(capsys, "sov", "forward", "--higgs", "--seed", 2)
    assert code == cli.EXIT_OK
    fwd = _write(tmp_path / "ba.json", json.loads(out))
    code, out, _ = _run(capsys, "sov", "inverse", "--scenario", fwd)
    assert code == cli.EXIT_OK
    item = json.loads(out)["items"][0]
    ctx, ref = se.default_context(2), se.default_reference(2)
    expect = se.make_scenario(ctx, ref, 2).point
    got = cli.parse_darboux(item["point"], ref)
    assert se.darboux_distance(ctx, expect, got) < 1e-6


def test_forward_rejects_nonzero_moment(capsys, tmp_path):
    ctx, ref = se.default_context(2), se.default_reference(2)
    pt = se.make_scenario(ctx, ref, 0).point
    doc = cli.darboux_json(pt, 0)
    doc["k"] = [[v[0] + 0.3, v[1]] for v in doc["k"]]
    code, _, err = _run(capsys, "sov", "forward", "--higgs", "--scenario", _write(tmp_path / "p.json", doc))
    assert code == cli.EXIT_FAIL
    assert "moment map nonzero" in err


def test_inverse_off_spectral_curve(capsys, tmp_path):
    code, out, _ = _run(capsys, "sov", "forward", "--higgs", "--seed", 1)
    doc = json.loads(out)
    doc["items"][0]["points"][0]["v"][0] += 1.0
    code, _, err = _run(capsys, "sov", "inverse", "--scenario", _write(tmp_path / "ba.json", doc))
    assert code == cli.EXIT_FAIL
    assert "off spectral curve" in err


def test_config_dir_supplies_default_curve(capsys, tmp_path, monkeypatch):
    _write(tmp_path / "curve.json", {"schema_version": 1, "kind": "curve", "genus": 3})
    monkeypatch.setenv(cli.CONFIG_DIR_ENV, str(tmp_path))
    code, out, _ = _run(capsys, "sov", "forward", "--seed", 0)
    assert code == cli.EXIT_OK
    assert len(json.loads(out)["items"][0]["points"]) == 6


def test_nonfinite_values_serialize():
    text = cli.dumps({"a": float("inf"), "b": complex(1, float("nan")), "c": np.float64(0.1)})
    assert json.loads(text) == {"a": "inf", "b": [1.0, "nan"], "c": 0.1}
