import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tentfield.harness import config as C
from tentfield.harness.cli import main
from tentfield.harness.config import ConfigError, default_config, from_dict, parse_config
from tentfield.harness.reports import Check, SuiteReport, dumps, table_csv
from tentfield.harness.suites import run_form_compare, weak_type_suite


def _code(raw):
    with pytest.raises(ConfigError) as err:
        from_dict(raw)
    return err.value.code, err.value.field


def test_defaults_populate_everything():
    cfg = default_config()
    assert cfg.exponents == (3.0, 3.0, 3.0) and cfg.s == 1.25 and cfg.theta0 == 0.1
    assert cfg["window"]["kernel_nodes"] == 32


def test_validation_codes_are_distinct():
    assert _code({"exponents": [3, 3, 4]}) == (C.E_EXPONENT_SUM, "exponents")
    assert _code({"exponents": [2, 4, 4]}) == (C.E_EXPONENT_RANGE, "exponents[0]")
    assert _code({"s": 1.0}) == (C.E_SMOOTHNESS, "s")
    assert _code({"theta0": math.pi / 6}) == (C.E_THETA0, "theta0")
    assert _code({"theta0": -0.1}) == (C.E_THETA0, "theta0")
    assert _code({"alpha": {"nn": 3}}) == (C.E_UNKNOWN_KEY, "alpha.nn")
    assert _code({"multiplier": {"name": "nope"}})[0] == C.E_MULTIPLIER
    assert _code({"curve": {"path": "/no/such/file.json"}})[0] == C.E_CURVE
    assert _code({"s": "big"})[0] == C.E_TYPE
    assert from_dict({"exponents": [3, 3, 3]}).exponents == (3.0, 3.0, 3.0)
    assert _code({"exponents": [4, 4, 2.0000001]})[0] == C.E_EXPONENT_SUM


def test_parse_errors(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("seed = [", encoding="utf-8")
    with pytest.raises(ConfigError) as err:
        parse_config(p)
    assert err.value.code == C.E_PARSE
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.toml")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.52), st.floats(1.01, 4.0),
       st.sampled_from([(3, 3, 3), (4, 3, 2.4), (2.5, 6, 30 / 13)]))
def test_toml_and_json_roundtrip(seed, theta0, s, p):
    cfg = from_dict({"seed": seed, "theta0": theta0, "s": s, "exponents": list(p)})
    assert C.tomllib.loads(cfg.to_toml()) == cfg.to_dict()
    assert json.loads(cfg.to_json()) == cfg.to_dict()
    assert from_dict(json.loads(cfg.to_json())).to_dict() == cfg.to_dict()


def test_report_serialization_is_deterministic():
    rep = SuiteReport("demo", 0)
    rep.add(Check("a", "pass", {"x": 0.1}))
    rep.tables["t"] = [{"k": 1, "v": 1 / 3}, {"k": 2, "w": float("inf")}]
    assert dumps(rep.to_json()) == dumps(rep.to_json())
    text = table_csv(rep.tables["t"])
    assert text.splitlines()[0] == "k,v,w" and "0.3333333333333333" in text and "2,,inf" in text


def _cfg_file(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_cli_zero_samples_is_flagged(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("TENTFIELD_OUT", raising=False)
    cfg = _cfg_file(tmp_path, "[geometry]\nsamples = 0\n")
    assert main(["verify-geometry", "--config", cfg, "--out", str(tmp_path / "o"), "--no-plots"]) == 0
    out = capsys.readouterr().out
    assert "NO SAMPLES" in out
    rep = json.loads((tmp_path / "o" / "verify_geometry.json").read_text())
    assert rep["exit_code"] == 0 and any(c["status"] == "no samples" for c in rep["checks"])


def test_cli_bad_curve_exits_two(tmp_path, capsys):
    curve = tmp_path / "curve.json"
    curve.write_text(json.dumps({"cone_index": 3, "theta0": 0.1, "basis": "uv",
                                 "points": [[0, 0], [0, 1], [1, 1]]}))
    cfg = _cfg_file(tmp_path, f'[curve]\npath = "{curve}"\n')
    assert main(["verify-geometry", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "0 and 2" in capsys.readouterr().err
    assert main(["verify-geometry", "--config", _cfg_file(tmp_path, "s = 0.5\n")]) == 2
    assert main(["verify-geometry", "--threads", "0"]) == 2


def test_cli_env_overrides_out_and_csv_is_byte_identical(tmp_path, monkeypatch):
    cfg = _cfg_file(tmp_path, "[geometry]\nsamples = 300\napollonius_points = 200\ncurves = 3\n")
    monkeypatch.setenv("TENTFIELD_OUT", str(tmp_path / "env1"))
    assert main(["verify-geometry", "--config", cfg, "--out", str(tmp_path / "ignored"), "--no-plots"]) == 0
    assert not (tmp_path / "ignored").exists()
    monkeypatch.setenv("TENTFIELD_OUT", str(tmp_path / "env2"))
    assert main(["--config", cfg, "verify-geometry", "--no-plots"]) == 0
    first = sorted(p.name for p in (tmp_path / "env1").iterdir())
    assert first == sorted(p.name for p in (tmp_path / "env2").iterdir())
    assert any(n.endswith(".csv") for n in first)
    for name in first:
        assert (tmp_path / "env1" / name).read_bytes() == (tmp_path / "env2" / name).read_bytes()


def test_cli_writes_figures(tmp_path, monkeypatch):
    monkeypatch.setenv("TENTFIELD_OUT", str(tmp_path))
    cfg = _cfg_file(tmp_path, "[weak_type]\nratios = [1, 4]\na3_fractions = [1.0]\nh = 0.125\n")
    assert main(["weak-type-scan", "--config", cfg]) == 0
    assert (tmp_path / "weak_type_scan_ratios.csv").exists()
    assert (tmp_path / "weak_type_scan_ratios.png").read_bytes()[:4] == b"\x89PNG"


def test_weak_type_equal_lengths_log_column_zero():
    cfg = default_config().with_overrides(weak_type={"ratios": [1], "a3_fractions": [1.0], "h": 0.125})
    rep = weak_type_suite(cfg)
    assert all(r["log"] == 0.0 for r in rep.tables["ratios"])
    assert {c.name: c.status for c in rep.checks}["equal_lengths_log_zero"] == "pass"


def test_form_compare_with_one_is_exact():
    cfg = default_config().with_overrides(multiplier={"name": "one"})
    rep = run_form_compare(cfg)
    row = rep.tables["identity"][0]
    assert row["rel_error"] < 1e-6
    assert rep.exit_code == 0
