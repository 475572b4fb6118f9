import json

import numpy as np
import pytest

from lieinfo import cli, suite
from lieinfo.suite import Record, SuiteConfig

FAST = ["3.3", "3.5", "3.6"]


def test_record_semantics():
    r = Record("x", "inequality", 1.0, 1.0 - 5e-7, 1e-6)
    assert r.passed and r.slack == pytest.approx(-5e-7)
    assert not Record("x", "inequality", 1.0, 0.99, 1e-6).passed
    e = Record("y", "equality", 2.0, 2.0 + 2e-5, 1e-5)
    assert not e.passed and e.slack == pytest.approx(2e-5)
    assert Record("z", "report", 3.0, 1.0, 0).passed is None
    assert not Record("n", "equality", float("nan"), 0.0, 1.0).passed
    assert Record("n", "report", float("inf"), 0.0, 0.0).as_dict()["lhs"] is None


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="seed"):
        SuiteConfig.from_dict({"group": "SO3"})
    with pytest.raises(ValueError, match="unknown theorem"):
        SuiteConfig(seed=1, select=["9.9"])
    with pytest.raises(ValueError, match="unknown config"):
        SuiteConfig.from_dict({"seed": 1, "colour": "red"})
    toml = tmp_path / "c.toml"
    toml.write_text('seed = 5\nselect = ["3.3"]\n[tolerances]\nfinite = 1e-11\n')
    cfg = SuiteConfig.from_file(toml)
    assert cfg.seed == 5 and cfg.tolerances.finite == 1e-11
    js = tmp_path / "c.json"
    js.write_text(json.dumps(cfg.to_dict()))
    assert SuiteConfig.from_file(js) == cfg


def test_registry_has_eleven_sections():
    assert len(suite.REGISTRY) == 11
    table = suite.theorem_matrix()
    assert all(f"`{k}`" in table for k in suite.REGISTRY)


def test_readme_matrix_is_generated():
    from pathlib import Path
    readme = Path(__file__).resolve().parents[1] / "README.md"
    assert suite.theorem_matrix() in readme.read_text()


def test_empty_selection(tmp_path):
    report = suite.run_suite(SuiteConfig(seed=1, select=[]), tmp_path)
    assert report["sections"] == [] and report["summary"]["passed"]
    assert cli.main(["verify", "--seed", "1", "--select"]) == 0


def test_report_files(tmp_path):
    cfg = SuiteConfig(seed=3, select=FAST, finite_pairs=60)
    report = suite.run_suite(cfg, tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["schema"] == suite.REPORT_SCHEMA
    assert [s["theorem"] for s in data["sections"]] == FAST
    for s in data["sections"]:
        assert {"seed"} <= set(s["fingerprint"])
        for r in s["records"]:
            assert {"lhs", "rhs", "slack", "tolerance", "pass"} <= set(r)
    csv = (tmp_path / "section_3_3.csv").read_text().splitlines()
    assert csv[0] == "label,kind,lhs,rhs,slack,tolerance,pass"
    assert "overall: PASS" in (tmp_path / "summary.txt").read_text()
    assert report["summary"]["passed"]


def test_errored_section_is_isolated(monkeypatch):
    def boom(cfg):
        raise RuntimeError("pipeline broke")
    monkeypatch.setitem(suite.REGISTRY, "3.6", (boom, "x", "y"))
    report = suite.run_suite(SuiteConfig(seed=3, select=["3.5", "3.6"]))
    status = {s["theorem"]: s["status"] for s in report["sections"]}
    assert status == {"3.5": "ok", "3.6": "errored"}
    assert report["summary"]["errored"] == ["3.6"] and not report["summary"]["passed"]


def test_failing_record_gives_nonzero_exit(tmp_path):
    tight = {"seed": 2, "select": ["3.3"], "finite_pairs": 12,
             "tolerances": {"finite": -1.0}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(tight))
    assert cli.main(["verify", str(path)]) == 1


def test_parallel_matches_sequential():
    cfg = SuiteConfig(seed=11, select=FAST, finite_pairs=30)
    a = suite.run_suite(cfg, jobs=1, timestamp="t")
    b = suite.run_suite(cfg, jobs=2, timestamp="t")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_cli_density_commands(tmp_path, capsys):
    hk = tmp_path / "hk.csv"
    assert cli.main(["heat-kernel", "--t", "0.8", "--out", str(hk)]) == 0
    first = hk.read_text().splitlines()
    assert first[0].startswith("# grid:") and first[1] == "q0,q1,q2,value"
    capsys.readouterr()
    assert cli.main(["entropy", str(hk)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["entropy"] == pytest.approx(-0.7548387, abs=1e-6)
    assert cli.main(["fisher", str(hk)]) == 0
    F = np.array(json.loads(capsys.readouterr().out)["matrix"])
    assert F.shape == (3, 3) and np.allclose(F, F.T)
    conv = tmp_path / "c.bin"
    assert cli.main(["convolve", str(hk), str(hk), "--out", str(conv)]) == 0
    capsys.readouterr()
    assert cli.main(["entropy", str(conv), "--reference", str(hk)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["entropy"] > -0.7548387 and out["kl_divergence"] > 0


def test_cli_fg(tmp_path, capsys):
    p = tmp_path / "p.txt"
    p.write_text("0.5 0.25 0.25")
    assert cli.main(["fg", "--builtin", "Z3", "entropy", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["entropy"] == pytest.approx(1.0397207708, abs=1e-10)
    q = tmp_path / "q.txt"
    q.write_text("0.1 0.2 0.1 0.3 0.2 0.1")
    assert cli.main(["fg", "--builtin", "S3", "coset_GH", str(q), "--subgroup", "0,2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["entropy"] <= sum(out["marginal_entropies"])
    table = tmp_path / "t.txt"
    table.write_text("2\n0 1\n1 0\n")
    assert cli.main(["fg", "--table", str(table), "info"]) == 0
    assert json.loads(capsys.readouterr().out)["order"] == 2
    assert cli.main(["fg", "--builtin", "S3", "coset_GH", str(q), "--subgroup", "0,3"]) == 2


def test_cli_errors(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["verify"])
    assert cli.main(["entropy", str(tmp_path / "missing.csv")]) == 2
