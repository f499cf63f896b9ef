import json

import pytest

from sublin import __version__
from sublin.cli import apply_override, main
from sublin.experiments import ConfigError, list_fixtures, validate_config


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2))
    return p


def test_fixtures_listed_with_theorem_references(capsys):
    names = dict(list_fixtures())
    for name in ("iid_peng", "alternating_sqrt", "harmonic", "degenerate"):
        assert "Theorem" in names[name]
    assert main(["fixtures"]) == 0
    assert "iid_peng" in capsys.readouterr().out


def test_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_axioms_on_bundled_family(tmp_path):
    cfg = {"experiment": "axioms", "output": str(tmp_path / "out"),
           "parameters": {"random_families": 20, "product_instances": 5, "markov_instances": 20}}
    assert main(["run", str(write(tmp_path, cfg))]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["metrics"]["fixture_violations"] == []
    assert report["passed"]


def test_lln_outputs_and_thresholds(tmp_path):
    out = tmp_path / "out"
    cfg = {"experiment": "lln", "model": "alternating_sqrt", "output": str(out),
           "parameters": {"ns": [8, 16, 32]}}
    code = main(["run", str(write(tmp_path, cfg))])
    lines = (out / "lln.csv").read_text().splitlines()
    assert lines[0] == "n,value,error_bound,target,abs_gap"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["8", "16", "32"]
    report = json.loads((out / "report.json").read_text())
    assert report["thresholds"]["tolerance"] == 0.05
    assert code == (0 if report["passed"] else 2)
    assert (out / "lln.svg").read_text().startswith("<?xml")


def test_threshold_failure_exits_2(tmp_path):
    cfg = {"experiment": "lln", "output": str(tmp_path / "o"), "parameters": {"ns": [4]}}
    path = write(tmp_path, cfg)
    assert main(["run", str(path), "--set", "tolerance=0.0"]) == 2


def test_rerun_is_byte_identical(tmp_path):
    cfg = {"experiment": "slln", "output": str(tmp_path / "a"),
           "parameters": {"n": 400, "paths": 40, "tail_start": 200, "band_tail_start": 100}}
    path = write(tmp_path, cfg)
    main(["run", str(path)])
    main(["run", str(path), "--set", f"output={tmp_path / 'b'}"])
    for f in ("slln.csv", "paths_upper.csv", "paths_target.csv", "paths_upper.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_unknown_key_is_line_addressed(tmp_path, capsys):
    text = '{\n  "experiment": "pde",\n  "output": "x",\n  "parameters": {\n    "dx": 0.01,\n    "colour": 1\n  }\n}\n'
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert main(["run", str(p)]) == 1
    err = capsys.readouterr().err
    assert f"{p}:6:" in err and "colour" in err


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "experiment": "lln",\n  "output": "x",,\n}\n')
    assert main(["run", str(p)]) == 1
    assert f"{p}:3:" in capsys.readouterr().err


def test_bad_override_and_missing_file(tmp_path, capsys):
    p = write(tmp_path, {"experiment": "oracle", "output": str(tmp_path / "o")})
    assert main(["run", str(p), "--set", "instances"]) == 1
    assert main(["run", str(p), "--set", "instances=lots"]) == 1
    assert main(["run", str(tmp_path / "nope.json")]) == 1
    assert main(["frobnicate"]) == 1


@pytest.mark.parametrize("cfg", [
    {"experiment": "lln"},
    {"experiment": "teleport", "output": "x"},
    {"experiment": "lln", "output": "x", "extra": 1},
    {"experiment": "lln", "output": "x", "model": "no_such_fixture"},
    {"experiment": "lln", "output": "x", "model": "three_coins"},
    {"experiment": "wlln", "output": "x", "parameters": {"eps": "wide"}},
])
def test_invalid_configs(cfg):
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_override_paths():
    cfg = {"experiment": "lln", "output": "x"}
    apply_override(cfg, "ns=[8,16]")
    apply_override(cfg, "model.mu_lo=-2")
    apply_override(cfg, "output=y")
    assert cfg == {"experiment": "lln", "output": "y", "parameters": {"ns": [8, 16]}, "model": {"mu_lo": -2}}


def test_pde_experiment_small(tmp_path):
    cfg = {"experiment": "pde", "output": str(tmp_path / "p"), "parameters": {"dx": 0.02, "phis": ["identity"]}}
    assert main(["run", str(write(tmp_path, cfg))]) == 0
    head = (tmp_path / "p" / "pde_solution.csv").read_text().splitlines()[0]
    assert head == "t,x,V"


def test_shipped_configs_validate():
    from pathlib import Path

    for path in sorted((Path(__file__).parent.parent / "configs").glob("*.json")):
        validate_config(json.loads(path.read_text()))
