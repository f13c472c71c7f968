import json
import subprocess
import sys

import pytest
import yaml

from riccilab.cli import main
from riccilab.io import load_manifest
from riccilab.scenario import emit_report, load_scenario, run_scenario

GOLDEN = {
    "manifest.json",
    "summary.json",
    "flow_monitor.csv",
    "initial.snap",
    "final.snap",
    "entropy_conjugate.csv",
    "reports/gradient.json",
    "reports/envelope.json",
    "reports/harnack.json",
    "reports/center-f.json",
    "reports/type3.json",
}


def _files(root):
    return {str(p.relative_to(root)) for p in root.rglob("*") if p.is_file()}


def _write(tmp_path, cfg, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


@pytest.fixture(scope="module")
def golden_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    code = main(["run", "--config", "flat-kernel-suite", "--out", str(out)])
    return code, out


def test_bundled_scenario_file_set(golden_run):
    code, out = golden_run
    assert code == 0
    assert _files(out) == GOLDEN
    man = load_manifest(out)
    assert man["status"] == "complete"
    assert all(v == "done" for v in man["jobs"].values())
    summary = json.loads((out / "summary.json").read_text())
    assert summary["all_in_hypothesis_pass"] and summary["exit_code"] == 0


def test_rerun_is_byte_identical(golden_run, tmp_path):
    _, out = golden_run
    assert main(["run", "-c", "flat-kernel-suite", "-o", str(tmp_path), "--threads", "2"]) == 0
    for rel in GOLDEN:
        assert (out / rel).read_bytes() == (tmp_path / rel).read_bytes(), rel


def test_report_lists_every_verifier(golden_run, capsys):
    _, out = golden_run
    assert main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    for vid in ("gradient", "envelope", "harnack", "center-f", "type3"):
        assert vid in text
    assert "entropy_conjugate.csv" in text
    assert "INCOMPLETE" not in text


def test_unknown_backend_names_the_field(tmp_path, capsys):
    cfg = {"schema_version": 1, "name": "bad", "backend": "spherical",
           "initial": {"fixture": "flat-plane"}, "flow": {"horizon": 1.0}}
    assert main(["run", "-c", str(_write(tmp_path, cfg)), "-o", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "backend" in err


def test_schema_errors_carry_paths(tmp_path, capsys):
    cfg = {"schema_version": 1, "name": "bad", "backend": "radial",
           "initial": {"fixture": "flat-plane"}, "flow": {"horizon": -1.0}}
    assert main(["run", "-c", str(_write(tmp_path, cfg))]) == 2
    assert "flow.horizon" in capsys.readouterr().err
    cfg["flow"]["horizon"] = 1.0
    cfg["backend"] = "torus"
    assert main(["run", "-c", str(_write(tmp_path, cfg))]) == 2
    assert "backend" in capsys.readouterr().err
    cfg["backend"] = "radial"
    cfg["verifiers"] = [{"id": "g", "kind": "gradient", "kernel": "nope", "window": [0.1, 1.0]}]
    assert main(["run", "-c", str(_write(tmp_path, cfg))]) == 2
    assert "verifiers" in capsys.readouterr().err


def test_missing_config_and_empty_report(tmp_path, capsys):
    assert main(["run", "-c", str(tmp_path / "absent.yaml")]) == 2
    assert main(["report", "--out", str(tmp_path)]) == 2
    assert "manifest" in capsys.readouterr().err


def test_partial_run_is_reported(tmp_path, capsys):
    cfg = {
        "schema_version": 1,
        "name": "partial",
        "backend": "radial",
        "initial": {"fixture": "flat-plane", "params": {"n": 100, "r_max": 10.0}},
        "flow": {"horizon": 1.0},
        # the kernel asks for times the flow never reached
        "kernels": [{"id": "k", "direction": "forward", "point": [0.0, 0.0], "time": 0.0, "until": 5.0}],
        "verifiers": [{"id": "g", "kind": "gradient", "kernel": "k", "window": [0.1, 1.0]},
                      {"id": "t3", "kind": "type3"}],
    }
    out = tmp_path / "run"
    assert main(["run", "-c", str(_write(tmp_path, cfg)), "-o", str(out)]) == 3
    assert load_manifest(out)["status"] == "failed"
    assert (out / "reports" / "t3.json").is_file()
    capsys.readouterr()
    assert main(["report", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    assert "INCOMPLETE" in text and "incomplete jobs" in text and "kernel:k" in text


def test_flow_failure_exits_3(tmp_path):
    cfg = {"schema_version": 1, "name": "extinct", "backend": "homothety",
           "initial": {"fixture": "sphere-homothety"}, "flow": {"horizon": 1.0}}
    out = tmp_path / "run"
    assert run_scenario(_write(tmp_path, cfg), out=out) == 3
    man = load_manifest(out)
    assert man["status"] == "failed" and man["jobs"]["flow"].startswith("failed")
    assert "flow" in emit_report(out)


def test_output_directory_resolution(tmp_path, monkeypatch):
    cfg = {"schema_version": 1, "name": "where", "backend": "radial",
           "initial": {"fixture": "flat-plane"}, "flow": {"horizon": 1.0}}
    path = _write(tmp_path, cfg)
    monkeypatch.setenv("RICCILAB_OUT", str(tmp_path / "env"))
    assert load_scenario(path).out == tmp_path / "env" / "where"
    assert load_scenario(path, out=tmp_path / "x").out == tmp_path / "x"
    assert load_scenario(path, seed=7).seed == 7


def test_list_fixtures(capsys):
    assert main(["list-fixtures", "-v"]) == 0
    text = capsys.readouterr().out
    assert "cone" in text and "expander" in text and "in-hypothesis" in text


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "riccilab.cli", "list-fixtures"], capture_output=True, text=True)
    assert res.returncode == 0 and "flat-torus" in res.stdout
