import json
import subprocess
import sys
from importlib.resources import files
from pathlib import Path

import numpy as np
import pytest

from eocavity.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main, run
from eocavity.fitting import lineshape_model
from eocavity.serialize import csv_text, digest, dumps

BASE = json.loads(files("eocavity").joinpath("data/paper_device.json").read_text())


def small_config(**overrides):
    cfg = json.loads(json.dumps(BASE))
    cfg["sweep"].update(points=5, drive_points=121)
    cfg["spectrum"]["points"] = 201
    cfg["nms"]["points"] = 201
    for key, value in overrides.items():
        cfg[key] = value
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def manifest_names(out):
    return {e["name"] for e in json.loads((out / "manifest.json").read_text())["files"]}


EXPECTED = {
    "modes-optical": {"modes_optical.csv"},
    "modes-microwave": {"modes_microwave.csv"},
    "tune": {"tune.json"},
    "g0": {"g0.json"},
    "sweep": {"sweep.csv", "sweep_meta.json"},
    "spectrum": {"spectrum.csv", "spectrum_summary.json"},
    "nms": {"nms.csv", "nms_summary.json"},
    "noise": {"noise.json"},
    "optimize-coupling": {"optimize_coupling.json"},
}


@pytest.mark.parametrize("command", sorted(EXPECTED))
def test_every_command_runs(tmp_path, command):
    out = tmp_path / "out"
    assert run(command, write_config(tmp_path, small_config()), str(out), threads=2) == EXIT_OK
    produced = {p.name for p in out.iterdir()}
    assert produced == EXPECTED[command] | {"run.json", "manifest.json"}
    assert manifest_names(out) == produced
    entries = json.loads((out / "manifest.json").read_text())["files"]
    for e in entries:
        if e["sha256"] is not None:
            assert e["sha256"] == digest((out / e["name"]).read_text())


def test_g0_and_noise_values(tmp_path):
    cfg = write_config(tmp_path, small_config())
    assert run("g0", cfg, str(tmp_path / "g0")) == EXIT_OK
    g0 = json.loads((tmp_path / "g0" / "g0.json").read_text())
    assert 1.3 <= g0["g0_hz"] <= 2.1
    assert run("noise", cfg, str(tmp_path / "noise")) == EXIT_OK
    noise = json.loads((tmp_path / "noise" / "noise.json").read_text())
    assert 14 <= noise["snr_db"] <= 16
    assert run("optimize-coupling", cfg, str(tmp_path / "opt")) == EXIT_OK
    opt = json.loads((tmp_path / "opt" / "optimize_coupling.json").read_text())
    assert 35e6 <= opt["kappa_m_ext_hz"] <= 65e6


def test_bundled_config_shortcut(tmp_path):
    assert main(["noise", "--config", "@paper_device", "--out", str(tmp_path / "o")]) == EXIT_OK
    echo = json.loads((tmp_path / "o" / "run.json").read_text())
    assert echo["command"] == "noise"
    assert echo["config"]["microwave"]["q_int"] == 1300.0


def test_output_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, small_config())
    for name in ("a", "b"):
        assert run("g0", cfg, str(tmp_path / name)) == EXIT_OK
    for f in ("g0.json", "run.json", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sweep_threads_do_not_change_bytes(tmp_path):
    cfg = write_config(tmp_path, small_config())
    assert run("sweep", cfg, str(tmp_path / "t1"), threads=1) == EXIT_OK
    assert run("sweep", cfg, str(tmp_path / "t8"), threads=8) == EXIT_OK
    assert (tmp_path / "t1" / "sweep.csv").read_bytes() == (tmp_path / "t8" / "sweep.csv").read_bytes()
    meta = json.loads((tmp_path / "t1" / "sweep_meta.json").read_text())
    assert meta["shape"] == [5, 121]
    assert len((tmp_path / "t1" / "sweep.csv").read_text().splitlines()) == 1 + 5 * 121


def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("EOCAVITY_THREADS", "3")
    cfg = write_config(tmp_path, small_config())
    assert run("sweep", cfg, str(tmp_path / "env")) == EXIT_OK
    monkeypatch.setenv("EOCAVITY_THREADS", "nonsense")
    assert run("sweep", cfg, str(tmp_path / "fallback")) == EXIT_OK
    assert (tmp_path / "env" / "sweep.csv").read_bytes() == (tmp_path / "fallback" / "sweep.csv").read_bytes()


def test_json_tables(tmp_path):
    cfg = write_config(tmp_path, small_config())
    assert run("nms", cfg, str(tmp_path / "j"), fmt="json") == EXIT_OK
    rows = json.loads((tmp_path / "j" / "nms.json").read_text())
    assert set(rows[0]) == {"detuning_hz", "transmission"}
    summary = json.loads((tmp_path / "j" / "nms_summary.json").read_text())
    assert summary["splitting_hz"] == pytest.approx(2 * np.sqrt(1.3e15) * 1.5)


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = small_config()
    cfg["device"]["mirrors"]["bogus"] = 1
    path = write_config(tmp_path, cfg, "bad.json")
    out = tmp_path / "never"
    assert run("g0", path, str(out)) == EXIT_CONFIG
    err = capsys.readouterr().err
    line = next(i for i, s in enumerate(Path(path).read_text().splitlines(), 1) if '"bogus"' in s)
    assert f"bad.json:{line}: device.mirrors.bogus" in err
    assert not out.exists()


def test_invalid_values_and_json(tmp_path, capsys):
    cfg = small_config()
    cfg["laser"]["mode_match"] = 1.5
    assert run("g0", write_config(tmp_path, cfg), str(tmp_path / "x")) == EXIT_CONFIG
    assert "laser.mode_match" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text('{"device": \n  {,}\n}')
    assert run("g0", str(broken), str(tmp_path / "y")) == EXIT_CONFIG
    assert "broken.json:2: invalid JSON" in capsys.readouterr().err


def test_missing_section(tmp_path, capsys):
    cfg = small_config()
    del cfg["operating_point"]
    assert run("noise", write_config(tmp_path, cfg), str(tmp_path / "x")) == EXIT_CONFIG
    assert "operating_point" in capsys.readouterr().err
    assert run("fit", write_config(tmp_path, small_config()), str(tmp_path / "y")) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert run("g0", str(tmp_path / "nope.json"), str(tmp_path / "x")) == EXIT_IO


def test_numerical_failure(tmp_path, capsys):
    cfg = small_config()
    cfg["microwave"]["freq_hz"] = 40e9  # above the crystal-only FSR: no gap can reach it
    out = tmp_path / "x"
    assert run("tune", write_config(tmp_path, cfg), str(out)) == EXIT_NUMERIC
    assert "NoBracketError" in capsys.readouterr().err
    assert not out.exists()


def fit_config(tmp_path, trace_name, fixed=("C",), initial=None):
    cfg = small_config()
    cfg["fit"] = {
        "kind": "lineshape",
        "trace_csv": trace_name,
        "initial": initial
        or {"gain": 1.1, "C": 0.017, "kappa_o": 4.5e6, "kappa_m": 8e6, "f_m": 9.3025e9, "delta_op": 9.3015e9},
        "fixed": list(fixed),
    }
    return write_config(tmp_path, cfg)


def test_missing_trace(tmp_path):
    out = tmp_path / "x"
    assert run("fit", fit_config(tmp_path, "absent.csv"), str(out)) == EXIT_IO
    assert not out.exists()


def test_malformed_trace(tmp_path, capsys):
    (tmp_path / "t.csv").write_text("freq_hz,magnitude\n1,2\n3,oops\n")
    assert run("fit", fit_config(tmp_path, "t.csv"), str(tmp_path / "x")) == EXIT_IO
    assert "t.csv:3" in capsys.readouterr().err


def test_spectrum_then_fit(tmp_path):
    """A spectrum written by the tool is read back by the fit command."""
    cfg = write_config(tmp_path, small_config())
    assert run("spectrum", cfg, str(tmp_path / "spec")) == EXIT_OK
    summary = json.loads((tmp_path / "spec" / "spectrum_summary.json").read_text())
    config = fit_config(
        tmp_path,
        "spec/spectrum.csv",
        initial={"gain": 0.09, "C": summary["C"], "kappa_o": 4.5e6, "kappa_m": 8e6,
                 "f_m": 9.3025e9, "delta_op": 9.3015e9},
    )
    assert run("fit", config, str(tmp_path / "fit")) == EXIT_OK
    fit = json.loads((tmp_path / "fit" / "fit.json").read_text())
    assert fit["converged"]
    assert fit["params"]["kappa_o"] == pytest.approx(4.1e6, rel=1e-6)
    assert fit["params"]["kappa_m"] == pytest.approx(summary["kappa_m_hz"], rel=1e-6)
    assert fit["fixed"] == ["C"]


def test_six_free_fit_reports_singularity(tmp_path, capsys):
    f = np.linspace(9.26e9, 9.34e9, 401)
    y = lineshape_model(f, 1.0, 0.017, 4.1e6, 8.54e6, 9.302e9, 9.302e9)
    (tmp_path / "t.csv").write_text(csv_text(("freq_hz", "magnitude"), zip(f, y)))
    assert run("fit", fit_config(tmp_path, "t.csv", fixed=()), str(tmp_path / "x")) == EXIT_NUMERIC
    assert "condition number" in capsys.readouterr().err


def test_serialisation_rules():
    assert dumps({"a": 0.1, "b": [1, 2.5], "c": float("nan")}) == '{\n  "a": 0.10000000000000001,\n  "b": [1, 2.5],\n  "c": null\n}\n'
    text = csv_text(("x", "n"), [(1.0, 3), (np.float64(1e-20), 4)])
    assert text.splitlines()[:2] == ["x,n", "1,3"]
    assert float(text.splitlines()[2].split(",")[0]) == 1e-20


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "eocavity", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip().startswith("eocavity ")
    proc = subprocess.run([sys.executable, "-m", "eocavity", "frobnicate", "--config", "x", "--out", "y"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
