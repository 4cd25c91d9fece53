import json
import subprocess
import sys

import pytest

from nuflavor import __version__
from nuflavor.cli import main
from nuflavor.experiments import OUTPUT_ENV


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_validate_config_prints_filled_config(capsys):
    assert main(["validate-config", "--preset", "fig7-like", "--steps", "2", "--set", "seed=11"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["seed"] == 11 and doc["config"]["evolution"]["steps"] == 2
    assert len(doc["config_hash"]) == 16


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\nevolution:\n  order: LO\n")
    assert main(["validate-config", "-c", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "evolution.order" in err


def test_evolve_writes_outputs(tmp_path, capsys):
    rc = main(["evolve", "--preset", "fig6-like", "--set", "evolution.times=[0, 2]",
               "--output-dir", str(tmp_path)])
    assert rc == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["fig6-like_curves.csv", "fig6-like_curves.json"]
    assert "wrote csv" in capsys.readouterr().out


def test_sidecar_rerun_is_byte_identical(tmp_path):
    first = tmp_path / "a"
    main(["evolve", "--preset", "fig6-like", "--set", "evolution.times=[1, 5]", "--output-dir", str(first)])
    second = tmp_path / "b"
    assert main(["evolve", "-c", str(first / "fig6-like_curves.json"), "--output-dir", str(second)]) == 0
    for name in ("fig6-like_curves.csv", "fig6-like_curves.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert main(["evolve", "--mode", "exact", "--set", "evolution.times=[1]"]) == 0
    assert [p.suffix for p in sorted(tmp_path.iterdir())] == [".csv", ".json"]


def test_gate_counts_command(tmp_path, capsys):
    assert main(["gate-counts", "--output-dir", str(tmp_path), "--max-steps", "2", "--n", "2", "4"]) == 0
    out = capsys.readouterr().out
    assert "known-deviation" in out and "24/24 match" in out
    assert (tmp_path / "gate-counts_two_body.csv").exists()


def test_tomography_and_scan_guards(capsys):
    assert main(["tomography", "--preset", "tomography-2nu", "--set", "system.n_neutrinos=4",
                 "--set", "system.initial_flavors=e mu e tau"]) == 2
    assert main(["dn-scan", "--preset", "fig6-like", "--set", "evolution.mode=exact"]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "nuflavor.cli", "validate-config"], capture_output=True, text=True)
    assert out.returncode == 0 and "config_hash" in out.stdout
