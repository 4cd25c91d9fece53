import json

import numpy as np
import pytest

from nuflavor.experiments import (CURVES_SCHEMA, OUTPUT_ENV, PRESETS, TWO_BODY_COUNTS, ConfigError, ExperimentConfig,
                                  apply_overrides, dn_scan, exact_curves, gate_count_report, gate_count_rows,
                                  preset_config, preset_dict, run_experiment, run_task, tomography_run)
from nuflavor.hamiltonian import REFERENCE_MIXING, NeutrinoSystem


# ----------------------------------------------------------------- configuration

GOOD = """\
seed: 5
system:
  n_neutrinos: 2
  initial_flavors: e mu
evolution:
  mode: trotter
  times: [1.0, 2.0]
"""


def test_defaults_and_echo():
    cfg = ExperimentConfig.from_text(GOOD)
    assert cfg.seed == 5 and cfg.evolution["backend"] == "qubit-B"
    d = cfg.to_dict()
    assert set(d) == {"task", "seed", "system", "evolution", "noise", "mitigation", "output"}
    again = ExperimentConfig.from_dict(d)
    assert again.hash == cfg.hash


@pytest.mark.parametrize("text,where", [
    (GOOD + "bogus: 1\n", "line 8: bogus: unknown key"),
    (GOOD.replace("  n_neutrinos: 2", "  n_neutrinos: 2\n  colour: red"), "line 4: system.colour: unknown key"),
    (GOOD.replace("mode: trotter", "mode: quantum"), "line 6: evolution.mode"),
    (GOOD.replace("e mu", "e mu tau"), "line 4: system.initial_flavors"),
    (GOOD.replace("seed: 5", "seed: five"), "line 1: seed"),
    (GOOD.replace("[1.0, 2.0]", "[1.0, -2.0]"), "line 7: evolution.times"),
])
def test_config_errors_carry_line_numbers(text, where):
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_text(text, "cfg.yaml")
    assert str(e.value).startswith("cfg.yaml: ")
    assert where in str(e.value)


def test_duplicate_keys_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        ExperimentConfig.from_text("seed: 1\nseed: 2\n")


def test_semantic_checks():
    with pytest.raises(ConfigError, match="palindromic"):
        preset_config("fig7-like", ["mitigation.symmetrize=true"])
    with pytest.raises(ConfigError, match="schemes"):
        preset_config("fig7-like", ["mitigation.schemes=[xHS]"])
    with pytest.raises(ConfigError, match="mixing"):
        ExperimentConfig.from_dict({"system": {"mixing": {"theta14_deg": 3}}})


def test_overrides_and_mixing():
    data = apply_overrides({}, ["system.mixing.theta13_deg=0", "evolution.steps=3", "seed=9"])
    cfg = ExperimentConfig.from_dict(data)
    assert cfg.seed == 9 and cfg.evolution["steps"] == 3
    assert cfg.system_obj().mixing.theta13 == 0.0
    assert ExperimentConfig.from_dict({}).system_obj().mixing == REFERENCE_MIXING


def test_time_grids_and_steps():
    cfg = preset_config("fig7-like")
    assert list(cfg.times()) == [0, 1, 2, 3, 4, 5, 6]
    assert [cfg.steps_for(t) for t in (0.0, 1.0, 2.5)] == [1, 1, 3]
    assert len(preset_config("dn-scan-8nu").d_grid()) == 59


def test_hash_ignores_output_block():
    a = preset_config("fig6-like")
    b = preset_config("fig6-like", ["output.dir=/elsewhere", "output.prefix=x"])
    c = preset_config("fig6-like", ["seed=1"])
    assert a.hash == b.hash != c.hash


def test_presets_valid():
    for name in PRESETS:
        cfg = preset_config(name)
        assert cfg.system_obj().n == cfg.system["n_neutrinos"]
        assert preset_dict(name)["output"]["prefix"]
    with pytest.raises(ConfigError):
        preset_config("fig99-like")


def test_output_dir_resolution(monkeypatch, tmp_path):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert str(preset_config("fig6-like").output_dir()) == "nuflavor_output"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert preset_config("fig6-like").output_dir() == tmp_path
    assert str(preset_config("fig6-like", ["output.dir=here"]).output_dir()) == "here"


# ----------------------------------------------------------------- evolve

def test_exact_mode_matches_oracle():
    cfg = ExperimentConfig.from_text(GOOD.replace("mode: trotter", "mode: exact"))
    rec = run_experiment(cfg, write=False)
    P, pers = exact_curves(cfg.system_obj(), cfg.times())
    assert np.allclose(rec.column("P_e", neutrino=1), P[:, 0, 0], atol=0)
    assert np.allclose(rec.column("exact_persistence", neutrino=1), pers, atol=0)
    assert np.all(np.isnan(rec.column("sigma_e")))


def test_fig6_like_within_sampling_error():
    rec = run_experiment(preset_config("fig6-like"), write=False)
    assert len(rec.rows) == 30
    for r in rec.rows:
        for f in ("e", "mu", "tau"):
            p = r[f"exact_P_{f}"]
            bound = 5 * np.sqrt(max(p * (1 - p), 0.01) / 100)
            assert abs(r[f"P_{f}"] - p) <= bound
            assert 0 <= r[f"P_{f}"] <= 1
        # 18 two-body CNOTs plus 3 per one-body factor
        assert r["cx_count"] == 24 and r["steps"] == 1


def test_fig7_like_end_to_end():
    rec = run_experiment(preset_config("fig7-like"), write=False)
    assert {r["scheme"] for r in rec.rows} == {"pHS", "snHS"}
    assert len(rec.rows) == 7 * 4 * 2
    sig = rec.column("sigma_e", scheme="pHS")
    assert np.all(np.isfinite(sig)) and np.all(sig >= 0)
    assert rec.metadata["n_neutrinos"] == 4 and len(rec.metadata["time_points"]) == 7


def test_fig8_like_end_to_end():
    cfg = preset_config("fig8-like", ["evolution.times=[2.5]", "noise.shots=32", "mitigation.bootstrap=5"])
    rec = run_experiment(cfg, write=False)
    assert len(rec.rows) == 8 * 2
    for r in rec.rows:
        s = r["P_e"] + r["P_mu"] + r["P_tau"]
        assert s == pytest.approx(1.0, abs=1e-12)


def test_written_files_and_reruns(tmp_path):
    cfg = preset_config("fig6-like", [f"output.dir={tmp_path}", "evolution.times=[0, 3, 6]"])
    rec = run_experiment(cfg)
    csv, js = rec.paths["csv"], rec.paths["json"]
    first = open(csv).readline()
    assert first.startswith(f"# schema={CURVES_SCHEMA} config_hash={cfg.hash} seed={cfg.seed}")
    side = json.loads(open(js).read())
    assert side["config_hash"] == cfg.hash
    a, b = open(csv, "rb").read(), open(js, "rb").read()
    # the embedded config reruns to byte-identical files
    again = ExperimentConfig.from_dict(side | {"config": dict(side["config"], output=dict(
        side["config"]["output"], dir=str(tmp_path / "rerun")))})
    rec2 = run_experiment(again)
    assert open(rec2.paths["csv"], "rb").read() == a
    assert open(rec2.paths["json"], "rb").read() == b


# ----------------------------------------------------------------- gate counts

def test_gate_count_rows():
    term, net = gate_count_rows(range(1, 3), (2, 4), strict=False)
    got = {(r["backend"], r["topology"]): (r["built_count"], r["built_depth"]) for r in term}
    assert got[("qutrit", "all-to-all")] == (4, 4)
    assert got[("qubit-A", "all-to-all")] == (24, 13)
    assert got[("qubit-B", "all-to-all")] == (18, 12)
    assert got[("qubit-A", "linear")] == (42, 31)
    assert set(TWO_BODY_COUNTS) == set(got)
    status = {(r["backend"], r["topology"]): r["status"] for r in term}
    assert status[("qubit-B", "linear")] == "known-deviation"
    assert all(r["status"] == "ok" for r in net)
    lo = next(r for r in net if (r["backend"], r["order"], r["n_neutrinos"], r["steps"]) == ("qubit-B", "LO", 2, 1))
    assert lo["built_count"] == 18


def test_gate_count_report_files(tmp_path):
    cfg = ExperimentConfig.from_dict({"task": "gate-counts", "output": {"dir": str(tmp_path), "prefix": "gc"}})
    out = gate_count_report(cfg, ks=range(1, 3), ns=(2, 4))
    assert {p.name for p in tmp_path.iterdir()} >= {"gc_two_body.csv", "gc_two_body.json", "gc_swap_network.csv"}
    assert len(out["swap_network"]) == 3 * 2 * 2 * 2


# ----------------------------------------------------------------- tomography and scan

def test_tomography_noiseless():
    cfg = preset_config("tomography-2nu", ["evolution.times=[0.0, 3.0, 9.0]"])
    out = tomography_run(cfg, write=False)
    for r in out["rows"]:
        assert r["fidelity_cpdm"] == pytest.approx(1.0, abs=1e-8)
        assert r["fidelity_pure"] == pytest.approx(1.0, abs=1e-8)
        assert abs(r["entropy12_pure"]) <= 1e-8
        assert r["entropy1_pure"] == pytest.approx(r["entropy1_exact"], abs=1e-8)


def test_tomography_global_depolarizing_prefers_pure():
    cfg = preset_config("tomography-2nu", ["evolution.times=[2.0, 6.0]", "evolution.mode=noisy",
                                           "noise.kind=global_depolarizing", "noise.p2q=0.01"])
    out = tomography_run(cfg, write=False)
    for r in out["rows"]:
        assert r["fidelity_pure"] >= r["fidelity_cpdm"]
        assert r["entropy12_cpdm"] > r["entropy12_pure"]


def test_tomography_guards():
    with pytest.raises(ConfigError, match="allow_large_tomography"):
        tomography_run(preset_config("tomography-2nu", ["system.n_neutrinos=4",
                                                        "system.initial_flavors=e mu e tau"]), write=False)
    with pytest.raises(ConfigError, match="circuits"):
        tomography_run(preset_config("tomography-2nu", ["evolution.mode=exact"]), write=False)


def test_tomography_seed_determinism(tmp_path):
    over = ["evolution.times=[1.5]", "evolution.mode=noisy", "noise.preset=H1-1-like", "noise.shots=50"]
    outs = []
    for sub in ("a", "b"):
        cfg = preset_config("tomography-2nu", over + [f"output.dir={tmp_path / sub}"])
        p = tomography_run(cfg)["paths"]
        outs.append((open(p["csv"], "rb").read(), open(p["json"], "rb").read()))
    assert outs[0] == outs[1]


def test_dn_scan_global_depolarizing_recovers_theory():
    cfg = ExperimentConfig.from_dict({
        "task": "dn-scan", "seed": 3,
        "system": {"n_neutrinos": 2, "initial_flavors": "e mu"},
        "evolution": {"mode": "noisy", "times": [1.0, 4.0, 9.0]},
        "noise": {"kind": "global_depolarizing", "p2q": 0.02},
        "mitigation": {"d_grid": {"start": 0.05, "stop": 0.4, "num": 57}},
    })
    out = dn_scan(cfg, write=False)
    assert out["best_d"] == pytest.approx(out["theoretical_d"], abs=1e-12)
    assert run_task(cfg, write=False)["best_d"] == out["best_d"]


def test_exact_curves_shapes():
    sys = NeutrinoSystem(3, initial_flavors="e mu tau")
    P, pers = exact_curves(sys, [0.0, 1.0])
    assert P.shape == (2, 3, 3) and pers[0] == pytest.approx(1.0)
