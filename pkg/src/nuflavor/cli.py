"""Command-line entry point: evolve, gate-counts, tomography, dn-scan, validate-config."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .experiments import (OUTPUT_ENV, PRESETS, ConfigError, ExperimentConfig, GateCountMismatch,
                          apply_overrides, dn_scan, gate_count_report, parse_text, run_experiment,
                          tomography_run)

# shorthand flags -> config keys
SHORTCUTS = {
    "seed": "seed",
    "output_dir": "output.dir",
    "backend": "evolution.backend",
    "order": "evolution.trotter_order",
    "steps": "evolution.steps",
    "mode": "evolution.mode",
    "shots": "noise.shots",
    "trajectories": "noise.trajectories",
    "noise": "noise.preset",
}


def _add_config_args(p: argparse.ArgumentParser, mode: bool = True):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", "-c", type=Path, help="YAML or JSON config (a JSON sidecar reruns its config)")
    src.add_argument("--preset", choices=sorted(PRESETS), help="named preset")
    p.add_argument("--set", dest="assign", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. --set evolution.steps=4 (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or ./nuflavor_output)")
    p.add_argument("--backend", choices=["qutrit", "qubit-A", "qubit-B"])
    p.add_argument("--order", choices=["LO", "NLO", "NLOstar"])
    p.add_argument("--steps", type=int)
    if mode:
        p.add_argument("--mode", choices=["exact", "trotter", "noisy"])
    p.add_argument("--shots", type=int)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--noise", choices=["none", "H1-1-like", "torino-like"], help="noise preset")


def load_config(args, task: str) -> ExperimentConfig:
    if args.config is not None:
        text = args.config.read_text()
        data, lines = parse_text(text, str(args.config))
        source = str(args.config)
    else:
        data, lines, source = {}, {}, "<command line>"
        if args.preset:
            data["preset"] = args.preset
            source = f"preset:{args.preset}"
    if "config" in data and "config_hash" in data:
        data, lines = data["config"], {}
    assign = list(args.assign)
    for attr, key in SHORTCUTS.items():
        v = getattr(args, attr, None)
        if v is not None:
            assign.append(f"{key}={v}")
    if assign:
        data = apply_overrides(data, assign)
    data.setdefault("task", task)
    return ExperimentConfig.from_dict(data, lines, source)


def _report(paths: dict):
    for kind, p in sorted(paths.items()):
        print(f"wrote {kind}: {p}")


def cmd_evolve(args) -> int:
    cfg = load_config(args, "evolve")
    rec = run_experiment(cfg)
    print(f"config {cfg.hash}: {len(rec.rows)} rows")
    _report(rec.paths)
    return 0


def cmd_gate_counts(args) -> int:
    data = {"task": "gate-counts", "output": {"prefix": "gate-counts"}}
    if args.output_dir:
        data["output"]["dir"] = args.output_dir
    cfg = ExperimentConfig.from_dict(data, source="<command line>")
    try:
        out = gate_count_report(cfg, ks=range(1, args.max_steps + 1), ns=tuple(args.n))
    except GateCountMismatch as e:
        print(f"gate-count mismatch: {e}", file=sys.stderr)
        return 3
    print(f"{'backend':8s} {'topology':11s} built  expected  status")
    for r in out["two_body"]:
        print(f"{r['backend']:8s} {r['topology']:11s} {r['built_count']:3d}/{r['built_depth']:<3d}"
              f" {r['expected_count']:3d}/{r['expected_depth']:<3d}  {r['status']}")
    ok = sum(r["status"] == "ok" for r in out["swap_network"])
    print(f"swap-network totals: {ok}/{len(out['swap_network'])} match the closed form")
    _report(out["paths"])
    return 0


def cmd_tomography(args) -> int:
    cfg = load_config(args, "tomography")
    if args.allow_large:
        cfg.output["allow_large_tomography"] = True
    out = tomography_run(cfg)
    for r in out["rows"]:
        print(f"t={r['t']:6.2f}  F(CpDM)={r['fidelity_cpdm']:.6f}  F(pure)={r['fidelity_pure']:.6f}  "
              f"S1={r['entropy1_cpdm']:.4f}/{r['entropy1_exact']:.4f}")
    _report(out["paths"])
    return 0


def cmd_dn_scan(args) -> int:
    cfg = load_config(args, "dn-scan")
    out = dn_scan(cfg)
    print(f"best d = {out['best_d']:.4f} (depolarised value {out['theoretical_d']:.4f}); "
          f"smallest non-initial identity probability {out['min_non_initial']:.4f}")
    _report(out["paths"])
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args, "evolve")
    print(json.dumps({"config_hash": cfg.hash, "config": cfg.to_dict()}, indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nuflavor", description="Three-flavour collective neutrino oscillations "
                                 "on simulated qutrit and qubit registers.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="flavour curves: exact, Trotterised or noisy + mitigated")
    _add_config_args(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("gate-counts", help="two-body and swap-network entangling-gate counts")
    p.add_argument("--output-dir")
    p.add_argument("--max-steps", type=int, default=6)
    p.add_argument("--n", type=int, nargs="+", default=[2, 4, 6, 8])
    p.set_defaults(func=cmd_gate_counts)

    p = sub.add_parser("tomography", help="Gell-Mann tomography, fidelity and entropies vs time")
    _add_config_args(p, mode=True)
    p.add_argument("--allow-large", action="store_true", help="permit N > 3 (7^N settings)")
    p.set_defaults(func=cmd_tomography)

    p = sub.add_parser("dn-scan", help="scan the depolarised value used by decoherence renormalisation")
    _add_config_args(p, mode=False)
    p.set_defaults(func=cmd_dn_scan)

    p = sub.add_parser("validate-config", help="check a config and print it with defaults filled in")
    _add_config_args(p)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
