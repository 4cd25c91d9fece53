"""Four neutrinos on a noisy qubit-B register: raw post-selection against decoherence renormalization.

Run: python3 demos/mitigation_four_neutrinos.py   (about ten seconds)
"""
import numpy as np

from nuflavor.experiments import preset_config, run_experiment

cfg = preset_config("fig7-like", ["evolution.times=[0, 2, 4, 6]", "mitigation.bootstrap=20"])
rec = run_experiment(cfg, write=False)

print("neutrino 1 (initially e), P_e")
print("   t    exact     pHS+DR          snHS+DR")
ex = rec.column("exact_P_e", "pHS", 1)
for i, t in enumerate(cfg.times()):
    cols = [f"{rec.column('P_e', s, 1)[i]:.3f} +- {rec.column('sigma_e', s, 1)[i]:.3f}" for s in ("pHS", "snHS")]
    print(f"{t:5.1f}  {ex[i]:.3f}    " + "   ".join(cols))

# the gap at late times mixes Trotter error (fixed LO steps) with residual noise
cx = [tp["cx_count"] for tp in rec.metadata["time_points"]]
print("CNOTs per circuit:", cx)
print("max |error| pHS:", np.nanmax(np.abs(rec.column("P_e", scheme="pHS") - rec.column("exact_P_e", scheme="pHS"))))
