"""Two-neutrino tomography under H1-1-like noise: fidelity and entanglement entropy.

Run: python3 demos/tomography_entanglement.py
"""
from nuflavor.experiments import preset_config, tomography_run

cfg = preset_config("tomography-2nu", ["evolution.times=[0, 2, 4, 8]", "evolution.mode=noisy",
                                       "noise.preset=H1-1-like", "noise.shots=2000"])
out = tomography_run(cfg, write=False)
print("   t   F(CpDM)   F(pure)   S1(CpDM)  S1(pure)  S1(exact)")
for r in out["rows"]:
    print(f"{r['t']:5.1f}  {r['fidelity_cpdm']:.4f}    {r['fidelity_pure']:.4f}    "
          f"{r['entropy1_cpdm']:.4f}    {r['entropy1_pure']:.4f}    {r['entropy1_exact']:.4f}")
# the pure-state estimate removes most of the mixedness added by noise and shot error
