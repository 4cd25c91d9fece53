"""Two neutrinos (e, mu): exact curves against Trotter circuits on each register.

Run: python3 demos/evolve_two_neutrinos.py
"""
import numpy as np

from nuflavor.hamiltonian import NeutrinoSystem, exact_evolve, flavor_probabilities
from nuflavor.qudit import apply_circuit, probabilities
from nuflavor.trotter import BACKENDS, TrotterPlan, build_evolution, initial_register_state, unit_probabilities

sys2 = NeutrinoSystem(2, initial_flavors="e mu")
times = np.linspace(0, 14, 8)

print("   t   exact P_e(1)  " + "  ".join(f"{b:>8s}" for b in BACKENDS))
for t in times:
    exact = flavor_probabilities(sys2, exact_evolve(sys2, sys2.initial_state(), t))[0, 0]
    row = []
    for b in BACKENDS:
        plan = TrotterPlan("LO", 1, b)
        c = build_evolution(sys2, t, plan)
        rec = probabilities(apply_circuit(initial_register_state(sys2, b), c))
        P = unit_probabilities(rec.probabilities, 2, b, c.metadata["final_order"])
        row.append(P[0].sum())  # marginal of neutrino 1
    print(f"{t:5.1f}  {exact:12.6f}  " + "  ".join(f"{p:8.6f}" for p in row))

# a single swap-network step is exact for two neutrinos: every column agrees
