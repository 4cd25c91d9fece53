"""Swap-network Trotterisation (LO, NLO, NLO*) over qutrit and qubit backends.

Positions are slots of the register (neutrino-sized units: one qutrit or a
pair of qubits).  A swap-network pass applies exp(-i(tau J + pi/4) lambda.lambda)
to adjacent positions; the pi/4 part is a SWAP, so the logical neutrino
order is permuted as the pass proceeds.  ``order[p]`` is the logical
neutrino sitting at position p.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import NeutrinoSystem, qutrit_swap
from .qubit_circuits import (basis_change_gates, flavor_one_body_gates, two_body_gates)
from .qubit_circuits import _SWAP as _QSWAP
from .kak import rz
from .qudit import Circuit, Gate, QuditState, RegisterShape
from .qutrit_circuits import QutritGateSpec, pmns_circuit, two_body_local_gates

BACKENDS = ("qutrit", "qubit-A", "qubit-B")
ORDERS = ("LO", "NLO", "NLOstar")
N_CX = {"qutrit": 4, "qubit-A": 24, "qubit-B": 18}
ABSORBED = np.pi / 4


def nominal_layers(n: int) -> list:
    """N brickwork layers of position pairs; layer l holds (p, p+1) with p = l mod 2."""
    if n < 2:
        raise ValueError("swap network needs N >= 2")
    return [[(p, p + 1) for p in range(l % 2, n - 1, 2)] for l in range(n)]


@dataclass
class Interaction:
    positions: tuple
    logical: tuple
    tau_sum: float  # sum of time steps multiplying J for this gate
    swaps: bool     # True when the gate carries the absorbed SWAP


def swap_network_schedule(n: int) -> list:
    """Non-empty layers of one pass from the identity order.

    Each entry is a list of dicts with the positions, the logical pair met
    there and the absorbed-SWAP flag.
    """
    order = list(range(n))
    out = []
    for layer in nominal_layers(n):
        if not layer:
            continue
        row = []
        for p, q in layer:
            row.append({"positions": (p, q), "pair": tuple(sorted((order[p], order[q]))),
                        "absorbed_swap": True})
            order[p], order[q] = order[q], order[p]
        out.append(row)
    return out


def pass_final_order(n: int, order=None) -> list:
    order = list(range(n)) if order is None else list(order)
    for layer in nominal_layers(n):
        for p, q in layer:
            order[p], order[q] = order[q], order[p]
    return order


@dataclass
class TrotterPlan:
    order: str = "LO"
    steps: int = 1
    backend: str = "qutrit"
    absorb_swaps: bool = True
    frame: str = "native"   # "mass": rotate to the mass basis once, evolve with diagonal one-body terms
    identity: bool = False  # DR calibration circuit with the same structure
    layers: list = field(default_factory=list)
    permutations: list = field(default_factory=list)

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"trotter order must be one of {ORDERS}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")
        if self.frame not in ("native", "mass"):
            raise ValueError("frame must be 'native' or 'mass'")
        self.steps = int(self.steps)

    @property
    def qubit(self) -> bool:
        return self.backend.startswith("qubit")

    @property
    def variant(self) -> str:
        return self.backend[-1]


def _pass_taus(plan: TrotterPlan, t: float) -> list:
    k = plan.steps
    tau = t / k
    if not plan.identity:
        return [tau] * k
    if plan.order == "LO":
        return [0.0] * k
    # second half of the paired passes runs backwards in time; for odd k the
    # unpaired last pass is a pure swap pass (a tracked permutation)
    half = k // 2
    taus = [tau] * half + [-tau] * half
    if k % 2:
        taus.append(0.0)
    return taus


def interaction_schedule(sys: NeutrinoSystem, t: float, plan: TrotterPlan):
    """Flat list of passes; each pass is (tau, list of layers of Interaction)."""
    n = sys.n
    J = sys.couplings
    taus = _pass_taus(plan, t)
    forward = plan.order == "LO"
    order = list(range(n))
    passes = []
    perms = [tuple(order)]
    for p, tau in enumerate(taus):
        layers = nominal_layers(n)
        if not forward and p % 2 == 1:
            layers = layers[::-1]
        built = []
        for layer in layers:
            row = []
            for a, b in layer:
                i, j = order[a], order[b]
                row.append(Interaction((a, b), (i, j), tau, True))
                order[a], order[b] = order[b], order[a]
            built.append(row)
            perms.append(tuple(order))
        passes.append((tau, built))
    if plan.order == "NLOstar":
        _merge_boundaries(passes)
    plan.layers = [[(it.positions, it.logical, it.tau_sum * J[it.logical] + (ABSORBED if it.swaps and plan.absorb_swaps else 0.0), it.swaps)
                    for it in row] for _, rows in passes for row in rows if row]
    plan.permutations = perms
    return passes, order


def _merge_boundaries(passes):
    """Peephole: the last nominal layer of a pass and the first of the next act on the
    same pairs; fuse them into one gate carrying both time steps and no net swap."""
    for p in range(len(passes) - 1):
        last = passes[p][1][-1]
        first = passes[p + 1][1][0]
        if not last or not first:
            continue
        if [it.positions for it in last] != [it.positions for it in first]:
            continue
        for a, b in zip(last, first):
            a.tau_sum += b.tau_sum
            a.swaps = False  # SWAP . SWAP = 1
        passes[p + 1][1][0] = []


def _one_body(sys: NeutrinoSystem, tau: float, plan: TrotterPlan, n: int) -> list:
    mass_frame = sys.basis == "mass" or plan.frame == "mass"
    out = []
    if not plan.qubit:
        Dg = QutritGateSpec("Ph", (0.0, -sys.omega * tau, -sys.Omega * tau)).gate((0,), "onebody")
        pm = None if mass_frame else pmns_circuit(sys.mixing)
        for i in range(n):
            if pm is not None:
                out.extend(g.on((i,)) for g in pm.inverse().gates)
            out.append(Dg.on((i,)))
            if pm is not None:
                out.extend(g.on((i,)) for g in pm.gates)
        return out
    if mass_frame:
        a, b = rz(-sys.Omega * tau), rz(-sys.omega * tau)
        for i in range(n):
            out.append(Gate(a, (2 * i,), "rz", check=False))
            out.append(Gate(b, (2 * i + 1,), "rz", check=False))
        return out
    site = flavor_one_body_gates(sys, tau, (0, 1))  # same block on every neutrino
    for i in range(n):
        out.extend(g.on(tuple(2 * i + s for s in g.sites)) for g in site)
    return out


def _two_body(alpha: float, swaps: bool, pos, plan: TrotterPlan) -> list:
    a, b = pos
    if not plan.qubit:
        gates = two_body_local_gates(alpha + (ABSORBED if swaps and plan.absorb_swaps else 0.0), (a, b))
        for g in gates:
            if g.is_entangling:
                g.tag = "twobody"
        return gates
    wires = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1)
    return two_body_gates(alpha + (ABSORBED if swaps and plan.absorb_swaps else 0.0), plan.variant, wires)


def _explicit_swap(pos, plan: TrotterPlan) -> list:
    a, b = pos
    if not plan.qubit:
        return [Gate(qutrit_swap(), (a, b), "swap", True)]
    return [Gate(_QSWAP, (2 * a, 2 * b), "swap", True), Gate(_QSWAP, (2 * a + 1, 2 * b + 1), "swap", True)]


def build_evolution(sys: NeutrinoSystem, t: float, plan: TrotterPlan) -> Circuit:
    """Trotterised exp(-iHt).  metadata['final_order'][p] = logical neutrino at position p."""
    n = sys.n
    if n < 2:
        raise ValueError("Trotterised evolution needs N >= 2")
    shape = RegisterShape.qubits(2 * n) if plan.qubit else RegisterShape.qutrits(n)
    circ = Circuit(shape)
    J = sys.couplings
    passes, order = interaction_schedule(sys, t, plan)
    use_frame = plan.frame == "mass" and sys.basis == "flavor"
    if use_frame:
        circ.extend(_frame_change(sys, plan, n, inverse=True))
    for tau, layers in passes:
        circ.extend(_one_body(sys, tau, plan, n))
        for row in layers:
            for it in row:
                alpha = it.tau_sum * J[it.logical]
                circ.extend(_two_body(alpha, it.swaps, it.positions, plan))
                if it.swaps and not plan.absorb_swaps:
                    circ.extend(_explicit_swap(it.positions, plan))
    if use_frame:
        circ.extend(_frame_change(sys, plan, n, inverse=False))
    circ.metadata.update(final_order=tuple(order), order=plan.order, steps=plan.steps,
                         backend=plan.backend, identity=plan.identity, t=float(t))
    return circ


def _frame_change(sys, plan, n, inverse):
    if not plan.qubit:
        pm = pmns_circuit(sys.mixing)
        src = pm.inverse().gates if inverse else pm.gates
        return [g.on((i,)) for i in range(n) for g in src]
    out = []
    for i in range(n):
        out.extend(basis_change_gates(sys, (2 * i, 2 * i + 1), inverse=inverse, tag="basis"))
    return out


def identity_circuit(sys: NeutrinoSystem, t: float, plan: TrotterPlan) -> Circuit:
    """Same gate structure as build_evolution(sys, t, plan) but implementing the identity
    (up to the tracked neutrino permutation)."""
    p = TrotterPlan(plan.order, plan.steps, plan.backend, plan.absorb_swaps, plan.frame, identity=True)
    return build_evolution(sys, t, p)


def cx_count(plan: TrotterPlan | str, n: int, n_cx: int, steps: int | None = None) -> int:
    """Closed-form two-body entangling-gate count of a swap-network evolution."""
    order = plan.order if isinstance(plan, TrotterPlan) else str(plan)
    k = plan.steps if isinstance(plan, TrotterPlan) else int(steps)
    full = n_cx * k * n * (n - 1) // 2
    if order in ("LO", "NLO") or k == 1:
        return full
    return full - n_cx * (k // 2) * (-(-n // 2) - 1) - n_cx * ((k - 1) // 2) * (n // 2)


# ----------------------------------------------------------------- state plumbing

def initial_register_state(sys: NeutrinoSystem, backend: str) -> QuditState:
    """Flavour product state on the backend register (positions in logical order)."""
    if backend == "qutrit":
        return sys.initial_state()
    if sys.basis != "flavor":
        raise ValueError("qubit registers are prepared from flavour words in the flavour basis")
    digits = []
    for f in sys.initial_flavors:
        digits += [f >> 1, f & 1]
    return QuditState.basis(RegisterShape.qubits(2 * sys.n), digits)


def unit_probabilities(probs: np.ndarray, n: int, backend: str, final_order) -> np.ndarray:
    """Outcome tensor with one axis per logical neutrino (size 3 qutrit / 4 qubit-pair)."""
    d = 3 if backend == "qutrit" else 4
    t = np.asarray(probs).reshape((d,) * n)
    return t.transpose(np.argsort(final_order))


def logical_amplitudes(psi: np.ndarray, n: int, backend: str, final_order) -> np.ndarray:
    d = 3 if backend == "qutrit" else 4
    return np.asarray(psi).reshape((d,) * n).transpose(np.argsort(final_order)).reshape(-1)
