import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nuflavor.hamiltonian import NeutrinoSystem, exact_evolve, parse_flavors, propagator
from nuflavor.qubit_circuits import physical_indices
from nuflavor.qudit import apply_circuit, probabilities
from nuflavor.qutrit_circuits import phase_distance
from nuflavor.trotter import (BACKENDS, N_CX, TrotterPlan, build_evolution, cx_count, identity_circuit,
                              initial_register_state, logical_amplitudes, pass_final_order,
                              swap_network_schedule, unit_probabilities)

SYS4 = NeutrinoSystem(4, initial_flavors=parse_flavors("e mu e tau"))


def infidelity(sys, t, plan):
    c = build_evolution(sys, t, plan)
    out = apply_circuit(initial_register_state(sys, plan.backend), c).amplitudes
    amp = logical_amplitudes(out, sys.n, plan.backend, c.metadata["final_order"])
    if plan.backend != "qutrit":
        amp = amp[physical_indices(sys.n)]
    ex = exact_evolve(sys, sys.initial_state(), t).amplitudes
    return 1.0 - abs(np.vdot(ex, amp)) ** 2


def test_schedule_small():
    s = swap_network_schedule(2)
    assert len(s) == 1 and s[0][0]["pair"] == (0, 1)
    s4 = swap_network_schedule(4)
    assert len(s4) == 4
    pairs = [it["pair"] for row in s4 for it in row]
    assert len(pairs) == 6 and len(set(pairs)) == 6
    assert all(it["absorbed_swap"] for row in s4 for it in row)
    assert list(pass_final_order(4)) == [3, 2, 1, 0]
    with pytest.raises(ValueError):
        swap_network_schedule(1)


@pytest.mark.parametrize("n", [3, 5, 8])
def test_schedule_meets_every_pair_once(n):
    pairs = [it["pair"] for row in swap_network_schedule(n) for it in row]
    assert sorted(pairs) == sorted(itertools.combinations(range(n), 2))
    assert list(pass_final_order(n)) == list(range(n))[::-1]


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k", [1, 3])
def test_two_neutrinos_have_no_trotter_error(backend, k):
    sys = NeutrinoSystem(2, initial_flavors="e mu")
    for t in (0.5, 7.0):
        assert infidelity(sys, t, TrotterPlan("LO", k, backend)) <= 1e-10


def test_nlo_star_k1_equals_nlo():
    a = build_evolution(SYS4, 1.0, TrotterPlan("NLO", 1, "qutrit")).unitary()
    b = build_evolution(SYS4, 1.0, TrotterPlan("NLOstar", 1, "qutrit")).unitary()
    assert phase_distance(a, b) <= 1e-12


def test_nlo_converges_faster_than_lo():
    lo = [infidelity(SYS4, 1.0, TrotterPlan("LO", k, "qutrit")) for k in (1, 2, 4)]
    nlo = [infidelity(SYS4, 1.0, TrotterPlan("NLO", k, "qutrit")) for k in (2, 4, 8)]
    assert lo[0] > lo[1] > lo[2]
    # infidelity ~ error^2, so doubling k divides it by about 16 at second order
    ratios = np.array(nlo[:-1]) / np.array(nlo[1:])
    assert np.all((ratios > 10) & (ratios < 25))


def test_convergence_regression_guards():
    assert infidelity(SYS4, 1.0, TrotterPlan("LO", 32, "qutrit")) < 1e-3
    assert infidelity(SYS4, 1.0, TrotterPlan("NLO", 32, "qutrit")) < 1e-5


def test_cx_count_examples():
    assert cx_count("LO", 4, 4, 2) == 48
    assert cx_count("NLOstar", 4, 4, 2) == 44
    assert cx_count("NLOstar", 8, 18, 3) == 1386
    assert cx_count("NLOstar", 6, 4, 1) == cx_count("NLO", 6, 4, 1)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("order", ["LO", "NLO", "NLOstar"])
def test_built_counts_match_formula(backend, order):
    for n in (2, 4, 5):
        for k in (1, 2, 3):
            plan = TrotterPlan(order, k, backend)
            c = build_evolution(NeutrinoSystem(n), 0.9, plan)
            assert c.entangling_count("twobody") == cx_count(plan, n, N_CX[backend])


@pytest.mark.parametrize("backend", ["qutrit", "qubit-B"])
def test_swap_absorption_equivalence(backend):
    for order, k in (("LO", 1), ("NLO", 2), ("NLOstar", 3)):
        a = build_evolution(SYS4, 0.8, TrotterPlan(order, k, backend, absorb_swaps=True))
        b = build_evolution(SYS4, 0.8, TrotterPlan(order, k, backend, absorb_swaps=False))
        assert a.metadata["final_order"] == b.metadata["final_order"]
        Ua, Ub = a.unitary(), b.unitary()
        if backend != "qutrit":
            p = physical_indices(4)
            Ua, Ub = Ua[np.ix_(p, p)], Ub[np.ix_(p, p)]
        assert phase_distance(Ua, Ub) <= 1e-10


def test_one_and_two_body_order_irrelevant():
    """Mass-frame one-body factors commute with the two-body layers."""
    sys = NeutrinoSystem(3, basis="mass")
    plan = TrotterPlan("LO", 1, "qutrit")
    c = build_evolution(sys, 1.3, plan)
    ob = [g for g in c.gates if g.tag == "onebody"]
    rest = [g for g in c.gates if g.tag != "onebody"]
    swapped = c.copy()
    swapped.gates = rest + ob
    assert phase_distance(swapped.unitary(), c.unitary()) <= 1e-10


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("order,k", [("LO", 1), ("LO", 2), ("NLO", 2), ("NLO", 3), ("NLOstar", 3)])
def test_identity_circuit(backend, order, k):
    sys = NeutrinoSystem(3, initial_flavors="e mu tau")
    plan = TrotterPlan(order, k, backend)
    ev, ic = build_evolution(sys, 2.0, plan), identity_circuit(sys, 2.0, plan)
    assert ic.entangling_count() == ev.entangling_count()
    assert ic.metadata["final_order"] == ev.metadata["final_order"]
    rec = probabilities(apply_circuit(initial_register_state(sys, backend), ic))
    P = unit_probabilities(rec.probabilities, 3, backend, ic.metadata["final_order"])
    assert P[0, 1, 2] == pytest.approx(1.0, abs=1e-10)


@given(st.sampled_from(["LO", "NLO", "NLOstar"]), st.integers(1, 4), st.floats(0.1, 3.0))
def test_final_order_tracks_permutation(order, k, t):
    plan = TrotterPlan(order, k, "qutrit")
    assert infidelity(NeutrinoSystem(3, initial_flavors="tau e mu"), t, plan) <= 0.2
    c = build_evolution(NeutrinoSystem(3), t, plan)
    assert sorted(c.metadata["final_order"]) == [0, 1, 2]


def test_mass_frame_matches_flavour_frame():
    a = build_evolution(SYS4, 1.0, TrotterPlan("LO", 2, "qubit-B"))
    b = build_evolution(SYS4, 1.0, TrotterPlan("LO", 2, "qubit-B", frame="mass"))
    p = physical_indices(4)
    assert phase_distance(a.unitary()[np.ix_(p, p)], b.unitary()[np.ix_(p, p)]) <= 1e-9


def test_plan_validation():
    with pytest.raises(ValueError):
        TrotterPlan("N3LO", 1, "qutrit")
    with pytest.raises(ValueError):
        TrotterPlan("LO", 0, "qutrit")
    with pytest.raises(ValueError):
        TrotterPlan("LO", 1, "ququart")
    with pytest.raises(ValueError):
        build_evolution(NeutrinoSystem(1), 1.0, TrotterPlan("LO", 1, "qutrit"))


def test_exact_propagator_cache_consistent():
    U = propagator(SYS4).unitary(1.0)
    assert np.max(np.abs(U.conj().T @ U - np.eye(81))) <= 1e-12
