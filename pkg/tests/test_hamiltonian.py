from functools import reduce

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from nuflavor.hamiltonian import (GELL_MANN, REFERENCE_MIXING, MixingParameters, NeutrinoSystem, cone_angles,
                                  exact_evolve, flavor_probabilities, gell_mann, lambda_dot_lambda,
                                  one_body_h, parse_flavors, persistence, pmns_matrix, propagator,
                                  qutrit_swap, total_h, two_body_h, two_body_h_gell_mann)
from nuflavor.qudit import QuditState, RegisterShape


def test_gell_mann_as_printed():
    assert np.array_equal(gell_mann(3), np.diag([1, -1, 0]).astype(complex))
    # the second generator carries the printed sign: +i above the diagonal
    assert gell_mann(2)[0, 1] == 1j
    with pytest.raises(ValueError):
        gell_mann(9)
    for a in range(8):
        for b in range(8):
            assert np.trace(GELL_MANN[a] @ GELL_MANN[b]) == pytest.approx(2.0 * (a == b), abs=1e-14)


def test_lambda_dot_lambda_spectrum():
    w = np.sort(np.linalg.eigvalsh(lambda_dot_lambda()))
    assert np.allclose(w[:3], -8 / 3, atol=1e-13)
    assert np.allclose(w[3:], 4 / 3, atol=1e-13)
    assert np.allclose(lambda_dot_lambda(), 2 * qutrit_swap() - 2 / 3 * np.eye(9), atol=1e-14)


def test_swap_absorption_identity():
    U = expm(-1j * np.pi / 4 * lambda_dot_lambda())
    assert np.max(np.abs(U - np.exp(-1j * np.pi / 3) * qutrit_swap())) <= 1e-12


def test_pmns_examples():
    zero = MixingParameters(0.0, 0.0, 0.0, 0.0)
    assert np.allclose(pmns_matrix(zero), np.eye(3), atol=1e-15)
    rot = pmns_matrix(MixingParameters(np.pi / 4, 0.0, 0.0, 0.0))
    c = np.sqrt(0.5)
    assert np.allclose(rot, [[c, c, 0], [-c, c, 0], [0, 0, 1]], atol=1e-15)
    U = pmns_matrix(REFERENCE_MIXING)
    assert abs(U[0, 2]) == pytest.approx(np.sin(np.deg2rad(8.58)), abs=1e-15)
    assert abs(U[0, 2]) == pytest.approx(0.1492, abs=1e-4)
    assert np.max(np.abs(U.conj().T @ U - np.eye(3))) <= 1e-12


@given(st.floats(0, np.pi), st.floats(0, np.pi), st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_pmns_unitary(t12, t13, t23, d):
    U = pmns_matrix(MixingParameters(t12, t13, t23, d))
    assert np.max(np.abs(U.conj().T @ U - np.eye(3))) <= 1e-12


def test_couplings_and_cone():
    sys2 = NeutrinoSystem(2)
    assert sys2.couplings[0, 1] == pytest.approx(0.05, abs=1e-15)
    assert cone_angles(4)[0, 1] == pytest.approx(0.150342, abs=5e-7)
    assert REFERENCE_MIXING.ratio == pytest.approx(0.0295808, abs=5e-8)
    assert sys2.Omega == 0.5 and sys2.omega == pytest.approx(0.5 * REFERENCE_MIXING.ratio)


def test_one_body_forms():
    sys = NeutrinoSystem(1, basis="mass")
    H = one_body_h(sys).dense()
    assert np.allclose(H, np.diag([0, sys.omega, sys.Omega]), atol=1e-15)
    flav = one_body_h(NeutrinoSystem(1, basis="flavor")).dense()
    assert np.allclose(np.linalg.eigvalsh(flav), [0, sys.omega, sys.Omega], atol=1e-14)
    # Gell-Mann form equals the diagonal up to an identity shift
    gm = -sys.omega / 2 * gell_mann(3) + (sys.omega - 2 * sys.Omega) / (2 * np.sqrt(3)) * gell_mann(8)
    shift = np.diag(H - gm)
    assert np.allclose(shift, shift[0], atol=1e-14)


def test_two_body_properties():
    sys = NeutrinoSystem(3, initial_flavors="e mu tau")
    H2 = two_body_h(sys).dense()
    assert np.allclose(H2, two_body_h_gell_mann(sys), atol=1e-13)
    assert np.allclose(H2, two_body_h(sys.with_basis("mass")).dense(), atol=1e-15)
    U = pmns_matrix()
    UU = np.kron(np.kron(U, U), U)
    assert np.max(np.abs(UU @ H2 @ UU.conj().T - H2)) <= 1e-10
    with pytest.raises(ValueError):
        two_body_h(NeutrinoSystem(1))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_one_and_two_body_commute(n):
    sys = NeutrinoSystem(n)
    H1, H2 = one_body_h(sys).dense(), two_body_h(sys).dense()
    assert np.max(np.abs(H1 @ H2 - H2 @ H1)) <= 1e-10


def site_op(op, i, n):
    return reduce(np.kron, [op if k == i else np.eye(3) for k in range(n)])


def test_two_body_conserves_total_flavour_content():
    sys = NeutrinoSystem(3, initial_flavors="e mu tau")
    H2 = two_body_h(sys).dense()
    psi0 = sys.initial_state().amplitudes
    psi = expm(-1j * 2.3 * H2) @ psi0
    for lam in (gell_mann(3), gell_mann(8)):
        tot = sum(site_op(lam, i, 3) for i in range(3))
        assert np.vdot(psi, tot @ psi).real == pytest.approx(np.vdot(psi0, tot @ psi0).real, abs=1e-10)


def test_exact_evolution_basics():
    sys = NeutrinoSystem(3, initial_flavors="e mu tau")
    psi0 = sys.initial_state()
    assert np.allclose(exact_evolve(sys, psi0, 0.0).amplitudes, psi0.amplitudes, atol=1e-14)
    assert persistence(psi0, exact_evolve(sys, psi0, 0.0)) == pytest.approx(1.0, abs=1e-14)
    a = exact_evolve(sys, exact_evolve(sys, psi0, 1.3), 2.1).amplitudes
    b = exact_evolve(sys, psi0, 3.4).amplitudes
    assert np.max(np.abs(a - b)) <= 1e-10
    Hd = total_h(sys).dense()
    assert np.max(np.abs(propagator(sys).unitary(0.7) - expm(-0.7j * Hd))) <= 1e-10


def test_single_neutrino_vacuum_survival():
    sys = NeutrinoSystem(1, initial_flavors="e")
    U = pmns_matrix()
    for t in (0.5, 3.0, 11.0):
        P = flavor_probabilities(sys, exact_evolve(sys, sys.initial_state(), t))[0]
        amp = U @ np.diag(np.exp(-1j * t * sys.site_energies())) @ U.conj().T
        assert P[0] == pytest.approx(abs(amp[0, 0]) ** 2, abs=1e-12)
        assert np.allclose(P, np.abs(amp[:, 0]) ** 2, atol=1e-12)


@given(st.floats(0, 30), st.sampled_from(["e mu e tau", "tau tau mu e", "mu e e mu"]))
def test_probabilities_are_distributions(t, word):
    sys = NeutrinoSystem(4, initial_flavors=word)
    P = flavor_probabilities(sys, exact_evolve(sys, sys.initial_state(), t))
    assert np.all(P >= -1e-12) and np.all(P <= 1 + 1e-12)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_flavour_parsing():
    assert parse_flavors("e mu tau") == (0, 1, 2)
    assert parse_flavors(["τ", "μ"]) == (2, 1)
    with pytest.raises(ValueError):
        parse_flavors("e x")
    with pytest.raises(ValueError):
        NeutrinoSystem(2, initial_flavors="e")


def test_mass_basis_state_matches_flavour_basis():
    f = NeutrinoSystem(2, initial_flavors="e mu")
    m = f.with_basis("mass")
    pf = flavor_probabilities(f, exact_evolve(f, f.initial_state(), 4.0))
    pm = flavor_probabilities(m, exact_evolve(m, m.initial_state(), 4.0))
    assert np.allclose(pf, pm, atol=1e-12)
    assert isinstance(m.initial_state(), QuditState) and m.shape == RegisterShape.qutrits(2)
