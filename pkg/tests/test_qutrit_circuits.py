import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from nuflavor.hamiltonian import (REFERENCE_MIXING, MixingParameters, NeutrinoSystem, lambda_dot_lambda, one_body_h,
                                  pmns_matrix)
from nuflavor.qutrit_circuits import (QutritGateSpec, cx, cx_dagger, cx_printed, cz, hadamard3,
                                      one_body_step_qutrit, ph, phase_distance, pmns_circuit, ry01, ry02,
                                      ry12, rz01, rz02, rz12, two_body_gate_qutrit, x12)

ONE_SITE = [x12, ry01, ry12, ry02, rz01, rz12, rz02]


def is_unitary(m, tol=1e-12):
    return np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= tol


@given(st.floats(-10, 10), st.sampled_from(ONE_SITE))
def test_single_qutrit_gates_unitary(a, f):
    assert is_unitary(f(a))


def test_fixed_gates_unitary_and_related():
    for m in (cx(), cx_dagger(), cx_printed(), cz(), hadamard3(), ph(0.1, 0.2, 0.3)):
        assert is_unitary(m)
    assert np.allclose(cx_dagger(), cx().conj().T, atol=0)
    # the drawn controlled shift is the inverse shift
    assert np.allclose(cx_printed(), cx_dagger(), atol=0)
    # CZ from the tabulated controlled shift; with cx() itself the Hadamard sides swap
    one_h = np.kron(np.eye(3), hadamard3())
    assert np.max(np.abs(one_h.conj().T @ cx_printed() @ one_h - cz())) <= 1e-12
    assert np.max(np.abs(one_h @ cx() @ one_h.conj().T - cz())) <= 1e-12


def test_ph_gate():
    assert np.allclose(ph(0.0, -0.3, -1.1), np.diag(np.exp([0, -0.3j, -1.1j])), atol=1e-15)


def test_gate_spec_validation():
    assert QutritGateSpec("CX").n_sites == 2
    assert np.allclose(QutritGateSpec("X12", (0.4,)).matrix(), x12(0.4))
    with pytest.raises(ValueError):
        QutritGateSpec("Ph", (1.0,))
    with pytest.raises(ValueError):
        QutritGateSpec("Toffoli")


def test_one_body_step():
    sys = NeutrinoSystem(1, basis="mass")
    assert np.allclose(one_body_step_qutrit(sys, 0.0).unitary(), np.eye(3), atol=1e-15)
    U = one_body_step_qutrit(sys, 1.0).unitary()
    assert np.allclose(U, np.diag([1, np.exp(-1j * sys.omega), np.exp(-1j * sys.Omega)]), atol=1e-15)
    for basis in ("mass", "flavor"):
        s2 = NeutrinoSystem(2, basis=basis)
        U = one_body_step_qutrit(s2, 2.7).unitary()
        assert np.max(np.abs(U - expm(-2.7j * one_body_h(s2).dense()))) <= 1e-12


def test_pmns_circuit():
    trivial = pmns_circuit(MixingParameters(0.0, 0.0, 0.0, np.pi))
    assert phase_distance(trivial.unitary(), np.eye(3)) <= 1e-12
    c = pmns_circuit(REFERENCE_MIXING)
    assert c.metadata["residual"] <= 1e-10
    assert phase_distance(c.unitary(), pmns_matrix(REFERENCE_MIXING)) <= 1e-10
    assert is_unitary(c.unitary())


@given(st.floats(0, np.pi / 2), st.floats(0, np.pi / 2), st.floats(0, np.pi / 2), st.floats(0, 2 * np.pi))
def test_pmns_circuit_any_mixing(t12, t13, t23, d):
    m = MixingParameters(t12, t13, t23, d)
    assert phase_distance(pmns_circuit(m).unitary(), pmns_matrix(m)) <= 1e-10


def test_two_body_gate():
    assert phase_distance(two_body_gate_qutrit(0.2, 0.0).unitary(), np.eye(9)) <= 1e-12
    c = two_body_gate_qutrit(1.0, np.pi / 8)
    assert phase_distance(c.unitary(), expm(-1j * np.pi / 8 * lambda_dot_lambda())) <= 1e-10
    assert c.entangling_count() == 4
    kinds = sorted(g.tag for g in c.gates if g.is_entangling)
    assert len(kinds) == 4


@given(st.floats(-3, 3), st.floats(0, 20))
def test_two_body_gate_any_angle(J, t):
    c = two_body_gate_qutrit(J, t)
    assert phase_distance(c.unitary(), expm(-1j * J * t * lambda_dot_lambda())) <= 1e-10


def test_two_body_on_larger_register():
    c = two_body_gate_qutrit(0.3, 1.0, sites=(2, 0), n_sites=3)
    assert c.shape.n_sites == 3
    U = c.unitary().reshape([3] * 6)
    # the middle site is untouched
    target = expm(-0.3j * lambda_dot_lambda()).reshape(3, 3, 3, 3)
    full = np.einsum("acbd,ef->aecbfd", target, np.eye(3)).reshape(27, 27)
    # sites (2, 0): apply target with first factor on site 2
    P = np.eye(27).reshape([3] * 3 + [27]).transpose(2, 1, 0, 3).reshape(27, 27)
    assert phase_distance(U.reshape(27, 27), P @ full @ P.T) <= 1e-10
