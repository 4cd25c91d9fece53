"""Two-qubit unitary synthesis with exactly three CNOTs (canonical KAK form).

U = (a1 (x) b1) . exp(i(c1 XX + c2 YY + c3 ZZ)) . (a2 (x) b2) up to phase,
obtained from the magic-basis eigen-decomposition of U_B^T U_B, and the
canonical factor is realised by a fixed three-CNOT template.
Qubit 0 is the most significant bit of the 4x4 matrix.
"""
from __future__ import annotations

import numpy as np

MAGIC = np.array([[1, 0, 0, 1j],
                  [0, 1j, 1, 0],
                  [0, 1j, -1, 0],
                  [1, 0, 0, -1j]], dtype=complex) / np.sqrt(2)

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)
XX, YY, ZZ = np.kron(_X, _X), np.kron(_Y, _Y), np.kron(_Z, _Z)

CNOT01 = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CNOT10 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)


def rz(t):
    e = np.exp(-0.5j * t)
    return np.array([[e, 0], [0, e.conjugate()]])


def ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def canonical(c) -> np.ndarray:
    """exp(i(c1 XX + c2 YY + c3 ZZ)); the three terms commute."""
    out = np.eye(4, dtype=complex)
    for ci, P in zip(c, (XX, YY, ZZ)):
        out = out @ (np.cos(ci) * np.eye(4) + 1j * np.sin(ci) * P)
    return out


def canonical_template(c) -> list:
    """Gate list [(matrix, qubits)] in time order realising canonical(c) up to phase."""
    c1, c2, c3 = c
    return [
        (rz(np.pi / 2), (1,)),
        (CNOT10, (0, 1)),
        (rz(-np.pi / 2 - 2 * c3), (0,)),
        (ry(-np.pi / 2 - 2 * c1), (1,)),
        (CNOT01, (0, 1)),
        (ry(np.pi / 2 + 2 * c2), (1,)),
        (CNOT10, (0, 1)),
        (rz(-np.pi / 2), (0,)),
    ]


def _as_4x4(m, qubits):
    if len(qubits) == 2:
        return m
    return np.kron(m, np.eye(2)) if qubits == (0,) else np.kron(np.eye(2), m)


def template_unitary(gates) -> np.ndarray:
    U = np.eye(4, dtype=complex)
    for m, q in gates:
        U = _as_4x4(m, q) @ U
    return U


def split_local(L: np.ndarray):
    """Factor L = a (x) b (2x2 each) by a rank-one SVD of the realigned matrix."""
    R = L.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(R)
    if s[1] > 1e-7 * s[0]:
        raise ValueError("matrix is not a tensor product of single-qubit gates")
    a = u[:, 0].reshape(2, 2) * np.sqrt(s[0])
    b = vh[0].reshape(2, 2) * np.sqrt(s[0])
    # balance so both factors are unitary
    na = np.sqrt(abs(np.linalg.det(a)))
    return a / na, b * na


def _real_orthogonal_eig(M: np.ndarray):
    """Diagonalise a complex symmetric unitary with a real orthogonal P: M = P D P^T."""
    A, Bm = M.real, M.imag
    rng = np.random.default_rng(1234)
    for _ in range(20):
        r = rng.uniform(0.5, 2.0)
        _, P = np.linalg.eigh(A + r * Bm)
        D = P.T @ M @ P
        if np.max(np.abs(D - np.diag(np.diag(D)))) < 1e-10:
            if np.linalg.det(P) < 0:
                P[:, 0] *= -1
            return P, np.diag(D)
    raise np.linalg.LinAlgError("simultaneous diagonalisation failed")


def kak(U: np.ndarray):
    """Return (A1, c, A2, phase) with U = e^{i phase} A1 . canonical(c) . A2, A1/A2 local."""
    U = np.asarray(U, dtype=complex)
    det = np.linalg.det(U)
    ph0 = np.angle(det) / 4
    Us = U * np.exp(-1j * ph0)
    Up = MAGIC.conj().T @ Us @ MAGIC
    P, d = _real_orthogonal_eig(Up.T @ Up)
    theta = np.angle(d) / 2
    K1 = Up @ P @ np.diag(np.exp(-1j * theta))
    if np.linalg.det(K1.real) < 0:
        theta[0] += np.pi
        K1 = Up @ P @ np.diag(np.exp(-1j * theta))
    K2 = P.T
    # eigenvalues of XX, YY, ZZ on the magic columns fix the linear map theta -> c
    basis = np.stack([np.real(np.diag(MAGIC.conj().T @ O @ MAGIC)) for O in (XX, YY, ZZ)], axis=1)
    sol = np.linalg.solve(np.hstack([basis, np.ones((4, 1))]), theta)
    c, extra = sol[:3], sol[3]
    A1 = MAGIC @ K1.real @ MAGIC.conj().T
    A2 = MAGIC @ K2 @ MAGIC.conj().T
    return A1, c, A2, ph0 + extra


def synthesize(U: np.ndarray, tol: float = 1e-9) -> list:
    """Three-CNOT gate list [(matrix, qubits)] in time order equal to U up to phase."""
    A1, c, A2, _ = kak(U)
    a1, b1 = split_local(A1)
    a2, b2 = split_local(A2)
    gates = [(a2, (0,)), (b2, (1,))] + canonical_template(c) + [(a1, (0,)), (b1, (1,))]
    gates = _merge_single(gates)
    V = template_unitary(gates)
    ov = np.vdot(V, U)
    err = np.max(np.abs(U - ov / abs(ov) * V))
    if err > tol:
        raise RuntimeError(f"two-qubit synthesis failed (error {err:.2e})")
    return gates


def _merge_single(gates: list) -> list:
    """Fuse runs of single-qubit gates on the same wire."""
    out = []
    pending = {0: None, 1: None}

    def flush(q):
        if pending[q] is not None:
            out.append((pending[q], (q,)))
            pending[q] = None

    for m, q in gates:
        if len(q) == 1:
            p = pending[q[0]]
            pending[q[0]] = m if p is None else m @ p
        else:
            flush(0)
            flush(1)
            out.append((m, q))
    flush(0)
    flush(1)
    return out
