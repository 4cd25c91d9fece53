"""Partial state tomography in the Gell-Mann basis, physical projection, fidelity and entropy.

One neutrino needs 7 basis changes (the identity serves lambda_3, lambda_8 and
lambda_9 = 1); n neutrinos need all 7^n combinations.  Each basis change is a
4x4 unitary on the qubit pair (block-diagonal, |11> untouched), or its upper
3x3 block on a qutrit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import GELL_MANN
from .mitigation import project_to_simplex
from .qudit import Circuit, DensityMatrix, Gate, RegisterShape, partial_trace

_R = 1 / np.sqrt(2)
_S2 = np.sqrt(2)

# basis-change operators, keyed by pool index 1..7 (3 is the identity)
POOL = {
    1: _R * np.array([[1, 1, 0, 0], [1, -1, 0, 0], [0, 0, _S2, 0], [0, 0, 0, _S2]], dtype=complex),
    2: _R * np.array([[1, -1j, 0, 0], [1, 1j, 0, 0], [0, 0, _S2, 0], [0, 0, 0, _S2]], dtype=complex),
    3: np.eye(4, dtype=complex),
    4: _R * np.array([[1, 0, 1, 0], [0, _S2, 0, 0], [1, 0, -1, 0], [0, 0, 0, _S2]], dtype=complex),
    5: _R * np.array([[1, 0, -1j, 0], [0, _S2, 0, 0], [1, 0, 1j, 0], [0, 0, 0, _S2]], dtype=complex),
    6: _R * np.array([[_S2, 0, 0, 0], [0, 1, 1, 0], [0, 1, -1, 0], [0, 0, 0, _S2]], dtype=complex),
    7: _R * np.array([[_S2, 0, 0, 0], [0, 1, -1j, 0], [0, 1, 1j, 0], [0, 0, 0, _S2]], dtype=complex),
}

# which pool operator measures lambda_i (i = 1..9)
SETTING_OF = {1: 1, 2: 2, 3: 3, 4: 4, 5: 5, 6: 6, 7: 7, 8: 3, 9: 3}

# c_i = f_i . (P00, P01, P10)
COEFFS = {
    1: np.array([1, -1, 0]) / 2, 2: np.array([1, -1, 0]) / 2, 3: np.array([1, -1, 0]) / 2,
    4: np.array([1, 0, -1]) / 2, 5: np.array([1, 0, -1]) / 2,
    6: np.array([0, 1, -1]) / 2, 7: np.array([0, 1, -1]) / 2,
    8: np.array([1, 1, -2]) / (2 * np.sqrt(3)),
    9: np.array([1, 1, 1]) / 3,
}


def reconstruction_basis() -> dict:
    """lambda_1..8 as measured by the pool, plus lambda_9 = 1.

    The pool's second operator measures the conventional lambda_2 (imaginary
    parts -i above the diagonal), which is minus the matrix stored in GELL_MANN.
    """
    basis = {i + 1: GELL_MANN[i].copy() for i in range(8)}
    basis[2] = -basis[2]
    basis[9] = np.eye(3, dtype=complex)
    return basis


def pool_operator(index: int, d: int = 4) -> np.ndarray:
    if index not in POOL:
        raise ValueError(f"pool index must be in 1..7, got {index}")
    return POOL[index] if d == 4 else POOL[index][:3, :3].copy()


@dataclass
class TomographySetting:
    indices: tuple                   # pool index per neutrino (logical order)
    probabilities: np.ndarray | None = None  # outcome table, one axis of size 3 or 4 per neutrino

    def unitary(self, d: int = 4) -> np.ndarray:
        U = np.array([[1.0 + 0j]])
        for i in self.indices:
            U = np.kron(U, pool_operator(i, d))
        return U

    def gates(self, backend: str, order=None) -> list:
        """Basis-change gates appended to an evolution circuit; order maps logical -> position."""
        n = len(self.indices)
        pos = list(range(n)) if order is None else [list(order).index(i) for i in range(n)]
        out = []
        for logical, idx in enumerate(self.indices):
            if idx == 3:
                continue
            p = pos[logical]
            if backend == "qutrit":
                out.append(Gate(pool_operator(idx, 3), (p,), f"tomo{idx}"))
            else:
                out.append(Gate(pool_operator(idx, 4), (2 * p, 2 * p + 1), f"tomo{idx}", is_entangling=False))
        return out


def tomography_settings(n_neutrinos: int) -> list:
    if n_neutrinos < 1:
        raise ValueError("need at least one neutrino")
    return [TomographySetting(tuple(c)) for c in itertools.product(range(1, 8), repeat=n_neutrinos)]


def measurement_circuit(evolution: Circuit, setting: TomographySetting, backend: str) -> Circuit:
    c = evolution.copy()
    c.extend(setting.gates(backend, evolution.metadata.get("final_order")))
    return c


def analytic_probabilities(amplitudes: np.ndarray, setting: TomographySetting, d: int = 4) -> np.ndarray:
    """Outcome table of a logical-order pure state after the setting's basis change."""
    n = len(setting.indices)
    psi = np.asarray(amplitudes, dtype=complex)
    if psi.size == 3 ** n and d == 4:
        emb = np.zeros((4,) * n, dtype=complex)
        emb[(slice(0, 3),) * n] = psi.reshape((3,) * n)
        psi = emb.reshape(-1)
    p = np.abs(setting.unitary(d) @ psi) ** 2
    return p.reshape((d,) * n)


def reconstruct_rho(settings, n_neutrinos: int) -> np.ndarray:
    """rho_raw = sum c_{i1..in} lambda_i1 (x) ... (x) lambda_in from measured outcome tables."""
    table = {s.indices: s for s in settings}
    basis = reconstruction_basis()
    D = 3 ** n_neutrinos
    rho = np.zeros((D, D), dtype=complex)
    for lam in itertools.product(range(1, 10), repeat=n_neutrinos):
        key = tuple(SETTING_OF[i] for i in lam)
        if key not in table or table[key].probabilities is None:
            raise ValueError(f"missing tomography setting {key}")
        P = np.asarray(table[key].probabilities, dtype=float)
        P = P[(slice(0, 3),) * n_neutrinos]  # the 11 outcome never enters
        c = P
        for i in reversed(lam):
            c = c @ COEFFS[i]  # contract the last outcome axis with f_i
        op = np.array([[1.0 + 0j]])
        for i in lam:
            op = np.kron(op, basis[i])
        rho += float(c) * op
    return rho


def closest_physical(rho_raw: np.ndarray) -> np.ndarray:
    """Keep the eigenvectors, project the eigenvalue vector onto the probability simplex."""
    h = 0.5 * (rho_raw + rho_raw.conj().T)
    w, V = np.linalg.eigh(h)
    w = project_to_simplex(w)
    return (V * w) @ V.conj().T


def pure_state(rho: np.ndarray) -> np.ndarray:
    """Dominant eigenvector of a Hermitian matrix."""
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return V[:, -1]


def _check_psd(rho, tol=1e-10, what="density matrix"):
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < -tol:
        raise ValueError(f"{what} has a negative eigenvalue {w.min():.2e}")
    return np.clip(w, 0.0, None)


EIG_FLOOR = 1e-14  # relative; round-off eigenvalues below it are zeroed before square roots


def _floor(w):
    w = np.clip(w, 0.0, None)
    return np.where(w > EIG_FLOOR * max(w.max(), 1.0), w, 0.0)


def _sqrtm_psd(m):
    w, V = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (V * np.sqrt(_floor(w))) @ V.conj().T


def fidelity(rho: np.ndarray, zeta: np.ndarray) -> float:
    """(Tr sqrt(sqrt(zeta) rho sqrt(zeta)))^2."""
    _check_psd(rho)
    _check_psd(zeta)
    s = _sqrtm_psd(zeta)
    m = s @ rho @ s
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.sum(np.sqrt(_floor(w))) ** 2)


def entropy(rho: np.ndarray) -> float:
    """von Neumann entropy with the natural log."""
    w = _check_psd(rho)
    w = w[w > 0]
    return float(-np.sum(w * np.log(w))) + 0.0  # no negative zero


def reduced(rho: np.ndarray, keep, n_neutrinos: int) -> np.ndarray:
    dm = DensityMatrix(RegisterShape.qutrits(n_neutrinos), rho)
    return partial_trace(dm, keep).elements


@dataclass
class ReconstructedState:
    rho_raw: np.ndarray
    rho_physical: np.ndarray
    rho_pure: np.ndarray
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_settings(cls, settings, n_neutrinos: int, **meta) -> "ReconstructedState":
        raw = reconstruct_rho(settings, n_neutrinos)
        phys = closest_physical(raw)
        v = pure_state(phys)
        meta.setdefault("settings", len(settings))
        meta["hermiticity_defect"] = float(np.max(np.abs(raw - raw.conj().T)))
        return cls(raw, phys, np.outer(v, v.conj()), meta)
