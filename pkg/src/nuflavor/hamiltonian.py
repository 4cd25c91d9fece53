"""Three-flavour collective-oscillation Hamiltonian and its exact propagator.

Conventions
-----------
* Flavour index: e=0, mu=1, tau=2.  Mass index: 1, 2, 3 -> 0, 1, 2.
* A single-neutrino flavour amplitude vector is ``U @ mass_amplitudes``.
* Time is measured in units of 1/mu with mu = 1 by default.
* ``gell_mann(2)`` is the negative of the textbook lambda_2.  Nothing built
  here depends on that sign: lambda.lambda, lambda_3, lambda_8 and all
  probabilities are invariant under lambda_2 -> -lambda_2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .qudit import QuditState, RegisterShape

FLAVORS = ("e", "mu", "tau")
_FLAVOR_ALIASES = {"e": 0, "mu": 1, "μ": 1, "m": 1, "tau": 2, "τ": 2, "t": 2}

_S3 = np.sqrt(1.0 / 3.0)
GELL_MANN = np.array([
    [[0, 1, 0], [1, 0, 0], [0, 0, 0]],
    [[0, 1j, 0], [-1j, 0, 0], [0, 0, 0]],
    [[1, 0, 0], [0, -1, 0], [0, 0, 0]],
    [[0, 0, 1], [0, 0, 0], [1, 0, 0]],
    [[0, 0, -1j], [0, 0, 0], [1j, 0, 0]],
    [[0, 0, 0], [0, 0, 1], [0, 1, 0]],
    [[0, 0, 0], [0, 0, -1j], [0, 1j, 0]],
    [[_S3, 0, 0], [0, _S3, 0], [0, 0, -2 * _S3]],
], dtype=complex)


def gell_mann(index: int) -> np.ndarray:
    """Gell-Mann matrix lambda_index, index in 1..8 (lambda_2 sign as noted above)."""
    if not 1 <= int(index) <= 8:
        raise ValueError(f"Gell-Mann index must be in 1..8, got {index}")
    return GELL_MANN[int(index) - 1].copy()


def lambda_dot_lambda() -> np.ndarray:
    """9x9 matrix sum_a lambda_a (x) lambda_a (= 2 SWAP - 2/3 I)."""
    return sum(np.kron(l, l) for l in GELL_MANN)


def qutrit_swap() -> np.ndarray:
    S = np.zeros((9, 9))
    for a in range(3):
        for b in range(3):
            S[3 * b + a, 3 * a + b] = 1.0
    return S


def flavor_index(f) -> int:
    if isinstance(f, (int, np.integer)):
        if not 0 <= int(f) <= 2:
            raise ValueError(f"flavour index {f} outside 0..2")
        return int(f)
    key = str(f).strip().lower().replace("nu_", "").replace("ν_", "")
    if key not in _FLAVOR_ALIASES:
        raise ValueError(f"unknown flavour {f!r}")
    return _FLAVOR_ALIASES[key]


def parse_flavors(word) -> tuple:
    """'e mu e tau' / ['e','mu'] / 'emet' -> tuple of flavour indices."""
    if isinstance(word, str):
        parts = word.replace(",", " ").split()
        if len(parts) == 1 and parts[0] not in _FLAVOR_ALIASES:
            parts = list(parts[0])
    else:
        parts = list(word)
    return tuple(flavor_index(p) for p in parts)


# ------------------------------------------------------------------ parameters

@dataclass(frozen=True)
class MixingParameters:
    theta12: float = np.deg2rad(33.67)
    theta13: float = np.deg2rad(8.58)
    theta23: float = np.deg2rad(42.3)
    delta_cp: float = np.deg2rad(232.0)
    dm21: float = 7.41e-17   # MeV^2
    dm31: float = 2.505e-15  # MeV^2

    def __post_init__(self):
        vals = (self.theta12, self.theta13, self.theta23, self.delta_cp, self.dm21, self.dm31)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("mixing parameters must be finite")
        if not self.dm31 > self.dm21 > 0:
            raise ValueError("normal ordering requires dm31 > dm21 > 0")

    @property
    def ratio(self) -> float:
        return self.dm21 / self.dm31


REFERENCE_MIXING = MixingParameters()


def pmns_matrix(mixing: MixingParameters = REFERENCE_MIXING) -> np.ndarray:
    """U = R23 . U13(delta) . R12, columns indexed by mass state."""
    c12, s12 = np.cos(mixing.theta12), np.sin(mixing.theta12)
    c13, s13 = np.cos(mixing.theta13), np.sin(mixing.theta13)
    c23, s23 = np.cos(mixing.theta23), np.sin(mixing.theta23)
    ph = np.exp(1j * mixing.delta_cp)
    r23 = np.array([[1, 0, 0], [0, c23, s23], [0, -s23, c23]], dtype=complex)
    # the phase sits on both off-diagonal corners, otherwise the factor is not unitary
    u13 = np.array([[c13, 0, s13 / ph], [0, 1, 0], [-s13 * ph, 0, c13]], dtype=complex)
    r12 = np.array([[c12, s12, 0], [-s12, c12, 0], [0, 0, 1]], dtype=complex)
    return r23 @ u13 @ r12


def cone_angles(n: int, cos_max: float = 0.9) -> np.ndarray:
    """theta_ij = |i-j|/(N-1) * arccos(cos_max)."""
    if n < 2:
        return np.zeros((n, n))
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) / (n - 1) * np.arccos(cos_max)


@dataclass(frozen=True)
class NeutrinoSystem:
    n: int
    basis: str = "flavor"
    mixing: MixingParameters = REFERENCE_MIXING
    mu: float = 1.0
    angles: np.ndarray | None = field(default=None, compare=False)
    initial_flavors: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one neutrino")
        if self.basis not in ("mass", "flavor"):
            raise ValueError(f"basis must be 'mass' or 'flavor', got {self.basis!r}")
        ang = cone_angles(self.n) if self.angles is None else np.asarray(self.angles, dtype=float)
        if ang.shape != (self.n, self.n):
            raise ValueError("angle matrix must be N x N")
        if np.any(np.abs(np.diag(ang)) > 0) or np.max(np.abs(ang - ang.T)) > 1e-14:
            raise ValueError("angle matrix must be symmetric with zero diagonal")
        ang = ang.copy()
        ang.setflags(write=False)
        object.__setattr__(self, "angles", ang)
        init = parse_flavors(self.initial_flavors) if len(self.initial_flavors) else (0,) * self.n
        if len(init) != self.n:
            raise ValueError(f"initial word has {len(init)} flavours for N={self.n}")
        object.__setattr__(self, "initial_flavors", init)

    # the numbers everything else is built from
    @property
    def Omega(self) -> float:
        return self.mu / self.n

    @property
    def omega(self) -> float:
        return self.Omega * self.mixing.ratio

    @property
    def couplings(self) -> np.ndarray:
        """J_ij = (mu/N)(1 - cos theta_ij), zero on the diagonal."""
        J = self.mu / self.n * (1.0 - np.cos(self.angles))
        np.fill_diagonal(J, 0.0)
        return J

    @property
    def shape(self) -> RegisterShape:
        return RegisterShape.qutrits(self.n)

    def key(self) -> tuple:
        return (self.n, self.basis, self.mixing, self.mu, self.angles.tobytes())

    def with_basis(self, basis: str) -> "NeutrinoSystem":
        return NeutrinoSystem(self.n, basis, self.mixing, self.mu, self.angles, self.initial_flavors)

    def frame(self) -> np.ndarray:
        """Single-site matrix taking mass amplitudes to amplitudes in this system's basis."""
        return pmns_matrix(self.mixing) if self.basis == "flavor" else np.eye(3, dtype=complex)

    def site_energies(self) -> np.ndarray:
        return np.array([0.0, self.omega, self.Omega])

    def initial_state(self) -> QuditState:
        """Flavour product state from initial_flavors, written in this system's basis."""
        U = pmns_matrix(self.mixing)
        vecs = []
        for f in self.initial_flavors:
            v = np.zeros(3, dtype=complex)
            v[f] = 1.0
            vecs.append(v if self.basis == "flavor" else U.conj().T @ v)
        return QuditState.product(vecs)


# ------------------------------------------------------------------ operators

@dataclass
class HamiltonianMatrix:
    matrix: sp.csr_matrix
    basis: str
    _eig: tuple | None = field(default=None, repr=False)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(d.toarray()))) if d.nnz else 0.0

    def eigh(self):
        if self._eig is None:
            self._eig = np.linalg.eigh(self.dense())
        return self._eig

    def __add__(self, other: "HamiltonianMatrix") -> "HamiltonianMatrix":
        return HamiltonianMatrix((self.matrix + other.matrix).tocsr(), self.basis)


def _embed_site(op: np.ndarray, site: int, n: int) -> sp.csr_matrix:
    left = sp.identity(3 ** site, format="csr")
    right = sp.identity(3 ** (n - site - 1), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def one_body_site(sys: NeutrinoSystem) -> np.ndarray:
    """3x3 one-body term diag(0, omega, Omega), rotated into the flavour basis if needed."""
    w, W = sys.omega, sys.Omega
    h = np.diag([0.0, w, W]).astype(complex)
    gm = -w / 2 * gell_mann(3) + (w - 2 * W) / (2 * np.sqrt(3)) * gell_mann(8)
    shift = h - gm
    if np.max(np.abs(shift - shift[0, 0] * np.eye(3))) > 1e-12:
        raise AssertionError("Gell-Mann form of the one-body term is inconsistent")
    if sys.basis == "flavor":
        U = pmns_matrix(sys.mixing)
        h = U @ h @ U.conj().T
    return h


def one_body_h(sys: NeutrinoSystem) -> HamiltonianMatrix:
    h = one_body_site(sys)
    H = sp.csr_matrix((3 ** sys.n, 3 ** sys.n), dtype=complex)
    for i in range(sys.n):
        H = H + _embed_site(h, i, sys.n)
    return HamiltonianMatrix(H.tocsr(), sys.basis)


def swap_permutation(n: int, i: int, j: int, d: int = 3) -> np.ndarray:
    """Index map of the site transposition (i j) on a d^n register."""
    idx = np.arange(d ** n).reshape((d,) * n)
    return np.swapaxes(idx, i, j).reshape(-1)


def two_body_h(sys: NeutrinoSystem) -> HamiltonianMatrix:
    """sum_{i<j} J_ij lambda^(i).lambda^(j), assembled via lambda.lambda = 2 SWAP - 2/3."""
    if sys.n < 2:
        raise ValueError("two-body term needs N >= 2")
    D = 3 ** sys.n
    J = sys.couplings
    H = sp.csr_matrix((D, D), dtype=complex)
    rows = np.arange(D)
    for i in range(sys.n):
        for j in range(i + 1, sys.n):
            if J[i, j] == 0:
                continue
            perm = swap_permutation(sys.n, i, j)
            S = sp.csr_matrix((np.ones(D), (perm, rows)), shape=(D, D))
            H = H + J[i, j] * (2.0 * S - (2.0 / 3.0) * sp.identity(D, format="csr"))
    return HamiltonianMatrix(H.tocsr(), sys.basis)


def two_body_h_gell_mann(sys: NeutrinoSystem) -> np.ndarray:
    """Dense sum over Gell-Mann products.  Independent check of two_body_h (small N)."""
    D = 3 ** sys.n
    J = sys.couplings
    H = np.zeros((D, D), dtype=complex)
    for i in range(sys.n):
        for j in range(i + 1, sys.n):
            for lam in GELL_MANN:
                ops = [np.eye(3)] * sys.n
                ops[i] = lam
                ops[j] = lam
                term = ops[0]
                for o in ops[1:]:
                    term = np.kron(term, o)
                H += J[i, j] * term
    return H


def total_h(sys: NeutrinoSystem) -> HamiltonianMatrix:
    H = one_body_h(sys)
    if sys.n > 1:
        H = H + two_body_h(sys)
    return H


# ------------------------------------------------------------------ exact propagator

class ExactPropagator:
    """exp(-iHt) via per-sector eigendecompositions.

    In the mass basis the one-body term is diagonal and the two-body term is
    a sum of site permutations, so H conserves how many neutrinos carry each
    mass label.  Each (n0, n1, n2) sector is diagonalised once.
    """

    def __init__(self, sys: NeutrinoSystem):
        self.sys = sys
        n = sys.n
        D = 3 ** n
        self.frame = sys.frame()
        digits = np.array(np.unravel_index(np.arange(D), (3,) * n)).T
        energies = sys.site_energies()[digits].sum(axis=1)
        Hm = sp.diags(energies).tocsr().astype(complex)
        if n > 1:
            Hm = Hm + two_body_h(sys.with_basis("mass")).matrix
        Hm = Hm.tocsr()
        counts = np.stack([(digits == a).sum(axis=1) for a in range(3)], axis=1)
        keys = counts @ np.array([(n + 1) ** 2, n + 1, 1])
        self.sectors = []
        for k in np.unique(keys):
            idx = np.flatnonzero(keys == k)
            block = Hm[idx][:, idx].toarray()
            E, V = np.linalg.eigh(block)
            self.sectors.append((idx, E, V))

    def _to_mass(self, psi: np.ndarray) -> np.ndarray:
        return _per_site(psi, self.frame.conj().T, self.sys.n)

    def _from_mass(self, psi: np.ndarray) -> np.ndarray:
        return _per_site(psi, self.frame, self.sys.n)

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        pm = self._to_mass(psi)
        out = np.empty_like(pm)
        for idx, E, V in self.sectors:
            c = V.conj().T @ pm[idx]
            out[idx] = V @ (np.exp(-1j * E * t)[:, None] * c if c.ndim > 1 else np.exp(-1j * E * t) * c)
        return self._from_mass(out)

    def unitary(self, t: float) -> np.ndarray:
        D = 3 ** self.sys.n
        return self.evolve(np.eye(D, dtype=complex), t)


def _per_site(psi: np.ndarray, M: np.ndarray, n: int) -> np.ndarray:
    if np.allclose(M, np.eye(3)):
        return psi.copy()
    extra = psi.shape[1:]
    t = psi.reshape((3,) * n + extra)
    for s in range(n):
        t = np.moveaxis(np.tensordot(M, t, axes=([1], [s])), 0, s)
    return t.reshape(psi.shape)


_CACHE: dict = {}


def propagator(sys: NeutrinoSystem) -> ExactPropagator:
    """Cached ExactPropagator for a system (keyed on its physical parameters)."""
    key = sys.key()
    if key not in _CACHE:
        if len(_CACHE) >= 16:
            _CACHE.pop(next(iter(_CACHE)))
        _CACHE[key] = ExactPropagator(sys)
    return _CACHE[key]


def exact_evolve(sys: NeutrinoSystem, state: QuditState, t: float) -> QuditState:
    if state.shape != sys.shape:
        raise ValueError("state register does not match the system")
    return QuditState(state.shape, propagator(sys).evolve(state.amplitudes, float(t)))


def flavor_probabilities(sys: NeutrinoSystem, state: QuditState) -> np.ndarray:
    """N x 3 single-neutrino flavour probabilities of a qutrit-register state."""
    psi = state.amplitudes
    if sys.basis == "mass":
        psi = _per_site(psi, pmns_matrix(sys.mixing), sys.n)
    p = (np.abs(psi) ** 2).reshape((3,) * sys.n)
    out = np.empty((sys.n, 3))
    for i in range(sys.n):
        out[i] = p.sum(axis=tuple(a for a in range(sys.n) if a != i))
    return out


def persistence(psi0: QuditState, psi: QuditState) -> float:
    return float(abs(psi0.overlap(psi)) ** 2)
