"""Mixed-radix statevector and density-matrix kernel.

Registers are ordered lists of local dimensions (2 or 3).  Amplitudes are
indexed by the digit string with site 0 as the most significant digit, which
is also the row-major order of ``amplitudes.reshape(dims)``.  Gates are never
expanded to full-register matrices; they are contracted against the axes of
the reshaped tensor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RNG_ALGORITHM = "numpy.random.Philox-4x64"
UNITARY_TOL = 1e-12
DM_MAX_DIM = 4096


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; `stream` selects an independent jumped substream."""
    bg = np.random.Philox(int(seed))
    if stream:
        bg = bg.jumped(int(stream))
    return np.random.Generator(bg)


@dataclass(frozen=True)
class RegisterShape:
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("register needs at least one site")
        if any(d not in (2, 3) for d in dims):
            raise ValueError(f"local dimensions must be 2 or 3, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @classmethod
    def qubits(cls, n: int) -> "RegisterShape":
        return cls((2,) * n)

    @classmethod
    def qutrits(cls, n: int) -> "RegisterShape":
        return cls((3,) * n)

    def index(self, digits: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(digits), self.dims))

    def digits(self, index: int) -> tuple:
        return tuple(int(x) for x in np.unravel_index(index, self.dims))

    def label(self, index: int) -> str:
        return "".join(str(d) for d in self.digits(index))


@dataclass
class QuditState:
    shape: RegisterShape
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != self.shape.total_dim:
            raise ValueError("amplitude vector does not match register size")

    @classmethod
    def basis(cls, shape: RegisterShape, digits: Sequence[int]) -> "QuditState":
        psi = np.zeros(shape.total_dim, dtype=complex)
        psi[shape.index(digits)] = 1.0
        return cls(shape, psi)

    @classmethod
    def product(cls, vectors: Sequence[np.ndarray]) -> "QuditState":
        shape = RegisterShape(tuple(len(v) for v in vectors))
        psi = np.ones(1, dtype=complex)
        for v in vectors:
            psi = np.kron(psi, np.asarray(v, dtype=complex))
        return cls(shape, psi / np.linalg.norm(psi))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "QuditState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.shape, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass
class DensityMatrix:
    shape: RegisterShape
    elements: np.ndarray
    flagged: bool = False  # set for raw reconstructions that may be non-positive

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=complex)
        D = self.shape.total_dim
        if self.elements.shape != (D, D):
            raise ValueError("density matrix does not match register size")

    def trace(self) -> complex:
        return complex(np.trace(self.elements))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.elements - self.elements.conj().T)))

    def eigvalsh(self) -> np.ndarray:
        h = 0.5 * (self.elements + self.elements.conj().T)
        return np.linalg.eigvalsh(h)

    def is_physical(self, tol: float = 1e-10) -> bool:
        return (self.hermiticity_defect() <= 1e-12 and abs(self.trace() - 1) <= 1e-12
                and self.eigvalsh().min() >= -tol)


_OFFDIAG = {}


def _offdiag_mask(D: int) -> np.ndarray:
    if D not in _OFFDIAG:
        _OFFDIAG[D] = ~np.eye(D, dtype=bool)
    return _OFFDIAG[D]


class Gate:
    """Small unitary bound to an ordered tuple of sites."""

    __slots__ = ("matrix", "sites", "tag", "is_entangling", "diagonal")

    def __init__(self, matrix, sites, tag: str = "", is_entangling: bool | None = None,
                 check: bool = True):
        m = np.asarray(matrix, dtype=complex)
        sites = tuple(int(s) for s in (sites if isinstance(sites, (tuple, list)) else np.atleast_1d(sites)))
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in {sites}")
        k = len(sites)
        d = int(round(m.shape[0] ** (1.0 / k)))
        if m.shape != (d ** k, d ** k):
            raise ValueError(f"matrix shape {m.shape} incompatible with {k} sites")
        if check:
            defect = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
            if defect > UNITARY_TOL:
                raise ValueError(f"gate {tag!r} is not unitary (defect {defect:.2e})")
        self.matrix = m
        self.sites = sites
        self.tag = tag
        self.is_entangling = (k > 1) if is_entangling is None else bool(is_entangling)
        self.diagonal = not m[_offdiag_mask(m.shape[0])].any()

    @classmethod
    def trusted(cls, matrix: np.ndarray, sites: tuple, tag: str, is_entangling: bool,
                diagonal: bool) -> "Gate":
        """Skip validation; for matrices that come from an already checked gate or template."""
        g = object.__new__(cls)
        g.matrix, g.sites, g.tag, g.is_entangling, g.diagonal = matrix, sites, tag, is_entangling, diagonal
        return g

    @property
    def local_dim(self) -> int:
        return int(round(self.matrix.shape[0] ** (1.0 / len(self.sites))))

    def dagger(self) -> "Gate":
        return Gate.trusted(self.matrix.conj().T, self.sites, self.tag, self.is_entangling, self.diagonal)

    def on(self, sites) -> "Gate":
        sites = tuple(int(s) for s in sites)
        if len(sites) != len(self.sites) or len(set(sites)) != len(sites):
            raise ValueError(f"cannot move a {len(self.sites)}-site gate onto {sites}")
        return Gate.trusted(self.matrix, sites, self.tag, self.is_entangling, self.diagonal)

    def __repr__(self):
        return f"Gate({self.tag!r}, sites={self.sites})"


def _check_sites(dims, gate: Gate):
    ld = gate.local_dim
    for s in gate.sites:
        if s < 0 or s >= len(dims):
            raise ValueError(f"site {s} outside register of {len(dims)} sites")
        if dims[s] != ld:
            raise ValueError(f"gate {gate.tag!r} has local dim {gate.local_dim}, site {s} has {dims[s]}")


def _contract(tensor: np.ndarray, mat: np.ndarray, axes: Sequence[int], dsub: Sequence[int],
              diagonal: bool = False) -> np.ndarray:
    """Apply `mat` to the given axes of `tensor` (other axes untouched)."""
    k = len(axes)
    if diagonal:
        shape = [1] * tensor.ndim
        for a, d in zip(axes, dsub):
            shape[a] = d
        # diag entries are laid out in row-major order over the gate's sites
        order = np.argsort(axes)
        diag = np.diag(mat).reshape(dsub).transpose(order)
        return tensor * diag.reshape(shape)
    m = mat.reshape(tuple(dsub) * 2)
    out = np.tensordot(m, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply_matrix(tensor: np.ndarray, dims, gate: Gate, offset: int = 0) -> np.ndarray:
    """Low-level: act with gate on a tensor of shape dims (+ trailing axes)."""
    axes = [s + offset for s in gate.sites]
    dsub = [dims[s] for s in gate.sites]
    return _contract(tensor, gate.matrix, axes, dsub, gate.diagonal)


def apply_gate(state: QuditState, gate: Gate) -> QuditState:
    dims = state.shape.dims
    _check_sites(dims, gate)
    psi = apply_matrix(state.amplitudes.reshape(dims), dims, gate)
    return QuditState(state.shape, psi.reshape(-1))


def kron_embed(gate: Gate, shape: RegisterShape) -> np.ndarray:
    """Dense full-register matrix of a gate.  Test oracle only (scales as D^2)."""
    D = shape.total_dim
    n = shape.n_sites
    out = np.zeros((D, D), dtype=complex)
    k = len(gate.sites)
    dsub = [shape.dims[s] for s in gate.sites]
    for col in range(D):
        dig = list(shape.digits(col))
        sub_in = int(np.ravel_multi_index([dig[s] for s in gate.sites], dsub))
        for sub_out in range(gate.matrix.shape[0]):
            amp = gate.matrix[sub_out, sub_in]
            if amp == 0:
                continue
            new = list(dig)
            for s, v in zip(gate.sites, np.unravel_index(sub_out, dsub)):
                new[s] = int(v)
            out[shape.index(new), col] += amp
    assert k <= n
    return out


@dataclass
class Circuit:
    """Ordered gate list with entangling-gate bookkeeping.

    ``metadata['final_order']`` (when present) lists, for every logical unit
    position after the circuit, which logical unit (neutrino) sits there.
    """
    shape: RegisterShape
    gates: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, gate: Gate) -> "Circuit":
        _check_sites(self.shape.dims, gate)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def copy(self) -> "Circuit":
        return Circuit(self.shape, list(self.gates), dict(self.metadata))

    def inverse(self) -> "Circuit":
        return Circuit(self.shape, [g.dagger() for g in reversed(self.gates)], dict(self.metadata))

    def entangling_count(self, tag: str | None = None) -> int:
        return sum(1 for g in self.gates if g.is_entangling and (tag is None or g.tag == tag))

    def entangling_depth(self) -> int:
        """Number of parallel layers of entangling gates (single-site gates ignored)."""
        t = np.zeros(self.shape.n_sites, dtype=int)
        for g in self.gates:
            if not g.is_entangling:
                continue
            s = list(g.sites)
            t[s] = t[s].max() + 1
        return int(t.max()) if len(t) else 0

    def unitary(self) -> np.ndarray:
        """Dense circuit unitary built by pushing the identity through as a batch."""
        D = self.shape.total_dim
        dims = self.shape.dims
        tens = np.eye(D, dtype=complex).reshape(dims + (D,))
        for g in self.gates:
            tens = apply_matrix(tens, dims, g)
        return tens.reshape(D, D)


def apply_circuit(state: QuditState, circuit: Circuit) -> QuditState:
    if state.shape != circuit.shape:
        raise ValueError("state and circuit registers differ")
    dims = state.shape.dims
    psi = state.amplitudes.reshape(dims)
    for g in circuit.gates:
        psi = apply_matrix(psi, dims, g)
    return QuditState(state.shape, psi.reshape(-1))


# ---------------------------------------------------------------- density matrices

def _dm_guard(shape: RegisterShape):
    if shape.total_dim > DM_MAX_DIM:
        raise ValueError(f"density-matrix path limited to total_dim <= {DM_MAX_DIM}, got {shape.total_dim}")


def apply_gate_dm(rho: DensityMatrix, gate: Gate) -> DensityMatrix:
    _dm_guard(rho.shape)
    dims = rho.shape.dims
    _check_sites(dims, gate)
    n = len(dims)
    t = rho.elements.reshape(dims + dims)
    t = apply_matrix(t, dims, gate)
    conj = Gate(gate.matrix.conj(), gate.sites, gate.tag, gate.is_entangling, check=False)
    t = apply_matrix(t, dims, conj, offset=n)
    D = rho.shape.total_dim
    return DensityMatrix(rho.shape, t.reshape(D, D))


def apply_kraus_dm(rho: DensityMatrix, kraus: Sequence[np.ndarray], sites) -> DensityMatrix:
    """rho -> sum_k K rho K^dag with the operators acting on `sites`."""
    _dm_guard(rho.shape)
    dims = rho.shape.dims
    n = len(dims)
    sites = tuple(np.atleast_1d(sites))
    dsub = [dims[s] for s in sites]
    t = rho.elements.reshape(dims + dims)
    acc = np.zeros_like(t)
    for K in kraus:
        K = np.asarray(K, dtype=complex)
        x = _contract(t, K, list(sites), dsub)
        x = _contract(x, K.conj(), [s + n for s in sites], dsub)
        acc += x
    D = rho.shape.total_dim
    return DensityMatrix(rho.shape, acc.reshape(D, D))


def apply_circuit_dm(rho: DensityMatrix, circuit: Circuit) -> DensityMatrix:
    for g in circuit.gates:
        rho = apply_gate_dm(rho, g)
    return rho


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    dims = rho.shape.dims
    n = len(dims)
    if keep[-1] >= n or keep[0] < 0:
        raise ValueError("keep sites outside register")
    drop = [s for s in range(n) if s not in keep]
    t = rho.elements.reshape(dims + dims)
    t = t.transpose(keep + drop + [n + s for s in keep] + [n + s for s in drop])
    dk = int(np.prod([dims[s] for s in keep]))
    dd = int(np.prod([dims[s] for s in drop])) if drop else 1
    t = t.reshape(dk, dd, dk, dd)
    red = np.einsum("iaja->ij", t)
    return DensityMatrix(RegisterShape(tuple(dims[s] for s in keep)), red)


# ---------------------------------------------------------------- measurement

@dataclass
class MeasurementRecord:
    """Outcome table over all mixed-radix strings of a register.

    `probabilities` is always filled (normalised frequencies when sampled);
    `counts` only for sampled records.
    """
    shape: RegisterShape
    probabilities: np.ndarray
    counts: np.ndarray | None = None
    shots: int | None = None
    seed: int | None = None
    rng: str | None = None
    tag: str = "raw"
    metadata: dict = field(default_factory=dict)

    def as_dict(self, threshold: float = 0.0) -> dict:
        vals = self.counts if self.counts is not None else self.probabilities
        return {self.shape.label(i): vals[i] for i in np.flatnonzero(np.abs(vals) > threshold)}

    def prob(self, digits: Sequence[int]) -> float:
        return float(self.probabilities[self.shape.index(digits)])

    def tensor(self) -> np.ndarray:
        return self.probabilities.reshape(self.shape.dims)


def probabilities(state: QuditState) -> MeasurementRecord:
    p = np.abs(state.amplitudes) ** 2
    return MeasurementRecord(state.shape, p)


def dm_probabilities(rho: DensityMatrix) -> MeasurementRecord:
    p = np.clip(np.real(np.diag(rho.elements)), 0.0, None)
    return MeasurementRecord(rho.shape, p / p.sum())


def sample_shots(record: MeasurementRecord, shots: int, seed: int, stream: int = 0) -> MeasurementRecord:
    shots = int(shots)
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.asarray(record.probabilities, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9 or p.min() < -1e-12:
        raise ValueError(f"distribution not normalised (sum={p.sum():.3e})")
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    rng = make_rng(seed, stream)
    counts = rng.multinomial(shots, p)
    return MeasurementRecord(record.shape, counts / shots, counts, shots, int(seed), RNG_ALGORITHM,
                             record.tag, dict(record.metadata))
