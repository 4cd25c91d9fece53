"""Synthetic noise channels and noisy execution (stand-in for hardware runs).

Three execution paths:
  * analytic: global depolarizing, p -> f p + (1 - f)/D with f = prod(1 - p_gate);
  * trajectories: Monte-Carlo unravelling of local Kraus channels, batched over
    trajectories along a trailing tensor axis;
  * density matrix: exact Kraus evolution for registers with total_dim <= 4096.
Readout error is an independent per-site flip matrix applied to outcome strings.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .qudit import (DM_MAX_DIM, RNG_ALGORITHM, Circuit, DensityMatrix, Gate, MeasurementRecord, QuditState,
                    RegisterShape, _contract, apply_gate_dm, apply_kraus_dm, apply_matrix, make_rng,
                    sample_shots)

KINDS = ("none", "global_depolarizing", "local_depolarizing", "amplitude_damping", "composite")
TRAJECTORY_CHUNK = 32  # fixed chunking keeps results independent of how chunks are scheduled

# assumed two-qubit gate duration for turning T1 into a per-gate damping probability
ASSUMED_2Q_GATE_NS = 100.0


@dataclass
class NoiseModel:
    kind: str = "none"
    p2q: float = 0.0
    p1q: float = 0.0
    gamma: float = 0.0             # amplitude-damping probability per site after each entangling gate
    readout: float = 0.0           # per-site symmetric flip probability
    channels: tuple = ("amplitude_damping", "local_depolarizing")  # order used by 'composite'
    tag_rates: dict = field(default_factory=dict)  # optional per-tag override of the entangling error rate
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"noise kind must be one of {KINDS}, got {self.kind!r}")
        for key in ("p2q", "p1q", "gamma", "readout"):
            v = float(getattr(self, key))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"noise.{key}={v} outside [0, 1]")
            setattr(self, key, v)
        for tag, v in self.tag_rates.items():
            if not 0.0 <= float(v) <= 1.0:
                raise ValueError(f"error rate for tag {tag!r} outside [0, 1]")
        bad = [c for c in self.channels if c not in ("amplitude_damping", "local_depolarizing")]
        if bad:
            raise ValueError(f"unknown composite channel(s) {bad}")

    def rate(self, gate: Gate) -> float:
        if gate.is_entangling:
            return float(self.tag_rates.get(gate.tag, self.p2q))
        return self.p1q

    @property
    def active_channels(self) -> tuple:
        if self.kind == "local_depolarizing":
            return ("local_depolarizing",)
        if self.kind == "amplitude_damping":
            return ("amplitude_damping",)
        if self.kind == "composite":
            return tuple(self.channels)
        return ()


def _torino(n_neutrinos: int) -> NoiseModel:
    table = {2: (9.4e-3, 3.2e-4, 2.6e-2, 150.0), 4: (7.8e-3, 3.3e-4, 2.9e-2, 133.0),
             8: (4.0e-3, 2.8e-4, 2.3e-2, 142.0)}
    key = min(table, key=lambda k: abs(k - n_neutrinos))
    p2q, p1q, ro, t1 = table[key]
    gamma = 1.0 - np.exp(-ASSUMED_2Q_GATE_NS * 1e-3 / t1)
    return NoiseModel("composite", p2q=p2q, p1q=p1q, gamma=gamma, readout=ro, name="torino-like")


def preset(name: str, n_neutrinos: int = 2) -> NoiseModel:
    """Named noise presets; 'torino-like' picks the column closest to n_neutrinos."""
    if name in ("none", "noiseless"):
        return NoiseModel("none", name="none")
    if name == "H1-1-like":
        return NoiseModel("local_depolarizing", p2q=1e-3, p1q=2e-5, readout=2e-4, name="H1-1-like")
    if name == "torino-like":
        return _torino(n_neutrinos)
    raise ValueError(f"unknown noise preset {name!r} (known: none, H1-1-like, torino-like)")


PRESETS = ("none", "H1-1-like", "torino-like")


# ----------------------------------------------------------------- local operator sets

def _paulis(d: int) -> list:
    """Unitary error basis on one site: Paulis (d=2) or Weyl X^a Z^b (d=3); identity first."""
    if d == 2:
        return [np.eye(2, dtype=complex), np.array([[0, 1], [1, 0]], dtype=complex),
                np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]).astype(complex)]
    w = np.exp(2j * np.pi / 3)
    X = np.roll(np.eye(3), 1, axis=0).astype(complex)
    Z = np.diag([1, w, w * w])
    return [np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b) for a in range(3) for b in range(3)]


def depolarizing_kraus(p: float, dims) -> list:
    """Kraus set of (1-p) rho + p/(D^2 - 1) sum_{P != 1} P rho P^dag on the given sites."""
    basis = [_paulis(d) for d in dims]
    ops = [np.array([[1.0]])]
    for b in basis:
        ops = [np.kron(o, q) for o in ops for q in b]
    m = len(ops) - 1
    return [np.sqrt(1 - p) * ops[0]] + [np.sqrt(p / m) * o for o in ops[1:]]


def amplitude_damping_kraus(gamma: float) -> list:
    return [np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
            np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)]


# ----------------------------------------------------------------- readout

def readout_matrix(eps: float, d: int) -> np.ndarray:
    """Column-stochastic flip matrix: stay with 1 - eps, move to each other level with eps/(d-1)."""
    M = np.full((d, d), eps / (d - 1))
    np.fill_diagonal(M, 1 - eps)
    return M


def apply_readout(probs: np.ndarray, shape: RegisterShape, eps: float, inverse: bool = False) -> np.ndarray:
    """Apply (or invert, for unfolding) independent per-site readout flips to a distribution."""
    if eps == 0:
        return np.asarray(probs, dtype=float)
    dims = shape.dims
    t = np.asarray(probs, dtype=float).reshape(dims + (-1,))
    for s, d in enumerate(dims):
        M = readout_matrix(eps, d)
        if inverse:
            M = np.linalg.inv(M)
        t = np.moveaxis(np.tensordot(M, t, axes=([1], [s])), 0, s)
    return t.reshape(np.shape(probs))


def unfold_readout(record: MeasurementRecord, eps: float) -> MeasurementRecord:
    """Invert the readout flip matrix on a record (may leave small negative entries)."""
    p = apply_readout(record.probabilities, record.shape, eps, inverse=True)
    meta = dict(record.metadata, readout_unfolded=eps)
    return MeasurementRecord(record.shape, p, record.counts, record.shots, record.seed, record.rng,
                             "unfolded", meta)


# ----------------------------------------------------------------- execution paths

def global_fidelity(circuit: Circuit, noise: NoiseModel) -> float:
    """f = prod over gates of (1 - p_gate); single-site gates contribute when p1q is set."""
    f = 1.0
    for g in circuit.gates:
        f *= 1.0 - noise.rate(g)
    return f


def _clean_probs(circuit: Circuit, psi0: QuditState) -> np.ndarray:
    dims = circuit.shape.dims
    psi = psi0.amplitudes.reshape(dims)
    for g in circuit.gates:
        psi = apply_matrix(psi, dims, g)
    return np.abs(psi.reshape(-1)) ** 2


def _noisy_dm(circuit: Circuit, noise: NoiseModel, psi0: QuditState) -> np.ndarray:
    if circuit.shape.total_dim > DM_MAX_DIM:
        raise ValueError(f"density-matrix path limited to total_dim <= {DM_MAX_DIM}")
    dims = circuit.shape.dims
    rho = psi0.density_matrix()
    for g in circuit.gates:
        rho = apply_gate_dm(rho, g)
        p = noise.rate(g)
        for ch in noise.active_channels:
            if ch == "local_depolarizing" and p > 0:
                rho = apply_kraus_dm(rho, depolarizing_kraus(p, [dims[s] for s in g.sites]), g.sites)
            elif ch == "amplitude_damping" and noise.gamma > 0 and g.is_entangling:
                for s in g.sites:
                    _require_qubit(dims[s])
                    rho = apply_kraus_dm(rho, amplitude_damping_kraus(noise.gamma), (s,))
    p = np.real(np.diag(rho.elements)).copy()
    return np.clip(p, 0.0, None) / p.clip(0.0, None).sum()


def _require_qubit(d):
    if d != 2:
        raise ValueError("amplitude damping is implemented for qubit registers only")


def _split(dims, sites):
    """Reshape pattern (L, d0, M, d1, R) around one or two sorted sites."""
    out = []
    prev = 0
    for s in sites:
        out.append(int(np.prod(dims[prev:s])))
        out.append(dims[s])
        prev = s + 1
    out.append(int(np.prod(dims[prev:])))
    return out


class _Batch:
    """Trajectory batch stored contiguously as (total_dim, B), one column per trajectory.

    Single precision halves memory traffic; column norms are tracked lazily
    (damping is the only non-unitary step) and divided out at the end.
    """

    dtype = np.complex64

    def __init__(self, psi0: QuditState, B: int):
        self.dims = psi0.shape.dims
        self.t = np.repeat(psi0.amplitudes.astype(self.dtype).reshape(-1, 1), B, axis=1)
        self.nrm2 = np.ones(B)

    def _view(self, sites, merge: bool = True):
        """(L, d0, [M, d1,] R*B) when merge, else with a separate trailing batch axis."""
        shp = _split(self.dims, sorted(sites))
        if merge:
            shp[-1] *= self.t.shape[1]
            return self.t.reshape(shp)
        return self.t.reshape(shp + [-1])

    def gate(self, g: Gate):
        k = len(g.sites)
        B = self.t.shape[1]
        if k > 2:
            x = apply_matrix(self.t.reshape(self.dims + (B,)), self.dims, g)
            self.t = np.ascontiguousarray(x).reshape(-1, B)
            return
        if k == 1:
            d = g.matrix.shape[0]
            m = g.matrix.astype(self.dtype)
            x = self._view(g.sites)
            if g.diagonal:
                x *= np.diag(m)[None, :, None]
            else:
                self.t = np.matmul(m, x).reshape(-1, B)
            return
        a, b = g.sites
        da, db = self.dims[a], self.dims[b]
        m4 = g.matrix.reshape(da, db, da, db)
        if a > b:
            m4 = m4.transpose(1, 0, 3, 2)
            da, db = db, da
        m4 = m4.astype(self.dtype)
        x = self._view(g.sites)
        if g.diagonal:
            x *= np.diag(m4.reshape(da * db, -1)).reshape(da, db)[None, :, None, :, None]
            return
        flat = m4.reshape(da * db, da * db)
        if np.count_nonzero(flat) == da * db and np.all((flat == 0) | (flat == 1)):
            src = x.copy()
            for out_i, in_j in zip(*np.nonzero(flat)):
                i, k2 = divmod(int(out_i), db)
                j, l = divmod(int(in_j), db)
                if (i, k2) != (j, l):
                    x[:, i, :, k2] = src[:, j, :, l]
            return
        self.t = np.einsum("ikjl,ajblc->aibkc", m4, x, optimize=True).reshape(-1, B)

    def depolarize(self, sites, p, rng):
        B = self.t.shape[1]
        hit = np.flatnonzero(rng.random(B) < p)
        if hit.size == 0:
            return
        local = [_paulis(self.dims[s]) for s in sites]
        n_ops = int(np.prod([len(b) for b in local]))
        choice = rng.integers(1, n_ops, size=hit.size)
        digits = np.array(np.unravel_index(choice, [len(b) for b in local])).T
        dims = self.dims
        sub = self.t[:, hit].reshape(dims + (hit.size,))
        for k, s in enumerate(sites):
            for op_idx in np.unique(digits[:, k]):
                if op_idx == 0:
                    continue
                cols = np.flatnonzero(digits[:, k] == op_idx)
                sub[..., cols] = _contract(sub[..., cols], local[k][op_idx].astype(self.dtype), [s], [dims[s]])
        self.t[:, hit] = sub.reshape(-1, hit.size)

    def damp(self, site, gamma, rng):
        _require_qubit(self.dims[site])
        x = self._view((site,), merge=False)
        x1 = x[:, 1]
        fv = x1.view(np.float32)
        p1 = np.einsum("abc,abc->c", fv, fv).reshape(-1, 2).sum(axis=1).astype(float)
        jump = rng.random(p1.shape) < gamma * p1 / self.nrm2
        # jump: |1> -> |0>; no jump: damp |1> by sqrt(1 - gamma)
        if jump.any():
            j = np.flatnonzero(jump)
            x[:, 0][..., j] = x1[..., j]
        x1 *= np.where(jump, 0.0, np.sqrt(1 - gamma)).astype(np.float32)
        self.nrm2 = np.where(jump, p1, self.nrm2 - gamma * p1)

    def probs(self) -> np.ndarray:
        p = np.abs(self.t.astype(complex)) ** 2
        return p / p.sum(axis=0)


def _trajectory_probs(circuit: Circuit, noise: NoiseModel, psi0: QuditState, n_traj: int, seed: int):
    """Per-trajectory outcome distributions, shape (total_dim, n_traj)."""
    circ = circuit
    out = []
    for chunk, start in enumerate(range(0, n_traj, TRAJECTORY_CHUNK)):
        B = min(TRAJECTORY_CHUNK, n_traj - start)
        rng = make_rng(seed, chunk + 1)
        bt = _Batch(psi0, B)
        for g in circ.gates:
            bt.gate(g)
            p = noise.rate(g)
            for ch in noise.active_channels:
                if ch == "local_depolarizing" and p > 0:
                    bt.depolarize(g.sites, p, rng)
                elif ch == "amplitude_damping" and noise.gamma > 0 and g.is_entangling:
                    for s in g.sites:
                        bt.damp(s, noise.gamma, rng)
        out.append(bt.probs())
    return np.concatenate(out, axis=1)


def noisy_distribution(circuit: Circuit, noise: NoiseModel, initial_state: QuditState | None = None,
                       method: str = "auto", trajectories: int = 1000, seed: int = 0) -> np.ndarray:
    """Expected outcome distribution (readout included) under the noise model."""
    psi0 = _initial(circuit, initial_state)
    method = _method(circuit, noise, method)
    if method == "analytic":
        p = _clean_probs(circuit, psi0)
        if noise.kind == "global_depolarizing":
            f = global_fidelity(circuit, noise)
            p = f * p + (1 - f) / p.size
    elif method == "density_matrix":
        p = _noisy_dm(circuit, noise, psi0)
    else:
        p = _trajectory_probs(circuit, noise, psi0, int(trajectories), seed).mean(axis=1)
    return apply_readout(p, circuit.shape, noise.readout)


def _initial(circuit: Circuit, state):
    if state is None:
        return QuditState.basis(circuit.shape, [0] * circuit.shape.n_sites)
    if state.shape != circuit.shape:
        raise ValueError("initial state register differs from the circuit register")
    return state


def _method(circuit, noise, method):
    if method not in ("auto", "analytic", "trajectory", "density_matrix"):
        raise ValueError(f"unknown execution method {method!r}")
    if method == "auto":
        return "analytic" if noise.kind in ("none", "global_depolarizing") else "trajectory"
    if method == "analytic" and noise.kind not in ("none", "global_depolarizing"):
        raise ValueError("analytic path covers only 'none' and 'global_depolarizing' noise")
    if method == "density_matrix" and circuit.shape.total_dim > DM_MAX_DIM:
        raise ValueError(f"density-matrix path requested for total_dim {circuit.shape.total_dim} > {DM_MAX_DIM}")
    return method


def run_noisy(circuit: Circuit, noise: NoiseModel, shots: int | None, seed: int,
              initial_state: QuditState | None = None, method: str = "auto",
              trajectories: int | None = None) -> MeasurementRecord:
    """Execute a circuit under a noise model and return a measurement record.

    shots=None returns the expected distribution (trajectory average for local
    channels).  With shots, analytic and density-matrix paths sample a
    multinomial; the trajectory path runs one trajectory per shot unless
    `trajectories` is given, in which case shots are split evenly across them.
    """
    psi0 = _initial(circuit, initial_state)
    method = _method(circuit, noise, method)
    meta = {"noise": noise.name or noise.kind, "method": method}
    meta.update({k: v for k, v in circuit.metadata.items() if k == "final_order"})
    if method != "trajectory":
        p = noisy_distribution(circuit, noise, psi0, method)
        rec = MeasurementRecord(circuit.shape, p, tag="analytic", metadata=meta)
        if shots is None:
            return rec
        out = sample_shots(rec, shots, seed)
        out.tag = "sampled"
        return out
    n_traj = int(trajectories or shots or 1000)
    P = _trajectory_probs(circuit, noise, psi0, n_traj, seed)
    P = apply_readout(P, circuit.shape, noise.readout)
    meta["trajectories"] = n_traj
    if shots is None:
        return MeasurementRecord(circuit.shape, P.mean(axis=1), tag="trajectory-mean", metadata=meta)
    shots = int(shots)
    per = np.full(n_traj, shots // n_traj)
    per[: shots % n_traj] += 1
    rng = make_rng(seed, 0)
    counts = np.zeros(P.shape[0], dtype=np.int64)
    for j in np.flatnonzero(per):
        pj = np.clip(P[:, j], 0.0, None)
        counts += rng.multinomial(per[j], pj / pj.sum())
    return MeasurementRecord(circuit.shape, counts / shots, counts, shots, int(seed), RNG_ALGORITHM,
                             "sampled", meta)
