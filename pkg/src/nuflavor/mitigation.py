"""Decoherence renormalisation (DR), post-selection, simplex projection, symmetrisation.

Single-neutrino pipeline order: DR on raw joint probabilities -> post-selection
normalisation -> projection onto the probability simplex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hamiltonian import parse_flavors
from .qudit import MeasurementRecord, make_rng

DR_GUARD = 1e-6


def d_phs(n_neutrinos: int) -> float:
    """Depolarised value of P(target flavour, all pairs physical): 3^(N-1)/4^N."""
    return 3.0 ** (n_neutrinos - 1) / 4.0 ** n_neutrinos


D_SNHS = 0.25


def d_full(n_units: int, d_local: int = 4) -> float:
    """Depolarised value of one full outcome string over n units of size d_local."""
    return 1.0 / float(d_local) ** n_units


# ----------------------------------------------------------------- DR

@dataclass
class MitigationInput:
    """Raw physics and identity-circuit quantities for one DR application.

    The records may be MeasurementRecords (then `observable` extracts the
    value) or plain numbers/arrays of already extracted probabilities.
    """
    physics_record: object
    identity_record: object
    d_n: float
    identity_exact: float | np.ndarray = 1.0
    observable: Callable | None = None
    guard: float = DR_GUARD

    def _value(self, rec):
        if isinstance(rec, MeasurementRecord):
            if self.observable is None:
                raise ValueError("an observable is needed to extract a value from a MeasurementRecord")
            return np.asarray(self.observable(rec), dtype=float)
        return np.asarray(rec, dtype=float)

    @property
    def physics(self) -> np.ndarray:
        return self._value(self.physics_record)

    @property
    def identity(self) -> np.ndarray:
        return self._value(self.identity_record)


@dataclass
class DREstimate:
    value: np.ndarray
    status: np.ndarray  # "ok" or "singular" per entry

    @property
    def ok(self) -> bool:
        return bool(np.all(self.status == "ok"))

    def __float__(self):
        return float(self.value)


def decoherence_renormalize(inp: MitigationInput) -> DREstimate:
    """d + (P_id^ex - d)/(P_id^noisy - d) * (P_phys^noisy - d), elementwise.

    Entries whose denominator is within the guard are returned unmitigated
    and flagged 'singular'.
    """
    d = float(inp.d_n)
    phys = inp.physics
    ident = np.broadcast_to(inp.identity, np.broadcast_shapes(np.shape(phys), np.shape(inp.identity)))
    phys = np.broadcast_to(phys, ident.shape)
    ex = np.broadcast_to(np.asarray(inp.identity_exact, dtype=float), ident.shape)
    den = ident - d
    bad = np.abs(den) <= inp.guard
    safe = np.where(bad, 1.0, den)
    val = np.where(bad, phys, d + (ex - d) / safe * (phys - d))
    status = np.where(bad, "singular", "ok")
    return DREstimate(np.asarray(val, dtype=float), np.asarray(status))


# ----------------------------------------------------------------- post-selection

@dataclass
class FlavorEstimate:
    raw: np.ndarray       # joint probabilities entering DR (P_e, P_mu, P_tau)
    weight: float         # retained probability mass
    probs: np.ndarray     # normalised flavour probabilities (NaN when empty)
    empty: bool = False


def _pair_tensor(record: MeasurementRecord) -> tuple:
    dims = record.shape.dims
    if all(d == 3 for d in dims):
        return record.probabilities.reshape((3,) * len(dims)), 3
    if all(d == 2 for d in dims) and len(dims) % 2 == 0:
        n = len(dims) // 2
        return record.probabilities.reshape((4,) * n), 4
    raise ValueError("post-selection needs a qutrit register or two qubits per neutrino")


def position_of(neutrino: int, order=None) -> int:
    return int(neutrino) if order is None else list(order).index(int(neutrino))


def post_select(record: MeasurementRecord, scheme: str, neutrino: int, order=None) -> FlavorEstimate:
    """Single-neutrino flavour probabilities under pHS or snHS.

    `order` is the circuit's final_order (logical neutrino at each position).
    Qutrit records carry no unphysical states and reduce to a plain marginal.
    """
    if scheme not in ("pHS", "snHS"):
        raise ValueError(f"scheme must be 'pHS' or 'snHS', got {scheme!r}")
    t, d = _pair_tensor(record)
    n = t.ndim
    pos = position_of(neutrino, order)
    if not 0 <= pos < n:
        raise ValueError(f"neutrino {neutrino} outside register of {n}")
    if d == 4 and scheme == "pHS":
        t = t[(slice(0, 3),) * n]  # drop every outcome with a 11 pair
    other = tuple(a for a in range(n) if a != pos)
    raw = t.sum(axis=other)[:3]
    weight = float(raw.sum())
    if weight <= 0:
        return FlavorEstimate(raw, 0.0, np.full(3, np.nan), True)
    return FlavorEstimate(raw, weight, raw / weight)


def persistence_raw(record: MeasurementRecord, word, order=None) -> float:
    """P(outcome string equals the initial flavour word), positions mapped via order."""
    t, d = _pair_tensor(record)
    flv = parse_flavors(word)
    n = t.ndim
    idx = [0] * n
    for logical, f in enumerate(flv):
        idx[position_of(logical, order)] = f
    return float(t[tuple(idx)])


# ----------------------------------------------------------------- clamping and symmetry

def project_to_simplex(p) -> np.ndarray:
    """Euclidean projection onto {q >= 0, sum q = 1} (sort-and-threshold)."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("simplex projection needs finite entries")
    u = np.sort(p)[::-1]
    css = np.cumsum(u)
    m = np.arange(1, p.size + 1)
    cond = u + (1 - css) / m > 0
    k = m[cond][-1]
    shift = (1 - css[k - 1]) / k
    return np.maximum(p + shift, 0.0)


def is_palindrome(word) -> bool:
    f = parse_flavors(word)
    return tuple(f) == tuple(reversed(f))


def symmetrize(P, word) -> np.ndarray:
    """Average neutrino i with neutrino N+1-i; P has the neutrino axis second to last."""
    if not is_palindrome(word):
        raise ValueError("symmetrisation needs a palindromic initial flavour word; "
                         "the i <-> N+1-i exchange symmetry does not hold otherwise")
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + np.flip(P, axis=-2))


# ----------------------------------------------------------------- full single-neutrino pipeline

def default_d(scheme: str, n_neutrinos: int) -> float:
    return d_phs(n_neutrinos) if scheme == "pHS" else D_SNHS


def mitigated_flavors(physics: MeasurementRecord, identity: MeasurementRecord | None, word,
                      scheme: str = "pHS", d_n: float | None = None, physics_order=None,
                      identity_order=None, dr: bool = True, project: bool = True) -> np.ndarray:
    """(N, 3) flavour probabilities: DR -> normalisation -> simplex projection."""
    flv = parse_flavors(word)
    n = len(flv)
    qutrit = all(d == 3 for d in physics.shape.dims)
    if d_n is None:
        d_n = 1.0 / 3.0 if qutrit else default_d(scheme, n)
    out = np.zeros((n, 3))
    for i in range(n):
        est = post_select(physics, scheme, i, physics_order)
        val = est.raw
        if dr and identity is not None:
            idv = post_select(identity, scheme, i, identity_order).raw[flv[i]]
            val = decoherence_renormalize(MitigationInput(val, idv, d_n)).value
        s = val.sum()
        val = val / s if s > 0 else np.full(3, 1.0 / 3.0)
        out[i] = project_to_simplex(val) if project else val
    return out


def mitigated_persistence(physics: MeasurementRecord, identity: MeasurementRecord | None, word,
                          physics_order=None, identity_order=None, dr: bool = True) -> float:
    flv = parse_flavors(word)
    d_local = 3 if all(d == 3 for d in physics.shape.dims) else 4
    p = persistence_raw(physics, flv, physics_order)
    if dr and identity is not None:
        pid = persistence_raw(identity, flv, identity_order)
        p = float(decoherence_renormalize(MitigationInput(p, pid, d_full(len(flv), d_local))).value)
    return float(np.clip(p, 0.0, 1.0))


# ----------------------------------------------------------------- effective d scan

@dataclass
class DnScan:
    d_grid: np.ndarray
    curves: np.ndarray   # (G, T, N, 3)
    rms: np.ndarray      # (G,)

    @property
    def best(self) -> float:
        return float(self.d_grid[int(np.argmin(self.rms))])


def effective_dn_scan(physics_raw, identity_raw, exact, d_grid, project: bool = True,
                      word=None) -> DnScan:
    """Apply DR for every d in the grid.

    physics_raw: (T, N, 3) raw joint probabilities; identity_raw: (N,) or (T, N)
    raw initial-flavour probabilities of the identity circuit; exact: (T, N, 3).
    When `word` is given (palindromic) the curves are symmetrised before the RMS.
    """
    d_grid = np.asarray(d_grid, dtype=float)
    if np.any((d_grid <= 0) | (d_grid >= 1)):
        raise ValueError("d grid must lie in (0, 1)")
    phys = np.asarray(physics_raw, dtype=float)
    T, N, _ = phys.shape
    ident = np.broadcast_to(np.asarray(identity_raw, dtype=float), (T, N))
    exact = np.asarray(exact, dtype=float)
    curves = np.zeros((d_grid.size, T, N, 3))
    for g, d in enumerate(d_grid):
        val = decoherence_renormalize(MitigationInput(phys, ident[..., None], d)).value
        s = val.sum(axis=-1, keepdims=True)
        val = val / np.where(s > 0, s, 1.0)
        if project:
            val = np.apply_along_axis(project_to_simplex, -1, val)
        if word is not None:
            val = symmetrize(val, word)
        curves[g] = val
    ex = symmetrize(exact, word) if word is not None else exact
    rms = np.sqrt(np.mean((curves - ex[None]) ** 2, axis=(1, 2, 3)))
    return DnScan(d_grid, curves, rms)


# ----------------------------------------------------------------- bootstrap

def resample(record: MeasurementRecord, rng) -> MeasurementRecord:
    if record.counts is None or record.shots is None:
        raise ValueError("bootstrap needs sampled records (counts)")
    c = rng.multinomial(record.shots, record.counts / record.shots)
    return MeasurementRecord(record.shape, c / record.shots, c, record.shots, record.seed, record.rng,
                             "bootstrap", dict(record.metadata))


@dataclass
class BootstrapResult:
    estimate: np.ndarray
    sigma: np.ndarray
    replicas: np.ndarray = field(repr=False)


def bootstrap(records: Sequence[MeasurementRecord], pipeline: Callable, B: int = 200,
              seed: int = 0) -> BootstrapResult:
    """Resample every record's shots B times, rerun the full pipeline, report the 1 sigma spread."""
    est = np.asarray(pipeline(*records), dtype=float)
    reps = []
    for b in range(int(B)):
        rng = make_rng(seed, b + 1)
        reps.append(np.asarray(pipeline(*[resample(r, rng) for r in records]), dtype=float))
    reps = np.array(reps)
    return BootstrapResult(est, reps.std(axis=0, ddof=1), reps)
