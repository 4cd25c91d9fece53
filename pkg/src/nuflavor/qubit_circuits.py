"""Two-qubit-per-neutrino encoding and the corresponding circuits.

Neutrino i occupies qubits (2i, 2i+1) with qubit 2i the high bit, so the
flavour index is 2*q[2i] + q[2i+1]:  e -> 00, mu -> 01, tau -> 10, and 11 is
outside the physical space.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sl

from .hamiltonian import NeutrinoSystem, lambda_dot_lambda, pmns_matrix
from .kak import rz, ry, synthesize
from .qudit import Circuit, Gate, RegisterShape
from .qutrit_circuits import phase_distance

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.diag([1, 1j])
_CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)
_SWAP = np.eye(4)[[0, 2, 1, 3]].astype(complex)


def rx(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


_ONE_QUBIT = {"rx": rx, "ry": ry, "rz": rz, "h": lambda a: _H, "s": lambda a: _S}


@dataclass(frozen=True)
class FlavorEncoding:
    codes: tuple = ("00", "01", "10")
    unphysical: str = "11"

    def code(self, flavor: int) -> str:
        return self.codes[flavor]

    def flavor(self, code: str):
        """Flavour index of a two-bit code, None for the unphysical code."""
        return None if code == self.unphysical else self.codes.index(code)


ENCODING = FlavorEncoding()


@dataclass
class SubspaceReport:
    physical_block_distance: float
    leakage: float
    unphysical_block_unitarity_defect: float

    def ok(self, tol: float = 1e-10, leak_tol: float = 1e-12) -> bool:
        return self.physical_block_distance <= tol and self.leakage <= leak_tol


def physical_indices(n_neutrinos: int) -> np.ndarray:
    """Register indices (2n qubits) of all strings without a 11 pair, ordered like a 3^n register."""
    idx = []
    for word in itertools.product(range(3), repeat=n_neutrinos):
        v = 0
        for f in word:
            v = 4 * v + f
        idx.append(v)
    return np.array(idx)


def physical_block(U: np.ndarray, n_neutrinos: int) -> np.ndarray:
    p = physical_indices(n_neutrinos)
    return U[np.ix_(p, p)]


def embed_physical(V: np.ndarray, n_neutrinos: int) -> np.ndarray:
    """Full 4^n matrix acting as V on the physical subspace and as identity elsewhere."""
    D = 4 ** n_neutrinos
    U = np.eye(D, dtype=complex)
    p = physical_indices(n_neutrinos)
    U[np.ix_(p, p)] = V
    return U


def subspace_report(circuit: Circuit, target: np.ndarray) -> SubspaceReport:
    """Defects of a circuit against a 3^n x 3^n physical-space target."""
    n = circuit.shape.n_sites // 2
    U = circuit.unitary()
    p = physical_indices(n)
    q = np.setdiff1d(np.arange(U.shape[0]), p)
    dist = phase_distance(U[np.ix_(p, p)], target)
    leak = max(np.max(np.abs(U[np.ix_(q, p)])), np.max(np.abs(U[np.ix_(p, q)]))) if q.size else 0.0
    Uq = U[np.ix_(q, q)]
    defect = float(np.max(np.abs(Uq.conj().T @ Uq - np.eye(q.size)))) if q.size else 0.0
    return SubspaceReport(float(dist), float(leak), defect)


# ----------------------------------------------------------------- one-body

def one_body_step_qubit(sys: NeutrinoSystem, t: float, n_neutrinos: int | None = None) -> Circuit:
    """exp(-i t H_nu) on every neutrino of a 2n-qubit register."""
    n = sys.n if n_neutrinos is None else n_neutrinos
    circ = Circuit(RegisterShape.qubits(2 * n))
    if sys.basis == "mass":
        for i in range(n):
            circ.append(Gate(rz(-sys.Omega * t), (2 * i,), "rz"))
            circ.append(Gate(rz(-sys.omega * t), (2 * i + 1,), "rz"))
        return circ
    for i in range(n):
        circ.extend(flavor_one_body_gates(sys, t, (2 * i, 2 * i + 1)))
    return circ


def flavor_one_body_block(sys: NeutrinoSystem, t: float) -> np.ndarray:
    U = pmns_matrix(sys.mixing)
    V = U @ np.diag(np.exp(-1j * sys.site_energies() * t)) @ U.conj().T
    B = np.eye(4, dtype=complex)
    B[:3, :3] = V
    return B


def flavor_one_body_gates(sys: NeutrinoSystem, t: float, qubits, tag: str = "onebody") -> list:
    """Three-CNOT realisation of diag-block(U e^{-iEt} U^dag, 1) on two qubits."""
    return _synth_gates(flavor_one_body_block(sys, t), qubits, tag)


def _synth_gates(B: np.ndarray, qubits, tag: str) -> list:
    out = []
    for m, q in synthesize(B):
        sites = tuple(qubits[k] for k in q)
        out.append(Gate(m, sites, tag if len(q) == 2 else "u", check=False))
    return out


def basis_change_gates(sys: NeutrinoSystem, qubits, inverse: bool = False, tag: str = "onebody") -> list:
    """Encoded PMNS rotation (or its inverse) on one neutrino."""
    U = pmns_matrix(sys.mixing)
    B = np.eye(4, dtype=complex)
    B[:3, :3] = U.conj().T if inverse else U
    return _synth_gates(B, qubits, tag)


# ----------------------------------------------------------------- two-body

# Gate tables read off the two drawn circuits, wires 0..3 top to bottom
# (wires 0,1 = neutrino i high/low bit, wires 2,3 = neutrino j).  Angles are
# strings in the symbols a (the rotation angle) and pi.
CIRCUIT_A = [
    ("rz", "-pi/2", 2), ("rz", "-pi/2", 3), ("cx", 3, 1), ("cx", 2, 0),
    ("rz", "pi/2+a", 0), ("rz", "pi/2+a", 1), ("ry", "-pi/2-a", 2), ("ry", "-pi/2-a", 3),
    ("cx", 1, 3), ("cx", 0, 2), ("ry", "pi/2+a", 2), ("ry", "pi/2+a", 3),
    ("cx", 3, 1), ("cx", 2, 0), ("rz", "pi/2", 0), ("rz", "pi/2", 1),
    ("cz", 1, 2), ("cz", 0, 3),
    ("h", "", 0), ("h", "", 1), ("h", "", 2), ("h", "", 3),
    ("s", "", 0), ("s", "", 1), ("s", "", 2), ("s", "", 3),
    ("cx", 0, 2), ("cx", 1, 3), ("rx", "a", 0), ("rx", "a", 1), ("rz", "a", 2), ("rz", "a", 3),
    ("cx", 0, 2), ("cx", 1, 3), ("rz", "-pi/2", 0), ("rz", "-pi/2", 2), ("h", "", 0), ("h", "", 2),
    ("cx", 2, 1), ("cx", 0, 3), ("rz", "-pi/2", 0), ("rz", "-pi/2", 2),
    ("h", "", 0), ("h", "", 1), ("h", "", 2), ("h", "", 3),
    ("s", "", 0), ("s", "", 1), ("s", "", 2), ("s", "", 3),
    ("cx", 1, 3), ("cx", 0, 2), ("rx", "a", 0), ("rx", "a", 1), ("rz", "a", 2),
    ("cx", 1, 3), ("cx", 0, 2), ("rz", "-pi/2", 0), ("rz", "-pi/2", 2), ("h", "", 0), ("h", "", 2),
    ("cx", 2, 1), ("cx", 0, 3), ("rz", "-pi/2", 0), ("rz", "-pi/2", 2),
    ("h", "", 0), ("h", "", 2), ("s", "", 0), ("s", "", 2),
    ("cx", 0, 2), ("rx", "a", 0), ("rz", "a", 2), ("cx", 0, 2),
    ("rz", "-pi/2", 0), ("rz", "-pi/2", 2), ("h", "", 0), ("h", "", 2),
    ("cz", 0, 3), ("cz", 1, 2), ("h", "", 1), ("h", "", 3), ("s", "", 1), ("s", "", 3),
]

CIRCUIT_B = [
    ("cx", 0, 2), ("cx", 1, 3), ("ry", "pi/4", 0), ("ry", "pi/4", 1),
    ("cx", 2, 0), ("cx", 3, 1), ("ry", "-pi/4", 0), ("ry", "-pi/4", 1), ("rz", "-a", 2), ("rz", "-a", 3),
    ("cx", 0, 2), ("cx", 1, 3), ("cx", 0, 1), ("rz", "-2*a", 1), ("rz", "a", 2), ("rz", "a", 3),
    ("cx", 0, 1), ("cx", 1, 2), ("rz", "a", 2), ("cx", 0, 2), ("rz", "-a", 2),
    ("cx", 0, 3), ("cx", 1, 2), ("rz", "a", 3), ("cx", 1, 3), ("rz", "-a", 3), ("cx", 0, 3),
    ("ry", "pi/4", 0), ("ry", "pi/4", 1), ("cx", 3, 1), ("cx", 2, 0), ("ry", "-pi/4", 0), ("ry", "-pi/4", 1),
    ("cx", 1, 3), ("cx", 0, 2),
]

_TABLES = {"A": CIRCUIT_A, "B": CIRCUIT_B}


_COMPILED = {}


def _angle(expr: str, a: float) -> float:
    if not expr:
        return 0.0
    if expr not in _COMPILED:
        _COMPILED[expr] = compile(expr, "<angle>", "eval")
    return float(eval(_COMPILED[expr], {"__builtins__": {}}, {"a": a, "pi": np.pi}))


def _table_gates(table, alpha: float, wires, tag: str) -> list:
    out = []
    for op in table:
        if op[0] in ("cx", "cz"):
            m = _CX if op[0] == "cx" else _CZ
            out.append(Gate.trusted(m, (wires[op[1]], wires[op[2]]), tag, True, op[0] == "cz"))
        else:
            kind, expr, w = op
            out.append(Gate.trusted(_ONE_QUBIT[kind](_angle(expr, alpha)), (wires[w],), kind, False,
                                    kind in ("rz", "s")))
    return out


def two_body_target(alpha: float) -> np.ndarray:
    return sl.expm(-1j * alpha * lambda_dot_lambda())


@functools.lru_cache(maxsize=None)
def angle_sign(variant: str) -> float:
    """Sign s such that table(s*alpha) realises exp(-i alpha lambda.lambda); resolved once."""
    for s in (1.0, -1.0):
        good = True
        for a in (0.41, 1.27):
            c = Circuit(RegisterShape.qubits(4), _table_gates(_TABLES[variant], s * a, range(4), "twobody"))
            rep = subspace_report(c, two_body_target(a))
            if rep.physical_block_distance > 1e-8 or rep.leakage > 1e-8:
                good = False
                break
        if good:
            return s
    raise RuntimeError(f"circuit {variant} does not reproduce exp(-i a lambda.lambda) for either angle sign")


def two_body_gates(alpha: float, variant: str, wires, tag: str = "twobody") -> list:
    """Gate list for exp(-i alpha lambda.lambda) on wires (hi_i, lo_i, hi_j, lo_j)."""
    if variant not in _TABLES:
        raise ValueError(f"variant must be 'A' or 'B', got {variant!r}")
    return _table_gates(_TABLES[variant], angle_sign(variant) * alpha, tuple(wires), tag)


def two_body_gate_qubit(alpha: float, variant: str = "B", verify: bool = True) -> Circuit:
    circ = Circuit(RegisterShape.qubits(4), two_body_gates(alpha, variant, range(4)))
    circ.metadata.update(variant=variant, angle_sign=angle_sign(variant))
    if verify:
        rep = subspace_report(circ, two_body_target(alpha))
        circ.metadata["report"] = rep
        if rep.physical_block_distance > 1e-8 or rep.leakage > 1e-8:
            raise RuntimeError(f"two-body circuit {variant} failed verification: {rep}")
    return circ


# ----------------------------------------------------------------- linear-chain routing

def _inversions(p, q) -> int:
    pos = {l: i for i, l in enumerate(q)}
    seq = [pos[l] for l in p]
    return sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])


def _swap_paths(p, q):
    """All minimal adjacent-transposition sequences turning layout p into q."""
    if p == q:
        yield ()
        return
    d = _inversions(p, q)
    for i in range(len(p) - 1):
        r = list(p)
        r[i], r[i + 1] = r[i + 1], r[i]
        r = tuple(r)
        if _inversions(r, q) < d:
            for rest in _swap_paths(r, q):
                yield (i,) + rest


def route_linear_chain(circuit: Circuit, initial_layout=None, final_layout=None) -> Circuit:
    """Insert SWAPs (3 CNOTs each) so every two-qubit gate acts on chain neighbours.

    A layout lists, for each chain position, the logical wire sitting there.
    The SWAP count is minimised exactly by dynamic programming over layouts;
    ties are broken by the smallest entangling depth.  With the default
    arguments both the starting and the final placement are free, so the
    routed circuit equals the original up to a relabelling of qubits,
    recorded in ``metadata['initial_layout']`` and ``metadata['final_layout']``.
    """
    n = circuit.shape.n_sites
    perms = list(itertools.permutations(range(n)))
    starts = perms if initial_layout is None else [tuple(initial_layout)]
    finals = perms if final_layout is None else [tuple(final_layout)]
    two = [g for g in circuit.gates if len(g.sites) == 2]
    if any(len(g.sites) > 2 for g in circuit.gates):
        raise ValueError("routing supports one- and two-qubit gates only")

    def ok(lay, g):
        a, b = g.sites
        return abs(lay.index(a) - lay.index(b)) == 1

    # backward pass: exact swap cost-to-go per layout before gate k
    INF = float("inf")
    togo = {p: min(_inversions(p, f) for f in finals) for p in perms}
    back = [None] * (len(two) + 1)
    back[len(two)] = togo
    for k in range(len(two) - 1, -1, -1):
        nxt = back[k + 1]
        cur = {}
        valid = [q for q in perms if ok(q, two[k])]
        for p in perms:
            cur[p] = min(_inversions(p, q) + nxt[q] for q in valid)
        back[k] = cur
    best = min(back[0][s] for s in starts)

    # forward pass restricted to optimal transitions, tracking per-position depth
    states = {(s, (0,) * n): (0, s, ()) for s in starts if back[0][s] == best}
    for k, g in enumerate(two):
        new = {}
        for (p, tv), (cost, s0, hist) in states.items():
            for q in perms:
                if not ok(q, g):
                    continue
                step = _inversions(p, q)
                if cost + step + back[k + 1][q] != best:
                    continue
                for path in _swap_paths(p, q):
                    t = list(tv)
                    for i in path:
                        t[i] = t[i + 1] = max(t[i], t[i + 1]) + 3
                    i, j = sorted((q.index(g.sites[0]), q.index(g.sites[1])))
                    t[i] = t[j] = max(t[i], t[j]) + 1
                    key = (q, tuple(t))
                    if key not in new:
                        new[key] = (cost + step, s0, hist + (path,))
        states = new
    cands = []
    for (p, tv), (cost, s0, hist) in states.items():
        for f in finals:
            if cost + _inversions(p, f) != best:
                continue
            for path in _swap_paths(p, f):
                t = list(tv)
                for i in path:
                    t[i] = t[i + 1] = max(t[i], t[i + 1]) + 3
                cands.append((max(t), s0, hist + (path,), f))
    cands.sort(key=lambda c: (c[0], c[1], c[2]))
    _, s0, hist, f = cands[0]

    # emit the routed circuit on chain positions
    out = Circuit(RegisterShape.qubits(n), metadata=dict(circuit.metadata))
    lay = list(s0)
    k = 0

    def emit_swaps(path):
        for i in path:
            for c, t in ((i, i + 1), (i + 1, i), (i, i + 1)):
                out.append(Gate(_CX, (c, t), "swap", True, check=False))
            lay[i], lay[i + 1] = lay[i + 1], lay[i]

    for g in circuit.gates:
        if len(g.sites) == 2:
            emit_swaps(hist[k])
            k += 1
        out.append(g.on(tuple(lay.index(s) for s in g.sites)))
    emit_swaps(hist[k])
    out.metadata.update(initial_layout=tuple(s0), final_layout=tuple(lay), swaps=best)
    return out


def relabel_matrix(layout) -> np.ndarray:
    """Permutation taking logical-wire ordering to chain ordering for a given layout."""
    n = len(layout)
    D = 2 ** n
    idx = np.arange(D).reshape((2,) * n).transpose(layout).reshape(-1)
    return np.eye(D)[idx]
