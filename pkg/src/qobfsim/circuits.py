"""Quantum circuits in deferred-measurement normal form, their unitaries,
induced channels, controlled lifts, and the JSON interchange format.

Conventions: qubit 0 is the most significant basis-index bit; a circuit with
parameters (n, n_out, m, s) prepares m - n ancilla |1> qubits on the leading
wires, takes the n-qubit input on the trailing wires, applies its gate list,
and outputs the last n_out qubits.  Only unitary gate kinds are accepted;
measurement-bearing inputs are rejected at parse time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from qobfsim.linalg import (
    DEFAULT_TOL,
    dagger,
    operator_norm,
    partial_trace_leading,
    require_unitary,
    trace_norm,
)

DENSE_QUBIT_CAP = 12
STATEVECTOR_QUBIT_CAP = 20

_S2 = 1 / np.sqrt(2)
_FIXED_GATES: dict[str, np.ndarray] = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "S": np.diag([1, 1j]).astype(complex),
    "T": np.diag([1, np.exp(1j * np.pi / 4)]).astype(complex),
    "CNOT": np.eye(4, dtype=complex)[:, [0, 1, 3, 2]],
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.eye(4, dtype=complex)[:, [0, 2, 1, 3]],
    "TOFFOLI": np.eye(8, dtype=complex)[:, [0, 1, 2, 3, 4, 5, 7, 6]],
}


@dataclass(frozen=True, eq=False)
class GateOp:
    """A unitary gate applied to an ordered tuple of qubit wires."""

    kind: str
    targets: tuple[int, ...]
    matrix: np.ndarray | None = None

    def resolved_matrix(self) -> np.ndarray:
        if self.kind == "MATRIX":
            return self.matrix
        return _FIXED_GATES[self.kind]


def gate(kind: str, *targets: int, matrix: np.ndarray | None = None) -> GateOp:
    """Validated gate constructor."""
    kind = kind.upper()
    if kind == "MATRIX":
        if matrix is None:
            raise ValueError("MATRIX gate needs an explicit unitary payload")
        mat = require_unitary(matrix, DEFAULT_TOL)
        arity = int(np.log2(mat.shape[0]))
        if 2**arity != mat.shape[0]:
            raise ValueError("MATRIX payload dimension must be a power of two")
    elif kind in _FIXED_GATES:
        mat = None
        arity = int(np.log2(_FIXED_GATES[kind].shape[0]))
    else:
        raise ValueError(f"unsupported gate kind {kind!r} (measurements are not accepted)")
    if len(targets) != arity:
        raise ValueError(f"{kind} expects {arity} targets, got {len(targets)}")
    if len(set(targets)) != len(targets) or any(t < 0 for t in targets):
        raise ValueError("targets must be distinct non-negative wire indices")
    return GateOp(kind=kind, targets=tuple(int(t) for t in targets), matrix=mat)


@dataclass(frozen=True, eq=False)
class QuantumCircuit:
    """Parameter (n, n_out, m, s) circuit: s = len(gates)."""

    n: int
    n_out: int
    m: int
    gates: tuple[GateOp, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not (0 <= self.n <= self.m and 0 <= self.n_out <= self.m):
            raise ValueError("need n <= m and n_out <= m")
        for g in self.gates:
            if max(g.targets, default=-1) >= self.m:
                raise ValueError(f"gate {g.kind} targets exceed width {self.m}")

    @property
    def s(self) -> int:
        return len(self.gates)

    @property
    def parameter(self) -> tuple[int, int, int, int]:
        return (self.n, self.n_out, self.m, self.s)


def _apply_gate_axes(arr: np.ndarray, mat: np.ndarray, targets: tuple[int, ...]) -> np.ndarray:
    k = len(targets)
    gm = mat.reshape([2] * (2 * k))
    moved = np.tensordot(gm, arr, axes=(list(range(k, 2 * k)), list(targets)))
    return np.moveaxis(moved, range(k), targets)


def apply_circuit_to_state(q: QuantumCircuit, psi: np.ndarray) -> np.ndarray:
    """Matrix-free statevector application of the gate list (up to 20 qubits)."""
    if q.m > STATEVECTOR_QUBIT_CAP:
        raise ValueError(f"statevector application capped at {STATEVECTOR_QUBIT_CAP} qubits")
    vec = np.asarray(psi, dtype=complex).ravel()
    if vec.size != 2**q.m:
        raise ValueError("state dimension does not match circuit width")
    arr = vec.reshape([2] * q.m) if q.m else vec
    for g in q.gates:
        arr = _apply_gate_axes(arr, g.resolved_matrix(), g.targets)
    return arr.reshape(-1)


def compose_unitary(q: QuantumCircuit) -> np.ndarray:
    """Dense 2^m unitary of the gate list, in application order."""
    if q.m > DENSE_QUBIT_CAP:
        raise ValueError(f"dense composition capped at {DENSE_QUBIT_CAP} qubits")
    dim = 2**q.m
    arr = np.eye(dim, dtype=complex).reshape([2] * q.m + [dim])
    for g in q.gates:
        arr = _apply_gate_axes(arr, g.resolved_matrix(), g.targets)
    return arr.reshape(dim, dim)


def controlled_lift(q: QuantumCircuit, c: int) -> QuantumCircuit:
    """Circuit of width c + m computing ctrl_{1^c}-U: the original unitary
    fires only when the c leading wires are all |1>, realized gate-by-gate."""
    if c < 0:
        raise ValueError("control count must be >= 0")
    if c == 0:
        return q
    if q.m + c > DENSE_QUBIT_CAP:
        raise ValueError("lifted width exceeds the dense cap")
    lifted = []
    for g in q.gates:
        base = g.resolved_matrix()
        k = base.shape[0]
        block = np.eye(2**c * k, dtype=complex)
        block[-k:, -k:] = base
        targets = tuple(range(c)) + tuple(t + c for t in g.targets)
        lifted.append(gate("MATRIX", *targets, matrix=block))
    return QuantumCircuit(n=q.n + c, n_out=q.n_out, m=q.m + c, gates=tuple(lifted))


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Channel:
    """Quantum map from n_in to n_out qubits, as an ancilla-|1> unitary
    dilation or a (trace-1 normalized) Choi matrix."""

    n_in: int
    n_out: int
    unitary: np.ndarray | None = None
    width: int = 0
    choi: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.unitary is None and self.choi is None:
            raise ValueError("channel needs a dilation or a Choi matrix")


def channel_of(q: QuantumCircuit) -> Channel:
    """The channel Tr_[:-n_out][ U (|1...1><1...1| (x) rho) U+ ]."""
    return Channel(n_in=q.n, n_out=q.n_out, unitary=compose_unitary(q), width=q.m)


def channel_of_unitary(v: np.ndarray, n_in: int, n_out: int) -> Channel:
    v = require_unitary(v)
    width = int(np.log2(v.shape[0]))
    if 2**width != v.shape[0] or width < max(n_in, n_out):
        raise ValueError("dilation dimension inconsistent with qubit counts")
    return Channel(n_in=n_in, n_out=n_out, unitary=np.asarray(v, dtype=complex), width=width)


def channel_apply(ch: Channel, rho: np.ndarray) -> np.ndarray:
    """Apply the channel to an n_in-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    d_in = 2**ch.n_in
    if rho.shape != (d_in, d_in):
        raise ValueError("input dimension mismatch")
    if ch.unitary is not None:
        anc_dim = 2 ** (ch.width - ch.n_in)
        sigma = np.zeros((anc_dim * d_in, anc_dim * d_in), dtype=complex)
        sigma[-d_in:, -d_in:] = rho  # leading ancillas pinned to |1...1>
        out = ch.unitary @ sigma @ dagger(ch.unitary)
        return partial_trace_leading(out, ch.width, ch.n_out)
    d_out = 2**ch.n_out
    j = ch.choi.reshape(d_out, d_in, d_out, d_in)
    return d_in * np.einsum("aibj,ji->ab", j, rho.T)


def choi_matrix(ch: Channel) -> np.ndarray:
    """Trace-1 Choi state: (channel (x) id) applied to the normalized
    maximally entangled state on n_in + n_in qubits."""
    if ch.choi is not None:
        return ch.choi
    d_in = 2**ch.n_in
    keep = ch.width - ch.n_out
    k = ch.unitary[:, -d_in:]  # columns with all-ones ancilla prefix
    t = k.reshape(2**keep, 2**ch.n_out, d_in)
    j = np.einsum("abi,acj->bicj", t, t.conj()) / d_in
    return j.reshape(2**ch.n_out * d_in, 2**ch.n_out * d_in)


def choi_distance(ch0: Channel, ch1: Channel) -> float:
    """Trace distance between the normalized Choi states.

    Zero iff the channels are equal; it lower-bounds the diamond distance and
    is used here as the cheap surrogate for channel comparisons.
    """
    if (ch0.n_in, ch0.n_out) != (ch1.n_in, ch1.n_out):
        raise ValueError("channel signatures differ")
    return trace_norm(choi_matrix(ch0) - choi_matrix(ch1))


def channels_equal(ch0: Channel, ch1: Channel, tol: float = 1e-9) -> bool:
    return choi_distance(ch0, ch1) <= tol


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def _matrix_to_pairs(mat: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(mat).ravel()]


def _matrix_from_pairs(pairs: list, dim: int) -> np.ndarray:
    flat = np.array([complex(re, im) for re, im in pairs])
    if flat.size != dim * dim:
        raise ValueError("matrix payload has wrong length")
    return flat.reshape(dim, dim)


def circuit_to_json_dict(q: QuantumCircuit) -> dict:
    gates = []
    for g in q.gates:
        entry: dict = {"kind": g.kind, "targets": list(g.targets)}
        if g.kind == "MATRIX":
            entry["matrix"] = _matrix_to_pairs(g.matrix)
        gates.append(entry)
    return {"n": q.n, "n_out": q.n_out, "m": q.m, "gates": gates}


def circuit_from_json_dict(data: dict) -> QuantumCircuit:
    try:
        n, n_out, m = int(data["n"]), int(data["n_out"]), int(data["m"])
        raw_gates = data.get("gates", [])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed circuit JSON: {exc}") from None
    gates = []
    for entry in raw_gates:
        kind = str(entry["kind"]).upper()
        targets = [int(t) for t in entry["targets"]]
        if kind == "MATRIX":
            dim = 2 ** len(targets)
            gates.append(gate(kind, *targets, matrix=_matrix_from_pairs(entry["matrix"], dim)))
        else:
            gates.append(gate(kind, *targets))
    return QuantumCircuit(n=n, n_out=n_out, m=m, gates=tuple(gates))


def load_circuit(path: str) -> QuantumCircuit:
    with open(path) as fh:
        return circuit_from_json_dict(json.load(fh))


def save_circuit(q: QuantumCircuit, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(circuit_to_json_dict(q), fh, indent=2)


def random_circuit(
    n: int,
    n_out: int,
    m: int,
    s: int,
    rng: np.random.Generator,
    kinds: tuple[str, ...] = ("X", "Y", "Z", "H", "S", "T", "CNOT", "CZ", "SWAP"),
) -> QuantumCircuit:
    """Random gate list over the fixed gate set (test/workload generator)."""
    gates = []
    for _ in range(s):
        kind = kinds[rng.integers(len(kinds))]
        arity = int(np.log2(_FIXED_GATES[kind].shape[0]))
        if arity > m:
            kind, arity = "H", 1
        targets = rng.choice(m, size=arity, replace=False)
        gates.append(gate(kind, *[int(t) for t in targets]))
    return QuantumCircuit(n=n, n_out=n_out, m=m, gates=tuple(gates))
