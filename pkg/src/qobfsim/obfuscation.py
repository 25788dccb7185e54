"""End-to-end obfuscation pipeline: program assembly and evaluation, the
invariant sampler on unitary extensions, and the stateful ideal functionality
with both its exact relation-register implementation and the sampled-unitary
implementation.

Pipeline shape, for security parameter lam and a circuit Q with parameters
(n, n_out, m, s): widen to m' = lam + m working qubits, set d = 2^m' - 2^n so
that the protected sector is spanned by the ancilla-all-ones basis states,
and wrap the lam-controlled circuit unitary between a keyed
subspace-preserving unitary (right) and a keyed scrambler on the non-output
qubits (left).  The wrapped unitary goes to a pluggable backend; the
transparent reference backend stores it in the clear and evaluates exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qobfsim import path_recording as pr
from qobfsim.circuits import Channel, QuantumCircuit, channel_of, choi_matrix, compose_unitary, controlled_lift
from qobfsim.ensembles import random_spspru_key, spspru_build
from qobfsim.linalg import (
    SubspaceSpec,
    dagger,
    haar_subspace_unitary,
    haar_unitary,
    require_density,
    require_unitary,
)


@dataclass(frozen=True)
class CircuitParameter:
    n: int
    n_out: int
    m: int
    s: int

    def __post_init__(self) -> None:
        if not (self.n <= self.m and self.n_out <= self.m and self.s >= 0):
            raise ValueError("invalid circuit parameter tuple")


class TransparentBackend:
    """Zero-security reference backend: stores the wrapped unitary in the
    clear, evaluates it exactly, and hands the auxiliary state back unchanged."""

    name = "transparent"

    def obfuscate(self, lam: int, unitary: np.ndarray):
        aux = np.array([1.0 + 0.0j])
        oracle = {"unitary": np.asarray(unitary, dtype=complex)}
        return aux, oracle

    def eval(self, oracle, aux, vec: np.ndarray):
        out = oracle["unitary"] @ np.asarray(vec, dtype=complex)
        return out, aux


def reference_backend() -> TransparentBackend:
    return TransparentBackend()


@dataclass
class ObfuscationProgram:
    """Evaluation handle produced by qobf: backend aux state + oracle handle
    plus the public layout data needed to feed inputs in."""

    parameter: CircuitParameter
    lam: int
    m_prime: int
    spec: SubspaceSpec
    backend: TransparentBackend
    backend_aux: object
    backend_oracle: object


def qobf(
    lam: int,
    q: QuantumCircuit,
    backend: TransparentBackend,
    rng: np.random.Generator,
) -> ObfuscationProgram:
    """Assemble and hand the wrapped unitary to the backend.

    Dense pipeline, capped at lam + m <= 12 qubits.  The keyed scrambler on
    the non-output qubits reuses the subspace-preserving construction with a
    trivial fixed sector (d equal to the full dimension).
    """
    m_prime = lam + q.m
    if m_prime > 12:
        raise ValueError("dense pipeline capped at lam + m <= 12 qubits")
    d = 2**m_prime - 2**q.n
    spec = SubspaceSpec(n=m_prime, d=d)
    key = random_spspru_key(rng)
    key_prime = random_spspru_key(rng)
    sps = spspru_build(key, spec)
    ctrl_u = compose_unitary(controlled_lift(q, lam))
    scram_qubits = m_prime - q.n_out
    scrambler = spspru_build(key_prime, SubspaceSpec(n=scram_qubits, d=2**scram_qubits))
    wrapped = np.kron(scrambler, np.eye(2**q.n_out)) @ ctrl_u @ sps
    aux, oracle = backend.obfuscate(lam, wrapped)
    return ObfuscationProgram(
        parameter=CircuitParameter(q.n, q.n_out, q.m, q.s),
        lam=lam,
        m_prime=m_prime,
        spec=spec,
        backend=backend,
        backend_aux=aux,
        backend_oracle=oracle,
    )


def _ones_prefixed(psi: np.ndarray, m_prime: int, n: int) -> np.ndarray:
    vec = np.zeros(2**m_prime, dtype=complex)
    vec[-(2**n) :] = psi
    return vec


def qeval(program: ObfuscationProgram, rho: np.ndarray) -> np.ndarray:
    """Evaluate the program on an n-qubit density matrix; returns the trailing
    n_out qubits.  The recovered auxiliary state replaces the stored one
    (reusability contract: it must match within 1e-9 for the transparent
    backend)."""
    par = program.parameter
    rho = require_density(np.asarray(rho, dtype=complex), tol=1e-8)
    vals, vecs = np.linalg.eigh((rho + dagger(rho)) / 2)
    out = np.zeros((2**program.m_prime, 2**program.m_prime), dtype=complex)
    for p, v in zip(vals, vecs.T):
        if p < 1e-14:
            continue
        in_vec = _ones_prefixed(v, program.m_prime, par.n)
        out_vec, aux = program.backend.eval(program.backend_oracle, program.backend_aux, in_vec)
        if np.linalg.norm(np.asarray(aux) - np.asarray(program.backend_aux)) > 1e-9:
            raise RuntimeError("auxiliary state not recovered after evaluation")
        program.backend_aux = aux
        out += p * np.outer(out_vec, out_vec.conj())
    from qobfsim.linalg import partial_trace_leading

    return partial_trace_leading(out, program.m_prime, par.n_out)


def qeval_channel(program: ObfuscationProgram) -> Channel:
    """The channel realized by qeval, reconstructed by feeding computational
    basis columns through the backend evaluation path."""
    par = program.parameter
    d_in = 2**par.n
    cols = []
    for i in range(d_in):
        e = np.zeros(d_in, dtype=complex)
        e[i] = 1.0
        out_vec, aux = program.backend.eval(
            program.backend_oracle, program.backend_aux, _ones_prefixed(e, program.m_prime, par.n)
        )
        program.backend_aux = aux
        cols.append(out_vec)
    k = np.stack(cols, axis=1)
    keep = program.m_prime - par.n_out
    t = k.reshape(2**keep, 2**par.n_out, d_in)
    j = np.einsum("abi,acj->bicj", t, t.conj()) / d_in
    dim = 2**par.n_out * d_in
    return Channel(n_in=par.n, n_out=par.n_out, choi=j.reshape(dim, dim))


# ---------------------------------------------------------------------------
# invariant measure on unitary extensions
# ---------------------------------------------------------------------------


def mu_unif_sample(v: np.ndarray, n: int, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """One draw (U (x) I) V U' with U Haar on the non-output qubits and U'
    Haar on the sector away from the ancilla-ones block.

    Every sample computes the same channel as V; over draws, the distribution
    is the unique measure invariant under those two group actions.
    """
    v = require_unitary(v)
    m = int(np.log2(v.shape[0]))
    if 2**m != v.shape[0] or m < n + 0 or m < n_out:
        raise ValueError("dilation dimension inconsistent with qubit counts")
    u = haar_unitary(2 ** (m - n_out), rng)
    u_prime = haar_subspace_unitary(SubspaceSpec(n=m, d=2**m - 2**n), rng)
    return np.kron(u, np.eye(2**n_out)) @ v @ u_prime


def extension_channel(v: np.ndarray, n: int, n_out: int) -> Channel:
    from qobfsim.circuits import channel_of_unitary

    return channel_of_unitary(v, n, n_out)


def is_unitary_extension(v: np.ndarray, reference: Channel, tol: float = 1e-9) -> bool:
    """Membership test: does v compute the same channel as `reference`?"""
    from qobfsim.circuits import choi_distance

    cand = extension_channel(v, reference.n_in, reference.n_out)
    return choi_distance(cand, reference) <= tol


# ---------------------------------------------------------------------------
# ideal functionality
# ---------------------------------------------------------------------------


class QueryBudgetError(RuntimeError):
    pass


class IdealFunctionality:
    """Stateful oracle advertising (lam, parameter) and answering forward and
    inverse queries on lam + m qubits joined with a caller-held reference.

    Modes:
      * "path-recording": four relation registers; query b=+1 applies the
        subspace-preserving recording oracle, the controlled circuit unitary,
        then the full-domain recording oracle on the non-output qubits;
        b=-1 applies the three adjoints in reverse order.
      * "monte-carlo-haar": a single unitary (scrambler (x) I) ctrl-U inner,
        with both factors Haar-sampled once at initialization; queries apply
        it (or its inverse) directly.
      * "exact-sampled-w": same as monte-carlo-haar with caller-provided
        factor matrices, for deterministic tests.
    """

    def __init__(
        self,
        lam: int,
        q: QuantumCircuit,
        mode: str = "path-recording",
        rng: np.random.Generator | None = None,
        t_max: int = 6,
        inner: np.ndarray | None = None,
        outer: np.ndarray | None = None,
    ):
        self.lam = lam
        self.parameter = CircuitParameter(q.n, q.n_out, q.m, q.s)
        self.mode = mode
        self.t_max = t_max
        self.m_prime = lam + q.m
        self.dim = 2**self.m_prime
        self.d_protected = self.dim - 2**q.n
        self.d_full = 2 ** (self.m_prime - q.n_out)
        self.ctrl_u = compose_unitary(controlled_lift(q, lam))
        self.queries_made = 0
        self.ref_dim = 1
        self._joint: dict | None = None
        self._vec: np.ndarray | None = None
        if mode == "path-recording":
            pass
        elif mode in ("monte-carlo-haar", "exact-sampled-w"):
            if mode == "monte-carlo-haar":
                if rng is None:
                    raise ValueError("monte-carlo-haar mode needs an rng")
                inner = haar_subspace_unitary(SubspaceSpec(self.m_prime, self.d_protected), rng)
                outer = haar_unitary(self.d_full, rng)
            if inner is None or outer is None:
                raise ValueError("exact-sampled-w mode needs explicit inner/outer factors")
            self.w = np.kron(outer, np.eye(2**q.n_out)) @ self.ctrl_u @ inner
        else:
            raise ValueError(f"unknown mode {mode!r}")

    @property
    def advertised(self) -> tuple[int, tuple[int, int, int, int]]:
        return (self.lam, (self.parameter.n, self.parameter.n_out, self.parameter.m, self.parameter.s))

    def load(self, psi: np.ndarray, ref_dim: int = 1) -> None:
        """Install the joint (query, reference) state; must be called before
        the first query or after a reset."""
        vec = np.asarray(psi, dtype=complex).ravel()
        if vec.size != self.dim * ref_dim:
            raise ValueError("state dimension does not match lam + m qubits times reference")
        self.ref_dim = ref_dim
        if self.mode == "path-recording":
            self._joint = {}
            for j in np.nonzero(np.abs(vec) > pr.PRUNE_EPS)[0]:
                a, r = divmod(int(j), ref_dim)
                self._joint[(a, (), (), (), (), r)] = vec[j]
        else:
            self._vec = vec.copy()

    def _require_loaded(self) -> None:
        if self.mode == "path-recording":
            if self._joint is None:
                raise RuntimeError("no state loaded")
        elif self._vec is None:
            raise RuntimeError("no state loaded")

    def _apply_ctrl(self, amps: dict, inverse: bool) -> dict:
        mat = dagger(self.ctrl_u) if inverse else self.ctrl_u
        groups: dict[tuple, np.ndarray] = {}
        for key, amp in amps.items():
            tail = key[1:]
            vec = groups.setdefault(tail, np.zeros(self.dim, dtype=complex))
            vec[key[0]] = amp
        out: dict = {}
        for tail, vec in groups.items():
            new = mat @ vec
            for j in np.nonzero(np.abs(new) > pr.PRUNE_EPS)[0]:
                pr._accumulate(out, (int(j),) + tail, new[j])
        return out

    def _apply_outer_record(self, amps: dict, inverse: bool) -> dict:
        """Recording oracle on the leading m' - n_out qubits with registers
        (L', R'); requires key reshaping around the raw operators."""
        n_out = self.parameter.n_out
        lo_dim = 2**n_out
        staged: dict = {}
        for key, amp in amps.items():
            a, l, r, lp, rp, ref = key
            a1, a2 = divmod(a, lo_dim)
            staged[(a1, lp, rp, a2, l, r, ref)] = amp
        op = pr.inverse_raw if inverse else pr.forward_raw
        staged = op(staged, self.d_full, self.t_max)
        out: dict = {}
        for key, amp in staged.items():
            a1, lp, rp, a2, l, r, ref = key
            pr._accumulate(out, (a1 * lo_dim + a2, l, r, lp, rp, ref), amp)
        return out

    def query(self, b: int) -> None:
        """Apply the functionality for one query of sign b in {+1, -1}."""
        self._require_loaded()
        if b not in (1, -1):
            raise ValueError("query sign must be +1 or -1")
        if self.mode == "path-recording":
            if self.queries_made >= self.t_max:
                raise QueryBudgetError("query budget exhausted")
            amps = self._joint
            if b == 1:
                amps = pr.forward_raw(amps, self.d_protected, self.t_max)
                amps = self._apply_ctrl(amps, inverse=False)
                amps = self._apply_outer_record(amps, inverse=False)
            else:
                amps = self._apply_outer_record(amps, inverse=True)
                amps = self._apply_ctrl(amps, inverse=True)
                amps = pr.inverse_raw(amps, self.d_protected, self.t_max)
            self._joint = amps
        else:
            mat = self.w if b == 1 else dagger(self.w)
            self._vec = (mat @ self._vec.reshape(self.dim, self.ref_dim)).ravel()
        self.queries_made += 1

    def current_vector(self) -> np.ndarray | None:
        """Dense joint state when it is disentangled from the relation
        registers (always, in sampled-unitary modes); None otherwise."""
        self._require_loaded()
        if self.mode != "path-recording":
            return self._vec.copy()
        vec = np.zeros(self.dim * self.ref_dim, dtype=complex)
        for key, amp in self._joint.items():
            if any(key[i] for i in (1, 2, 3, 4)):
                return None
            vec[key[0] * self.ref_dim + key[5]] = amp
        return vec

    def outcome_distribution(self) -> np.ndarray:
        self._require_loaded()
        if self.mode != "path-recording":
            return np.abs(self._vec) ** 2
        dist = np.zeros(self.dim * self.ref_dim)
        for key, amp in self._joint.items():
            dist[key[0] * self.ref_dim + key[5]] += abs(amp) ** 2
        return dist


def ideal_init(
    lam: int,
    q: QuantumCircuit,
    mode: str = "path-recording",
    rng: np.random.Generator | None = None,
    t_max: int = 6,
    inner: np.ndarray | None = None,
    outer: np.ndarray | None = None,
) -> IdealFunctionality:
    return IdealFunctionality(lam, q, mode=mode, rng=rng, t_max=t_max, inner=inner, outer=outer)


def ideal_query(f: IdealFunctionality, b: int, psi: np.ndarray | None = None, ref_dim: int = 1):
    """Convenience wrapper: optionally load psi, apply one query, and return
    the joint vector when it is disentangled from the relation registers."""
    if psi is not None:
        f.load(psi, ref_dim=ref_dim)
    f.query(b)
    return f.current_vector()


@dataclass
class IdealCompareReport:
    statistic: float
    confidence: float
    samples: int
    exact_distribution: np.ndarray = field(repr=False, default=None)
    estimated_distribution: np.ndarray = field(repr=False, default=None)

    @property
    def within_band(self) -> bool:
        return self.statistic <= self.confidence


def ideal_compare(
    lam: int,
    q: QuantumCircuit,
    plan: list[int],
    samples: int,
    rng: np.random.Generator,
    initial: np.ndarray | int | None = None,
) -> IdealCompareReport:
    """Largest per-outcome gap between the exact relation-register outcome
    distribution and the sampled-unitary Monte-Carlo average, with a 3-sigma
    band estimated from the per-instance spread."""
    dim = 2 ** (lam + q.m)
    if initial is None:
        initial = 0
    if isinstance(initial, (int, np.integer)):
        psi = np.zeros(dim, dtype=complex)
        psi[int(initial)] = 1.0
    else:
        psi = np.asarray(initial, dtype=complex)
    exact = ideal_init(lam, q, mode="path-recording", t_max=max(6, len(plan)))
    exact.load(psi)
    for b in plan:
        exact.query(b)
    p_exact = exact.outcome_distribution()
    acc = np.zeros(dim)
    acc_sq = np.zeros(dim)
    for _ in range(samples):
        inst = ideal_init(lam, q, mode="monte-carlo-haar", rng=rng)
        inst.load(psi)
        for b in plan:
            inst.query(b)
        d_i = inst.outcome_distribution()
        acc += d_i
        acc_sq += d_i**2
    mean = acc / samples
    var = np.maximum(acc_sq / samples - mean**2, 0.0)
    se = np.sqrt(var / samples)
    statistic = float(np.max(np.abs(mean - p_exact)))
    confidence = float(3 * np.max(se) + 1e-12)
    return IdealCompareReport(
        statistic=statistic,
        confidence=confidence,
        samples=samples,
        exact_distribution=p_exact,
        estimated_distribution=mean,
    )
