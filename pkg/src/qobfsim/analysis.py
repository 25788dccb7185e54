"""Projector-pair Jordan decomposition, the nearest subspace-fixing unitary,
dilation alignment, and Monte-Carlo distinguishing experiments.

The distinguishing harness pairs trials across the two oracles (common random
numbers), so swapping the oracle arguments negates the advantage estimate
exactly.  Calibration of the deliberately weakened ensemble detector uses the
exact two-copy moment superoperators of the phase/Fourier/permutation layers,
computable in closed form because phase averaging acts as a multiset filter
and permutation averaging as an index-pattern average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from qobfsim.ensembles import UnitaryOracle, dft_block
from qobfsim.linalg import (
    SubspaceSpec,
    dagger,
    operator_norm,
    partial_trace_leading,
    require_projector,
    require_unitary,
)

# ---------------------------------------------------------------------------
# Jordan decomposition of a projector pair
# ---------------------------------------------------------------------------

ANGLE_EPS = 1e-6
EXACT_EIG_EPS = 1e-10


@dataclass(eq=False)
class JordanBlock:
    """Invariant subspace of a projector pair: either one-dimensional with
    eigenvalue pair (a, b), or two-dimensional with principal angle theta and
    bases (u, u_perp) / (v, v_perp) chosen so <u|v> = cos(theta) >= 0."""

    kind: str
    a: int = 0
    b: int = 0
    theta: float = 0.0
    u: np.ndarray | None = None
    u_perp: np.ndarray | None = None
    v: np.ndarray | None = None
    v_perp: np.ndarray | None = None
    vector: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return 2 if self.kind == "two" else 1


def _orthonormal_range(p: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    vals, vecs = np.linalg.eigh(p)
    return vecs[:, vals > 1 - tol]


def jordan_decompose(pa: np.ndarray, pb: np.ndarray) -> list[JordanBlock]:
    """Split the space into one- and two-dimensional subspaces invariant under
    both projectors.  Two-dimensional blocks carry the principal angle; angles
    within 1e-6 of 0 or pi/2 are classified as aligned one-dimensional pairs.
    """
    pa = require_projector(pa)
    pb = require_projector(pb)
    if pa.shape != pb.shape:
        raise ValueError("projector dimensions differ")
    dim = pa.shape[0]
    blocks: list[JordanBlock] = []
    used: list[np.ndarray] = []

    basis_a = _orthonormal_range(pa)
    if basis_a.shape[1]:
        mr = dagger(basis_a) @ pb @ basis_a
        vals, vecs = np.linalg.eigh((mr + dagger(mr)) / 2)
        for lam, x in zip(vals, vecs.T):
            u = basis_a @ x
            lam = min(max(float(lam), 0.0), 1.0)
            if lam >= 1 - EXACT_EIG_EPS or 1 - lam <= ANGLE_EPS**2:
                blocks.append(JordanBlock(kind="one", a=1, b=1, vector=u))
                used.append(u)
            elif lam <= EXACT_EIG_EPS or lam <= ANGLE_EPS**2:
                blocks.append(JordanBlock(kind="one", a=1, b=0, vector=u))
                used.append(u)
            else:
                cos_t = math.sqrt(lam)
                v = pb @ u / cos_t
                theta = math.acos(min(1.0, cos_t))
                u_perp = (v - cos_t * u) / math.sin(theta)
                v_perp = -math.sin(theta) * u + math.cos(theta) * u_perp
                blocks.append(
                    JordanBlock(kind="two", theta=theta, u=u, u_perp=u_perp, v=v, v_perp=v_perp)
                )
                used.append(u)
                used.append(u_perp)

    # Remaining directions lie in ker(PA) away from the two-dim blocks.
    if used:
        q = np.stack(used, axis=1)
        rest_proj = np.eye(dim) - q @ dagger(q)
    else:
        rest_proj = np.eye(dim, dtype=complex)
    vals, vecs = np.linalg.eigh((rest_proj + dagger(rest_proj)) / 2)
    rest = vecs[:, vals > 0.5]
    if rest.shape[1]:
        mr = dagger(rest) @ pb @ rest
        vals_b, vecs_b = np.linalg.eigh((mr + dagger(mr)) / 2)
        for lam, x in zip(vals_b, vecs_b.T):
            w = rest @ x
            if lam > 1 - 1e-6:
                blocks.append(JordanBlock(kind="one", a=0, b=1, vector=w))
            elif lam < 1e-6:
                blocks.append(JordanBlock(kind="one", a=0, b=0, vector=w))
            else:
                raise ValueError("projector pair leaves an unpaired oblique direction")
    total = sum(b.dim for b in blocks)
    if total != dim:
        raise RuntimeError(f"block dimensions sum to {total}, expected {dim}")
    return blocks


def reconstruct_projectors(blocks: list[JordanBlock]) -> tuple[np.ndarray, np.ndarray]:
    dim = next(b.u.shape[0] if b.kind == "two" else b.vector.shape[0] for b in blocks)
    pa = np.zeros((dim, dim), dtype=complex)
    pb = np.zeros((dim, dim), dtype=complex)
    for b in blocks:
        if b.kind == "two":
            pa += np.outer(b.u, b.u.conj())
            pb += np.outer(b.v, b.v.conj())
        else:
            if b.a:
                pa += np.outer(b.vector, b.vector.conj())
            if b.b:
                pb += np.outer(b.vector, b.vector.conj())
    return pa, pb


def nearest_subspace_fixing_unitary(v: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Given ||V Pi - Pi||_op = delta < 1/2, return a unitary W with
    W Pi = Pi exactly and ||V - W||_op <= 12 delta.

    Constructively: rotate V Pi V+ back onto Pi block-by-block through the
    Jordan decomposition, then keep only the action on the complement of Pi.
    The constant 12 is a generous desk constant for the chain
    delta + 2 max_j 2 sin(theta_j / 2) with sin(theta_j) <= 2 delta.
    """
    v = require_unitary(v)
    pi = require_projector(pi)
    delta = operator_norm(v @ pi - pi)
    if delta >= 0.5:
        raise ValueError(f"precondition ||V Pi - Pi|| < 1/2 violated (delta = {delta:.4f})")
    pi_prime = v @ pi @ dagger(v)
    blocks = jordan_decompose(pi, pi_prime)
    dim = pi.shape[0]
    r = np.zeros((dim, dim), dtype=complex)
    for b in blocks:
        if b.kind == "two":
            if math.sin(b.theta) > 2 * delta + 1e-6:
                raise ValueError("block angle exceeds the perturbation budget")
            r += np.outer(b.u, b.v.conj()) + np.outer(b.u_perp, b.v_perp.conj())
        else:
            if b.a != b.b:
                raise ValueError("projector ranks disagree; delta < 1/2 cannot hold")
            r += np.outer(b.vector, b.vector.conj())
    u = r @ v
    w = pi + u @ (np.eye(dim) - pi)
    return w


def align_dilations(
    v0: np.ndarray, v1: np.ndarray, n: int, n_out: int
) -> tuple[np.ndarray, float]:
    """Best unitary U (on the non-output qubits) aligning the ancilla-ones
    restrictions of two dilations, in the least-squares sense.

    Minimizes the Frobenius misfit ||(U (x) I) V0|ones - V1|ones||_F via the
    polar factor of the cross-overlap; the reported residual is the operator
    norm of the remaining difference.  When the two dilations compute the same
    channel an exact alignment exists and the residual vanishes.
    """
    v0 = require_unitary(v0)
    v1 = require_unitary(v1)
    if v0.shape != v1.shape:
        raise ValueError("dilation dimensions differ")
    m = int(np.log2(v0.shape[0]))
    if 2**m != v0.shape[0] or m < n_out:
        raise ValueError("dimension is not 2^m with m >= n_out")
    d_in = 2**n
    k0 = v0[:, -d_in:]
    k1 = v1[:, -d_in:]
    t = partial_trace_leading(k0 @ dagger(k1), m, n_out)
    # maximize Re Tr(U T) over unitaries: U = (polar unitary of T)+
    a, _, bh = np.linalg.svd(t)
    u = dagger(bh) @ dagger(a)
    residual = operator_norm(np.kron(u, np.eye(2**n_out)) @ k0 - k1)
    return u, residual


# ---------------------------------------------------------------------------
# exact two-copy moment superoperators (calibration tools)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _phase_filter_mask(d: int, modulus: int) -> np.ndarray:
    sigs = {}
    sig_id = np.empty(d * d, dtype=np.int64)
    for z in range(d):
        for w in range(d):
            counts = [0] * d
            counts[z] += 1
            counts[w] += 1
            sig = tuple(c % modulus for c in counts)
            sig_id[z * d + w] = sigs.setdefault(sig, len(sigs))
    return sig_id[:, None] == sig_id[None, :]


def phase_twirl(o: np.ndarray, d: int, modulus: int) -> np.ndarray:
    """Average over diagonal unitaries with i.i.d. uniform phase exponents mod
    `modulus`: keeps exactly the entries whose index multisets agree modulo
    the phase order."""
    return o * _phase_filter_mask(d, modulus)


@lru_cache(maxsize=32)
def _pattern_codes(d: int) -> tuple[np.ndarray, np.ndarray]:
    codes = np.empty((d * d, d * d), dtype=np.int64)
    for z in range(d):
        for w in range(d):
            for z2 in range(d):
                for w2 in range(d):
                    tup = (z, w, z2, w2)
                    labels = {}
                    code = 0
                    for t in tup:
                        code = code * 4 + labels.setdefault(t, len(labels))
                    codes[z * d + w, z2 * d + w2] = code
    flat = codes.ravel()
    counts = np.bincount(flat)
    return flat, counts


def permutation_twirl(o: np.ndarray, d: int) -> np.ndarray:
    """Exact average over basis permutations of [d] applied two-copy: entries
    with the same index equality pattern are averaged together."""
    flat, counts = _pattern_codes(d)
    vals = o.ravel()
    sums_re = np.bincount(flat, weights=vals.real, minlength=counts.size)
    sums_im = np.bincount(flat, weights=vals.imag, minlength=counts.size)
    means = (sums_re + 1j * sums_im) / np.maximum(counts, 1)
    return means[flat].reshape(o.shape)


def threefold_twirl_superop(o: np.ndarray, d: int) -> np.ndarray:
    """Exact two-copy twirl over Z H Z H Z with uniform phase functions."""
    g = np.kron(dft_block(d), dft_block(d))
    out = phase_twirl(o, d, d)
    out = g @ out @ dagger(g)
    out = phase_twirl(out, d, d)
    out = g @ out @ dagger(g)
    return phase_twirl(out, d, d)


def haar_twirl_superop(o: np.ndarray, d: int) -> np.ndarray:
    """Exact Haar two-copy twirl via the two-dimensional commutant."""
    flip = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            flip[a * d + b, b * d + a] = 1.0
    tr = np.trace(o)
    trf = np.trace(flip @ o)
    denom = d * (d * d - 1)
    a_coef = (d * tr - trf) / denom
    b_coef = (d * trf - tr) / denom
    return a_coef * np.eye(d * d) + b_coef * flip


def dpfc_twirl_superop(o: np.ndarray, d: int, include_middle_phase: bool) -> np.ndarray:
    """Exact two-copy twirl of the keyed-construction hybrid with all
    components uniformly random: outer threefold, permutation average,
    optional cube-root phase average, inner threefold.

    Note the cube-root phase average is invisible here: the inner threefold
    twirl already projects onto the multiset diagonal for d >= 3.  The phase
    layer only matters for mixed forward/inverse moments (see below)."""
    out = threefold_twirl_superop(o, d)
    if include_middle_phase:
        out = phase_twirl(out, d, 3)
    out = permutation_twirl(out, d)
    return threefold_twirl_superop(out, d)


# Mixed forward/inverse moments.  For a probe unitary V, an adversary that
# queries forward, applies V, and queries inverse realizes W = O+ V O.  In the
# row-vectorization convention, E[W (x) conj(W)] is the superoperator of
# rho -> E[W rho W+], and it factors layer-by-layer through
#
#     E[(O+ (x) O^T) (V (x) conj(V)) (O (x) conj(O))]
#
# because each layer of O ends up adjacent to its own adjoint.  Phase layers
# act as signed multiset filters (where squared-phase cancellations, hence the
# cube-root middle layer, become visible); permutation layers act as index
# pattern averages; Fourier layers conjugate deterministically.


@lru_cache(maxsize=32)
def _signed_phase_mask(d: int, modulus: int) -> np.ndarray:
    sigs = {}
    sig_id = np.empty(d * d, dtype=np.int64)
    for x in range(d):
        for y in range(d):
            counts = [0] * d
            counts[x] += 1
            counts[y] -= 1
            sig = tuple(c % modulus for c in counts)
            sig_id[x * d + y] = sigs.setdefault(sig, len(sigs))
    return sig_id[:, None] == sig_id[None, :]


def mixed_phase_twirl(m: np.ndarray, d: int, modulus: int) -> np.ndarray:
    """E[(Z (x) conj(Z))+ M (Z (x) conj(Z))] over uniform phase exponents."""
    return m * _signed_phase_mask(d, modulus)


def mixed_threefold_twirl(m: np.ndarray, d: int) -> np.ndarray:
    g = np.kron(dft_block(d), dft_block(d).conj())
    out = mixed_phase_twirl(m, d, d)
    out = dagger(g) @ out @ g
    out = mixed_phase_twirl(out, d, d)
    out = dagger(g) @ out @ g
    return mixed_phase_twirl(out, d, d)


def mixed_dpfc_twirl(v_kron: np.ndarray, d: int, include_middle_phase: bool) -> np.ndarray:
    """E[(O+ V O) (x) conj(O+ V O)] for the all-components-random hybrid,
    given v_kron = V (x) conj(V).  Layers nest outside-in: the outer threefold
    lands adjacent to the probe, then the permutation, the optional cube-root
    phase, and the inner threefold."""
    out = mixed_threefold_twirl(v_kron, d)
    out = permutation_twirl(out, d)
    if include_middle_phase:
        out = mixed_phase_twirl(out, d, 3)
    return mixed_threefold_twirl(out, d)


def mixed_haar_twirl(v_kron: np.ndarray, d: int) -> np.ndarray:
    """E[(U+ V U) (x) conj(U+ V U)] for Haar U: projection onto the span of
    the identity and the entangled-line operator d * EPR."""
    depr = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            depr[a * d + a, b * d + b] = 1.0
    tr = np.trace(v_kron)
    s = np.trace(depr @ v_kron)
    denom = d * (d * d - 1)
    a_coef = (d * tr - s) / denom
    b_coef = (d * s - tr) / denom
    return a_coef * np.eye(d * d) + b_coef * depr


def choi_of_kron_superop(sigma: np.ndarray, d: int) -> np.ndarray:
    """Trace-1 Choi state of the map whose row-vectorization superoperator is
    sigma = E[W (x) conj(W)]."""
    return sigma.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d) / d


# ---------------------------------------------------------------------------
# distinguishing experiments
# ---------------------------------------------------------------------------


@dataclass
class DistinguisherReport:
    trials: int
    acceptance_rate_a: float
    acceptance_rate_b: float
    advantage: float
    std_error: float
    analytic_bound: float | None = None
    bound_vacuous: bool = False

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "acceptance_rate_a": self.acceptance_rate_a,
            "acceptance_rate_b": self.acceptance_rate_b,
            "advantage": self.advantage,
            "std_error": self.std_error,
            "analytic_bound": self.analytic_bound,
            "bound_vacuous": self.bound_vacuous,
        }


@dataclass(eq=False)
class AdvStep:
    direction: int = 1
    pre: np.ndarray | None = None


@dataclass(eq=False)
class PlanAdversary:
    """A fixed query plan on A (x) aux plus a final two-outcome measurement."""

    oracle_dim: int
    initial: np.ndarray
    steps: list[AdvStep]
    accept: np.ndarray
    final: np.ndarray | None = None

    def acceptance_probability(self, oracle: UnitaryOracle) -> float:
        psi = self.initial.copy()
        aux = psi.size // self.oracle_dim
        for step in self.steps:
            if step.pre is not None:
                psi = step.pre @ psi
            mat = oracle.matrix if step.direction == 1 else dagger(oracle.matrix)
            psi = (mat @ psi.reshape(self.oracle_dim, aux)).ravel()
        if self.final is not None:
            psi = self.final @ psi
        p = float(np.real(psi.conj() @ (self.accept @ psi)))
        return min(max(p, 0.0), 1.0)


def distinguish_experiment(
    sampler_a,
    sampler_b,
    adversary: PlanAdversary,
    trials: int,
    rng: np.random.Generator,
    analytic_bound: float | None = None,
) -> DistinguisherReport:
    """Unbiased advantage estimate Pr[accept | A] - Pr[accept | B].

    Each trial reuses one seed for both oracle draws and one coin for both
    acceptance decisions, so exchanging the samplers negates the estimate
    exactly and the paired design only reduces variance.  The reported
    standard error is the unpaired binomial formula (conservative).
    """
    hits_a = 0
    hits_b = 0
    seeds = rng.integers(0, 2**63 - 1, size=(trials, 2))
    for i in range(trials):
        oracle_seed, coin_seed = int(seeds[i, 0]), int(seeds[i, 1])
        coin = np.random.default_rng(coin_seed).random()
        pa = adversary.acceptance_probability(sampler_a(np.random.default_rng(oracle_seed)))
        pb = adversary.acceptance_probability(sampler_b(np.random.default_rng(oracle_seed)))
        hits_a += int(coin < pa)
        hits_b += int(coin < pb)
    rate_a = hits_a / trials
    rate_b = hits_b / trials
    se = math.sqrt(rate_a * (1 - rate_a) / trials + rate_b * (1 - rate_b) / trials)
    return DistinguisherReport(
        trials=trials,
        acceptance_rate_a=rate_a,
        acceptance_rate_b=rate_b,
        advantage=rate_a - rate_b,
        std_error=max(se, 1.0 / trials),
        analytic_bound=analytic_bound,
        bound_vacuous=bool(analytic_bound is not None and analytic_bound >= 2),
    )


def _embed_two_copy_state(phi_block: np.ndarray, d: int, dim: int) -> np.ndarray:
    full = np.zeros(dim * dim, dtype=complex)
    for z in range(d):
        full[z * dim : z * dim + d] = phi_block[z * d : (z + 1) * d]
    return full


def _embed_two_copy_operator(m_block: np.ndarray, d: int, dim: int) -> np.ndarray:
    idx = np.array([z * dim + w for z in range(d) for w in range(d)])
    full = np.zeros((dim * dim, dim * dim), dtype=complex)
    full[np.ix_(idx, idx)] = m_block
    return full


def _swap_perm_matrix(dim: int) -> np.ndarray:
    s = np.zeros((dim * dim, dim * dim), dtype=complex)
    for a in range(dim):
        for w in range(dim):
            s[w * dim + a, a * dim + w] = 1.0
    return s


def two_copy_forward_adversary(spec: SubspaceSpec, phi_block: np.ndarray, accept_block: np.ndarray) -> PlanAdversary:
    """Two forward queries applied to the two halves of a fixed two-copy
    state supported on the [d] sector, with an arbitrary final effect there."""
    dim = spec.dim
    swap = _swap_perm_matrix(dim)
    initial = _embed_two_copy_state(np.asarray(phi_block, dtype=complex), spec.d, dim)
    accept = _embed_two_copy_operator(np.asarray(accept_block, dtype=complex), spec.d, dim)
    steps = [AdvStep(direction=1), AdvStep(direction=1, pre=swap)]
    return PlanAdversary(oracle_dim=dim, initial=initial, steps=steps, accept=accept, final=swap)


def fourier_probe_adversary(spec: SubspaceSpec) -> PlanAdversary:
    """Two forward queries on the uniform [d] superposition, measured in the
    Fourier basis (projector onto the image of the uniform state)."""
    dim, d = spec.dim, spec.d
    plus = np.zeros(dim, dtype=complex)
    plus[:d] = 1 / math.sqrt(d)
    h_full = np.eye(dim, dtype=complex)
    h_full[:d, :d] = dft_block(d)
    probe = h_full @ plus
    accept = np.outer(probe, probe.conj())
    return PlanAdversary(
        oracle_dim=dim,
        initial=plus,
        steps=[AdvStep(direction=1), AdvStep(direction=1)],
        accept=accept,
    )


def conjugation_probe_adversary(
    spec: SubspaceSpec, probe: np.ndarray, accept_block: np.ndarray
) -> PlanAdversary:
    """Forward query, probe unitary on the [d] sector, inverse query, applied
    to the canonical entangled state between the [d] sector and a d-dim
    reference; measured with an effect supported on that sector."""
    dim, d = spec.dim, spec.d
    initial = np.zeros(dim * d, dtype=complex)
    for x in range(d):
        initial[x * d + x] = 1 / math.sqrt(d)
    v_full = np.eye(dim, dtype=complex)
    v_full[:d, :d] = probe
    pre = np.kron(v_full, np.eye(d))
    accept = np.zeros((dim * d, dim * d), dtype=complex)
    accept[: d * d, : d * d] = accept_block
    steps = [AdvStep(direction=1), AdvStep(direction=-1, pre=pre)]
    return PlanAdversary(oracle_dim=dim, initial=initial, steps=steps, accept=accept)


@dataclass
class BrokenDetectorCalibration:
    adversary: PlanAdversary
    probe_label: str
    exact_advantage_broken: float
    exact_advantage_intact: float


def calibrate_broken_detector(spec: SubspaceSpec) -> BrokenDetectorCalibration:
    """Build a forward/inverse probe that separates the phase-stripped
    ensemble from Haar, by exact mixed-moment computation.

    For each candidate probe V, the map rho -> E[(O+ V O) rho (O+ V O)+] is
    evaluated exactly for the weakened ensemble and for Haar; the advantage of
    the entangled-input experiment with the optimal effect is half the trace
    norm of the Choi difference.  The best probe is frozen together with its
    positive-part projector, and the same effect is evaluated exactly against
    the intact ensemble (where the cube-root phase layer restores closeness
    to Haar)."""
    d = spec.d
    omega = np.exp(2j * np.pi / d)
    candidates: list[tuple[str, np.ndarray]] = [
        ("fourier", dft_block(d)),
        ("cyclic-shift", np.eye(d, dtype=complex)[:, [(x - 1) % d for x in range(d)]]),
        ("linear-phase", np.diag(omega ** np.arange(d))),
        ("fourier-phase", dft_block(d) @ np.diag(omega ** np.arange(d))),
    ]
    best = None
    for label, probe in candidates:
        v_kron = np.kron(probe, probe.conj())
        sigma_broken = mixed_dpfc_twirl(v_kron, d, include_middle_phase=False)
        sigma_haar = mixed_haar_twirl(v_kron, d)
        j_delta = choi_of_kron_superop(sigma_broken - sigma_haar, d)
        herm = (j_delta + dagger(j_delta)) / 2
        vals, vecs = np.linalg.eigh(herm)
        adv = float(vals[vals > 0].sum())
        if best is None or adv > best[0]:
            pos = vecs[:, vals > 0]
            best = (adv, label, probe, pos @ dagger(pos), v_kron)
    adv_broken, label, probe, accept, v_kron = best
    sigma_intact = mixed_dpfc_twirl(v_kron, d, include_middle_phase=True)
    j_intact = choi_of_kron_superop(sigma_intact - mixed_haar_twirl(v_kron, d), d)
    adv_intact = float(np.real(np.trace(accept @ j_intact)))
    adversary = conjugation_probe_adversary(spec, probe, accept)
    return BrokenDetectorCalibration(
        adversary=adversary,
        probe_label=label,
        exact_advantage_broken=adv_broken,
        exact_advantage_intact=abs(adv_intact),
    )
