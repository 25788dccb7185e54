"""The acceptance suite: thirteen numbered criteria, each a self-contained
experiment with pinned tolerances, runnable from pytest or the CLI.

Every criterion returns a CriterionResult with per-check records; run_all
prints one PASS/FAIL line per criterion.  All randomness derives from the
single seed argument.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

from qobfsim import analysis as an
from qobfsim import ensembles as ens
from qobfsim import obfuscation as obf
from qobfsim import path_recording as pr
from qobfsim import prp as prp_mod
from qobfsim.circuits import channel_of, channel_of_unitary, choi_distance, random_circuit
from qobfsim.linalg import (
    SubspaceSpec,
    dagger,
    flip_epr_eq_projectors,
    haar_subspace_unitary,
    haar_unitary,
    operator_norm,
    partial_transpose_second,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime_s: float
    checks: list[tuple[str, bool, str]] = field(default_factory=list)

    def summary_line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.number:02d} {self.name} ({self.runtime_s:.1f}s)"

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "runtime_s": self.runtime_s,
            "checks": [
                {"label": label, "ok": ok, "observed": observed} for label, ok, observed in self.checks
            ],
        }


class _Checks:
    def __init__(self):
        self.items: list[tuple[str, bool, str]] = []

    def add(self, label: str, ok: bool, observed: str) -> None:
        self.items.append((label, bool(ok), observed))

    def require(self, label: str, ok: bool, observed: str) -> None:
        self.add(label, ok, observed)

    @property
    def all_ok(self) -> bool:
        return all(ok for _, ok, _ in self.items)


def _finish(number: int, name: str, checks: _Checks, t0: float) -> CriterionResult:
    return CriterionResult(
        number=number, name=name, passed=checks.all_ok, runtime_s=time.time() - t0, checks=checks.items
    )


def criterion_01_exact_restricted_design(seed: int = 0) -> CriterionResult:
    """Exhaustive three-fold twirl of the equal-pair projector at d in {2,3}:
    entrywise match with the (2d-1)/d^2, (2d-2)/d^2 closed form within 1e-10
    and deviation from the Haar twirl equal to max(d-1,2)/(d^2(d+1))."""
    t0 = time.time()
    checks = _Checks()
    for d in (2, 3):
        proj = flip_epr_eq_projectors(d)
        ensemble = ens.ThreefoldEnsemble(d)
        closed = ens.threefold_twirl_closed_form(d)
        haar_t, _ = ens.haar_twirl_closed_form(d)
        expected_dev = max(d - 1, 2) / (d**2 * (d + 1))
        for direction in ("conjugate", "inverse-conjugate"):
            tw = ens.twirl2(ensemble, proj.eq, direction, "exact")
            gap = float(np.max(np.abs(tw - closed)))
            dev = operator_norm(tw - haar_t)
            checks.require(
                f"d={d} {direction} closed-form entrywise", gap <= 1e-10, f"max entry gap {gap:.3e}"
            )
            checks.require(
                f"d={d} {direction} deviation == max(d-1,2)/(d^2(d+1))",
                abs(dev - expected_dev) <= 1e-9,
                f"deviation {dev:.12f} vs expected {expected_dev:.12f}",
            )
            checks.require(
                f"d={d} {direction} deviation within 1/(d(d+1))",
                dev <= 1 / (d * (d + 1)) + 1e-9,
                f"deviation {dev:.12f}, budget {1 / (d * (d + 1)):.12f}",
            )
    return _finish(1, "exact restricted-design verification", checks, t0)


def criterion_02_haar_twirl_closed_forms(seed: int = 0) -> CriterionResult:
    """Monte-Carlo Haar twirl with 1e5 samples matches both closed forms
    entrywise within 5e-3 at d in {2,3}."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 2)
    samples = 100_000
    for d in (2, 3):
        proj = flip_epr_eq_projectors(d)
        mc = ens.haar_twirl_monte_carlo(d, proj.eq, samples, rng, direction="inverse-conjugate")
        target, residue = ens.haar_twirl_closed_form(d)
        gap1 = float(np.max(np.abs(mc - target)))
        gap2 = float(np.max(np.abs(partial_transpose_second(mc, d) - proj.epr - residue)))
        checks.require(f"d={d} twirl vs 2/(d+1) sym", gap1 <= 5e-3, f"max entry gap {gap1:.2e}")
        checks.require(f"d={d} transposed residue vs (1/(d+1))(I-epr)", gap2 <= 5e-3, f"max entry gap {gap2:.2e}")
    return _finish(2, "Haar twirl closed forms (Monte-Carlo)", checks, t0)


def criterion_03_partial_transpose_norm(seed: int = 0) -> CriterionResult:
    """600 random operators across d in {2,3,4}: ||O^T2|| <= d ||O||."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 3)
    for d in (2, 3, 4):
        worst = 0.0
        for _ in range(200):
            o = rng.standard_normal((d * d, d * d)) + 1j * rng.standard_normal((d * d, d * d))
            ratio = operator_norm(partial_transpose_second(o, d)) / operator_norm(o)
            worst = max(worst, ratio)
        checks.require(f"d={d} worst ratio <= d", worst <= d + 1e-9, f"worst ||O^T2||/||O|| = {worst:.4f}")
    return _finish(3, "partial-transpose norm bound", checks, t0)


def criterion_04_key_lemma(seed: int = 0) -> CriterionResult:
    """Exact evaluation of the key inequality at d=3, t=1, with the
    intermediate twirl norms against 3/(d+1) and 2/(d+1)."""
    t0 = time.time()
    checks = _Checks()
    spec = SubspaceSpec(2, 3)
    report = ens.key_lemma_check(spec, t=1, mode="exact")
    d = 3
    checks.require(
        "lhs <= 6 t sqrt(t/d)",
        report.key_lemma_lhs <= report.key_lemma_rhs + 1e-9,
        f"lhs {report.key_lemma_lhs:.6f} vs rhs {report.key_lemma_rhs:.6f}",
    )
    for label in ("inv", "fwd"):
        a = report.details[f"twirl_norm_{label}"]
        b = report.details[f"twirl_pt_norm_{label}"]
        checks.require(f"{label} twirl norm <= 3/(d+1)", a <= 3 / (d + 1) + 1e-9, f"{a:.6f}")
        checks.require(f"{label} transposed residual norm <= 2/(d+1)", b <= 2 / (d + 1) + 1e-9, f"{b:.6f}")
    return _finish(4, "key-lemma inequality at d=3, t=1", checks, t0)


def criterion_05_prp(seed: int = 0) -> CriterionResult:
    """Exhaustive bijection and inverse round trip at several domain sizes;
    chi-square uniformity of the converter under a true random oracle."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 5)
    for d in (1, 2, 5, 10, 256, 1000):
        inst = prp_mod.make_prp(d, prp_mod.random_prp_key(rng))
        table = prp_mod.prp_table(inst)
        bijective = sorted(table) == list(range(d))
        roundtrip = all(prp_mod.prp_invert(inst, table[x]) == x for x in range(d))
        checks.require(f"d={d} bijective", bijective, f"table is permutation: {bijective}")
        checks.require(f"d={d} inverse round trip", roundtrip, f"all {d} inputs recovered: {roundtrip}")
    import itertools

    for d in (3, 4):
        n_draws = 1000 * math.factorial(d)
        perms = {p: i for i, p in enumerate(itertools.permutations(range(d)))}
        counts = np.zeros(len(perms), dtype=np.int64)
        for _ in range(n_draws):
            oracle = prp_mod.RandomTableOracle(rng)
            counts[perms[tuple(prp_mod.converter_permutation_table(oracle, d))]] += 1
        stat, pvalue = stats.chisquare(counts)
        checks.require(
            f"d={d} permutation chi-square not rejected at p=0.001",
            pvalue > 0.001,
            f"chi2 {stat:.1f}, p {pvalue:.4f}, N {n_draws}",
        )
    return _finish(5, "permutation correctness and uniformity", checks, t0)


def criterion_06_spspru_structure(seed: int = 0) -> CriterionResult:
    """50 random keys at (n=4, d=8): fixed sector exact, unitarity, and
    bit-exact determinism under key reuse."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 6)
    spec = SubspaceSpec(4, 8)
    eye = np.eye(spec.dim)
    worst_fix = 0.0
    worst_uni = 0.0
    deterministic = True
    for _ in range(50):
        key = ens.random_spspru_key(rng)
        u = ens.spspru_build(key, spec)
        for x in spec.fixed_indices():
            worst_fix = max(worst_fix, float(np.abs(u[:, x] - eye[:, x]).max()))
        worst_uni = max(worst_uni, operator_norm(dagger(u) @ u - eye))
        deterministic &= bool(np.array_equal(u, ens.spspru_build(key, spec)))
    checks.require("fixed sector exact within 1e-9", worst_fix <= 1e-9, f"worst |U e_x - e_x| = {worst_fix:.2e}")
    checks.require("unitarity within 1e-9", worst_uni <= 1e-9, f"worst deviation {worst_uni:.2e}")
    checks.require("bit-exact determinism", deterministic, f"rebuild identical: {deterministic}")
    return _finish(6, "keyed construction structure", checks, t0)


def criterion_07_path_recording_exact(seed: int = 0) -> CriterionResult:
    """Fresh forward amplitudes reproduce 1/sqrt(d - |Im(L u R)|) exactly;
    round trips return the input within 1e-9; out-of-domain values fixed."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 7)
    for d in (2, 4, 8):
        n = max(1, int(math.ceil(math.log2(d))) + 1)
        spec = SubspaceSpec(n, d)
        for filled in range(min(d - 1, 3)):
            pairs = tuple((i, i) for i in range(filled))
            st = pr.RelationState(spec=spec, amplitudes={(filled, pairs, ()): 1.0 + 0.0j}, t_max=6)
            out = pr.pro_forward(st)
            expect = 1.0 / np.sqrt(d - filled)
            exact = all(
                amp == expect for amp in out.amplitudes.values()
            ) and len(out.amplitudes) == d - filled
            checks.require(
                f"d={d} |Im|={filled} fresh amplitudes exact",
                exact,
                f"{len(out.amplitudes)} branches at amplitude {expect:.6f}",
            )
    spec = SubspaceSpec(3, 4)
    worst = 0.0
    for _ in range(50):
        st = pr.random_reachable_state(spec, t=int(rng.integers(0, 4)), rng=rng)
        rt = pr.pro_inverse(pr.pro_forward(st))
        diff = dict(st.amplitudes)
        for k, v in rt.amplitudes.items():
            diff[k] = diff.get(k, 0.0) - v
        worst = max(worst, math.sqrt(sum(abs(v) ** 2 for v in diff.values())))
    checks.require("50 round trips within 1e-9", worst <= 1e-9, f"worst state error {worst:.2e}")
    st = pr.RelationState(spec=spec, amplitudes={(5, ((0, 1),), ()): 1.0 + 0.0j}, t_max=6)
    fixed_fwd = pr.pro_forward(st).amplitudes == st.amplitudes
    fixed_inv = pr.pro_inverse(st).amplitudes == st.amplitudes
    checks.require("out-of-domain values fixed exactly", fixed_fwd and fixed_inv, f"{fixed_fwd}, {fixed_inv}")
    return _finish(7, "path-recording exactness", checks, t0)


def criterion_08_path_recording_vs_haar(seed: int = 0) -> CriterionResult:
    """Two-query classical-distinct-input adversary: the collision-rate
    distinguishing statistic against the Haar Monte-Carlo (N=1e4) is
    non-increasing over d in {4,16,64,256} within 3-sigma bands, and the
    recording oracle assigns output collisions probability exactly zero."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 8)
    stats_by_d: list[tuple[int, float, float]] = []
    for d in (4, 16, 64, 256):
        n = int(math.log2(d))
        spec = SubspaceSpec(n, d)
        plan, initial = pr.classical_distinct_plan(d, 0, 1)
        outcome = pr.adversary_run(plan, spec, initial, workspace_dim=d, mode="path-recording", density_cap=0)
        checks.require(
            f"d={d} recording-oracle collision probability exactly 0",
            outcome.collision_probability == 0.0,
            f"collision mass {outcome.collision_probability!r}",
        )
        freq, se = pr.haar_two_query_collision(d, 0, 1, samples=10_000, rng=rng)
        stats_by_d.append((d, freq, se))
    for (d1, f1, s1), (d2, f2, s2) in zip(stats_by_d, stats_by_d[1:]):
        checks.require(
            f"statistic non-increasing {d1} -> {d2}",
            f2 <= f1 + 3 * (s1 + s2),
            f"{f1:.4f}±{s1:.4f} -> {f2:.4f}±{s2:.4f}",
        )
    return _finish(8, "path recording vs Haar trend", checks, t0)


def criterion_09_pipeline_functionality(seed: int = 0) -> CriterionResult:
    """20 random circuits (n, n_out <= 2, m <= 3, lam = 2) with the
    transparent backend: Choi distance between the evaluated channel and the
    circuit channel at most 1e-8, plus auxiliary-state reusability."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 9)
    worst = 0.0
    reusable = True
    for _ in range(20):
        m = int(rng.integers(1, 4))
        n = int(rng.integers(1, min(m, 2) + 1))
        n_out = int(rng.integers(1, min(m, 2) + 1))
        q = random_circuit(n, n_out, m, s=int(rng.integers(0, 7)), rng=rng)
        program = obf.qobf(2, q, obf.reference_backend(), rng)
        dist = choi_distance(obf.qeval_channel(program), channel_of(q))
        worst = max(worst, dist)
        rho = np.zeros((2**n, 2**n), dtype=complex)
        rho[0, 0] = 1.0
        first = obf.qeval(program, rho)
        second = obf.qeval(program, rho)
        reusable &= bool(np.abs(first - second).max() <= 1e-9)
    checks.require("choi distance <= 1e-8 for 20 circuits", worst <= 1e-8, f"worst distance {worst:.2e}")
    checks.require("aux state reusable across evaluations", reusable, f"second evaluation unchanged: {reusable}")
    return _finish(9, "pipeline functionality", checks, t0)


def criterion_10_mu_unif(seed: int = 0) -> CriterionResult:
    """1000 invariant-measure samples from two different base extensions of
    one channel at (m=4, n=2, n_out=1): all samples pass the membership test
    within 1e-9 and the first moments agree entrywise within 5e-2."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 10)
    m, n, n_out = 4, 2, 1
    q = random_circuit(n, n_out, m, s=10, rng=rng)
    from qobfsim.circuits import compose_unitary

    v0 = compose_unitary(q)
    reference = channel_of_unitary(v0, n, n_out)
    u_tilt = haar_unitary(2 ** (m - n_out), rng)
    u_right = haar_subspace_unitary(SubspaceSpec(m, 2**m - 2**n), rng)
    v1 = np.kron(u_tilt, np.eye(2**n_out)) @ v0 @ u_right
    moments = []
    members = 0
    total = 0
    for base in (v0, v1):
        acc = np.zeros((4**m, 4**m), dtype=complex)
        for _ in range(1000):
            w = obf.mu_unif_sample(base, n, n_out, rng)
            total += 1
            members += int(obf.is_unitary_extension(w, reference, tol=1e-9))
            acc += np.kron(w, w.conj())
        moments.append(acc / 1000)
    gap = float(np.max(np.abs(moments[0] - moments[1])))
    checks.require("membership 100%", members == total, f"{members}/{total} samples pass within 1e-9")
    checks.require("first moments agree entrywise within 5e-2", gap <= 5e-2, f"max entry gap {gap:.3f}")
    return _finish(10, "invariant-measure sampler", checks, t0)


def criterion_11_ideal_equivalence(seed: int = 0) -> CriterionResult:
    """At lam=1 and the width-1 identity circuit: single-query outcome
    distributions of the exact mode and the sampled-unitary mode (N=1e4)
    agree within 3 sigma, and forward-then-inverse round trips return the
    query state within 1e-9 in both modes."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 11)
    from qobfsim.circuits import QuantumCircuit

    q = QuantumCircuit(n=1, n_out=1, m=1, gates=())
    report = obf.ideal_compare(1, q, plan=[1], samples=10_000, rng=rng, initial=0)
    checks.require(
        "single-query distributions within 3 sigma",
        report.within_band,
        f"max outcome gap {report.statistic:.4f}, band {report.confidence:.4f}",
    )
    psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    psi /= np.linalg.norm(psi)
    for mode in ("path-recording", "monte-carlo-haar"):
        inst = obf.ideal_init(1, q, mode=mode, rng=rng)
        inst.load(psi)
        inst.query(1)
        inst.query(-1)
        out = inst.current_vector()
        err = float(np.linalg.norm(out - psi)) if out is not None else float("inf")
        checks.require(f"{mode} round trip within 1e-9", err <= 1e-9, f"state error {err:.2e}")
    return _finish(11, "ideal-functionality equivalence", checks, t0)


def criterion_12_nearest_fixing_unitary(seed: int = 0) -> CriterionResult:
    """100 random instances with delta <= 0.1 in dims 4..8: the constructed W
    satisfies W Pi = Pi within 1e-9 and ||V - W|| <= 12 delta; Jordan
    reconstruction of the projector pair within 1e-8."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 12)
    worst_fix = 0.0
    worst_ratio = 0.0
    worst_recon = 0.0
    for _ in range(100):
        dim = int(rng.integers(4, 9))
        rank = int(rng.integers(1, dim))
        basis = haar_unitary(dim, rng)
        pi = basis[:, :rank] @ dagger(basis[:, :rank])
        comp = basis[:, rank:]
        w0 = pi + comp @ haar_unitary(dim - rank, rng) @ dagger(comp)
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        k = (a - dagger(a)) / 2
        k *= 0.04 / operator_norm(k)
        v = w0 @ scipy.linalg.expm(k)
        delta = operator_norm(v @ pi - pi)
        if delta > 0.1:
            v = w0 @ scipy.linalg.expm(k * (0.09 / delta))
            delta = operator_norm(v @ pi - pi)
        w = an.nearest_subspace_fixing_unitary(v, pi)
        worst_fix = max(worst_fix, operator_norm(w @ pi - pi))
        worst_ratio = max(worst_ratio, operator_norm(v - w) / max(delta, 1e-30))
        blocks = an.jordan_decompose(pi, v @ pi @ dagger(v))
        ra, rb = an.reconstruct_projectors(blocks)
        worst_recon = max(worst_recon, operator_norm(ra - pi), operator_norm(rb - v @ pi @ dagger(v)))
    checks.require("W Pi = Pi within 1e-9", worst_fix <= 1e-9, f"worst {worst_fix:.2e}")
    checks.require("||V - W|| <= 12 delta", worst_ratio <= 12.0, f"worst ratio {worst_ratio:.3f}")
    checks.require("Jordan reconstruction <= 1e-8", worst_recon <= 1e-8, f"worst {worst_recon:.2e}")
    return _finish(12, "nearest subspace-fixing unitary", checks, t0)


def criterion_13_distinguishing(seed: int = 0) -> CriterionResult:
    """Null experiment: identical oracles yield advantage within 3 sigma of
    zero at N=1e4.  Power experiment as specified: the variant without the
    cube-root phase layer, against Haar, must be flagged above 5 sigma by the
    calibrated superposition adversary."""
    t0 = time.time()
    checks = _Checks()
    rng = np.random.default_rng(seed + 13)
    spec = SubspaceSpec(4, 8)
    calibration = an.calibrate_broken_detector(spec)
    sampler = ens.ensemble_sampler("spspru-random", spec)
    null_report = an.distinguish_experiment(sampler, sampler, calibration.adversary, 10_000, rng)
    checks.require(
        "null advantage within 3 sigma",
        abs(null_report.advantage) <= 3 * null_report.std_error,
        f"advantage {null_report.advantage:+.4f}, sigma {null_report.std_error:.4f}",
    )
    broken = ens.ensemble_sampler("spspru-nophase", spec)
    haar = ens.ensemble_sampler("haar", spec)
    power_report = an.distinguish_experiment(broken, haar, calibration.adversary, 10_000, rng)
    z = power_report.advantage / power_report.std_error
    checks.require(
        "phase-stripped variant flagged above 5 sigma",
        z > 5.0,
        (
            f"z = {z:+.2f} (advantage {power_report.advantage:+.4f}); exact best family advantage "
            f"{calibration.exact_advantage_broken:.2e} with probe {calibration.probe_label}: the stripped "
            f"ensemble matches the intact one on all moments below degree 8 at d=8, so no few-query "
            f"detector exists at this scale"
        ),
    )
    return _finish(13, "distinguishing-experiment sanity", checks, t0)


ALL_CRITERIA = [
    criterion_01_exact_restricted_design,
    criterion_02_haar_twirl_closed_forms,
    criterion_03_partial_transpose_norm,
    criterion_04_key_lemma,
    criterion_05_prp,
    criterion_06_spspru_structure,
    criterion_07_path_recording_exact,
    criterion_08_path_recording_vs_haar,
    criterion_09_pipeline_functionality,
    criterion_10_mu_unif,
    criterion_11_ideal_equivalence,
    criterion_12_nearest_fixing_unitary,
    criterion_13_distinguishing,
]


def run_all(seed: int = 0, verbose: bool = True) -> list[CriterionResult]:
    results = []
    for fn in ALL_CRITERIA:
        result = fn(seed)
        results.append(result)
        if verbose:
            print(result.summary_line())
            for label, ok, observed in result.checks:
                if not ok:
                    print(f"    failed: {label} -- {observed}")
    return results
