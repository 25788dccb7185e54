"""Exact sparse simulation of the subspace-preserving path-recording oracle.

States live on (value register A, relation multisets L and R, optional
workspace tail).  A basis key is ``(a, L, R, *tail)`` where L and R are
canonically sorted tuples of (first, second) pairs over [d]; the symmetrized
multiset ket is represented by its sorted tuple, one orthonormal key per
physical basis state.

L records forward queries as (queried value, fresh response); R records
inverse queries as (fresh response, queried value).  Dom takes first
components, Im second components, across the union of both registers.

The combined oracle is

    forward = L_app (I - R_app R_app+) + (I - L_app L_app+) R_app+

on the [d] sector.  Components with a outside [d] pass through unchanged;
the identity clause is applied at the level of the combined operator (the
raw algebraic combination of identity-extended factors would annihilate the
fixed sector instead of preserving it).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qobfsim.linalg import SubspaceSpec, haar_subspace_unitary

PRUNE_EPS = 1e-14
MAX_KEYS = 10**6

Pair = tuple[int, int]
Amplitudes = dict[tuple, complex]


class TruncationError(RuntimeError):
    """Relation registers would exceed the configured bound."""


class KeyBudgetError(RuntimeError):
    """Sparse state grew past the hard key-count budget."""


def _sorted_insert(pairs: tuple[Pair, ...], p: Pair) -> tuple[Pair, ...]:
    return tuple(sorted(pairs + (p,)))


def _remove_one(pairs: tuple[Pair, ...], p: Pair) -> tuple[Pair, ...]:
    out = list(pairs)
    out.remove(p)
    return tuple(out)


def _im(l: tuple[Pair, ...], r: tuple[Pair, ...]) -> set[int]:
    return {p[1] for p in l} | {p[1] for p in r}


def _dom(l: tuple[Pair, ...], r: tuple[Pair, ...]) -> set[int]:
    return {p[0] for p in l} | {p[0] for p in r}


def _accumulate(dst: Amplitudes, key: tuple, amp: complex) -> None:
    new = dst.get(key, 0.0) + amp
    if abs(new) <= PRUNE_EPS:
        dst.pop(key, None)
    else:
        dst[key] = new
    if len(dst) > MAX_KEYS:
        raise KeyBudgetError(f"state exceeded {MAX_KEYS} basis keys")


def _append_left(src: Amplitudes, d: int, t_max: int) -> Amplitudes:
    # Appends past the truncation bound or into a saturated image contribute
    # nothing: the truncated operator is the compression of the exact one.
    out: Amplitudes = {}
    for key, amp in src.items():
        a, l, r = key[0], key[1], key[2]
        if len(l) + len(r) >= t_max:
            continue
        im = _im(l, r)
        if len(im) >= d:
            continue
        coeff = amp / np.sqrt(d - len(im))
        for y in range(d):
            if y in im:
                continue
            _accumulate(out, (y, _sorted_insert(l, (a, y)), r) + key[3:], coeff)
    return out


def _remove_left(src: Amplitudes, d: int) -> Amplitudes:
    out: Amplitudes = {}
    for key, amp in src.items():
        a, l, r = key[0], key[1], key[2]
        for p in dict.fromkeys(l):
            if p[1] != a:
                continue
            l2 = _remove_one(l, p)
            if a in _im(l2, r):
                continue
            _accumulate(out, (p[0], l2, r) + key[3:], amp / np.sqrt(d - len(_im(l2, r))))
    return out


def _append_right(src: Amplitudes, d: int, t_max: int) -> Amplitudes:
    out: Amplitudes = {}
    for key, amp in src.items():
        a, l, r = key[0], key[1], key[2]
        if len(l) + len(r) >= t_max:
            continue
        dom = _dom(l, r)
        if len(dom) >= d:
            continue
        coeff = amp / np.sqrt(d - len(dom))
        for y in range(d):
            if y in dom:
                continue
            _accumulate(out, (y, l, _sorted_insert(r, (y, a))) + key[3:], coeff)
    return out


def _remove_right(src: Amplitudes, d: int) -> Amplitudes:
    out: Amplitudes = {}
    for key, amp in src.items():
        a, l, r = key[0], key[1], key[2]
        for p in dict.fromkeys(r):
            if p[0] != a:
                continue
            r2 = _remove_one(r, p)
            if a in _dom(l, r2):
                continue
            _accumulate(out, (p[1], l, r2) + key[3:], amp / np.sqrt(d - len(_dom(l, r2))))
    return out


def _linear_combine(*terms: tuple[complex, Amplitudes]) -> Amplitudes:
    out: Amplitudes = {}
    for scale, amps in terms:
        for key, amp in amps.items():
            _accumulate(out, key, scale * amp)
    return out


def _split_sector(src: Amplitudes, d: int) -> tuple[Amplitudes, Amplitudes]:
    in_domain: Amplitudes = {}
    fixed: Amplitudes = {}
    for key, amp in src.items():
        (in_domain if key[0] < d else fixed)[key] = amp
    return in_domain, fixed


def _check_capacity(src: Amplitudes, d: int, t_max: int) -> None:
    limit = min(d, t_max)
    for key in src:
        if len(key[1]) + len(key[2]) >= limit:
            raise TruncationError(
                f"relation size {len(key[1]) + len(key[2])} has no room below min(d, t_max) = {limit}"
            )


def forward_raw(src: Amplitudes, d: int, t_max: int) -> Amplitudes:
    """Combined forward oracle on a raw amplitude dict (tail passes through).

    Precondition per the forward-query contract: every in-domain component
    must have room, |L| + |R| < min(d, t_max)."""
    perp, fixed = _split_sector(src, d)
    _check_capacity(perp, d, t_max)
    w = _remove_right(perp, d)
    minus = _linear_combine((1.0, perp), (-1.0, _append_right(w, d, t_max)))
    term1 = _append_left(minus, d, t_max)
    term2 = _linear_combine((1.0, w), (-1.0, _append_left(_remove_left(w, d), d, t_max)))
    return _linear_combine((1.0, fixed), (1.0, term1), (1.0, term2))


def inverse_raw(src: Amplitudes, d: int, t_max: int) -> Amplitudes:
    """Adjoint of forward_raw on the truncated key space.

    No room precondition: the adjoint must accept everything the forward map
    can produce; internal appends that would overflow contribute zero."""
    perp, fixed = _split_sector(src, d)
    u = _remove_left(perp, d)
    term1 = _linear_combine((1.0, u), (-1.0, _append_right(_remove_right(u, d), d, t_max)))
    term2 = _append_right(_linear_combine((1.0, perp), (-1.0, _append_left(u, d, t_max))), d, t_max)
    return _linear_combine((1.0, fixed), (1.0, term1), (1.0, term2))


@dataclass
class RelationState:
    """Sparse superposition over (value, L, R) basis kets."""

    spec: SubspaceSpec
    amplitudes: Amplitudes = field(default_factory=dict)
    t_max: int = 6

    @classmethod
    def fresh(cls, spec: SubspaceSpec, a: int, t_max: int = 6) -> "RelationState":
        if not (0 <= a < spec.dim):
            raise ValueError("basis value out of range")
        return cls(spec=spec, amplitudes={(a, (), ()): 1.0 + 0.0j}, t_max=t_max)

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values())))

    def validate(self, tol: float = 1e-9) -> None:
        sq = sum(abs(a) ** 2 for a in self.amplitudes.values())
        if sq > 1 + tol:
            raise ValueError(f"squared amplitude sum {sq} exceeds 1")
        for key in self.amplitudes:
            if len(key[1]) + len(key[2]) > self.t_max:
                raise ValueError("relation size exceeds t_max")

    def _wrap(self, amps: Amplitudes) -> "RelationState":
        return RelationState(spec=self.spec, amplitudes=amps, t_max=self.t_max)


def pro_left(state: RelationState) -> RelationState:
    """The raw left-append operator (fresh response, record into L); identity
    on components with value outside [d]."""
    perp, fixed = _split_sector(state.amplitudes, state.spec.d)
    _check_capacity(perp, state.spec.d, state.t_max)
    return state._wrap(
        _linear_combine((1.0, fixed), (1.0, _append_left(perp, state.spec.d, state.t_max)))
    )


def pro_right(state: RelationState) -> RelationState:
    """The raw right-append operator (fresh response, record into R); identity
    outside [d]."""
    perp, fixed = _split_sector(state.amplitudes, state.spec.d)
    _check_capacity(perp, state.spec.d, state.t_max)
    return state._wrap(
        _linear_combine((1.0, fixed), (1.0, _append_right(perp, state.spec.d, state.t_max)))
    )


def pro_forward(state: RelationState) -> RelationState:
    """Forward query of the compensated path-recording oracle."""
    return state._wrap(forward_raw(state.amplitudes, state.spec.d, state.t_max))


def pro_inverse(state: RelationState) -> RelationState:
    """Inverse query (adjoint of pro_forward on the truncated space)."""
    return state._wrap(inverse_raw(state.amplitudes, state.spec.d, state.t_max))


# ---------------------------------------------------------------------------
# adversary harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QueryStep:
    """One oracle call, optionally preceded by an interleaved circuit on the
    joint (A, workspace) register.  `pre` is either a dense unitary on the
    joint space or an index permutation array (basis |j> -> |perm[j]>)."""

    direction: int = 1
    pre: object = None


@dataclass
class AdversaryOutcome:
    distribution: np.ndarray
    reduced_density: np.ndarray | None
    collision_probability: float


def _apply_pre_sparse(amps: Amplitudes, pre, dim_a: int, dim_w: int) -> Amplitudes:
    if pre is None:
        return amps
    if isinstance(pre, np.ndarray) and pre.ndim == 1:
        perm = pre
        out: Amplitudes = {}
        for key, amp in amps.items():
            j = key[0] * dim_w + key[3]
            nj = int(perm[j])
            _accumulate(out, (nj // dim_w, key[1], key[2], nj % dim_w), amp)
        return out
    mat = np.asarray(pre, dtype=complex)
    groups: dict[tuple, np.ndarray] = {}
    for key, amp in amps.items():
        rel = (key[1], key[2])
        vec = groups.get(rel)
        if vec is None:
            vec = np.zeros(dim_a * dim_w, dtype=complex)
            groups[rel] = vec
        vec[key[0] * dim_w + key[3]] = amp
    out = {}
    for rel, vec in groups.items():
        new = mat @ vec
        for j in np.nonzero(np.abs(new) > PRUNE_EPS)[0]:
            _accumulate(out, (int(j) // dim_w, rel[0], rel[1], int(j) % dim_w), new[j])
    return out


def _initial_amplitudes(initial, dim_a: int, dim_w: int) -> Amplitudes:
    if isinstance(initial, (int, np.integer)):
        return {(int(initial) // dim_w, (), (), int(initial) % dim_w): 1.0 + 0.0j}
    vec = np.asarray(initial, dtype=complex).ravel()
    if vec.size != dim_a * dim_w:
        raise ValueError("initial state dimension mismatch")
    amps: Amplitudes = {}
    for j in np.nonzero(np.abs(vec) > PRUNE_EPS)[0]:
        amps[(int(j) // dim_w, (), (), int(j) % dim_w)] = vec[j]
    return amps


def adversary_run(
    plan: list[QueryStep],
    spec: SubspaceSpec,
    initial,
    workspace_dim: int = 1,
    mode: str = "path-recording",
    rng: np.random.Generator | None = None,
    samples: int | None = None,
    t_max: int = 6,
    density_cap: int = 4096,
) -> AdversaryOutcome:
    """Run a query plan against the path-recording oracle or a Monte-Carlo
    average of sampled subspace-preserving Haar unitaries.

    Returns the final computational-basis outcome distribution on the joint
    (A, workspace) register; the reduced density matrix is included when the
    joint dimension is at most `density_cap` (relation registers are traced
    out in path-recording mode).  `initial` is a joint basis index or a dense
    joint vector.
    """
    dim_a, dim_w = spec.dim, workspace_dim
    joint = dim_a * dim_w
    if len(plan) > t_max:
        raise TruncationError("plan length exceeds t_max")
    if mode == "path-recording":
        amps = _initial_amplitudes(initial, dim_a, dim_w)
        for step in plan:
            amps = _apply_pre_sparse(amps, step.pre, dim_a, dim_w)
            if step.direction == 1:
                amps = forward_raw(amps, spec.d, t_max)
            elif step.direction == -1:
                amps = inverse_raw(amps, spec.d, t_max)
            else:
                raise ValueError("direction must be +1 or -1")
        dist = np.zeros(joint)
        for key, amp in amps.items():
            dist[key[0] * dim_w + key[3]] += abs(amp) ** 2
        density = None
        if joint <= density_cap:
            density = np.zeros((joint, joint), dtype=complex)
            groups: dict[tuple, np.ndarray] = {}
            for key, amp in amps.items():
                vec = groups.setdefault((key[1], key[2]), np.zeros(joint, dtype=complex))
                vec[key[0] * dim_w + key[3]] = amp
            for vec in groups.values():
                density += np.outer(vec, vec.conj())
        coll = _collision_mass(dist, dim_a, dim_w)
        return AdversaryOutcome(dist, density, coll)
    if mode == "haar-mc":
        if rng is None or samples is None:
            raise ValueError("haar-mc mode needs rng and samples")
        dist = np.zeros(joint)
        density = np.zeros((joint, joint), dtype=complex) if joint <= density_cap else None
        psi0 = np.zeros(joint, dtype=complex)
        if isinstance(initial, (int, np.integer)):
            psi0[int(initial)] = 1.0
        else:
            psi0 = np.asarray(initial, dtype=complex).ravel().copy()
        for _ in range(samples):
            u = haar_subspace_unitary(spec, rng)
            psi = psi0.copy()
            for step in plan:
                if step.pre is not None:
                    if isinstance(step.pre, np.ndarray) and step.pre.ndim == 1:
                        new = np.zeros_like(psi)
                        new[step.pre] = psi
                        psi = new
                    else:
                        psi = np.asarray(step.pre, dtype=complex) @ psi
                mat = u if step.direction == 1 else u.conj().T
                psi = (mat @ psi.reshape(dim_a, dim_w)).ravel()
            dist += np.abs(psi) ** 2
            if density is not None:
                density += np.outer(psi, psi.conj())
        dist /= samples
        if density is not None:
            density /= samples
        return AdversaryOutcome(dist, density, _collision_mass(dist, dim_a, dim_w))
    raise ValueError(f"unknown mode {mode!r}")


def _collision_mass(dist: np.ndarray, dim_a: int, dim_w: int) -> float:
    if dim_w != dim_a:
        return 0.0
    idx = np.arange(dim_a) * dim_w + np.arange(dim_a)
    return float(dist[idx].sum())


def classical_distinct_plan(d: int, x1: int, x2: int) -> tuple[list[QueryStep], int]:
    """Two forward queries on distinct classical inputs.

    Query 1 acts on |x1>; the interleave swaps the response into the
    workspace and loads x2; query 2 acts on |x2>.  Returns (plan, initial
    joint basis index) for workspace dimension d."""
    if x1 == x2:
        raise ValueError("inputs must be distinct")
    perm = np.empty(d * d, dtype=np.int64)
    tau = np.arange(d)
    tau[0], tau[x2] = tau[x2], tau[0]
    for a in range(d):
        for w in range(d):
            perm[a * d + w] = tau[w] * d + a
    plan = [QueryStep(direction=1), QueryStep(direction=1, pre=perm)]
    return plan, x1 * d + 0


def random_reachable_state(
    spec: SubspaceSpec, t: int, rng: np.random.Generator, t_max: int = 6
) -> RelationState:
    """A normalized state reached by t forward queries from fresh relation
    registers: random input superposition, with random phase and
    basis-permutation rotations of the value register between queries.

    Forward histories stay inside the isometry domain of the compensated
    oracle, so forward-then-inverse round trips on these states are exact.
    Histories mixing query directions with interleaved rotations can pick up
    a small component outside that domain (weight on the order of t^2/d, the
    same leakage the statistical closeness bound absorbs); see the tests for
    the measured behavior."""
    dim = spec.dim
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    amps: Amplitudes = {(int(a), (), ()): vec[a] for a in range(dim) if abs(vec[a]) > PRUNE_EPS}
    for _ in range(t):
        perm = rng.permutation(dim)
        phases = np.exp(2j * np.pi * rng.random(dim))
        rotated: Amplitudes = {}
        for key, amp in amps.items():
            _accumulate(rotated, (int(perm[key[0]]),) + key[1:], amp * phases[key[0]])
        amps = forward_raw(rotated, spec.d, t_max)
    state = RelationState(spec=spec, amplitudes=amps, t_max=t_max)
    nrm = state.norm()
    if nrm > 0:
        state.amplitudes = {k: v / nrm for k, v in amps.items()}
    return state


def haar_two_query_collision(d: int, x1: int, x2: int, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo collision frequency of two forward Haar queries on distinct
    classical inputs, sampled via two-column isometries.

    The joint outcome law (y1, y2) ~ |U[y1, x1]|^2 |U[y2, x2]|^2 depends on U
    only through two columns, which are distributed as the QR orthonormal
    factor of a d x 2 complex Gaussian.  Returns (frequency, standard error)."""
    if x1 == x2:
        raise ValueError("inputs must be distinct")
    hits = 0
    for _ in range(samples):
        g = (rng.standard_normal((d, 2)) + 1j * rng.standard_normal((d, 2))) / np.sqrt(2)
        q, _ = np.linalg.qr(g)
        p1 = np.abs(q[:, 0]) ** 2
        p2 = np.abs(q[:, 1]) ** 2
        y1 = rng.choice(d, p=p1 / p1.sum())
        y2 = rng.choice(d, p=p2 / p2.sum())
        hits += int(y1 == y2)
    freq = hits / samples
    return freq, float(np.sqrt(max(freq * (1 - freq), 1.0 / samples) / samples))
