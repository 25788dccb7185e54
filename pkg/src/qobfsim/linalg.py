"""Dense complex linear algebra: norms, partial trace/transpose, Haar sampling,
subspace embeddings, and the two-copy projector family.

Matrices are plain ``numpy.ndarray`` of dtype complex; the functions below
validate the role-specific invariants (unitarity, hermiticity, ...) instead of
wrapping arrays in classes.  Construction-time tolerance is 1e-9 throughout,
chosen for double precision at dimensions up to 4096.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_TOL = 1e-9


def as_complex_matrix(a: np.ndarray) -> np.ndarray:
    """Coerce to a finite 2-d complex array, raising ValueError otherwise."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValueError("matrix contains NaN/Inf entries")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).conj().T


def require_square(a: np.ndarray) -> np.ndarray:
    m = as_complex_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def require_unitary(u: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Validate ||U†U - I||_op <= tol and return U as a complex array."""
    m = require_square(u)
    err = operator_norm(dagger(m) @ m - np.eye(m.shape[0]))
    if err > tol:
        raise ValueError(f"matrix is not unitary within {tol} (deviation {err:.3e})")
    return m


def require_projector(p: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Validate hermiticity and ||P^2 - P||_op <= tol."""
    m = require_square(p)
    if operator_norm(m - dagger(m)) > tol:
        raise ValueError("projector candidate is not Hermitian")
    if operator_norm(m @ m - m) > tol:
        raise ValueError("matrix is not idempotent within tolerance")
    return m


def require_density(rho: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Validate hermiticity, unit trace and positivity (min eigenvalue >= -tol)."""
    m = require_square(rho)
    if operator_norm(m - dagger(m)) > tol:
        raise ValueError("density candidate is not Hermitian")
    if abs(np.trace(m) - 1.0) > tol:
        raise ValueError(f"density trace {np.trace(m)} is not 1 within {tol}")
    lo = float(np.linalg.eigvalsh((m + dagger(m)) / 2).min())
    if lo < -tol:
        raise ValueError(f"density has negative eigenvalue {lo:.3e}")
    return m


@dataclass(frozen=True)
class SubspaceSpec:
    """The split of n qubits into S = span{|x> : x in [2^n] \\ [d]} and its
    complement S_perp = span{|x> : x in [d]}.

    Ensemble unitaries act as the identity on S and nontrivially on the
    leading d basis states.  d = 2^n means S is trivial (full-space case).
    """

    n: int
    d: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("qubit count must be non-negative")
        if not (1 <= self.d <= 2**self.n):
            raise ValueError(f"need 1 <= d <= 2^n, got d={self.d}, n={self.n}")

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def fixed_dim(self) -> int:
        """Dimension of S, the pointwise-fixed sector."""
        return self.dim - self.d

    def fixed_indices(self) -> range:
        return range(self.d, self.dim)


def operator_norm(a: np.ndarray) -> float:
    """Largest singular value, max_v ||Av|| / ||v||."""
    m = as_complex_matrix(a)
    return float(np.linalg.norm(m, 2))


def trace_norm(a: np.ndarray) -> float:
    """Sum of singular values, Tr sqrt(A†A).  Requires a square matrix."""
    m = require_square(a)
    return float(np.linalg.svd(m, compute_uv=False).sum())


def partial_trace_leading(a: np.ndarray, total_qubits: int, keep_last: int) -> np.ndarray:
    """Trace out all but the last `keep_last` qubits of a 2^total square matrix."""
    m = require_square(a)
    if not (0 <= keep_last <= total_qubits):
        raise ValueError("need 0 <= keep_last <= total_qubits")
    dim = 2**total_qubits
    if m.shape[0] != dim:
        raise ValueError(f"matrix dim {m.shape[0]} does not match 2^{total_qubits}")
    d_out = 2**keep_last
    d_tr = dim // d_out
    t = m.reshape(d_tr, d_out, d_tr, d_out)
    return np.einsum("iaib->ab", t)


def partial_transpose_second(o: np.ndarray, d: int) -> np.ndarray:
    """Transpose the second tensor factor of an operator on (C^d)^(x2).

    Sends sum a_{x,y,z,w} |x><y| (x) |z><w|  to  sum a_{x,y,z,w} |x><y| (x) |w><z|.
    Applying it twice is the identity.
    """
    m = require_square(o)
    if m.shape[0] != d * d:
        raise ValueError(f"matrix dim {m.shape[0]} is not d^2 for d={d}")
    t = m.reshape(d, d, d, d)  # axes: x, z, y, w for entry <xz|O|yw>
    return t.transpose(0, 3, 2, 1).reshape(d * d, d * d)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix.

    The diagonal phase correction makes the distribution exactly Haar rather
    than merely orthogonalized-Gaussian.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def haar_unitary_batch(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """`count` independent Haar unitaries, shape (count, d, d)."""
    z = (rng.standard_normal((count, d, d)) + 1j * rng.standard_normal((count, d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[:, None, :]


def embed_subspace_block(block: np.ndarray, spec: SubspaceSpec) -> np.ndarray:
    """Embed a d x d matrix on S_perp as a 2^n matrix acting as identity on S."""
    b = require_square(block)
    if b.shape[0] != spec.d:
        raise ValueError(f"block dim {b.shape[0]} does not match spec d={spec.d}")
    full = np.eye(spec.dim, dtype=complex)
    full[: spec.d, : spec.d] = b
    return full


def haar_subspace_unitary(spec: SubspaceSpec, rng: np.random.Generator) -> np.ndarray:
    """Sample from the Haar measure on unitaries fixing S: identity on the
    trailing 2^n - d basis states, Haar on span{|x>}_{x in [d]}."""
    return embed_subspace_block(haar_unitary(spec.d, rng), spec)


def diamond_distance_unitary(u: np.ndarray, v: np.ndarray) -> float:
    """Diamond distance between the conjugation channels of two unitaries.

    Equals 2 sqrt(1 - nu^2) where nu is the distance from the origin to the
    convex hull of the eigenvalues of U†V.  The hull is a polygon inscribed in
    the unit circle, so nu is found from the widest cyclic gap between
    eigenphases: if the gap is <= pi the hull contains the origin (nu = 0,
    distance exactly 2); otherwise the nearest hull point lies on the chord
    spanning the remaining arc.
    """
    um = require_square(u)
    vm = require_square(v)
    if um.shape != vm.shape:
        raise ValueError("dimension mismatch")
    w = dagger(um) @ vm
    phases = np.sort(np.angle(np.linalg.eigvals(w)))
    gaps = np.diff(np.concatenate([phases, [phases[0] + 2 * np.pi]]))
    widest = float(gaps.max()) if len(phases) > 1 else 2 * np.pi
    if widest <= np.pi:
        nu = 0.0
    else:
        nu = float(np.cos((2 * np.pi - widest) / 2))
    nu = min(max(nu, 0.0), 1.0)
    return float(min(2.0, 2.0 * np.sqrt(max(0.0, 1.0 - nu * nu))))


class TwoCopyProjectors(NamedTuple):
    """Projector family on (C^d)^(x2): equal-pair, symmetric, maximally
    entangled line, plus the flip (swap) operator."""

    eq: np.ndarray
    sym: np.ndarray
    epr: np.ndarray
    flip: np.ndarray

    @property
    def prime(self) -> np.ndarray:
        """The symmetric sector orthogonal to the equal-pair projector."""
        return self.sym - self.eq


def flip_epr_eq_projectors(d: int) -> TwoCopyProjectors:
    """Build (eq, sym, epr, flip) on (C^d)^(x2)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    dim = d * d
    eq = np.zeros((dim, dim), dtype=complex)
    for x in range(d):
        eq[x * d + x, x * d + x] = 1.0
    flip = np.zeros((dim, dim), dtype=complex)
    for a in range(d):
        for b in range(d):
            flip[a * d + b, b * d + a] = 1.0
    sym = (np.eye(dim) + flip) / 2
    epr = np.zeros((dim, dim), dtype=complex)
    for a in range(d):
        for b in range(d):
            epr[a * d + a, b * d + b] = 1.0 / d
    return TwoCopyProjectors(eq=eq, sym=sym, epr=epr, flip=flip)
