"""Desk-scale simulation workbench for subspace-preserving pseudorandom
unitaries, format-preserving permutations over [d], path-recording oracles,
and the obfuscation pipeline built on top of them.

Everything operates on dense complex numpy arrays at small qubit counts.
Randomness always flows through an explicitly passed ``numpy.random.Generator``
so that every experiment is reproducible from a single seed.
"""

from qobfsim.linalg import (
    SubspaceSpec,
    diamond_distance_unitary,
    flip_epr_eq_projectors,
    haar_subspace_unitary,
    haar_unitary,
    operator_norm,
    partial_trace_leading,
    partial_transpose_second,
    trace_norm,
)

__all__ = [
    "SubspaceSpec",
    "diamond_distance_unitary",
    "flip_epr_eq_projectors",
    "haar_subspace_unitary",
    "haar_unitary",
    "operator_norm",
    "partial_trace_leading",
    "partial_transpose_second",
    "trace_norm",
]

__version__ = "0.1.0"
