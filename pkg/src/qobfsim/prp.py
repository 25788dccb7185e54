"""Keyed pseudorandom permutations over an arbitrary domain [d].

A full-domain function-to-permutation converter turns any function oracle
O: {0,1}^64 -> {0,1}^64 into a permutation of [d] and its inverse:

* inner mixing is the swap-or-not shuffle (pair x with K - x mod D, swap the
  pair iff a per-round oracle bit of the pair's canonical name says so);
* after a full pass the lower half of the domain is recursively shuffled with
  fresh rounds, down to singleton domains.

Swap-or-not rounds are involutions, so the backward direction replays rounds
in reverse order.  Odd domain sizes need no cycle walking: K - x mod D is
defined for every D.

Two oracle backends are provided: an exact lazily-sampled random table (for
statistical experiments against a true random function) and a keyed
add-rotate-xor mixer (deterministic per key; statistical quality only, no
cryptographic claim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_KEY_LEN = 16
INPUT_BITS = 64
OUTPUT_BITS = 64

# Input-word layout for structured converter queries: purpose | level | round | value.
_PURPOSE_BITS = 4
_LEVEL_BITS = 8
_ROUND_BITS = 16
_VALUE_BITS = INPUT_BITS - _PURPOSE_BITS - _LEVEL_BITS - _ROUND_BITS

PURPOSE_ROUND_KEY = 1
PURPOSE_SWAP_BIT = 2
PURPOSE_PRF = 3
PURPOSE_RAW = 0

_MASK64 = (1 << 64) - 1


def pack_query(purpose: int, level: int, round_idx: int, value: int) -> int:
    if not (0 <= value < (1 << _VALUE_BITS)):
        raise ValueError(f"value {value} exceeds {_VALUE_BITS} bits")
    if not (0 <= level < (1 << _LEVEL_BITS) and 0 <= round_idx < (1 << _ROUND_BITS)):
        raise ValueError("level/round out of range")
    word = purpose
    word = (word << _LEVEL_BITS) | level
    word = (word << _ROUND_BITS) | round_idx
    word = (word << _VALUE_BITS) | value
    return word


class FunctionOracle:
    """Deterministic function {0,1}^input_bits -> {0,1}^output_bits.

    Same instance, same input, same output -- always.
    """

    input_bits: int = INPUT_BITS
    output_bits: int = OUTPUT_BITS

    def query_word(self, word: int) -> int:
        raise NotImplementedError

    def query(self, bits: str) -> str:
        """Bit-string interface; raises on wrong input length."""
        if len(bits) != self.input_bits or set(bits) - {"0", "1"}:
            raise ValueError(f"input must be a {self.input_bits}-bit string")
        out = self.query_word(int(bits, 2))
        return format(out, f"0{self.output_bits}b")


class RandomTableOracle(FunctionOracle):
    """Exact random function: outputs are i.i.d. uniform, lazily sampled and
    memoized per instance."""

    def __init__(self, rng: np.random.Generator, output_bits: int = OUTPUT_BITS):
        self.output_bits = output_bits
        self._rng = rng
        self._table: dict[int, int] = {}

    def query_word(self, word: int) -> int:
        memo = self._table
        got = memo.get(word)
        if got is None:
            got = int(self._rng.integers(0, 1 << self.output_bits, dtype=np.uint64))
            memo[word] = got
        return got


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & _MASK64


def _arx_mix(state: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    """One add-rotate-xor round on a 4-word state (quarter-round shape)."""
    a, b, c, d = state
    a = (a + b) & _MASK64
    d = _rotl(d ^ a, 32)
    c = (c + d) & _MASK64
    b = _rotl(b ^ c, 24)
    a = (a + b) & _MASK64
    d = _rotl(d ^ a, 16)
    c = (c + d) & _MASK64
    b = _rotl(b ^ c, 63)
    return a, b, c, d


class KeyedMixerOracle(FunctionOracle):
    """Fixed public add-rotate-xor mixer over key||input.

    Six mixing rounds over a 4-word state absorbed from the key and the input
    word.  Statistical tests only; no cryptographic claim is made.
    """

    _ROUNDS = 6

    def __init__(self, key: bytes, output_bits: int = OUTPUT_BITS):
        if len(key) == 0:
            raise ValueError("key must be non-empty")
        self.output_bits = output_bits
        padded = key.ljust(((len(key) + 7) // 8) * 8, b"\x00")
        words = [int.from_bytes(padded[i : i + 8], "little") for i in range(0, len(padded), 8)]
        state = (0x9E3779B97F4A7C15, 0xBF58476D1CE4E5B9, 0x94D049BB133111EB, 0x2545F4914F6CDD1D)
        for w in words:
            state = _arx_mix((state[0] ^ w, state[1], state[2] ^ _rotl(w, 32), state[3]))
            state = _arx_mix(state)
        self._key_state = state
        self._memo: dict[int, int] = {}

    def query_word(self, word: int) -> int:
        got = self._memo.get(word)
        if got is not None:
            return got
        a, b, c, d = self._key_state
        state = (a ^ word, b, c, d ^ _rotl(word, 21))
        for _ in range(self._ROUNDS):
            state = _arx_mix(state)
        out = (state[0] ^ state[2]) & ((1 << self.output_bits) - 1)
        self._memo[word] = out
        return out


def prf_eval(oracle: FunctionOracle, x: str) -> str:
    """Evaluate the function oracle on a bit-string input."""
    return oracle.query(x)


def rounds_for_domain(size: int) -> int:
    """Swap-or-not round count for one recursion level of the given size."""
    return 8 * math.ceil(math.log2(max(size, 2))) + 64


def _round_key(oracle: FunctionOracle, level: int, round_idx: int, size: int) -> int:
    # 64-bit output mod size: bias ~ size/2^64, irrelevant at this scale.
    return oracle.query_word(pack_query(PURPOSE_ROUND_KEY, level, round_idx, 0)) % size


def _swap_bit(oracle: FunctionOracle, level: int, round_idx: int, rep: int) -> int:
    return oracle.query_word(pack_query(PURPOSE_SWAP_BIT, level, round_idx, rep)) & 1


def _swap_or_not_pass(oracle: FunctionOracle, size: int, x: int, level: int, inverse: bool) -> int:
    rounds = rounds_for_domain(size)
    order = range(rounds - 1, -1, -1) if inverse else range(rounds)
    for i in order:
        k = _round_key(oracle, level, i, size)
        partner = (k - x) % size
        if partner != x and _swap_bit(oracle, level, i, max(x, partner)):
            x = partner
    return x


def converter_forward(oracle: FunctionOracle, d: int, x: int, _level: int = 0) -> int:
    """Full-domain function-to-permutation converter, forward direction.

    For any fixed oracle the map x -> y is a bijection on [d]; under a true
    random oracle the induced permutation is statistically uniform.
    """
    if not (0 <= x < d):
        raise ValueError(f"input {x} outside domain [{d}]")
    if d == 1:
        return 0
    y = _swap_or_not_pass(oracle, d, x, _level, inverse=False)
    half = d // 2
    if y < half:
        return converter_forward(oracle, half, y, _level + 1)
    return y


def converter_backward(oracle: FunctionOracle, d: int, y: int, _level: int = 0) -> int:
    """Inverse of converter_forward for the same oracle."""
    if not (0 <= y < d):
        raise ValueError(f"input {y} outside domain [{d}]")
    if d == 1:
        return 0
    half = d // 2
    if y < half:
        y = converter_backward(oracle, half, y, _level + 1)
    return _swap_or_not_pass(oracle, d, y, _level, inverse=True)


def converter_permutation_table(oracle: FunctionOracle, d: int, _level: int = 0) -> list[int]:
    """Evaluate the forward permutation on the whole domain at once.

    Identical query pattern to element-wise converter_forward, but the
    per-round key and swap bits are shared across all elements.
    """
    if d == 1:
        return [0]
    values = list(range(d))
    rounds = rounds_for_domain(d)
    for i in range(rounds):
        k = _round_key(oracle, _level, i, d)
        bits = {}
        for idx, x in enumerate(values):
            partner = (k - x) % d
            if partner == x:
                continue
            rep = max(x, partner)
            b = bits.get(rep)
            if b is None:
                b = _swap_bit(oracle, _level, i, rep)
                bits[rep] = b
            if b:
                values[idx] = partner
    half = d // 2
    sub = converter_permutation_table(oracle, half, _level + 1)
    return [sub[y] if y < half else y for y in values]


@dataclass(frozen=True)
class PrpInstance:
    """A keyed permutation of [d] with its inverse.

    The keyed mixer serves as the PRF backend; the converter turns it into the
    permutation pair.  round_count records the top-level swap-or-not rounds;
    recursion continues while the residual sub-domain is larger than
    recurse_threshold.
    """

    d: int
    key: bytes
    round_count: int
    recurse_threshold: int = 1
    _oracle: KeyedMixerOracle = field(repr=False, compare=False, default=None)

    def oracle(self) -> KeyedMixerOracle:
        return self._oracle


def make_prp(d: int, key: bytes) -> PrpInstance:
    if d < 1:
        raise ValueError("domain size must be >= 1")
    if len(key) != DEFAULT_KEY_LEN:
        raise ValueError(f"key must be {DEFAULT_KEY_LEN} bytes")
    return PrpInstance(
        d=d,
        key=key,
        round_count=rounds_for_domain(d),
        _oracle=KeyedMixerOracle(key),
    )


def random_prp_key(rng: np.random.Generator) -> bytes:
    return bytes(int(b) for b in rng.integers(0, 256, size=DEFAULT_KEY_LEN))


def prp_eval(p: PrpInstance, x: int) -> int:
    return converter_forward(p.oracle(), p.d, x)


def prp_invert(p: PrpInstance, y: int) -> int:
    return converter_backward(p.oracle(), p.d, y)


def prp_table(p: PrpInstance) -> list[int]:
    return converter_permutation_table(p.oracle(), p.d)
