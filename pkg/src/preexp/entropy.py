"""Entropy sources: infinite [0,1] sequences with projections and pairing.

A :class:`Base` entropy is a view of a seeded, stateless hash stream through
an affine index map ``i -> 2**k * i + b``.  Projecting left or right doubles
the stride, so the two halves never share an index.  :class:`Pair`
interleaves two entropies, and :class:`Scripted` replays fixed draws in
program order for deterministic tests (it breaks the projection laws).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Union

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
DUMMY_SALT = 0xD1B54A32D192ED03
_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer, a 64-bit avalanche permutation."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def bit_key(j: int) -> int:
    """Hash contribution of bit ``j`` of a stream index."""
    return mix64(((j + 1) * GOLDEN) & MASK64)


def index_key(i: int) -> int:
    """64-bit key of an arbitrary natural index (xor of its bit keys)."""
    h, j = 0, 0
    while i:
        if i & 1:
            h ^= bit_key(j)
        i >>= 1
        j += 1
    return h


def seed_key(seed: int) -> int:
    return mix64(seed & MASK64)


def unit_from_key(seed_k: int, key: int) -> float:
    return (mix64(mix64(seed_k ^ key) + GOLDEN) >> 11) * _UNIT


def stream_value(seed: int, i: int) -> float:
    """Element ``i`` of the base stream for ``seed``, in [0, 1)."""
    return unit_from_key(seed_key(seed), index_key(i))


class EntropyExhausted(RuntimeError):
    """A scripted entropy was asked for more draws than it holds."""


@dataclass(frozen=True)
class Base:
    seed: int
    k: int = 0  # stride exponent
    b: int = 0  # offset
    key: int = 0  # index_key(b), maintained incrementally
    seed_k: int = field(default=-1, compare=False, repr=False)

    def __post_init__(self):
        if self.seed_k < 0:
            object.__setattr__(self, "seed_k", seed_key(self.seed))

    def index(self, i: int) -> int:
        return (i << self.k) + self.b

    def pi_u(self) -> float:
        return unit_from_key(self.seed_k, self.key)

    def pi_l(self) -> "Base":
        return Base(self.seed, self.k + 1, self.b, self.key, self.seed_k)

    def pi_r(self) -> "Base":
        return Base(self.seed, self.k + 1, self.b + (1 << self.k),
                    self.key ^ bit_key(self.k), self.seed_k)


@dataclass(frozen=True)
class Pair:
    left: "Entropy"
    right: "Entropy"

    def pi_u(self) -> float:
        return self.left.pi_u()

    def pi_l(self) -> "Entropy":
        return self.left

    def pi_r(self) -> "Entropy":
        return self.right


class Scripted:
    """Replays queued values; every projection shares the same queue."""

    def __init__(self, values: Union[Iterable[float], deque]):
        self.queue = values if isinstance(values, deque) else deque(float(v) for v in values)

    def pi_u(self) -> float:
        if not self.queue:
            raise EntropyExhausted("scripted entropy has no values left")
        return self.queue.popleft()

    def pi_l(self) -> "Scripted":
        return self

    def pi_r(self) -> "Scripted":
        return self

    def __repr__(self) -> str:
        return f"Scripted({list(self.queue)!r})"


Entropy = Union[Base, Pair, Scripted]


def base(seed: int) -> Base:
    return Base(seed & MASK64)


def dummy(seed: int) -> Base:
    """Entropy for the initially empty continuation; never read by runs."""
    return Base((seed ^ DUMMY_SALT) & MASK64)


def scripted(values: Iterable[float]) -> Scripted:
    return Scripted(values)


def pi_u(theta: Entropy) -> float:
    return theta.pi_u()


def pi_l(theta: Entropy) -> Entropy:
    return theta.pi_l()


def pi_r(theta: Entropy) -> Entropy:
    return theta.pi_r()


def pair(left: Entropy, right: Entropy) -> Pair:
    return Pair(left, right)


def project(theta: Entropy, word: str) -> Entropy:
    """Apply projections named by ``word`` left to right, e.g. ``"LLR"``."""
    for c in word:
        theta = theta.pi_l() if c == "L" else theta.pi_r()
    return theta
