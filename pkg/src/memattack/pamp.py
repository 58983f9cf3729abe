"""
Privacy amplification by Toeplitz hashing, with exhaustive small-size checks.

A Toeplitz matrix ``T`` (t x n over GF(2)) is fixed by its first column ``c``
(t bits, top to bottom) and the remainder of its first row ``r[1:]``
(n - 1 bits, left to right).  :class:`HashSeed` stores exactly those
``n + t - 1`` bits in that order.

Internally every matrix is addressed through its diagonal vector

    d = r[n-1], ..., r[1], c[0], ..., c[t-1]      T[i, j] = d[i - j + n - 1]

so row ``i`` of ``T`` is ``d[i : i + n]`` reversed.

The oracles (:func:`distance_oracle`, :func:`collision_check`) enumerate every
seed and every input for ``n`` up to a dozen bits and only handle classical
side information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionMismatch, TooLarge

MAX_ORACLE_BITS = 12
MAX_COLLISION_BITS = 10


@dataclass(frozen=True)
class HashSeed:
    """Seed bits for an ``n -> t`` Toeplitz hash (column first, then row)."""

    bits: np.ndarray
    n: int
    t: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        object.__setattr__(self, "bits", bits)
        if self.t < 1 or self.n < 1:
            raise DimensionMismatch(f"need n, t >= 1 (got n={self.n}, t={self.t})")
        if bits.size != self.n + self.t - 1:
            raise DimensionMismatch(
                f"seed has {bits.size} bits, an {self.t}x{self.n} Toeplitz matrix needs {self.n + self.t - 1}")

    @classmethod
    def random(cls, n: int, t: int, rng: np.random.Generator) -> "HashSeed":
        return cls(rng.integers(0, 2, size=n + t - 1, dtype=np.uint8), n, t)

    @classmethod
    def from_column_row(cls, column, row) -> "HashSeed":
        """Build from the full first column and the full first row.

        The shared corner must agree.
        """
        column = np.asarray(column, dtype=np.uint8)
        row = np.asarray(row, dtype=np.uint8)
        if column[0] != row[0]:
            raise DimensionMismatch("first column and first row disagree at the corner")
        return cls(np.concatenate([column, row[1:]]), n=row.size, t=column.size)

    @property
    def column(self) -> np.ndarray:
        return self.bits[: self.t]

    @property
    def row(self) -> np.ndarray:
        return np.concatenate([self.bits[:1], self.bits[self.t:]])

    def diagonal(self) -> np.ndarray:
        return np.concatenate([self.bits[self.t:][::-1], self.bits[: self.t]])

    def matrix(self) -> np.ndarray:
        return sliding_window_view(self.diagonal(), self.n)[: self.t, ::-1]

    def to_list(self) -> list[int]:
        return [int(b) for b in self.bits]


def toeplitz_hash(x, seed: HashSeed, t: int | None = None) -> np.ndarray:
    """Multiply ``x`` by the seed's Toeplitz matrix over GF(2)."""
    x = np.asarray(x, dtype=np.uint8).ravel()
    if t is None:
        t = seed.t
    if t != seed.t or x.size != seed.n:
        raise DimensionMismatch(f"seed is {seed.t}x{seed.n}, got t={t} and |x|={x.size}")
    if t > x.size:
        raise DimensionMismatch(f"output length {t} exceeds input length {x.size}")
    prod = seed.matrix().astype(np.int64) @ x.astype(np.int64)
    return (prod & 1).astype(np.uint8)


# -- output length -------------------------------------------------------------

Rational = Union[int, float, Fraction]


@dataclass(frozen=True)
class MinEntropyBudget:
    """Entropy accounting for one privacy-amplification step.

    ``hmin_eps`` is the modelled smooth min-entropy of the reconciled string
    given Eve, ``leakage_bits`` everything disclosed in public discussion,
    ``margin`` the security margin (often written l) and ``m_factor`` the
    fraction kept when one of several device strings may later be exposed.
    """

    hmin_eps: float
    epsilon: float = 0.0
    leakage_bits: int = 0
    margin: int = 0
    m_factor: Rational = 1

    def __post_init__(self):
        if self.hmin_eps < 0 or self.leakage_bits < 0 or self.margin < 0 or self.m_factor < 0:
            raise ValueError("budget quantities must be nonnegative")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")

    def distance_bound(self) -> float:
        return self.epsilon + 0.5 * 2.0 ** (-self.margin / 2.0)


def choose_output_length(budget: MinEntropyBudget) -> int:
    """``max(0, floor(m_factor * (hmin - leakage) - margin))``, in exact arithmetic."""
    value = Fraction(budget.m_factor) * (Fraction(budget.hmin_eps) - budget.leakage_bits) - budget.margin
    return max(0, math.floor(value))


def leftover_hash_bound(hmin: float, t: int, epsilon: float = 0.0) -> float:
    """Distance bound ``eps + 1/2 * 2**(-(hmin - t)/2)`` for a t-bit output."""
    return epsilon + 0.5 * 2.0 ** (-(hmin - t) / 2.0)


# -- exhaustive oracles ----------------------------------------------------------

def _diagonals(n: int, t: int, seed_ints: np.ndarray) -> np.ndarray:
    shifts = np.arange(n + t - 1, dtype=np.int64)
    return ((seed_ints[:, None] >> shifts) & 1).astype(np.int64)


def hash_table(n: int, t: int, seed_ints: np.ndarray) -> np.ndarray:
    """Hash of every ``x`` in [0, 2**n) for each diagonal-encoded seed.

    Seed integer bit ``k`` is diagonal entry ``d[k]``; input bit ``j`` of ``x``
    is ``x_j``; output bit ``i`` is bit ``i`` of the table value.  Built by
    XOR-doubling over matrix columns, independent of :func:`toeplitz_hash`.
    """
    seed_ints = np.asarray(seed_ints, dtype=np.int64)
    d = _diagonals(n, t, seed_ints)
    rows = np.arange(t, dtype=np.int64)
    table = np.zeros((seed_ints.size, 1 << n), dtype=np.int64)
    for j in range(n):
        col = (d[:, rows + n - 1 - j] << rows).sum(axis=1)
        half = 1 << j
        table[:, half: 2 * half] = table[:, :half] ^ col[:, None]
    return table


def seed_from_int(n: int, t: int, seed_int: int) -> HashSeed:
    d = np.array([(seed_int >> k) & 1 for k in range(n + t - 1)], dtype=np.uint8)
    # d = r[n-1..1] + c  ->  bits = c + r[1..n-1]
    return HashSeed(np.concatenate([d[n - 1:], d[: n - 1][::-1]]), n, t)


def int_to_bits(x: int, n: int) -> np.ndarray:
    return np.array([(x >> j) & 1 for j in range(n)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    return int(sum(int(b) << i for i, b in enumerate(bits)))


def classical_hmin(joint: np.ndarray) -> float:
    """``-log2 sum_e max_x P(x, e)`` for a table ``P[x, e]``."""
    joint = np.asarray(joint, dtype=float)
    return -math.log2(joint.max(axis=0).sum())


def _seed_chunks(total: int, per_chunk: int):
    for start in range(0, total, per_chunk):
        yield np.arange(start, min(total, start + per_chunk), dtype=np.int64)


def distance_oracle(joint: np.ndarray, t: int, epsilon: float = 0.0) -> float:
    """Exact seed-averaged trace distance of ``(hash(X), seed, E)`` from ideal.

    ``joint[x, e]`` is the probability of input ``x`` (an n-bit integer) and
    classical side information ``e``.  Every seed of the ``n -> t`` family is
    enumerated.  ``epsilon`` is accepted for signature symmetry with the
    bound; no smoothing is applied.
    """
    joint = np.asarray(joint, dtype=float)
    n = int(round(math.log2(joint.shape[0])))
    if joint.ndim != 2 or 1 << n != joint.shape[0]:
        raise DimensionMismatch("joint must have shape (2**n, n_e)")
    if n > MAX_ORACLE_BITS:
        raise TooLarge(f"n={n} exceeds the {MAX_ORACLE_BITS}-bit enumeration limit")
    if not 1 <= t <= n:
        raise DimensionMismatch(f"need 1 <= t <= n, got t={t}")
    n_e = joint.shape[1]
    xs, es = np.nonzero(joint)
    w = joint[xs, es]
    p_e = joint.sum(axis=0)
    ideal = p_e / (1 << t)
    n_seeds = 1 << (n + t - 1)
    per_chunk = max(1, (1 << 22) // max(1, xs.size))
    total = 0.0
    for seeds in _seed_chunks(n_seeds, per_chunk):
        h = hash_table(n, t, seeds)[:, xs]
        local = np.arange(seeds.size, dtype=np.int64)[:, None]
        keys = ((local << t) + h) * n_e + es[None, :]
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        q = np.bincount(inv, weights=np.broadcast_to(w, keys.shape).ravel())
        c = ideal[uniq % n_e]
        # entries with Q = 0 contribute c each; they sum to 1 per seed overall
        total += 0.5 * (seeds.size + (np.abs(q - c) - c).sum())
    return total / n_seeds


def collision_probability(x: int, y: int, n: int, t: int) -> float:
    """``Pr_seed[hash(x) == hash(y)]`` over all seeds."""
    seeds = np.arange(1 << (n + t - 1), dtype=np.int64)
    table = hash_table(n, t, seeds)
    return float(np.mean(table[:, x] == table[:, y]))


def collision_check(n: int, t: int, mode: str = "exhaustive", samples: int = 0,
                    rng: np.random.Generator | None = None) -> float:
    """Largest ``Pr_seed[hash(x) == hash(y)]`` over pairs ``x != y``.

    ``exhaustive`` compares every pair under every seed.  ``sampled`` draws
    ``samples`` random seeds and evaluates all pairs on them (an estimate).
    """
    if not 1 <= t <= n:
        raise DimensionMismatch(f"need 1 <= t <= n, got t={t}")
    if mode == "exhaustive":
        if n > MAX_COLLISION_BITS:
            raise TooLarge(f"n={n} exceeds the {MAX_COLLISION_BITS}-bit exhaustive limit")
        n_seeds = 1 << (n + t - 1)
        all_seeds = np.arange(n_seeds, dtype=np.int64)
    elif mode == "sampled":
        if rng is None or samples < 1:
            raise ValueError("sampled mode needs rng and samples >= 1")
        all_seeds = rng.integers(0, 1 << (n + t - 1), size=samples, dtype=np.int64)
        n_seeds = samples
    else:
        raise ValueError(f"unknown mode {mode!r}")
    size = 1 << n
    hits = np.zeros((size, size), dtype=np.int64)
    per_chunk = max(1, (1 << 21) // size)
    for start in range(0, all_seeds.size, per_chunk):
        table = hash_table(n, t, all_seeds[start: start + per_chunk]).astype(np.int16)
        for x in range(size - 1):
            hits[x, x + 1:] += np.count_nonzero(table[:, x + 1:] == table[:, x: x + 1], axis=0)
    upper = hits[np.triu_indices(size, k=1)]
    return float(upper.max()) / n_seeds
