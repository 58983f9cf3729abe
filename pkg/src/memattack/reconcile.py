"""
Cascade-style reconciliation.

Bob corrects its string towards Alice's.  Each pass shuffles the positions
(identity on the first pass), splits them into blocks, and Alice discloses
each block parity; blocks whose parities disagree are bisected, Alice
disclosing one sub-block parity per halving step.  Every bit Bob flips makes
the blocks containing it in earlier passes odd again, and those are
re-bisected until no known-odd block remains.  A final Toeplitz hash of both
strings catches residual errors.

Every disclosed parity is counted so the caller can charge it as leakage.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ECFailure
from .pamp import HashSeed, toeplitz_hash

DEFAULT_PASSES = 6
QBER_FLOOR = 0.01
VERIFY_BITS = 64


def initial_block_size(qber: float) -> int:
    return max(4, math.ceil(0.73 / max(qber, QBER_FLOOR)))


def block_schedule(n: int, qber: float, passes: int = DEFAULT_PASSES) -> list[int]:
    k1 = initial_block_size(qber)
    return [max(2, min(n, k1 << i)) for i in range(passes)]


@dataclass
class Reconciliation:
    alice: np.ndarray
    bob: np.ndarray
    parities_disclosed: int
    verify_bits: int
    corrections: int
    block_sizes: list[int]
    # public messages: Alice's disclosed parities in the order sent
    parity_messages: list[int] = field(repr=False, default_factory=list)
    verify_seed: HashSeed | None = field(repr=False, default=None)

    @property
    def leakage_bits(self) -> int:
        return self.parities_disclosed + self.verify_bits

    def descriptor(self) -> dict:
        return {
            "method": "cascade",
            "block_sizes": list(self.block_sizes),
            "parities_disclosed": self.parities_disclosed,
            "verify_bits": self.verify_bits,
        }


class _Pass:
    __slots__ = ("order", "where", "k", "alice_parity")

    def __init__(self, order: np.ndarray, k: int, alice: np.ndarray):
        self.order = order
        self.where = np.empty_like(order)
        self.where[order] = np.arange(order.size)
        self.k = k
        n_blocks = -(-order.size // k)
        padded = np.zeros(n_blocks * k, dtype=np.int64)
        padded[: order.size] = alice[order]
        self.alice_parity = padded.reshape(n_blocks, k).sum(axis=1) & 1

    def block_of(self, bit: int) -> int:
        return int(self.where[bit]) // self.k

    def members(self, block: int) -> np.ndarray:
        return self.order[block * self.k: (block + 1) * self.k]


def error_correct(alice_bits, bob_bits, rng: np.random.Generator, qber: float | None = None,
                  passes: int = DEFAULT_PASSES, verify_bits: int = VERIFY_BITS) -> Reconciliation:
    """Make Bob's string equal Alice's by public parity exchange.

    ``qber`` sets the first block size (``0.73 / qber``); it is floored at 1%.
    Raises :class:`ECFailure` when the verification hash still disagrees.
    """
    alice = np.asarray(alice_bits, dtype=np.uint8).copy()
    bob = np.asarray(bob_bits, dtype=np.uint8).copy()
    if alice.shape != bob.shape:
        raise ValueError(f"strings differ in length: {alice.size} vs {bob.size}")
    n = alice.size
    result = Reconciliation(alice, bob, 0, 0, 0, [])
    if n == 0:
        return result
    sizes = block_schedule(n, QBER_FLOOR if qber is None else qber, passes)
    result.block_sizes = sizes
    messages = result.parity_messages
    done: list[_Pass] = []

    def parity(bits, idx):
        return int(bits[idx].sum()) & 1

    def bisect(idx: np.ndarray) -> int:
        # idx has odd Alice/Bob parity difference
        while idx.size > 1:
            half = idx[: idx.size // 2]
            pa = parity(alice, half)
            messages.append(pa)
            result.parities_disclosed += 1
            idx = half if pa != parity(bob, half) else idx[idx.size // 2:]
        return int(idx[0])

    def resolve(queue: deque):
        while queue:
            p, block = queue.popleft()
            members = p.members(block)
            if parity(bob, members) == p.alice_parity[block]:
                continue
            bit = bisect(members)
            bob[bit] ^= 1
            result.corrections += 1
            for other in done:
                if other is not p:
                    queue.append((other, other.block_of(bit)))

    for i, k in enumerate(sizes):
        order = np.arange(n) if i == 0 else rng.permutation(n)
        p = _Pass(order, k, alice)
        messages.extend(int(v) for v in p.alice_parity)
        result.parities_disclosed += p.alice_parity.size
        done.append(p)
        resolve(deque((p, b) for b in range(p.alice_parity.size)))

    t = min(verify_bits, n)
    seed = HashSeed.random(n, t, rng)
    result.verify_seed = seed
    result.verify_bits = t
    if not np.array_equal(toeplitz_hash(alice, seed), toeplitz_hash(bob, seed)):
        raise ECFailure(f"verification hash mismatch after {len(sizes)} passes")
    return result
