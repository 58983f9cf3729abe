"""
Singlet measurement statistics.

The only quantum object in the simulator is a two-qubit singlet mixed with
white noise, ``rho = v |psi-><psi-| + (1 - v) I/4``.  Measuring qubit A along
the real basis vector at angle ``theta_a`` and qubit B at ``theta_b`` gives
sign outcomes ``a, b`` in {+1, -1} with

    P(a, b) = (1 - v * a * b * cos 2(theta_a - theta_b)) / 4

so the correlator is ``E = -v cos 2(theta_a - theta_b)``.  Everything here is
closed form; nothing simulates a state vector.

Device output bits map to signs as 0 -> +1 and 1 -> -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import MissingSettingPair

TWO_SQRT2 = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class Basis:
    """Measurement basis given by the angle of its ``+1`` vector.

    Bases are identified modulo pi, so the angle is normalised into [0, pi).
    """

    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % math.pi)


# Alice measures U0/U1, Bob V0/V1/V2.
U1 = Basis(0.0)
V0 = Basis(math.pi / 8)
U0 = Basis(math.pi / 4)
V2 = Basis(math.pi / 4)
V1 = Basis(3 * math.pi / 8)

# Setting index -> basis for the two-device protocol.  Alice's {0, pi/4} and
# Bob's {pi/8, 3pi/8} give the CHSH combination; (Alice 1, Bob 2) is the key pair.
ALICE_BASES: tuple[Basis, ...] = (U1, U0)
BOB_BASES: tuple[Basis, ...] = (V0, V1, V2)
CHSH_PAIRS: tuple[tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))
CHSH_SIGNS: tuple[int, ...] = (1, -1, 1, 1)
KEY_PAIR: tuple[int, int] = (1, 2)


@dataclass(frozen=True)
class CorrelationModel:
    """Depolarised singlet with visibility ``v`` (1 = ideal, 0 = white noise)."""

    visibility: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")

    def correlator(self, theta_a, theta_b):
        return -self.visibility * np.cos(2.0 * (_angle(theta_a) - _angle(theta_b)))


def _angle(theta):
    if isinstance(theta, Basis):
        return theta.angle
    return theta


def bit_to_sign(bits):
    return 1 - 2 * np.asarray(bits, dtype=np.int64)


def sign_to_bit(signs):
    return ((1 - np.asarray(signs, dtype=np.int64)) // 2).astype(np.uint8)


def outcome_probability(model: CorrelationModel, theta_a, theta_b, a: int, b: int) -> float:
    """Probability of the sign pair ``(a, b)`` for the given bases."""
    if a not in (1, -1) or b not in (1, -1):
        raise ValueError("outcomes are signs in {+1, -1}")
    c = math.cos(2.0 * (_angle(theta_a) - _angle(theta_b)))
    return (1.0 - model.visibility * a * b * c) / 4.0


def outcomes_from_uniforms(model: CorrelationModel, theta_a, theta_b, u):
    """Map uniforms of shape (..., 2) to sign outcomes ``(a, b)``.

    Alice's sign comes from ``u[..., 0]`` alone (Alice's marginal is uniform and
    independent of Bob's setting); Bob's sign is then anticorrelated with
    probability ``(1 + v cos 2delta) / 2``.  Using a fixed two-uniform budget
    per round keeps the stream prefix-stable: sampling ``k`` rounds yields the
    first ``k`` rounds of any longer run from the same seed.
    """
    u = np.asarray(u, dtype=float)
    ta = np.asarray(_angle(theta_a), dtype=float)
    tb = np.asarray(_angle(theta_b), dtype=float)
    a = np.where(u[..., 0] < 0.5, 1, -1)
    p_anti = 0.5 * (1.0 + model.visibility * np.cos(2.0 * (ta - tb)))
    b = np.where(u[..., 1] < p_anti, -a, a)
    return a.astype(np.int8), b.astype(np.int8)


def sample_pair(model: CorrelationModel, theta_a, theta_b, rng: np.random.Generator):
    """Draw one sign pair ``(a, b)``."""
    a, b = outcomes_from_uniforms(model, theta_a, theta_b, rng.random(2))
    return int(a), int(b)


def sample_pairs(model: CorrelationModel, theta_a, theta_b, rng: np.random.Generator):
    """Vectorised :func:`sample_pair` over equal-length angle arrays."""
    ta = np.asarray(theta_a, dtype=float)
    u = rng.random(ta.shape + (2,))
    return outcomes_from_uniforms(model, ta, theta_b, u)


# -- CHSH estimation ---------------------------------------------------------

def tally(x, y, a_bits, b_bits, n_x: int = 2, n_y: int = 3) -> np.ndarray:
    """Counts indexed ``[x, y, a_bit, b_bit]``."""
    counts = np.zeros((n_x, n_y, 2, 2), dtype=np.int64)
    np.add.at(counts, (np.asarray(x), np.asarray(y), np.asarray(a_bits), np.asarray(b_bits)), 1)
    return counts


def correlators(counts: np.ndarray) -> np.ndarray:
    """Empirical ``E[x, y]``; NaN where a setting pair has no samples."""
    counts = np.asarray(counts)
    same = counts[..., 0, 0] + counts[..., 1, 1]
    diff = counts[..., 0, 1] + counts[..., 1, 0]
    n = same + diff
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, (same - diff) / np.maximum(n, 1), np.nan)


def _check_pairs(counts, pairs):
    totals = np.asarray(counts).sum(axis=(-1, -2))
    for x, y in pairs:
        if totals[x, y] == 0:
            raise MissingSettingPair(f"no samples for setting pair ({x}, {y})")


def chsh_value(counts: np.ndarray, pairs: Sequence[tuple[int, int]] = CHSH_PAIRS,
               signs: Sequence[int] = CHSH_SIGNS) -> float:
    """``|E00 - E01 + E10 + E11|`` from per-setting tallies."""
    _check_pairs(counts, pairs)
    e = correlators(counts)
    return abs(float(sum(s * e[x, y] for (x, y), s in zip(pairs, signs))))


def chsh_std(counts: np.ndarray, pairs: Sequence[tuple[int, int]] = CHSH_PAIRS) -> float:
    """Plug-in standard error of :func:`chsh_value`."""
    _check_pairs(counts, pairs)
    e = correlators(counts)
    totals = np.asarray(counts).sum(axis=(-1, -2))
    var = sum((1.0 - e[x, y] ** 2) / totals[x, y] for x, y in pairs)
    return math.sqrt(max(var, 0.0))


BellStatistic = Callable[[np.ndarray], float]
