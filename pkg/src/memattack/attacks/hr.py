"""
Key depletion in the multi-device Ekert-style protocol when raw-key devices are destroyed.

Each run uses every surviving device pair once.  Pairs that happen to pick
the key settings (Alice U0, Bob V2; one in six) supply the raw key and are
disposed of afterwards, so the pool shrinks by about a sixth per run.
"""

from __future__ import annotations

import numpy as np

from .. import qsim

KEY_FRACTION = 1.0 / 6.0


def run_hr_depletion(M_day1_key: int, runs: int, rng: np.random.Generator, key_per_device: float = 1.0,
                     full_session: bool = False, visibility: float = 1.0) -> np.ndarray:
    """Per-run key lengths.

    The pool starts with ``6 * M_day1_key`` pairs so run 1 yields about
    ``M_day1_key`` raw-key devices.  By default the count of raw-key pairs is
    drawn as Binomial(survivors, 1/6).  With ``full_session`` every pair
    draws its own settings and measures a singlet; the count is then the
    number of pairs that landed on the key settings (meant for small pools).
    """
    if M_day1_key < 0 or runs < 0:
        raise ValueError("M_day1_key and runs must be nonnegative")
    alive = 6 * int(M_day1_key)
    lengths = np.zeros(runs)
    model = qsim.CorrelationModel(visibility)
    kx, ky = qsim.KEY_PAIR
    for k in range(runs):
        if full_session:
            x = rng.integers(0, 2, size=alive)
            y = rng.integers(0, 3, size=alive)
            ta = np.array([b.angle for b in qsim.ALICE_BASES])[x]
            tb = np.array([b.angle for b in qsim.BOB_BASES])[y]
            qsim.sample_pairs(model, ta, tb, rng)
            used = int(np.count_nonzero((x == kx) & (y == ky)))
        else:
            used = int(rng.binomial(alive, KEY_FRACTION))
        lengths[k] = used * key_per_device
        alive -= used
    return lengths


def depletion_curve(runs: int) -> np.ndarray:
    """Expected run-k key length relative to run 1: ``(5/6)^(k-1)``."""
    return (1.0 - KEY_FRACTION) ** np.arange(runs)
