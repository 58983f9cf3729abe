import math

import numpy as np
import pytest

from memattack.errors import ECFailure
from memattack.reconcile import block_schedule, error_correct, initial_block_size


def _noisy(n, q, rng):
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < q).astype(np.uint8)
    return a, b


def test_identical_inputs_only_block_parities():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, 1000, dtype=np.uint8)
    rec = error_correct(a, a.copy(), rng, qber=0.02)
    assert rec.corrections == 0
    assert rec.parities_disclosed == sum(math.ceil(1000 / k) for k in rec.block_sizes)
    assert len(rec.parity_messages) == rec.parities_disclosed


def test_single_flip():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, 1024, dtype=np.uint8)
    b = a.copy()
    b[517] ^= 1
    rec = error_correct(a, b, rng, qber=0.01)
    assert np.array_equal(rec.alice, rec.bob)
    assert rec.corrections == 1
    initial = sum(math.ceil(1024 / k) for k in rec.block_sizes)
    depth = sum(math.ceil(math.log2(k)) for k in rec.block_sizes)
    assert initial <= rec.parities_disclosed <= initial + depth


def test_leakage_counts_verification():
    rng = np.random.default_rng(2)
    a, b = _noisy(2000, 0.03, rng)
    rec = error_correct(a, b, rng, qber=0.03)
    assert rec.leakage_bits == rec.parities_disclosed + 64


def test_success_rate_at_five_percent():
    rng = np.random.default_rng(3)
    fails = 0
    for _ in range(1000):
        a, b = _noisy(4096, 0.05, rng)
        try:
            rec = error_correct(a, b, rng, qber=0.05)
            fails += not np.array_equal(rec.alice, rec.bob)
        except ECFailure:
            fails += 1
    assert fails / 1000 <= 0.001


def test_leakage_near_shannon_limit():
    rng = np.random.default_rng(4)
    q = 0.05
    a, b = _noisy(8192, q, rng)
    rec = error_correct(a, b, rng, qber=q)
    h = -q * math.log2(q) - (1 - q) * math.log2(1 - q)
    assert rec.parities_disclosed < 1.5 * 8192 * h


def test_schedule():
    assert initial_block_size(0.05) == 15
    assert initial_block_size(0.0) == 73
    assert block_schedule(100, 0.05, 4) == [15, 30, 60, 100]


def test_unequal_lengths():
    with pytest.raises(ValueError):
        error_correct(np.zeros(3), np.zeros(4), np.random.default_rng(0))


def test_empty():
    rec = error_correct(np.zeros(0), np.zeros(0), np.random.default_rng(0))
    assert rec.leakage_bits == 0


def test_verification_catches_residual_errors():
    # one pass with huge blocks leaves even numbers of errors undetected
    rng = np.random.default_rng(5)
    failures = 0
    for _ in range(20):
        a, b = _noisy(2000, 0.2, rng)
        try:
            rec = error_correct(a, b, rng, qber=0.2, passes=1)
            assert np.array_equal(rec.alice, rec.bob)
        except ECFailure:
            failures += 1
    assert failures > 0
