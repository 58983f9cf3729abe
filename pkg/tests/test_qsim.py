import math

import numpy as np
import pytest

from memattack import qsim
from memattack.errors import MissingSettingPair
from oracles import born_probability

IDEAL = qsim.CorrelationModel(1.0)

# frozen from the state-vector oracle
P_PLUS_PLUS_PI8 = 0.0732233047033631
P_NOISY_CASE = 0.24489008359727438


def test_equal_bases_anticorrelated():
    assert qsim.outcome_probability(IDEAL, 0.0, 0.0, 1, 1) == 0.0
    assert qsim.outcome_probability(IDEAL, 0.0, 0.0, 1, -1) == 0.5


def test_born_rule_values():
    assert qsim.outcome_probability(IDEAL, 0.0, math.pi / 8, 1, 1) == pytest.approx(P_PLUS_PLUS_PI8, abs=1e-12)
    noisy = qsim.CorrelationModel(0.7)
    assert qsim.outcome_probability(noisy, 0.3, 1.1, -1, 1) == pytest.approx(P_NOISY_CASE, abs=1e-12)


@pytest.mark.parametrize("v", [0.0, 0.4, 0.85, 1.0])
@pytest.mark.parametrize("ta,tb", [(0.0, 0.0), (0.0, math.pi / 8), (math.pi / 4, 3 * math.pi / 8), (0.3, 2.9)])
def test_matches_state_vector(v, ta, tb):
    model = qsim.CorrelationModel(v)
    total = 0.0
    for a in (1, -1):
        for b in (1, -1):
            p = qsim.outcome_probability(model, ta, tb, a, b)
            assert p == pytest.approx(born_probability(v, ta, tb, a, b), abs=1e-12)
            total += p
    assert total == pytest.approx(1.0, abs=1e-12)


def test_pi_shift_invariance():
    m = qsim.CorrelationModel(0.8)
    for a in (1, -1):
        for b in (1, -1):
            assert qsim.outcome_probability(m, 0.2 + math.pi, 0.9, a, b) == pytest.approx(
                qsim.outcome_probability(m, 0.2, 0.9, a, b), abs=1e-12)


def test_basis_normalised():
    assert qsim.Basis(math.pi + 0.1).angle == pytest.approx(0.1)
    assert qsim.Basis(-0.1).angle == pytest.approx(math.pi - 0.1)


def test_invalid_visibility():
    with pytest.raises(ValueError):
        qsim.CorrelationModel(1.2)


def test_sample_pair_deterministic():
    r1 = [qsim.sample_pair(IDEAL, 0.0, 0.4, np.random.default_rng(3)) for _ in range(3)]
    r2 = [qsim.sample_pair(IDEAL, 0.0, 0.4, np.random.default_rng(3)) for _ in range(3)]
    assert r1 == r2


def test_equal_bases_never_agree():
    a, b = qsim.sample_pairs(IDEAL, np.zeros(10_000), 0.0, np.random.default_rng(1))
    assert np.all(a == -b)


@pytest.mark.parametrize("v,tb,expected", [(0.0, 0.0, 0.0), (1.0, math.pi / 8, -math.cos(math.pi / 4))])
def test_empirical_correlator(v, tb, expected):
    n = 10 ** 6
    a, b = qsim.sample_pairs(qsim.CorrelationModel(v), np.zeros(n), tb, np.random.default_rng(7))
    e = float(np.mean(a.astype(float) * b))
    sigma = math.sqrt((1 - expected ** 2) / n)
    assert abs(e - expected) < 4 * sigma


def test_prefix_stable():
    x = np.random.default_rng(0).integers(0, 2, 100)
    ta = np.array([b.angle for b in qsim.ALICE_BASES])[x]
    a1, b1 = qsim.sample_pairs(IDEAL, ta, 0.3, np.random.default_rng(5))
    a2, b2 = qsim.sample_pairs(IDEAL, ta[:40], 0.3, np.random.default_rng(5))
    assert np.array_equal(a1[:40], a2) and np.array_equal(b1[:40], b2)


def _chsh_counts(v, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    ta = np.array([b.angle for b in qsim.ALICE_BASES])[x]
    tb = np.array([b.angle for b in qsim.BOB_BASES])[y]
    a, b = qsim.sample_pairs(qsim.CorrelationModel(v), ta, tb, rng)
    return qsim.tally(x, y, qsim.sign_to_bit(a), qsim.sign_to_bit(b))


def test_chsh_ideal_and_noisy():
    assert qsim.chsh_value(_chsh_counts(1.0, 10 ** 6, 1)) == pytest.approx(qsim.TWO_SQRT2, abs=0.02)
    assert qsim.chsh_value(_chsh_counts(0.0, 10 ** 6, 2)) == pytest.approx(0.0, abs=0.02)
    s = qsim.chsh_value(_chsh_counts(0.85, 10 ** 6, 3))
    assert s == pytest.approx(0.85 * qsim.TWO_SQRT2, abs=0.02)
    assert s < 2.5


def test_chsh_missing_pair():
    counts = _chsh_counts(1.0, 1000, 4)
    counts[1, 1] = 0
    with pytest.raises(MissingSettingPair):
        qsim.chsh_value(counts)


def test_chsh_std_shrinks():
    small = qsim.chsh_std(_chsh_counts(1.0, 1000, 5))
    big = qsim.chsh_std(_chsh_counts(1.0, 100_000, 5))
    assert big < small / 5


def test_bit_sign_roundtrip():
    bits = np.array([0, 1, 1, 0], dtype=np.uint8)
    assert list(qsim.bit_to_sign(bits)) == [1, -1, -1, 1]
    assert np.array_equal(qsim.sign_to_bit(qsim.bit_to_sign(bits)), bits)
