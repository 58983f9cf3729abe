import itertools
import math

import numpy as np
import pytest

from memattack.attacks import (AbortAttack, EveLedger, ImpostorAttack, PEAttack, QREAbort, QRELengthLeak,
                               QREProcrustean, abort_decode, abort_encode, capacity, depletion_curve,
                               eve_reconstruct, plan_pe_attack, run_abort_attack, run_bhk, run_hr_depletion,
                               run_impostor, run_pe_attack, run_qre)
from memattack.errors import BudgetExceeded, CampaignTooShort
from memattack.protocol import Countermeasures, ProtocolConfig, new_devices, run_day

PE_CONFIG = ProtocolConfig(M=10_000, mu=0.05, noise_tolerance=0.05)


def _day1_transcript(config=PE_CONFIG, seed=0):
    alice, bob = new_devices()
    return run_day(config, alice, bob, None, np.random.default_rng(seed)).transcript


def test_pe_plan_size_and_targets():
    tr = _day1_transcript()
    sched = plan_pe_attack(tr, 25, 0.05, 10_000, np.random.default_rng(1))
    assert len(sched) == 500
    assert len(set(sched.entries.values())) == 500
    assert all(0 <= i < tr.pa["t"] for i in sched.entries.values())
    assert len(plan_pe_attack(tr, 0, 0.05, 10_000, np.random.default_rng(1))) == 0
    with pytest.raises(BudgetExceeded):
        plan_pe_attack(tr, 500, 0.05, 10_000, np.random.default_rng(1))


def test_abort_code_examples():
    assert abort_encode("101") == 7
    assert abort_encode([0, 0, 0]) == 2
    for bits in itertools.product((0, 1), repeat=3):
        assert tuple(abort_decode(abort_encode(bits), 3)) == bits
    with pytest.raises(CampaignTooShort):
        abort_encode("111", days=8)
    assert capacity(9) == 3 and capacity(2) == 0


def test_pe_attack_leaks_correct_bits():
    run = run_pe_attack(PE_CONFIG, PEAttack(25), np.random.default_rng(3))
    assert 5 <= run.leaked_key_bits <= 50
    assert run.correct_key_bits() == run.leaked_key_bits
    assert all(p == "pe-reveal" for _, p in run.ledger.inferred_day1_key_bits.values())


def test_replay_audit():
    run = run_pe_attack(PE_CONFIG, PEAttack(25), np.random.default_rng(4))
    before = dict(run.ledger.inferred_day1_key_bits)
    run.ledger.inferred_day1_key_bits.clear()
    eve_reconstruct(run.ledger)
    assert run.ledger.inferred_day1_key_bits == before


def test_no_attack_learns_nothing():
    alice, bob = new_devices()
    ledger = EveLedger()
    for day in range(2):
        run_day(PE_CONFIG, alice, bob, None, np.random.default_rng(day))
    eve_reconstruct(ledger)
    assert not ledger.inferred_day1_key_bits and not ledger.inferred_raw_bits


def test_secret_hash_limits_eve_to_raw_bits():
    config = ProtocolConfig(M=10_000, mu=0.05, noise_tolerance=0.05, countermeasures=Countermeasures(cm4_secret_pa=True))
    run = run_pe_attack(config, PEAttack(25), np.random.default_rng(5))
    assert not run.ledger.inferred_day1_key_bits
    assert len(run.ledger.inferred_raw_bits) > 5
    raw = run.outcomes[0].alice.raw
    assert all(raw[r] == b for (_, r), b in run.ledger.raw_bits().items())


def test_bob_announcing_blocks_pe_attack():
    config = ProtocolConfig(M=10_000, mu=0.05, noise_tolerance=0.05,
                            countermeasures=Countermeasures(cm1_bob_announces=True))
    run = run_pe_attack(config, PEAttack(25), np.random.default_rng(6))
    assert run.ledger.credited_bits() == 0


def test_abort_attack_decodes_key_bits():
    config = ProtocolConfig(M=4000, mu=0.05, noise_tolerance=0.05)
    run = run_abort_attack(config, AbortAttack(), 9, np.random.default_rng(7))
    key = run.outcomes[0].alice.final
    assert run.ledger.abort_day == abort_encode(key[:3])
    assert run.ledger.key_bits() == {i: int(key[i]) for i in range(3)}
    assert run.ledger.credited_bits() <= math.ceil(math.log2(9))
    with pytest.raises(CampaignTooShort):
        run_abort_attack(config, AbortAttack(bits=4), 9, np.random.default_rng(7))


CM2 = ProtocolConfig(M=10_000, mu=0.05, noise_tolerance=0.05, countermeasures=Countermeasures(cm2_encrypt_pe=True),
                     preshared_key=np.random.default_rng(0).integers(0, 2, 4000, dtype=np.uint8))


def test_impostor_honest_charlie():
    assert run_impostor(CM2, np.random.default_rng(8), charlie_corrupt=False).credited_bits() == 0


def test_impostor_corrupt_charlie():
    ledger = run_impostor(CM2, np.random.default_rng(9))
    assert 5 <= len(ledger.inferred_day1_key_bits) <= 50


def test_impostor_abort_mode():
    ledger = run_impostor(CM2, np.random.default_rng(10), ImpostorAttack(mode="abort"), days=9)
    assert len(ledger.inferred_day1_key_bits) == 3
    assert all(p == "abort-decode" for _, p in ledger.inferred_day1_key_bits.values())


def test_bhk_rates_small():
    res = run_bhk(2, 10, 2000, np.random.default_rng(0))
    assert res.leak_success_rate == pytest.approx(199 / 200, abs=0.01)
    assert res.undetected_rate == pytest.approx(0.85, abs=0.04)
    # without cheating a near pair fails only through the cos^2(pi/2N) slack
    assert res.honest_pair_mismatch_rate < math.sin(math.pi / 20) ** 2


def test_bhk_validation():
    with pytest.raises(ValueError):
        run_bhk(1, 2, 10, np.random.default_rng(0))


def test_hr_first_run_and_survivors():
    lengths = run_hr_depletion(100_000, 6, np.random.default_rng(1))
    assert lengths[0] == pytest.approx(100_000, rel=0.02)
    survivors = 600_000 - lengths.sum()
    assert survivors / 600_000 == pytest.approx((5 / 6) ** 6, rel=0.02)
    assert depletion_curve(3) == pytest.approx([1, 5 / 6, 25 / 36])


def test_hr_full_session():
    lengths = run_hr_depletion(300, 4, np.random.default_rng(2), full_session=True)
    assert lengths.sum() <= 1800
    assert lengths[0] == pytest.approx(300, rel=0.3)


def test_qre_length_leak():
    res = run_qre(QRELengthLeak(16), np.random.default_rng(3))
    assert res.reconstructed_fraction() >= 0.95
    assert all(p == "length-observation" for _, p in res.ledger.inferred_raw_bits.values())


def test_qre_procrustean():
    res = run_qre(QREProcrustean(L=1000, n_bits=16), np.random.default_rng(3))
    assert set(res.lengths) == {1000}
    assert res.ledger.credited_bits() == 0


def test_qre_abort():
    res = run_qre(QREAbort(bits=(1, 1)), np.random.default_rng(4))
    assert res.abort_round == 5 and res.decoded == [1, 1]
    res = run_qre(QREAbort(n_bits=3), np.random.default_rng(5))
    assert res.decoded == list(res.truth)


def test_ledger_requires_known_provenance():
    with pytest.raises(ValueError):
        EveLedger().credit_key_bit(0, 1, "guess")
