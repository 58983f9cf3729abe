import dataclasses

import numpy as np
import pytest

from memattack import devices as dv
from memattack import qsim
from memattack.errors import ConfigError, InsufficientPresharedKey
from memattack.protocol import (Countermeasures, KeyPool, ProtocolConfig, SessionTranscript, exposure_budget,
                                new_devices, pad_mutual_information, parameter_estimation, run_campaign, run_day,
                                run_day_cm3)


def _day(config, seed=0, **kw):
    alice, bob = new_devices(config.m_devices)
    fn = run_day_cm3 if config.countermeasures.cm3_multi_device else run_day
    return fn(config, alice, bob, None, np.random.default_rng(seed), **kw), alice, bob


def _pad(bits, seed=0):
    return np.random.default_rng(seed).integers(0, 2, bits, dtype=np.uint8)


@pytest.mark.parametrize("kw", [dict(mu=0.0), dict(mu=1.0), dict(M=100, mu=0.1),
                                dict(m_devices=1, countermeasures=Countermeasures(cm3_multi_device=True)),
                                dict(visibility=1.5)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ProtocolConfig(**kw)


def test_honest_day_produces_agreeing_key():
    out, _, _ = _day(ProtocolConfig(M=10_000, mu=0.05), seed=1)
    assert not out.aborted
    assert out.transcript.test_value == pytest.approx(qsim.TWO_SQRT2, abs=0.35)
    assert out.final_length > 0
    assert np.array_equal(out.alice.final, out.bob.final)
    assert np.array_equal(out.alice.corrected, out.bob.corrected)
    assert out.alice.final.size <= out.alice.corrected.size - out.alice.leakage_bits


def test_low_visibility_aborts_at_test():
    config = ProtocolConfig(M=50_000, mu=0.5, visibility=0.85)
    for seed in range(10):
        out, _, _ = _day(config, seed)
        assert out.aborted and out.transcript.abort.step == 5
        assert out.transcript.abort.cause == "TestFailed"
        assert out.alice is None and out.bob is None


def test_device_abort_surfaces_as_outcome():
    config = ProtocolConfig(M=2000, mu=0.05)
    alice, bob = new_devices()
    alice[0].policy = dv.AbortOnDay(2)
    res = run_campaign(config, alice, bob, None, 3, np.random.default_rng(0))
    aborts = [o.transcript.abort for o in res.outcomes]
    assert aborts[1].step == 2 and aborts[1].cause == "DeviceAborted"
    assert aborts[0] is None and aborts[2] is None
    assert res.ledger.abort_day == 2


def _pe_inputs(M, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.integers(0, 2, M), rng.integers(0, 3, M)
    a, b = dv.SingletLink(qsim.CorrelationModel(1.0), rng).batch(x, y)
    return x, y, a, b


def test_parameter_estimation_reveal_count():
    x, y, a, b = _pe_inputs(10_000, 0)
    pe = parameter_estimation(x, y, a, b, 0.05, np.random.default_rng(1))
    assert abs(pe.reveal_mask.sum() - 500) < 4 * np.sqrt(10_000 * 0.05 * 0.95)
    assert pe.key_consumed == 0
    assert np.array_equal(pe.payload, a[pe.reveal_mask])


def test_parameter_estimation_encrypted():
    x, y, a, b = _pe_inputs(10_000, 0)
    pool = KeyPool(_pad(2000))
    pe = parameter_estimation(x, y, a, b, 0.05, np.random.default_rng(1), encrypt=True, pad=pool)
    k = int(pe.reveal_mask.sum())
    assert pe.key_consumed == k == pool.position
    assert np.array_equal(pe.payload ^ pool.bits[:k], a[pe.reveal_mask])
    with pytest.raises(InsufficientPresharedKey):
        parameter_estimation(x, y, a, b, 0.05, np.random.default_rng(1), encrypt=True, pad=KeyPool(_pad(10)))


def test_pad_exhaustion_aborts_day():
    config = ProtocolConfig(M=4000, mu=0.05, countermeasures=Countermeasures(cm2_encrypt_pe=True),
                            preshared_key=_pad(20))
    out, _, _ = _day(config)
    assert out.transcript.abort.step == 5 and out.transcript.abort.cause == "InsufficientPresharedKey"


def test_determinism():
    config = ProtocolConfig(M=4000, mu=0.05)
    a, _, _ = _day(config, seed=21)
    b, _, _ = _day(config, seed=21)
    assert a.transcript.to_record() == b.transcript.to_record()
    assert np.array_equal(a.alice.final, b.alice.final)
    assert np.array_equal(a.transcript.pe_payload, b.transcript.pe_payload)


def test_sift_mask_from_inputs():
    out, _, _ = _day(ProtocolConfig(M=4000, mu=0.05), seed=3)
    tr = out.transcript
    x, y = tr.announced_inputs["alice"], tr.announced_inputs["bob"]
    assert np.array_equal(tr.sift_mask, (x == 1) & (y == 2))


def test_transcript_holds_no_unrevealed_outputs():
    out, alice, _ = _day(ProtocolConfig(M=4000, mu=0.05), seed=4)
    tr = out.transcript
    outputs = alice[0].outputs_of_day(1)
    assert np.array_equal(tr.pe_payload, outputs[tr.pe_indices])
    hidden = np.setdiff1d(np.arange(outputs.size), tr.pe_indices)
    for f in dataclasses.fields(SessionTranscript):
        value = getattr(tr, f.name)
        arrays = value.values() if isinstance(value, dict) else [value]
        for arr in arrays:
            if isinstance(arr, np.ndarray) and arr.dtype == np.uint8 and f.name not in ("announced_inputs",):
                # bit arrays other than inputs are test reveals or parities, never a copy of hidden rounds
                assert arr.size < hidden.size


def test_cm1_bob_announces_and_is_isolated():
    config = ProtocolConfig(M=4000, mu=0.05, countermeasures=Countermeasures(cm1_bob_announces=True))
    out, _, bob = _day(config, seed=5)
    assert out.transcript.pe_announcer == "bob"
    assert bob[0].isolated_from_incoming
    assert np.array_equal(out.transcript.pe_payload, bob[0].outputs_of_day(1)[out.transcript.pe_indices])


def test_cm4_withholds_hash():
    out, _, _ = _day(ProtocolConfig(M=4000, mu=0.05, countermeasures=Countermeasures(cm4_secret_pa=True)), seed=6)
    assert out.transcript.pa == "withheld"
    assert np.array_equal(out.alice.final, out.bob.final)


def _cm3(m, seed=0, **kw):
    return ProtocolConfig(M=10_000, mu=0.05, m_devices=m,
                          countermeasures=Countermeasures(cm3_multi_device=True, **kw),
                          preshared_key=_pad(4000 * m, seed))


def test_cm3_two_devices_halves_length():
    out, _, _ = _day(_cm3(2), seed=7)
    assert not out.aborted
    assert np.array_equal(out.alice.final, out.bob.final)
    total = sum(out.device_budgets)
    single_equivalent = int(total - 40)
    assert 0.4 < out.final_length / single_equivalent < 0.6
    assert all(t.pe_indices is None and t.pe_encrypted and t.pe_announcer == "bob" for t in out.sub_transcripts)


def test_cm3_exposure_budget():
    out, _, _ = _day(_cm3(3), seed=8)
    assert not out.aborted
    for j in range(3):
        assert exposure_budget(out, j) >= out.final_length + 40


def test_cm3_one_device_aborts_whole_day():
    config = _cm3(2)
    alice, bob = new_devices(2)
    alice[1].policy = dv.AbortOnDay(2)
    res = run_campaign(config, alice, bob, None, 2, np.random.default_rng(9))
    assert not res.outcomes[0].aborted
    assert res.outcomes[1].aborted and res.outcomes[1].final_length == 0


def test_honest_campaign():
    config = ProtocolConfig(M=4000, mu=0.05)
    alice, bob = new_devices()
    res = run_campaign(config, alice, bob, None, 5, np.random.default_rng(10))
    keys = [o.alice.final for o in res.outcomes if not o.aborted]
    assert len(keys) == 5
    assert len({k.tobytes() for k in keys}) == 5
    assert res.ledger.credited_bits() == 0
    assert alice[0].day == 5 and alice[0].rounds_served == 5 * 4000


@pytest.mark.parametrize("k", [1, 2, 3])
def test_encrypted_reveals_independent_of_plaintext(k):
    prior = np.random.default_rng(k).random(1 << k)
    assert pad_mutual_information(k, prior / prior.sum()) == pytest.approx(0.0, abs=1e-12)
