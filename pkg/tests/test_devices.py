import numpy as np
import pytest

from memattack import devices as dv
from memattack import qsim
from memattack.errors import DeviceAborted, IsolationViolation, ShipmentRejected
from memattack.pamp import HashSeed, toeplitz_hash
from memattack.protocol import ProtocolConfig, new_devices, run_day


def _serve_day(dev, settings, honest, rng=None):
    dv.begin_day(dev)
    return dv.run_rounds(dev, settings, honest, rng)


def _link(seed=0, v=1.0):
    return dv.SingletLink(qsim.CorrelationModel(v), np.random.default_rng(seed))


def test_honest_equal_bases_anticorrelated():
    alice, bob = dv.DeviceState("a"), dv.DeviceState("b", side="bob")
    x, y = np.ones(500, dtype=int), np.full(500, 2)
    ha, hb = _link().batch(x, y)
    a = _serve_day(alice, x, ha)
    b = _serve_day(bob, y, hb)
    assert np.all(a != b)


def test_honest_device_matches_qsim():
    x = np.random.default_rng(1).integers(0, 2, 300)
    y = np.random.default_rng(2).integers(0, 3, 300)
    ha, hb = _link(9, 0.9).batch(x, y)
    ta = np.array([b.angle for b in qsim.ALICE_BASES])[x]
    tb = np.array([b.angle for b in qsim.BOB_BASES])[y]
    sa, sb = qsim.sample_pairs(qsim.CorrelationModel(0.9), ta, tb, np.random.default_rng(9))
    dev = dv.DeviceState("a")
    assert np.array_equal(_serve_day(dev, x, ha), qsim.sign_to_bit(sa))
    assert np.array_equal(hb, qsim.sign_to_bit(sb))


def _device_with_day1(n=200, seed=0):
    rng = np.random.default_rng(seed)
    dev = dv.DeviceState("a")
    _serve_day(dev, rng.integers(0, 2, n), rng.integers(0, 2, n, dtype=np.uint8))
    key_rounds = np.flatnonzero(rng.random(n) < 0.3)
    seed_bits = HashSeed.random(key_rounds.size, 20, rng)
    return dev, {"day": 1, "key_rounds": key_rounds, "complement": False}, seed_bits


def test_leak_schedule_outputs_key_bit():
    dev, desc, seed = _device_with_day1()
    key = toeplitz_hash(dev.outputs_of_day(1)[desc["key_rounds"]], seed)
    dv.begin_day(dev)
    schedule = dv.LeakSchedule({(17, 1): 5, (17, 3): 6})
    dv.ingest_shipment(dev, dv.StateShipment(4, dv.CovertPayload(desc, seed, schedule)))
    honest = 1 - np.array([0, key[5], 0, 1 - key[6]], dtype=np.uint8)
    out = dv.run_rounds(dev, [3, 17, 17, 17], honest)
    assert out[1] == key[5]
    assert out[2] == honest[2]
    assert out[3] == key[6]
    assert out[0] == honest[0]


def test_leak_occurrences_across_batches():
    dev, desc, seed = _device_with_day1()
    key = dev.recompute_final_key(desc, seed)
    dv.begin_day(dev)
    dv.ingest_shipment(dev, dv.StateShipment(4, dv.CovertPayload(desc, seed, dv.LeakSchedule({(0, 2): 3}))))
    first = dv.run_rounds(dev, [0], [1 - key[3]])
    second = dv.run_rounds(dev, [0], [1 - key[3]])
    assert first[0] == 1 - key[3] and second[0] == key[3]


def test_raw_leak_source():
    dev, _, _ = _device_with_day1()
    raw = dev.outputs_of_day(1)
    dv.begin_day(dev)
    dv.ingest_shipment(dev, dv.StateShipment(1, dv.CovertPayload(leak_schedule=dv.LeakSchedule({(1, 1): 7}, "raw"))))
    assert dv.run_rounds(dev, [1], [1 - raw[7]])[0] == raw[7]


def test_abort_on_day():
    dev = dv.DeviceState("a", policy=dv.AbortOnDay(7))
    for _ in range(6):
        _serve_day(dev, [0, 1], [0, 0])
    dv.begin_day(dev)
    with pytest.raises(DeviceAborted) as info:
        dv.run_rounds(dev, [0], [0])
    assert info.value.day == 7
    with pytest.raises(ValueError):
        dv.AbortOnDay(1)


def test_covert_keys_match_protocol_key():
    config = ProtocolConfig(M=4000, mu=0.05)
    alice, bob = new_devices()
    out = run_day(config, alice, bob, None, np.random.default_rng(11))
    assert not out.aborted
    tr = out.transcript
    desc = {"day": 1, "key_rounds": tr.key_rounds(), "complement": False}
    assert np.array_equal(alice[0].recompute_final_key(desc, tr.pa["seed"]), out.alice.final)
    bob_desc = dict(desc, complement=True)
    # Bob's sifted bits before correction differ from Alice's only in error positions
    bob_key = bob[0].recompute_final_key(bob_desc, tr.pa["seed"])
    assert bob_key.size == out.alice.final.size


def test_isolated_device_rejects_shipment():
    dev = dv.DeviceState("b", side="bob", isolated_from_incoming=True)
    dv.begin_day(dev)
    with pytest.raises(ShipmentRejected):
        dv.ingest_shipment(dev, dv.StateShipment(10))


def test_honest_shipment_only_counts():
    dev = dv.DeviceState("a")
    dv.begin_day(dev)
    dv.ingest_shipment(dev, dv.StateShipment(10))
    assert dev.expected_rounds == 10 and dev.covert is None


def test_closed_channel():
    ch = dv.QuantumChannel()
    ch.deliver(dv.StateShipment(1))
    ch.close()
    with pytest.raises(ShipmentRejected):
        ch.deliver(dv.StateShipment(1))


def test_source_emit():
    assert dv.source_emit(dv.SourceState(), honest=True, count=5).covert is None
    with pytest.raises(IsolationViolation):
        dv.source_emit(dv.SourceState(), hidden_bits=[1, 0])
    meas = dv.DeviceState("b", side="bob")
    raw = _serve_day(meas, [0, 1, 2, 0], [1, 0, 1, 1])
    ship = dv.source_emit(dv.SourceState(isolated=False, measurement=meas), honest=False, count=4)
    assert np.array_equal(ship.covert.hidden_bits, raw)
    assert not ship.source_honest


def test_history_append_only_and_counts():
    dev = dv.DeviceState("a")
    _serve_day(dev, [0, 1, 1], [0, 1, 0])
    _serve_day(dev, [1], [1])
    assert dev.rounds_served == 4
    assert list(dev.iter_history()) == [(1, 0, 0, 0), (1, 1, 1, 1), (1, 2, 1, 0), (2, 0, 1, 1)]


def test_causal_ordering_truncation():
    # outputs of a prefix never depend on later inputs
    rng = np.random.default_rng(3)
    settings = rng.integers(0, 2, 400)
    honest = rng.integers(0, 2, 400, dtype=np.uint8)
    outs = []
    for cut in (400, 150):
        dev = dv.DeviceState("a", policy=dv.NoiseModulating(start_day=1, noise_low=0.3))
        outs.append(_serve_day(dev, settings[:cut], honest[:cut], np.random.default_rng(4)))
    assert np.array_equal(outs[0][:150], outs[1])


def test_batch_equals_single_steps():
    dev_a, desc, seed = _device_with_day1(seed=5)
    dev_b, _, _ = _device_with_day1(seed=5)
    payload = dv.CovertPayload(desc, seed, dv.LeakSchedule({(0, 2): 1, (1, 1): 2}))
    settings = [1, 0, 0, 1, 0]
    honest = [0, 1, 1, 0, 0]
    for dev in (dev_a, dev_b):
        dv.begin_day(dev)
        dv.ingest_shipment(dev, dv.StateShipment(5, payload))
    batch = dv.run_rounds(dev_a, settings, honest)
    steps = [dv.device_step(dev_b, s, dv.RoundLink(h, 0)) for s, h in zip(settings, honest)]
    assert list(batch) == steps


def test_noise_modulating_rate():
    dev = dv.DeviceState("a", policy=dv.NoiseModulating(noise_high=0.2))
    _serve_day(dev, [0, 0], [1, 0])
    dv.begin_day(dev)
    assert dev.policy.rate(dev) == 0.2
    dv.begin_day(dev)
    assert dev.policy.rate(dev) == 0.0


def test_destroyed_device():
    dev = dv.DeviceState("a", destroyed=True)
    with pytest.raises(ValueError):
        dv.begin_day(dev)


def test_policy_from_config():
    assert dv.policy_from_config("abort_on_day", day=4) == dv.AbortOnDay(4)
    with pytest.raises(ValueError):
        dv.policy_from_config("nope")
