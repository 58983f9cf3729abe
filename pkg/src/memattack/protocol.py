"""
One day of the two-device protocol, its multi-device variant, and campaigns.

A day runs seven steps in order:

1. Bob's source ships one half of each singlet to Alice's device over the
   insecure quantum channel, then the channel closes.
2. Alice (settings {0, 1}) and Bob (settings {0, 1, 2}) query their devices
   ``M`` times, one output before the next input.
3. Inputs are announced and checked for enough of each useful combination.
4. Sifting marks the key rounds: Alice setting 1 with Bob setting 2.
5. Every round is revealed for the Bell test independently with probability
   ``mu``; the CHSH value of the revealed test rounds must clear the threshold.
6. Unrevealed key rounds are reconciled by Cascade.
7. A Toeplitz hash compresses the reconciled string to the final key.

Only public data goes into :class:`SessionTranscript`.  Device outputs enter
it solely as revealed test bits (or their one-time-pad ciphertexts).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import qsim
from .devices import (DeviceState, QuantumChannel, SingletLink, SourceState, begin_day,
                      ingest_shipment, run_rounds, source_emit)
from .errors import (ConfigError, DeviceAborted, ECFailure, InsufficientPresharedKey,
                     MissingSettingPair, ShipmentRejected)
from .ledger import Adversary, EveLedger
from .pamp import HashSeed, MinEntropyBudget, choose_output_length, toeplitz_hash
from .reconcile import Reconciliation, error_correct

MIN_REVEALS = 30


def chsh_entropy_rate(test_value: float) -> float:
    """Modelled min-entropy per key bit: ``(S - 2) / (2 sqrt 2 - 2)`` clipped to [0, 1].

    A modelling knob, not a security bound.
    """
    return min(1.0, max(0.0, (test_value - 2.0) / (qsim.TWO_SQRT2 - 2.0)))


@dataclass(frozen=True)
class Countermeasures:
    cm1_bob_announces: bool = False
    cm2_encrypt_pe: bool = False
    cm3_multi_device: bool = False
    cm4_secret_pa: bool = False


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol parameters.

    ``noise_tolerance`` is the depolarising-noise fraction the test is meant to
    accept.  At 0 the test is simply ``S >= chsh_threshold``.  Above 0 the
    threshold becomes ``min(chsh_threshold, 2 sqrt 2 (1 - tol) - z sigma)``, so
    that devices at the tolerated noise level pass with high probability.
    ``visibility`` is the physical quality of the supplied singlets.
    """

    M: int = 10_000
    mu: float = 0.05
    chsh_threshold: float = 2.5
    noise_tolerance: float = 0.0
    tolerance_z: float = 2.0
    m_devices: int = 1
    countermeasures: Countermeasures = Countermeasures()
    preshared_key: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8), repr=False)
    days: int = 1
    visibility: float = 1.0
    epsilon: float = 1e-10
    pa_margin: int = 40
    min_combo_fraction: float = 0.5
    ec_passes: int = 6
    entropy_rate: Callable[[float], float] = chsh_entropy_rate

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ConfigError(f"mu must lie in (0, 1), got {self.mu}")
        if self.M * self.mu < MIN_REVEALS:
            raise ConfigError(f"M*mu = {self.M * self.mu:g} is below {MIN_REVEALS}")
        if self.countermeasures.cm3_multi_device and self.m_devices < 2:
            raise ConfigError("the multi-device protocol needs m_devices >= 2")
        if self.m_devices < 1 or self.days < 1:
            raise ConfigError("m_devices and days must be positive")
        if not 0.0 <= self.noise_tolerance < 1.0:
            raise ConfigError("noise_tolerance must lie in [0, 1)")
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError("visibility must lie in [0, 1]")
        object.__setattr__(self, "preshared_key", np.asarray(self.preshared_key, dtype=np.uint8))

    def test_threshold(self, sigma: float) -> float:
        if self.noise_tolerance <= 0.0:
            return self.chsh_threshold
        tolerant = qsim.TWO_SQRT2 * (1.0 - self.noise_tolerance) - self.tolerance_z * sigma
        return min(self.chsh_threshold, tolerant)


class KeyPool:
    """Pre-shared one-time pad, consumed front to back."""

    def __init__(self, bits):
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.position = 0

    @property
    def remaining(self) -> int:
        return self.bits.size - self.position

    def take(self, k: int) -> np.ndarray:
        if k > self.remaining:
            raise InsufficientPresharedKey(f"need {k} pad bits, {self.remaining} left")
        out = self.bits[self.position: self.position + k]
        self.position += k
        return out


@dataclass(frozen=True)
class Abort:
    step: int
    cause: str


@dataclass
class SessionTranscript:
    """Public record of one session.

    ``pe_indices`` is ``None`` when the test rounds were picked with shared
    secret randomness.  ``pe_payload`` holds plaintext bits, or ciphertext
    when ``pe_encrypted``.  ``pa`` is ``{"seed": HashSeed, "t": int}`` or the
    string ``"withheld"``.
    """

    day: int
    announced_inputs: dict[str, np.ndarray] = field(default_factory=dict)
    sift_mask: np.ndarray | None = None
    pe_announcer: str = "alice"
    pe_indices: np.ndarray | None = None
    pe_payload: np.ndarray | None = None
    pe_encrypted: bool = False
    test_value: float | None = None
    test_threshold: float | None = None
    ec: dict | None = None
    ec_parities: np.ndarray | None = field(default=None, repr=False)
    pa: dict | str | None = None
    abort: Abort | None = None
    device: int | None = None

    def key_rounds(self) -> np.ndarray | None:
        """Rounds forming the sifted key, recomputable from public data alone."""
        if self.sift_mask is None or self.pe_indices is None:
            return None
        mask = self.sift_mask.copy()
        mask[self.pe_indices] = False
        return np.flatnonzero(mask)

    def to_record(self) -> dict:
        pa = self.pa
        if isinstance(pa, dict):
            pa = {"t": int(pa["t"]), "seed_bits": int(pa["seed"].bits.size)}
        return {
            "day": self.day,
            "device": self.device,
            "rounds": int(self.sift_mask.size) if self.sift_mask is not None else None,
            "sifted": int(self.sift_mask.sum()) if self.sift_mask is not None else None,
            "pe_announcer": self.pe_announcer,
            "pe_reveals": int(self.pe_payload.size) if self.pe_payload is not None else 0,
            "pe_encrypted": self.pe_encrypted,
            "test_value": None if self.test_value is None else round(float(self.test_value), 12),
            "test_threshold": None if self.test_threshold is None else round(float(self.test_threshold), 12),
            "ec": self.ec,
            "pa": pa,
            "abort": None if self.abort is None else {"step": self.abort.step, "cause": self.abort.cause},
        }


@dataclass
class KeyMaterial:
    raw: np.ndarray
    sifted: np.ndarray
    corrected: np.ndarray
    final: np.ndarray
    leakage_bits: int
    entropy_budget: MinEntropyBudget


@dataclass
class SessionOutcome:
    """Result of one day: a key for each party, or an abort.

    ``taps`` is what Eve read off the quantum channel.  ``pad_used`` is the
    one-time-pad segment spent on the test (known to both parties, and handed
    to Eve by a corrupt counterparty).
    """

    transcript: SessionTranscript
    alice: KeyMaterial | None = None
    bob: KeyMaterial | None = None
    taps: list = field(default_factory=list)
    pad_used: np.ndarray | None = field(default=None, repr=False)
    sub_transcripts: list[SessionTranscript] = field(default_factory=list)
    device_budgets: list[Fraction] = field(default_factory=list)

    @property
    def aborted(self) -> bool:
        return self.transcript.abort is not None

    @property
    def final_length(self) -> int:
        return 0 if self.alice is None else int(self.alice.final.size)


# -- step 5 ------------------------------------------------------------------------

@dataclass
class ParameterEstimate:
    test_value: float
    sigma: float
    reveal_mask: np.ndarray
    payload: np.ndarray
    key_consumed: int
    qber: float
    pad: np.ndarray | None = None


def parameter_estimation(x, y, a_bits, b_bits, mu: float, rng: np.random.Generator,
                         announcer: str = "alice", encrypt: bool = False, pad: KeyPool | None = None,
                         statistic: Callable = qsim.chsh_value) -> ParameterEstimate:
    """Reveal each round with probability ``mu`` and score the revealed test rounds.

    The announcer's bits are published, or one-time-pad encrypted with one
    pre-shared bit per revealed bit.  Raises :class:`MissingSettingPair` when
    a CHSH setting pair received no reveals.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    a_bits = np.asarray(a_bits, dtype=np.uint8)
    b_bits = np.asarray(b_bits, dtype=np.uint8)
    reveal = rng.random(x.size) < mu
    idx = np.flatnonzero(reveal)
    announced = (a_bits if announcer == "alice" else b_bits)[idx]
    payload, used = announced, None
    if encrypt:
        if pad is None:
            raise InsufficientPresharedKey("encrypted parameter estimation needs a pre-shared key")
        used = pad.take(idx.size)
        payload = announced ^ used
    counts = qsim.tally(x[idx], y[idx], a_bits[idx], b_bits[idx])
    chsh = counts.copy()
    chsh[qsim.KEY_PAIR] = 0
    s = statistic(chsh)
    sigma = qsim.chsh_std(chsh)
    kx, ky = qsim.KEY_PAIR
    key_rev = (x[idx] == kx) & (y[idx] == ky)
    qber = float(np.mean(a_bits[idx][key_rev] == b_bits[idx][key_rev])) if key_rev.any() else 0.0
    return ParameterEstimate(s, sigma, reveal, payload, int(idx.size) if encrypt else 0, qber, used)


# -- a single device pair through steps 1-6 -----------------------------------------------

@dataclass
class _Reconciled:
    transcript: SessionTranscript
    alice_raw: np.ndarray
    bob_raw: np.ndarray
    rec: Reconciliation
    hmin: float
    pad: np.ndarray | None
    taps: list


def _check_inputs(x, y, fraction: float) -> bool:
    expected = x.size / 6.0
    for cx, cy in list(qsim.CHSH_PAIRS) + [qsim.KEY_PAIR]:
        if np.count_nonzero((x == cx) & (y == cy)) < fraction * expected:
            return False
    return True


def _steps_1_to_6(config: ProtocolConfig, alice: DeviceState, bob: DeviceState,
                  eve: Adversary | None, rng: np.random.Generator, pad: KeyPool | None,
                  source: SourceState | None, secret_selection: bool, device_index: int | None):
    cms = config.countermeasures
    r_inputs, r_link, r_pe, r_ec, r_dev_a, r_dev_b = rng.spawn(6)
    begin_day(alice)
    begin_day(bob)
    if cms.cm1_bob_announces:
        bob.isolated_from_incoming = True
    tr = SessionTranscript(day=alice.day, device=device_index)
    taps: list = []

    # step 1
    channel = QuantumChannel()
    source = source if source is not None else SourceState()
    shipment = channel.deliver(source_emit(source, honest=source.isolated, count=config.M))
    if shipment.covert is not None:
        taps.append(shipment.covert)
    if eve is not None:
        shipment = eve.on_channel(shipment, tr.day)
    try:
        ingest_shipment(alice, shipment)
    except ShipmentRejected:
        tr.abort = Abort(1, "ShipmentRejected")
        return tr, taps
    channel.close()

    # step 2
    x = r_inputs.integers(0, 2, size=config.M)
    y = r_inputs.integers(0, 3, size=config.M)
    link = SingletLink(qsim.CorrelationModel(config.visibility), r_link)
    honest_a, honest_b = link.batch(x, y)
    try:
        a_out = run_rounds(alice, x, honest_a, r_dev_a)
        b_out = run_rounds(bob, y, honest_b, r_dev_b)
    except DeviceAborted:
        tr.abort = Abort(2, "DeviceAborted")
        return tr, taps

    # steps 3-4
    tr.announced_inputs = {"alice": x.astype(np.uint8), "bob": y.astype(np.uint8)}
    if not _check_inputs(x, y, config.min_combo_fraction):
        tr.abort = Abort(3, "InsufficientInputs")
        return tr, taps
    kx, ky = qsim.KEY_PAIR
    tr.sift_mask = (x == kx) & (y == ky)

    # step 5
    tr.pe_announcer = "bob" if cms.cm1_bob_announces else "alice"
    tr.pe_encrypted = cms.cm2_encrypt_pe
    try:
        pe = parameter_estimation(x, y, a_out, b_out, config.mu, r_pe, announcer=tr.pe_announcer,
                                  encrypt=cms.cm2_encrypt_pe, pad=pad)
    except InsufficientPresharedKey:
        tr.abort = Abort(5, "InsufficientPresharedKey")
        return tr, taps
    except MissingSettingPair:
        tr.abort = Abort(5, "MissingSettingPair")
        return tr, taps
    tr.pe_indices = None if secret_selection else np.flatnonzero(pe.reveal_mask)
    tr.pe_payload = pe.payload
    tr.test_value = pe.test_value
    tr.test_threshold = config.test_threshold(pe.sigma)
    if pe.test_value < tr.test_threshold:
        tr.abort = Abort(5, "TestFailed")
        return tr, taps

    # step 6
    key_rounds = np.flatnonzero(tr.sift_mask & ~pe.reveal_mask)
    alice_raw = a_out[key_rounds]
    bob_raw = (1 - b_out[key_rounds]).astype(np.uint8)
    try:
        rec = error_correct(alice_raw, bob_raw, r_ec, qber=pe.qber, passes=config.ec_passes)
    except ECFailure:
        tr.abort = Abort(6, "ECFailure")
        return tr, taps
    tr.ec = rec.descriptor()
    tr.ec_parities = np.asarray(rec.parity_messages, dtype=np.uint8)
    hmin = config.entropy_rate(pe.test_value) * key_rounds.size
    return _Reconciled(tr, a_out, b_out, rec, hmin, pe.pad, taps), taps


def _key_material(raw, sifted, corrected, final, leakage, budget):
    return KeyMaterial(raw=raw, sifted=sifted, corrected=corrected, final=final,
                       leakage_bits=leakage, entropy_budget=budget)


def _as_device(devices) -> DeviceState:
    if isinstance(devices, DeviceState):
        return devices
    (dev,) = devices
    return dev


def run_day(config: ProtocolConfig, alice_devices, bob_devices, eve: Adversary | None,
            rng: np.random.Generator, pad: KeyPool | None = None,
            source: SourceState | None = None) -> SessionOutcome:
    """Run one day of the two-device protocol.

    On any abort the outcome carries the transcript only.
    """
    alice, bob = _as_device(alice_devices), _as_device(bob_devices)
    if pad is None:
        pad = KeyPool(config.preshared_key)
    r_main, r_pa = rng.spawn(2)
    got, taps = _steps_1_to_6(config, alice, bob, eve, r_main, pad, source,
                              secret_selection=False, device_index=None)
    if isinstance(got, SessionTranscript):
        return SessionOutcome(got, taps=taps)
    tr, rec = got.transcript, got.rec
    budget = MinEntropyBudget(hmin_eps=got.hmin, epsilon=config.epsilon, leakage_bits=rec.leakage_bits,
                              margin=config.pa_margin)
    t = choose_output_length(budget)
    if t == 0 or rec.alice.size == 0:
        tr.abort = Abort(7, "NoKey")
        return SessionOutcome(tr, taps=taps, pad_used=got.pad)
    t = min(t, rec.alice.size)
    seed = HashSeed.random(rec.alice.size, t, r_pa)
    tr.pa = "withheld" if config.countermeasures.cm4_secret_pa else {"seed": seed, "t": t}
    k_a = toeplitz_hash(rec.alice, seed)
    k_b = toeplitz_hash(rec.bob, seed)
    sifted_rounds = tr.key_rounds()
    return SessionOutcome(
        tr,
        alice=_key_material(got.alice_raw, got.alice_raw[sifted_rounds], rec.alice, k_a, rec.leakage_bits, budget),
        bob=_key_material(got.bob_raw, (1 - got.bob_raw[sifted_rounds]).astype(np.uint8), rec.bob, k_b,
                          rec.leakage_bits, budget),
        taps=taps, pad_used=got.pad)


def run_day_cm3(config: ProtocolConfig, alice_devices: Sequence[DeviceState], bob_devices: Sequence[DeviceState],
                eve: Adversary | None, rng: np.random.Generator, pad: KeyPool | None = None) -> SessionOutcome:
    """Run steps 1-6 on each of ``m`` isolated device pairs, then hash once.

    Test rounds are selected with shared secret randomness and their bits
    encrypted; Bob announces.  The output length tolerates exposure of any one
    device's reconciled string: ``t = floor(sum(b) - max(b) - margin)`` with
    ``b_j = hmin_j - leakage_j``, which is never more than ``(m-1)/m`` of the
    total budget.
    """
    m = config.m_devices
    if len(alice_devices) != m or len(bob_devices) != m:
        raise ConfigError(f"expected {m} device pairs, got {len(alice_devices)}/{len(bob_devices)}")
    cms = replace(config.countermeasures, cm1_bob_announces=True, cm2_encrypt_pe=True, cm3_multi_device=True)
    sub_config = replace(config, countermeasures=cms)
    if pad is None:
        pad = KeyPool(config.preshared_key)
    streams = rng.spawn(m + 1)
    parts: list[_Reconciled] = []
    subs: list[SessionTranscript] = []
    taps: list = []
    pads = []
    for j in range(m):
        got, t_j = _steps_1_to_6(sub_config, alice_devices[j], bob_devices[j], eve, streams[j], pad, None,
                                 secret_selection=True, device_index=j)
        taps.extend(t_j)
        if isinstance(got, SessionTranscript):
            subs.append(got)
            top = SessionTranscript(day=got.day, abort=Abort(got.abort.step, f"device {j}: {got.abort.cause}"))
            return SessionOutcome(top, taps=taps, sub_transcripts=subs)
        parts.append(got)
        subs.append(got.transcript)
        pads.append(got.pad)

    budgets = [Fraction(p.hmin) - p.rec.leakage_bits for p in parts]
    total = sum(budgets)
    hmin = sum(Fraction(p.hmin) for p in parts)
    leakage = sum(p.rec.leakage_bits for p in parts)
    factor = (total - max(budgets)) / total if total > 0 else Fraction(0)
    budget = MinEntropyBudget(hmin_eps=float(hmin), epsilon=config.epsilon, leakage_bits=leakage,
                              margin=config.pa_margin, m_factor=factor)
    # exact rational arithmetic: floor(factor * total - margin)
    t = max(0, math.floor(factor * total - config.pa_margin)) if total > 0 else 0
    top = SessionTranscript(day=subs[0].day)
    corrected_a = np.concatenate([p.rec.alice for p in parts])
    corrected_b = np.concatenate([p.rec.bob for p in parts])
    if t == 0:
        top.abort = Abort(7, "NoKey")
        return SessionOutcome(top, taps=taps, sub_transcripts=subs, device_budgets=budgets)
    t = min(t, corrected_a.size)
    seed = HashSeed.random(corrected_a.size, t, streams[m])
    top.pa = "withheld" if config.countermeasures.cm4_secret_pa else {"seed": seed, "t": t}
    top.ec = {"method": "cascade", "devices": m, "parities_disclosed": leakage}
    raw_a = np.concatenate([p.alice_raw for p in parts])
    raw_b = np.concatenate([p.bob_raw for p in parts])
    pad_used = np.concatenate([p for p in pads if p is not None]) if any(p is not None for p in pads) else None
    return SessionOutcome(
        top,
        alice=_key_material(raw_a, corrected_a, corrected_a, toeplitz_hash(corrected_a, seed), leakage, budget),
        bob=_key_material(raw_b, corrected_b, corrected_b, toeplitz_hash(corrected_b, seed), leakage, budget),
        taps=taps, pad_used=pad_used, sub_transcripts=subs, device_budgets=budgets)


def exposure_budget(outcome: SessionOutcome, exposed: int) -> Fraction:
    """Entropy left in the concatenation once device ``exposed``'s string is known."""
    return sum(b for j, b in enumerate(outcome.device_budgets) if j != exposed)


# -- campaigns --------------------------------------------------------------------

@dataclass
class CampaignResult:
    outcomes: list[SessionOutcome]
    ledger: EveLedger


def run_campaign(config: ProtocolConfig, alice_devices, bob_devices, eve: Adversary | None,
                 days: int, rng: np.random.Generator) -> CampaignResult:
    """Run ``days`` consecutive days on the same devices; memory persists."""
    eve = eve if eve is not None else Adversary()
    pad = KeyPool(config.preshared_key)
    multi = config.countermeasures.cm3_multi_device
    outcomes = []
    for day, day_rng in zip(range(1, days + 1), rng.spawn(days)):
        eve.before_day(day, alice_devices, bob_devices)
        if multi:
            out = run_day_cm3(config, alice_devices, bob_devices, eve, day_rng, pad=pad)
        else:
            out = run_day(config, alice_devices, bob_devices, eve, day_rng, pad=pad)
        eve.after_day(out)
        outcomes.append(out)
    return CampaignResult(outcomes, eve.ledger)


def pad_mutual_information(k: int, prior: np.ndarray | None = None) -> float:
    """Exact ``I(ciphertext; plaintext)`` for ``k`` bits under a uniform pad.

    Enumerates every plaintext/pad pair.  ``prior`` is any distribution over
    the ``2**k`` plaintexts (uniform by default).
    """
    size = 1 << k
    prior = np.full(size, 1.0 / size) if prior is None else np.asarray(prior, dtype=float)
    joint = np.zeros((size, size))
    for p, key in itertools.product(range(size), repeat=2):
        joint[p, p ^ key] += prior[p] / size
    pp = joint.sum(axis=1, keepdims=True)
    pc = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (pp @ pc)[nz])))


def new_devices(m: int = 1, prefix: str = "") -> tuple[list[DeviceState], list[DeviceState]]:
    alice = [DeviceState(f"{prefix}alice-{j}", side="alice") for j in range(m)]
    bob = [DeviceState(f"{prefix}bob-{j}", side="bob") for j in range(m)]
    return alice, bob
