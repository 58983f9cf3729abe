"""
Attacks that exploit device memory across days of the two-device protocol.

On the attack day Eve rides instructions on the states sent to Alice's
device: the day-1 sifted rounds, the day-1 hash seed (both public), and
either a leak schedule or a number of key bits to encode as an abort day.
The device recomputes the day-1 key from its memory and acts on it.
Afterwards Eve reads the result off the public transcript.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..abortcode import abort_decode, capacity
from ..devices import CovertPayload, LeakSchedule
from ..errors import BudgetExceeded, CampaignTooShort
from ..ledger import Adversary, EveLedger
from ..protocol import KeyPool, ProtocolConfig, SessionOutcome, SessionTranscript, new_devices, run_day
from .plans import AbortAttack, ImpostorAttack, PEAttack


def _occurrence_cap(M: int) -> int:
    # occurrences beyond this are unlikely to exist: M/2 less three standard deviations
    return max(1, int(M / 2 - 3 * math.sqrt(M / 4)))


def plan_pe_attack(day1: SessionTranscript, N_target: int, mu: float, M: int,
                   rng: np.random.Generator) -> LeakSchedule:
    """Schedule ``N_target / mu`` cheating rounds on Alice's device.

    Rounds are addressed as ``(setting, occurrence)`` and drawn uniformly.
    Each maps to a distinct day-1 final-key index, or, when the hash seed was
    withheld, to a distinct day-1 sifted round (a raw bit).
    """
    size = int(round(N_target / mu))
    if size >= M:
        raise BudgetExceeded(f"N/mu = {size} cheating rounds do not fit in M = {M}")
    raw = not isinstance(day1.pa, dict)
    if size == 0:
        return LeakSchedule({}, source="raw" if raw else "final", source_day=day1.day)
    cap = _occurrence_cap(M)
    slots = rng.choice(2 * cap, size=size, replace=False)
    if raw:
        pool = day1.key_rounds()
    else:
        pool = np.arange(day1.pa["t"])
    targets = _distinct(pool, size, rng)
    entries = {(int(s // cap), int(s % cap) + 1): int(k) for s, k in zip(slots, targets)}
    return LeakSchedule(entries, source="raw" if raw else "final", source_day=day1.day)


def _distinct(pool: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    if size <= pool.size:
        return rng.choice(pool, size=size, replace=False)
    # more cheating rounds than key bits: cycle through a shuffled pool
    return rng.permutation(pool)[np.arange(size) % pool.size]


def _instructions(day1: SessionTranscript, **extra) -> CovertPayload:
    seed = day1.pa["seed"] if isinstance(day1.pa, dict) else None
    desc = {"day": day1.day, "key_rounds": day1.key_rounds(), "complement": False}
    return CovertPayload(ec_descriptor=desc, pa_seed=seed, **extra)


def _usable(tr: SessionTranscript | None) -> bool:
    # Eve needs day 1 to have produced a key
    return tr is not None and tr.abort is None and tr.sift_mask is not None and tr.pe_indices is not None


# -- reconstruction ---------------------------------------------------------------

def _transcripts_by_day(ledger: EveLedger) -> dict[int, SessionTranscript]:
    return {tr.day: tr for tr in ledger.transcripts}


def _reconstruct_pe(ledger: EveLedger, day: int, plan: dict, tr: SessionTranscript):
    if tr.pe_indices is None or "alice" not in tr.announced_inputs or tr.pe_announcer != "alice":
        return
    payload = tr.pe_payload
    if tr.pe_encrypted:
        pad = ledger.pads.get(day)
        if pad is None:
            return
        payload = payload ^ pad
    x = tr.announced_inputs["alice"]
    schedule: LeakSchedule = plan["schedule"]
    positions = {s: np.flatnonzero(x == s) for s in (0, 1)}
    for (s, occ), idx in schedule.entries.items():
        pos = positions.get(s)
        if pos is None or occ > pos.size:
            continue
        r = pos[occ - 1]
        j = np.searchsorted(tr.pe_indices, r)
        if j < tr.pe_indices.size and tr.pe_indices[j] == r:
            if schedule.source == "final":
                ledger.credit_key_bit(idx, payload[j], "pe-reveal")
            else:
                ledger.credit_raw_bit(schedule.source_day, idx, payload[j], "pe-reveal")


def _reconstruct_abort(ledger: EveLedger, day: int, plan: dict, by_day: dict):
    for d in sorted(by_day):
        tr = by_day[d]
        if d >= day and tr.abort is not None and tr.abort.step == 2:
            try:
                bits = abort_decode(d, plan["k"])
            except ValueError:
                return
            for i, b in enumerate(bits):
                if plan["source"] == "final":
                    ledger.credit_key_bit(i, b, "abort-decode")
                else:
                    ledger.credit_raw_bit(plan["source_day"], plan["key_rounds"][i], b, "abort-decode")
            return


def eve_reconstruct(ledger: EveLedger, transcripts=None) -> EveLedger:
    """Recompute every inferred bit from Eve's plans and public transcripts.

    Works on the ledger alone, so it doubles as a replay audit: clearing the
    inferred maps and calling this again must give the same bits.
    """
    if transcripts is not None:
        ledger.transcripts = list(transcripts)
    by_day = _transcripts_by_day(ledger)
    for day, plan in sorted(ledger.plans.items()):
        if plan["kind"] == "pe" and day in by_day:
            _reconstruct_pe(ledger, day, plan, by_day[day])
        elif plan["kind"] == "abort":
            _reconstruct_abort(ledger, day, plan, by_day)
    return ledger


# -- strategies -----------------------------------------------------------------

class PEAdversary(Adversary):
    """Instructs Alice's device to leak day-1 key bits through test rounds."""

    def __init__(self, plan: PEAttack, config: ProtocolConfig, rng: np.random.Generator,
                 ledger: EveLedger | None = None):
        super().__init__(ledger)
        self.plan = plan
        self.config = config
        self.rng = rng

    def on_channel(self, shipment, day: int):
        shipment = super().on_channel(shipment, day)
        if day != self.plan.attack_day:
            return shipment
        day1 = _transcripts_by_day(self.ledger).get(1)
        if not _usable(day1):
            return shipment
        schedule = plan_pe_attack(day1, self.plan.N_target, self.config.mu, self.config.M, self.rng)
        self.ledger.plans[day] = {"kind": "pe", "schedule": schedule}
        return replace(shipment, covert=_instructions(day1, leak_schedule=schedule))

    def after_day(self, outcome: SessionOutcome):
        super().after_day(outcome)
        day = outcome.transcript.day
        if day in self.ledger.plans:
            _reconstruct_pe(self.ledger, day, self.ledger.plans[day], outcome.transcript)


class AbortAdversary(Adversary):
    """Instructs Alice's device to abort on day ``int(key bits) + 2``."""

    def __init__(self, plan: AbortAttack, days: int, ledger: EveLedger | None = None):
        super().__init__(ledger)
        k = capacity(days) if plan.bits is None else plan.bits
        if k > capacity(days):
            raise CampaignTooShort(f"{k} bits need {(1 << k) + 1} days, campaign has {days}")
        self.k = k
        self.days = days

    def on_channel(self, shipment, day: int):
        shipment = super().on_channel(shipment, day)
        if day != 2 or self.k == 0:
            return shipment
        day1 = _transcripts_by_day(self.ledger).get(1)
        if not _usable(day1):
            return shipment
        payload = _instructions(day1, abort_bits=self.k)
        self.ledger.plans[day] = {"kind": "abort", "k": self.k,
                                  "source": "final" if payload.pa_seed is not None else "raw",
                                  "source_day": day1.day, "key_rounds": day1.key_rounds()}
        return replace(shipment, covert=payload)

    def after_day(self, outcome: SessionOutcome):
        super().after_day(outcome)
        if 2 in self.ledger.plans:
            _reconstruct_abort(self.ledger, 2, self.ledger.plans[2], _transcripts_by_day(self.ledger))


# -- scenario runners ------------------------------------------------------------

@dataclass
class AttackRun:
    ledger: EveLedger
    outcomes: list[SessionOutcome]

    @property
    def leaked_key_bits(self) -> int:
        return len(self.ledger.inferred_day1_key_bits)

    def correct_key_bits(self) -> int:
        """Credited day-1 key bits that match Alice's actual day-1 key."""
        key = self.outcomes[0].alice.final if self.outcomes and self.outcomes[0].alice is not None else None
        if key is None:
            return 0
        return sum(int(key[i] == b) for i, b in self.ledger.key_bits().items())


def _run(config, adversary, days, rng, pad=None) -> AttackRun:
    alice, bob = new_devices()
    pad = pad if pad is not None else KeyPool(config.preshared_key)
    outcomes = []
    for day, day_rng in zip(range(1, days + 1), rng.spawn(days)):
        adversary.before_day(day, alice, bob)
        out = run_day(config, alice, bob, adversary, day_rng, pad=pad)
        adversary.after_day(out)
        outcomes.append(out)
    return AttackRun(adversary.ledger, outcomes)


def run_pe_attack(config: ProtocolConfig, plan: PEAttack, rng: np.random.Generator) -> AttackRun:
    """Day 1 honest, then the leak on ``plan.attack_day``."""
    eve_rng, run_rng = rng.spawn(2)
    return _run(config, PEAdversary(plan, config, eve_rng), plan.attack_day, run_rng)


def run_abort_attack(config: ProtocolConfig, plan: AbortAttack, days: int, rng: np.random.Generator) -> AttackRun:
    return _run(config, AbortAdversary(plan, days), days, rng)


def run_impostor(config: ProtocolConfig, rng: np.random.Generator, plan: ImpostorAttack = ImpostorAttack(),
                 charlie_corrupt: bool = True, days: int | None = None) -> EveLedger:
    """Day 1 between Alice and Bob, later days between Alice and Charlie.

    Test bits are one-time-pad encrypted, with a separate pre-shared pad for
    each pair.  A corrupt Charlie hands Eve the Alice-Charlie pad, undoing the encryption.
    ``plan.mode`` is ``"pe"`` or ``"abort"``; for the abort mode ``days``
    sets the campaign length.
    """
    if plan.corrupt_day < 2:
        raise ValueError("Charlie can only join after day 1")
    eve_rng, pad_rng, run_rng = rng.spawn(3)
    pad_bits = max(config.preshared_key.size, config.M)
    pad_ab = KeyPool(config.preshared_key if config.preshared_key.size else pad_rng.integers(0, 2, pad_bits, dtype=np.uint8))
    pad_ac = KeyPool(pad_rng.integers(0, 2, pad_bits * 8, dtype=np.uint8))
    if plan.mode == "pe":
        days = plan.corrupt_day
        eve = PEAdversary(PEAttack(plan.N_target, attack_day=plan.corrupt_day), config, eve_rng)
    elif plan.mode == "abort":
        days = days if days is not None else 9
        if plan.corrupt_day != 2:
            raise ValueError("the abort variant instructs the device on day 2")
        eve = AbortAdversary(AbortAttack(), days)
    else:
        raise ValueError(f"unknown impostor mode {plan.mode!r}")
    alice, bob = new_devices(prefix="ab-")
    _, charlie = new_devices(prefix="ac-")
    for day, day_rng in zip(range(1, days + 1), run_rng.spawn(days)):
        partner, pad = (bob, pad_ab) if day < plan.corrupt_day else (charlie, pad_ac)
        eve.before_day(day, alice, partner)
        out = run_day(config, alice, partner, eve, day_rng, pad=pad)
        if partner is charlie and charlie_corrupt and out.pad_used is not None:
            eve.ledger.pads[day] = out.pad_used
        eve.after_day(out)
    return eve.ledger
