"""
Measurement and source devices as programmable state machines with memory.

Paired devices never talk to each other.  A :class:`SingletLink` draws the
honest joint outcome of each round from the singlet statistics and hands each
device only its own half; the device's policy then decides what it actually
outputs.  Everything a device has ever seen stays in its history, which is the
memory the attacks exploit.

A device reacts to covert instructions delivered with incoming quantum
states (:class:`CovertPayload` on a :class:`StateShipment`).  Those
instructions never appear in protocol transcripts.
"""

from __future__ import annotations

import array
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from . import qsim
from .errors import DeviceAborted, IsolationViolation, ShipmentRejected
from .abortcode import abort_encode
from .pamp import HashSeed, toeplitz_hash


# -- policies --------------------------------------------------------------------

@dataclass(frozen=True)
class Honest:
    """Output the measured outcome."""


@dataclass(frozen=True)
class LeakSchedule:
    """Replace selected outputs by remembered secret bits.

    ``entries`` maps ``(setting, occurrence)`` (occurrence counted from 1
    within the day) to an index into the leak source: the recomputed
    final key of ``source_day`` when ``source == "final"``, or the raw output
    of that round of ``source_day`` when ``source == "raw"``.
    """

    entries: Mapping[tuple[int, int], int]
    source: str = "final"
    source_day: int = 1

    def __post_init__(self):
        if self.source not in ("final", "raw"):
            raise ValueError(f"unknown leak source {self.source!r}")
        object.__setattr__(self, "entries", dict(self.entries))

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class AbortOnDay:
    day: int

    def __post_init__(self):
        if self.day < 2:
            raise ValueError("abort day must be at least 2")


@dataclass(frozen=True)
class NoiseModulating:
    """Inject noise whose level encodes one remembered output bit per day.

    On device day ``d >= start_day`` the device looks up its output in round
    ``d - start_day`` of ``source_day``; if that bit is 1 it replaces each
    output by a fresh uniform bit with probability ``noise_high``, otherwise
    with probability ``noise_low``.  Past the end of the stored round it
    behaves with ``noise_low``.
    """

    source_day: int = 1
    start_day: int = 2
    noise_low: float = 0.0
    noise_high: float = 0.15

    def rate(self, state: "DeviceState") -> float:
        if state.day < self.start_day:
            return 0.0
        idx = state.day - self.start_day
        outputs = state.outputs_of_day(self.source_day)
        if outputs is None or idx >= outputs.size:
            return self.noise_low
        return self.noise_high if outputs[idx] else self.noise_low


DevicePolicy = Union[Honest, LeakSchedule, AbortOnDay, NoiseModulating]

POLICY_NAMES = {
    "honest": Honest,
    "abort_on_day": AbortOnDay,
    "noise_modulating": NoiseModulating,
}


def policy_from_config(name: str, **params) -> DevicePolicy:
    """Build a policy from the names used in experiment configuration files."""
    try:
        cls = POLICY_NAMES[name]
    except KeyError:
        raise ValueError(f"unknown device policy {name!r}; expected one of {sorted(POLICY_NAMES)}")
    return cls(**params)


# -- covert channel --------------------------------------------------------------

@dataclass(frozen=True)
class CovertPayload:
    """Classical side-band riding on shipped quantum states.

    Eve writes it on the insecure channel (instructions to the receiving
    device) or reads it there (data hidden by a malicious source).
    """

    ec_descriptor: Mapping | None = None
    pa_seed: HashSeed | None = None
    leak_schedule: LeakSchedule | None = None
    abort_day: int | None = None
    hidden_bits: np.ndarray | None = None
    # encode the first abort_bits bits of the recomputed key as an abort day
    abort_bits: int | None = None


@dataclass(frozen=True)
class StateShipment:
    count: int
    covert: CovertPayload | None = None
    source_honest: bool = True


class QuantumChannel:
    """The insecure quantum channel for one day; closed once states arrive."""

    def __init__(self):
        self.closed = False
        self.delivered: list[StateShipment] = []

    def deliver(self, shipment: StateShipment) -> StateShipment:
        if self.closed:
            raise ShipmentRejected("quantum channel already closed for the day")
        self.delivered.append(shipment)
        return shipment

    def close(self):
        self.closed = True


# -- device state ----------------------------------------------------------------

@dataclass
class DayRecord:
    day: int
    inputs: array.array = field(default_factory=lambda: array.array("B"))
    outputs: array.array = field(default_factory=lambda: array.array("B"))

    def __len__(self):
        return len(self.inputs)


@dataclass
class DeviceState:
    """A device and everything it remembers.

    ``history`` only ever grows.  ``isolated_from_incoming`` marks a
    sub-laboratory that accepts no shipments; ``destroyed`` marks a device
    that has been disposed of and may not be used again.
    """

    device_id: str
    side: str = "alice"
    policy: DevicePolicy = field(default_factory=Honest)
    day: int = 0
    isolated_from_incoming: bool = False
    destroyed: bool = False
    covert: CovertPayload | None = None
    covert_day: int | None = None
    expected_rounds: int = 0
    history: list[DayRecord] = field(default_factory=list)
    _occurrences: dict = field(default_factory=dict, repr=False)

    @property
    def rounds_served(self) -> int:
        return sum(len(r) for r in self.history)

    def iter_history(self) -> Iterator[tuple[int, int, int, int]]:
        """Yield ``(day, round, setting, output)`` in the order served."""
        for rec in self.history:
            for i, (s, o) in enumerate(zip(rec.inputs, rec.outputs)):
                yield rec.day, i, s, o

    def record_of_day(self, day: int) -> DayRecord | None:
        for rec in self.history:
            if rec.day == day:
                return rec
        return None

    def outputs_of_day(self, day: int) -> np.ndarray | None:
        rec = self.record_of_day(day)
        if rec is None:
            return None
        return np.frombuffer(rec.outputs.tobytes(), dtype=np.uint8)

    def active_instructions(self) -> CovertPayload | None:
        if self.covert is not None and self.covert_day == self.day:
            return self.covert
        return None

    def recompute_final_key(self, descriptor: Mapping | None = None,
                            pa_seed: HashSeed | None = None) -> np.ndarray:
        """Replay a past day's reconciliation and hashing on stored outputs.

        The descriptor names the day, the rounds that formed the sifted key
        (in order) and whether this side's bits are complemented.  Each
        reconciled string is that side's sifted string, so the replay is exact for each
        device.
        """
        covert = self.covert
        descriptor = descriptor if descriptor is not None else (covert.ec_descriptor if covert else None)
        pa_seed = pa_seed if pa_seed is not None else (covert.pa_seed if covert else None)
        if descriptor is None or pa_seed is None:
            raise ValueError("device holds no reconciliation/hashing descriptors")
        day = int(descriptor["day"])
        outputs = self.outputs_of_day(day)
        if outputs is None:
            raise ValueError(f"device {self.device_id!r} has no memory of day {day}")
        bits = outputs[np.asarray(descriptor["key_rounds"], dtype=np.int64)]
        if descriptor.get("complement", False):
            bits = 1 - bits
        return toeplitz_hash(bits, pa_seed)

    def remembered_key(self) -> np.ndarray:
        """The past day's final key when a hash seed was delivered, else its sifted raw bits."""
        covert = self.covert
        if covert is None or covert.ec_descriptor is None:
            raise ValueError("device holds no reconciliation descriptor")
        if covert.pa_seed is not None:
            return self.recompute_final_key()
        desc = covert.ec_descriptor
        outputs = self.outputs_of_day(int(desc["day"]))
        if outputs is None:
            raise ValueError(f"device {self.device_id!r} has no memory of day {desc['day']}")
        return outputs[np.asarray(desc["key_rounds"], dtype=np.int64)]


def begin_day(state: DeviceState) -> DeviceState:
    if state.destroyed:
        raise ValueError(f"device {state.device_id!r} has been disposed of")
    state.day += 1
    state.history.append(DayRecord(state.day))
    state._occurrences = {}
    return state


def ingest_shipment(state: DeviceState, shipment: StateShipment) -> DeviceState:
    """Receive the day's states and whatever rides on them."""
    if state.isolated_from_incoming:
        raise ShipmentRejected(f"device {state.device_id!r} is isolated from incoming communication")
    state.expected_rounds += shipment.count
    if shipment.covert is not None:
        state.covert = shipment.covert
        state.covert_day = state.day
    return state


@dataclass
class SourceState:
    """Bob's state-producing device.

    ``isolated`` means separate from, and sealed against, the other side's measurement
    device.  A combined source shares memory with ``measurement``.
    """

    device_id: str = "source"
    isolated: bool = True
    measurement: DeviceState | None = None


def source_emit(source: SourceState, honest: bool = True, hidden_bits=None, count: int = 0) -> StateShipment:
    """Emit the day's states, possibly smuggling remembered bits out."""
    if source.isolated:
        if hidden_bits is not None:
            raise IsolationViolation("an isolated source has no data to hide")
        return StateShipment(count=count, covert=None, source_honest=honest)
    if hidden_bits is None and not honest and source.measurement is not None:
        stored = [np.frombuffer(r.outputs.tobytes(), dtype=np.uint8) for r in source.measurement.history]
        hidden_bits = np.concatenate(stored) if stored else np.zeros(0, dtype=np.uint8)
    covert = None if hidden_bits is None else CovertPayload(hidden_bits=np.asarray(hidden_bits, dtype=np.uint8))
    return StateShipment(count=count, covert=covert, source_honest=honest and covert is None)


# -- rounds ------------------------------------------------------------------------

class SingletLink:
    """Per-session joint sampler pairing one Alice device with one Bob device.

    Two uniforms are consumed per round whichever way rounds are requested,
    so one batch of ``k`` rounds equals ``k`` single rounds from the same seed.
    """

    def __init__(self, model: qsim.CorrelationModel, rng: np.random.Generator,
                 alice_bases: Sequence[qsim.Basis] = qsim.ALICE_BASES,
                 bob_bases: Sequence[qsim.Basis] = qsim.BOB_BASES):
        self.model = model
        self.rng = rng
        self._ta = np.array([b.angle for b in alice_bases])
        self._tb = np.array([b.angle for b in bob_bases])

    def batch(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Honest output bits for settings ``x`` (Alice) and ``y`` (Bob)."""
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        u = self.rng.random(x.shape + (2,))
        a, b = qsim.outcomes_from_uniforms(self.model, self._ta[x], self._tb[y], u)
        return qsim.sign_to_bit(a), qsim.sign_to_bit(b)

    def round(self, x: int, y: int) -> "RoundLink":
        a, b = self.batch([x], [y])
        return RoundLink(int(a[0]), int(b[0]))


@dataclass(frozen=True)
class RoundLink:
    """One round's honest outcomes; each device may read only its own half."""

    alice_bit: int
    bob_bit: int

    def half(self, side: str) -> int:
        return self.alice_bit if side == "alice" else self.bob_bit


def _effective_policy(state: DeviceState) -> DevicePolicy:
    instr = state.active_instructions()
    if instr is not None:
        if instr.abort_bits is not None:
            bits = state.remembered_key()[: instr.abort_bits]
            # the device reprograms itself; the instruction outlives this day
            state.policy = AbortOnDay(abort_encode(bits))
            return state.policy
        if instr.abort_day is not None:
            return AbortOnDay(instr.abort_day)
        if instr.leak_schedule is not None:
            return instr.leak_schedule
    return state.policy


def _leak_source(state: DeviceState, schedule: LeakSchedule) -> np.ndarray:
    if schedule.source == "final":
        return state.recompute_final_key()
    outputs = state.outputs_of_day(schedule.source_day)
    if outputs is None:
        raise ValueError(f"device {state.device_id!r} has no memory of day {schedule.source_day}")
    return outputs


def run_rounds(state: DeviceState, settings, honest_bits, rng: np.random.Generator | None = None) -> np.ndarray:
    """Serve a batch of consecutive rounds; returns the output bits.

    Round ``i``'s output depends only on settings up to ``i``.  The batch is
    equivalent to calling :func:`device_step` once per round.
    """
    if not state.history or state.history[-1].day != state.day:
        raise ValueError("begin_day() must be called before serving rounds")
    settings = np.asarray(settings, dtype=np.int64)
    out = np.asarray(honest_bits, dtype=np.uint8).copy()
    policy = _effective_policy(state)

    if isinstance(policy, AbortOnDay) and policy.day == state.day and settings.size:
        raise DeviceAborted(state.device_id, state.day)

    if isinstance(policy, LeakSchedule) and settings.size:
        source = _leak_source(state, policy)
        for (inp, occ), idx in policy.entries.items():
            before = state._occurrences.get(inp, 0)
            pos = np.flatnonzero(settings == inp)
            k = occ - before - 1
            if 0 <= k < pos.size:
                out[pos[k]] = source[idx % source.size]

    if isinstance(policy, NoiseModulating) and settings.size:
        rate = policy.rate(state)
        if rng is None and rate > 0:
            raise ValueError("noise-modulating devices need their own generator")
        u = rng.random((settings.size, 2)) if rng is not None else np.ones((settings.size, 2))
        noisy = u[:, 0] < rate
        out[noisy] = (u[noisy, 1] < 0.5).astype(np.uint8)

    for inp, cnt in zip(*np.unique(settings, return_counts=True)):
        state._occurrences[int(inp)] = state._occurrences.get(int(inp), 0) + int(cnt)
    rec = state.history[-1]
    rec.inputs.frombytes(settings.astype(np.uint8).tobytes())
    rec.outputs.frombytes(out.tobytes())
    return out


def device_step(state: DeviceState, setting: int, link: RoundLink, rng: np.random.Generator | None = None) -> int:
    """Serve one round: read this device's half of ``link`` and apply the policy."""
    return int(run_rounds(state, [setting], [link.half(state.side)], rng)[0])
