"""Eve's bookkeeping and the hook interface the protocol calls into."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

PROVENANCES = ("pe-reveal", "abort-decode", "covert", "length-observation")


@dataclass
class EveLedger:
    """Everything Eve has seen or learned during a campaign.

    Inferred bits are stored as ``index -> (bit, provenance)``.  Raw bits are
    keyed by ``(day, round)``.  ``plans`` keeps Eve's own instructions (she
    needs them to interpret what leaks back), and ``pads`` holds one-time-pad
    segments handed over by corrupt counterparties, keyed by day.
    """

    transcripts: list = field(default_factory=list)
    covert_taps: list = field(default_factory=list)
    inferred_day1_key_bits: dict[int, tuple[int, str]] = field(default_factory=dict)
    inferred_raw_bits: dict[tuple[int, int], tuple[int, str]] = field(default_factory=dict)
    abort_day: int | None = None
    plans: dict[int, Any] = field(default_factory=dict)
    pads: dict[int, np.ndarray] = field(default_factory=dict)

    def credit_key_bit(self, index: int, bit: int, provenance: str):
        _check(provenance)
        self.inferred_day1_key_bits[int(index)] = (int(bit), provenance)

    def credit_raw_bit(self, day: int, rnd: int, bit: int, provenance: str):
        _check(provenance)
        self.inferred_raw_bits[(int(day), int(rnd))] = (int(bit), provenance)

    def key_bits(self) -> dict[int, int]:
        return {i: b for i, (b, _) in self.inferred_day1_key_bits.items()}

    def raw_bits(self) -> dict[tuple[int, int], int]:
        return {k: b for k, (b, _) in self.inferred_raw_bits.items()}

    def credited_bits(self) -> int:
        return len(self.inferred_day1_key_bits) + len(self.inferred_raw_bits)

    def summary(self) -> dict:
        return {
            "days_observed": len(self.transcripts),
            "covert_taps": len(self.covert_taps),
            "key_bits": len(self.inferred_day1_key_bits),
            "raw_bits": len(self.inferred_raw_bits),
            "abort_day": self.abort_day,
        }


def _check(provenance: str):
    if provenance not in PROVENANCES:
        raise ValueError(f"unknown provenance {provenance!r}; expected one of {PROVENANCES}")


class Adversary:
    """A passive Eve: records transcripts and channel traffic, changes nothing.

    Strategies override :meth:`before_day`, :meth:`on_channel` and
    :meth:`after_day`.
    """

    def __init__(self, ledger: EveLedger | None = None):
        self.ledger = ledger if ledger is not None else EveLedger()

    def before_day(self, day: int, alice, bob):
        pass

    def on_channel(self, shipment, day: int):
        if shipment.covert is not None:
            self.ledger.covert_taps.append((day, shipment.covert))
        return shipment

    def after_day(self, outcome):
        self.ledger.transcripts.append(outcome.transcript)
        if outcome.aborted and self.ledger.abort_day is None:
            self.ledger.abort_day = outcome.transcript.day
