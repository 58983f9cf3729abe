"""
Leaks from repeated randomness expansion with malicious devices.

One party runs the expansion loop with a pair of devices in their own lab.  Each
round the devices play ``rounds_per_step`` CHSH rounds, the CHSH value sets
the modelled min-entropy, and the output length follows from it.  The
lengths are public.

* Length leak: from round 2 on, Alice's device adds noise whose level
  encodes one of its round-1 outputs, so each round's length carries a bit.
* Procrustean: the same devices, but the output is always cut to ``L``;
  lengths are constant and carry nothing.
* Abort: after round 1 the device reprograms itself to abort on round
  ``int(bits) + 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import qsim
from ..abortcode import abort_decode, abort_encode
from ..devices import (AbortOnDay, DeviceState, Honest, NoiseModulating, SingletLink, begin_day,
                       run_rounds)
from ..errors import DeviceAborted
from ..ledger import EveLedger
from ..pamp import MinEntropyBudget, choose_output_length
from ..protocol import chsh_entropy_rate
from .plans import QREAbort, QRELengthLeak, QREProcrustean

ROUNDS_PER_STEP = 4000
NOISE_HIGH = 0.15


@dataclass
class QREResult:
    ledger: EveLedger
    lengths: list[int | None]
    truth: np.ndarray
    abort_round: int | None = None
    decoded: list[int] = field(default_factory=list)

    def reconstructed_fraction(self) -> float:
        """Share of the leaked round-1 bits Eve got right (uncredited bits count as wrong)."""
        raw = self.ledger.raw_bits()
        hits = sum(int(raw.get((1, i), -1) == int(b)) for i, b in enumerate(self.truth))
        return hits / max(1, self.truth.size)


def _length(test_value: float, n: int, margin: int, threshold: float) -> int | None:
    if test_value < threshold:
        return None
    return choose_output_length(MinEntropyBudget(chsh_entropy_rate(test_value) * n, margin=margin))


def expected_length(visibility: float, n: int, margin: int) -> int:
    return choose_output_length(MinEntropyBudget(chsh_entropy_rate(visibility * qsim.TWO_SQRT2) * n, margin=margin))


def run_qre(scenario, rng: np.random.Generator, rounds: int | None = None, rounds_per_step: int = ROUNDS_PER_STEP,
            noise_high: float = NOISE_HIGH, margin: int = 40, threshold: float = 2.0) -> QREResult:
    """Run one expansion campaign and let Eve read what the public lengths reveal.

    ``threshold`` is the CHSH value below which a round aborts.  It defaults to the
    classical bound: expansion only needs a positive modelled rate.
    """
    ledger = EveLedger()
    if isinstance(scenario, (QRELengthLeak, QREProcrustean)):
        n_bits = scenario.n_bits
        policy = NoiseModulating(source_day=1, start_day=2, noise_low=0.0, noise_high=noise_high)
        rounds = rounds if rounds is not None else 1 + n_bits
    elif isinstance(scenario, QREAbort):
        n_bits = scenario.n_bits if scenario.bits is None else len(scenario.bits)
        policy = Honest()
        rounds = rounds if rounds is not None else (1 << n_bits) + 1
    else:
        raise TypeError(f"not a randomness-expansion scenario: {scenario!r}")

    dev_a = DeviceState("qre-a", side="alice", policy=policy)
    dev_b = DeviceState("qre-b", side="bob")
    link_rng, dev_rng, in_rng = rng.spawn(3)
    link = SingletLink(qsim.CorrelationModel(1.0), link_rng)
    fixed_L = scenario.L if isinstance(scenario, QREProcrustean) else None
    lengths: list[int | None] = []
    abort_round = None
    for r in range(1, rounds + 1):
        begin_day(dev_a)
        begin_day(dev_b)
        x = in_rng.integers(0, 2, size=rounds_per_step)
        y = in_rng.integers(0, 2, size=rounds_per_step)
        ha, hb = link.batch(x, y)
        try:
            a = run_rounds(dev_a, x, ha, dev_rng)
        except DeviceAborted:
            abort_round = r
            lengths.append(None)
            break
        b = run_rounds(dev_b, y, hb)
        t = _length(qsim.chsh_value(qsim.tally(x, y, a, b)), rounds_per_step, margin, threshold)
        if fixed_L is not None and t is not None:
            t = fixed_L if t >= fixed_L else None
        lengths.append(t)
        if r == 1 and isinstance(scenario, QREAbort):
            # firmware: remember the bits to encode, then wait for that round
            bits = scenario.bits if scenario.bits is not None else dev_a.outputs_of_day(1)[:n_bits]
            dev_a.policy = AbortOnDay(abort_encode(bits))

    truth = dev_a.outputs_of_day(1)[:n_bits].copy()
    if isinstance(scenario, QREAbort) and scenario.bits is not None:
        truth = np.asarray(scenario.bits, dtype=np.uint8)
    result = QREResult(ledger, lengths, truth, abort_round)
    _eve_reads_lengths(result, scenario, rounds_per_step, noise_high, margin, n_bits)
    return result


def _eve_reads_lengths(result: QREResult, scenario, n: int, noise_high: float, margin: int, n_bits: int):
    ledger = result.ledger
    if isinstance(scenario, QREAbort):
        if result.abort_round is not None:
            ledger.abort_day = result.abort_round
            result.decoded = abort_decode(result.abort_round, n_bits)
            for i, b in enumerate(result.decoded):
                ledger.credit_raw_bit(1, i, b, "abort-decode")
        return
    if len(set(result.lengths)) <= 1:
        return  # constant lengths say nothing
    mid = 0.5 * (expected_length(1.0, n, margin) + expected_length(1.0 - noise_high, n, margin))
    for i, t in enumerate(result.lengths[1: 1 + n_bits]):
        bit = 1 if t is None or t < mid else 0
        ledger.credit_raw_bit(1, i, bit, "length-observation")
