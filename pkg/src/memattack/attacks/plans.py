"""Eve's strategies as plain parameter records."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class NoAttack:
    pass


@dataclass(frozen=True)
class PEAttack:
    """Leak ``N_target`` day-1 key bits through test-round outputs on ``attack_day``."""

    N_target: int = 25
    attack_day: int = 2


@dataclass(frozen=True)
class AbortAttack:
    """Encode day-1 key bits in the day the device aborts.

    ``bits`` defaults to as many as the campaign can carry.
    """

    bits: int | None = None


@dataclass(frozen=True)
class ImpostorAttack:
    corrupt_day: int = 2
    N_target: int = 25
    mode: str = "pe"


@dataclass(frozen=True)
class BHK:
    M: int = 2
    N: int = 10
    restrict_announcements: bool = False


@dataclass(frozen=True)
class HRDepletion:
    runs: int = 50


@dataclass(frozen=True)
class QRELengthLeak:
    n_bits: int = 64


@dataclass(frozen=True)
class QREProcrustean:
    L: int = 1000
    n_bits: int = 64


@dataclass(frozen=True)
class QREAbort:
    n_bits: int = 2
    bits: tuple[int, ...] | None = None


AttackPlan = Union[NoAttack, PEAttack, AbortAttack, ImpostorAttack, BHK, HRDepletion,
                   QRELengthLeak, QREProcrustean, QREAbort]
