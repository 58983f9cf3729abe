"""Bits <-> abort day: the day is the bits read as a binary integer, plus 2."""

from __future__ import annotations

import math

from .errors import CampaignTooShort

OFFSET = 2


def abort_encode(bits, days: int | None = None) -> int:
    """Abort day for ``bits`` (most significant first), e.g. ``101`` -> day 7.

    Raises :class:`CampaignTooShort` when ``days`` is given and the day falls
    outside the campaign.
    """
    bits = [int(b) for b in (bits if not isinstance(bits, str) else bits.strip())]
    if any(b not in (0, 1) for b in bits):
        raise ValueError("bits must be 0 or 1")
    day = OFFSET
    for b in bits:
        day = (day - OFFSET) * 2 + b + OFFSET
    if days is not None and day > days:
        raise CampaignTooShort(f"abort day {day} lies beyond a {days}-day campaign")
    return day


def abort_decode(day: int, k: int) -> list[int]:
    """The ``k`` bits encoded by an abort on ``day``."""
    value = int(day) - OFFSET
    if value < 0 or value >= 1 << k:
        raise ValueError(f"day {day} does not encode {k} bits")
    return [(value >> (k - 1 - i)) & 1 for i in range(k)]


def capacity(days: int) -> int:
    """Bits that fit in a ``days``-day campaign: every code must land on a day <= days."""
    return 0 if days < 3 else int(math.floor(math.log2(days - 1)))
