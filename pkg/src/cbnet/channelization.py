"""Eight 20 MHz channels (U-NII-1/2) and the dynamic channel bonding policies.

Channels are indexed 0..7. A bond is a contiguous run of channels whose width
is 1, 2, 4 or 8 and whose lowest index is a multiple of its width.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

N_CHANNELS = 8
WIDTHS = (1, 2, 4, 8)

Bond = tuple[int, ...]


class ChannelError(ValueError):
    """Invalid channel, range or policy configuration."""


def _check_channel(ch: int) -> None:
    if not 0 <= int(ch) < N_CHANNELS:
        raise ChannelError(f"channel {ch} outside [0, {N_CHANNELS - 1}]")


def check_range(primary: int, lo: int, hi: int) -> None:
    _check_channel(lo)
    _check_channel(hi)
    _check_channel(primary)
    if lo > hi:
        raise ChannelError(f"empty channel range [{lo}, {hi}]")
    if not lo <= primary <= hi:
        raise ChannelError(f"primary {primary} outside range [{lo}, {hi}]")


def is_valid_bond(channels: Sequence[int]) -> bool:
    chans = sorted(channels)
    width = len(chans)
    if width not in WIDTHS:
        return False
    if chans[0] % width:
        return False
    return chans == list(range(chans[0], chans[0] + width)) and chans[-1] < N_CHANNELS


def is_aligned_range(lo: int, hi: int) -> bool:
    return is_valid_bond(range(lo, hi + 1))


def aligned_ranges() -> list[tuple[int, int]]:
    """All 15 ranges that form a valid bond by themselves."""
    return [(lo, lo + w - 1) for w in WIDTHS for lo in range(0, N_CHANNELS, w)]


def all_ranges() -> list[tuple[int, int]]:
    """All 36 contiguous ranges [lo, hi] with lo <= hi."""
    return [(lo, hi) for lo in range(N_CHANNELS) for hi in range(lo, N_CHANNELS)]


def enumerate_valid_bonds(primary: int, lo: int, hi: int) -> list[Bond]:
    """Every valid bond containing ``primary`` inside ``[lo, hi]``.

    Sorted by width, then lowest index. Because bonds are aligned there is at
    most one bond of each width containing a given primary.
    """
    check_range(primary, lo, hi)
    out = []
    for w in WIDTHS:
        start = primary - primary % w
        if start >= lo and start + w - 1 <= hi:
            out.append(tuple(range(start, start + w)))
    return out


def mask_from_channels(channels: Iterable[int]) -> int:
    mask = 0
    for ch in channels:
        _check_channel(ch)
        mask |= 1 << int(ch)
    return mask


def _all_free(bond: Bond, free: int) -> bool:
    return all(free >> ch & 1 for ch in bond)


def free_bonds(primary: int, lo: int, hi: int, free: int) -> list[Bond]:
    if not free >> primary & 1:
        return []
    return [b for b in enumerate_valid_bonds(primary, lo, hi) if _all_free(b, free)]


def select_scb(primary: int, lo: int, hi: int, free: int) -> Bond | None:
    """Static bonding: the whole range or nothing."""
    check_range(primary, lo, hi)
    if not is_aligned_range(lo, hi):
        raise ChannelError(f"SCB needs an aligned power-of-two range, got [{lo}, {hi}]")
    bond = tuple(range(lo, hi + 1))
    return bond if _all_free(bond, free) else None


def select_am(primary: int, lo: int, hi: int, free: int) -> Bond | None:
    """Always-max: widest fully free bond containing the primary."""
    cands = free_bonds(primary, lo, hi, free)
    return cands[-1] if cands else None


def select_pu(primary: int, lo: int, hi: int, free: int, rng: np.random.Generator) -> Bond | None:
    """Probabilistic uniform: one uniform draw over the fully free bonds.

    Exactly one value is drawn from ``rng`` per call, even when the candidate
    set is empty or a singleton, so rng consumption never depends on the mask.
    """
    cands = free_bonds(primary, lo, hi, free)
    u = rng.random()
    if not cands:
        return None
    return cands[min(int(u * len(cands)), len(cands) - 1)]


POLICIES = ("SCB", "AM", "PU")


def select(policy: str, primary: int, lo: int, hi: int, free: int,
           rng: np.random.Generator | None = None) -> Bond | None:
    if policy == "SCB":
        return select_scb(primary, lo, hi, free)
    if policy == "AM":
        return select_am(primary, lo, hi, free)
    if policy == "PU":
        if rng is None:
            raise ChannelError("PU policy needs a random generator")
        return select_pu(primary, lo, hi, free, rng)
    raise ChannelError(f"unknown policy {policy!r}; expected one of {POLICIES}")
