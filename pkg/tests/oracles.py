"""Independent reference computations used as test oracles.

Nothing here imports the code under test; each oracle re-derives its answer
from first principles (brute force, closed form or hand arithmetic).
"""
from __future__ import annotations

import functools
import itertools
import math

N = 8


@functools.lru_cache(maxsize=None)
def brute_force_bonds(primary: int, lo: int, hi: int) -> list[tuple[int, ...]]:
    """Filter all 255 non-empty channel subsets down to valid bonds."""
    out = []
    for r in range(1, N + 1):
        for sub in itertools.combinations(range(N), r):
            width = len(sub)
            if width not in (1, 2, 4, 8):
                continue
            if list(sub) != list(range(sub[0], sub[0] + width)):
                continue
            if sub[0] % width:
                continue
            if primary not in sub or sub[0] < lo or sub[-1] > hi:
                continue
            out.append(sub)
    return tuple(sorted(out, key=lambda b: (len(b), b[0])))


def oracle_free(primary, lo, hi, mask):
    return [b for b in brute_force_bonds(primary, lo, hi) if all(mask >> c & 1 for c in b)]


def oracle_am(primary, lo, hi, mask):
    c = oracle_free(primary, lo, hi, mask)
    return max(c, key=len) if c else None


def oracle_scb(primary, lo, hi, mask):
    """None when busy; raises ValueError when the range is not itself a bond."""
    full = tuple(range(lo, hi + 1))
    if full not in brute_force_bonds(primary, lo, hi):
        raise ValueError("range is not a bond")
    return full if all(mask >> c & 1 for c in full) else None


def path_loss(d, pl0=40.0, gamma=4.0):
    return pl0 + 10 * gamma * math.log10(max(d, 0.1))


def renewal_throughput(rates_mbps, txop_us=5000, difs_us=34, slot_us=9, cw=16):
    """Single saturated transmitter: one TXOP per cycle of DIFS + mean backoff + TXOP.

    Round-robin over STAs, so the long-run throughput per STA is its rate times
    the busy share divided by the number of STAs; the BSS total is the mean rate
    times the busy share.
    """
    mean_backoff = slot_us * (cw - 1) / 2
    share = txop_us / (txop_us + difs_us + mean_backoff)
    n = len(rates_mbps)
    return [r * share / n for r in rates_mbps], share


def yeo_johnson_scalar(x, lam):
    if x >= 0:
        return math.log(x + 1) if lam == 0 else ((x + 1) ** lam - 1) / lam
    return -math.log(-x + 1) if lam == 2 else -((-x + 1) ** (2 - lam) - 1) / (2 - lam)


def least_squares_line(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    a = sxy / sxx
    return a, my - a * mx


def best_stump(xs, ys):
    """Exhaustive 1-D split search minimizing the summed squared error."""
    pairs = sorted(zip(xs, ys))
    best = None
    for i in range(1, len(pairs)):
        if pairs[i - 1][0] == pairs[i][0]:
            continue
        left = [y for _, y in pairs[:i]]
        right = [y for _, y in pairs[i:]]
        sse = sum((y - sum(left) / len(left)) ** 2 for y in left) + \
            sum((y - sum(right) / len(right)) ** 2 for y in right)
        thr = (pairs[i - 1][0] + pairs[i][0]) / 2
        if best is None or sse < best[0] - 1e-12:
            best = (sse, thr, sum(left) / len(left), sum(right) / len(right))
    return best
