"""Link budget: log-distance path loss, per-20 MHz RSSI, SINR and MCS lookup."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from cbnet.channelization import WIDTHS, enumerate_valid_bonds

MIN_DISTANCE_M = 0.1

# (min SINR dB, Mbps per 20 MHz)
DESK_MCS_TABLE = ((2.0, 8.6), (9.0, 17.2), (18.0, 28.7), (30.0, 57.5))
# 802.11ax single stream, 20 MHz, 0.8 us GI
AX_MCS_TABLE = (
    (2.0, 8.6), (5.0, 17.2), (9.0, 25.8), (11.0, 34.4), (15.0, 51.6), (18.0, 68.8),
    (20.0, 77.4), (25.0, 86.0), (29.0, 103.2), (31.0, 114.7), (33.0, 129.0), (34.0, 143.4),
)
MCS_PRESETS = {"desk": DESK_MCS_TABLE, "ax": AX_MCS_TABLE}


@dataclass(frozen=True)
class RfConfig:
    pl0: float = 40.0
    gamma: float = 4.0
    noise_floor: float = -95.0
    mcs_table: tuple[tuple[float, float], ...] = field(default=DESK_MCS_TABLE)

    def __post_init__(self):
        table = tuple((float(s), float(r)) for s, r in self.mcs_table)
        object.__setattr__(self, "mcs_table", table)
        if not table:
            raise ValueError("mcs_table is empty")
        for (s0, r0), (s1, r1) in zip(table, table[1:]):
            if not (s1 > s0 and r1 > r0):
                raise ValueError("mcs_table must be strictly increasing in SINR and rate")
        if not self.noise_floor < 0:
            raise ValueError("noise_floor must be below 0 dBm")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def min_sinr(self) -> float:
        return self.mcs_table[0][0]


DEFAULT_RF = RfConfig()


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(mw)


def _check_width(width: int) -> None:
    if width not in WIDTHS:
        raise ValueError(f"bond width must be one of {WIDTHS}, got {width}")


def path_loss(distance_m, cfg: RfConfig = DEFAULT_RF):
    """Log-distance loss in dB; distances are clamped at 0.1 m."""
    d = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    out = cfg.pl0 + 10.0 * cfg.gamma * np.log10(d)
    return float(out) if out.ndim == 0 else out


def rssi(tx_power_dbm, bond_width: int, distance_m, cfg: RfConfig = DEFAULT_RF):
    """Received power per 20 MHz channel when ``tx_power`` is spread over the bond."""
    _check_width(bond_width)
    out = np.asarray(tx_power_dbm, dtype=float) - 10.0 * math.log10(bond_width) - path_loss(distance_m, cfg)
    return float(out) if np.ndim(out) == 0 else out


def sinr(rssi_dbm: float, interference_dbm: Iterable[float], noise_floor_dbm: float) -> float:
    interf = np.asarray(list(interference_dbm), dtype=float)
    denom = dbm_to_mw(interf).sum() + 10.0 ** (noise_floor_dbm / 10.0)
    return float(10.0 * math.log10(10.0 ** (rssi_dbm / 10.0) / denom))


def mcs_index(sinr_db: float, cfg: RfConfig = DEFAULT_RF) -> int:
    """Index of the highest decodable table entry, or -1."""
    idx = -1
    for i, (thr, _) in enumerate(cfg.mcs_table):
        if sinr_db >= thr:
            idx = i
        else:
            break
    return idx


def rate(sinr_db: float, bond_width: int, cfg: RfConfig = DEFAULT_RF) -> float:
    """Data rate in Mbps over the whole bond; 0 when nothing is decodable."""
    _check_width(bond_width)
    idx = mcs_index(sinr_db, cfg)
    return 0.0 if idx < 0 else bond_width * cfg.mcs_table[idx][1]


def distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between two (n, 3) point arrays."""
    a = np.asarray(a, dtype=float)[:, None, :]
    b = np.asarray(b, dtype=float)[None, :, :]
    return np.sqrt(((a - b) ** 2).sum(axis=-1))


def interference_map(deployment, cfg: RfConfig = DEFAULT_RF) -> np.ndarray:
    """AP x AP received power (dBm per 20 MHz) at AP i from AP j.

    Each transmitter is taken at the widest bond its range allows. The
    diagonal holds ``-inf``.
    """
    aps = [b.ap for b in deployment.bsss]
    pos = np.array([ap.position for ap in aps])
    dist = distances(pos, pos)
    n = len(aps)
    out = np.full((n, n), -np.inf)
    for j, ap in enumerate(aps):
        w = len(enumerate_valid_bonds(ap.primary, ap.min_channel, ap.max_channel)[-1])
        for i in range(n):
            if i != j:
                out[i, j] = rssi(ap.tx_power, w, dist[i, j], cfg)
    return out


def parse_mcs_table(text: str) -> tuple[tuple[float, float], ...]:
    """Parse ``"2:8.6, 9:17.2"`` or a preset name into a table."""
    text = text.strip()
    if text in MCS_PRESETS:
        return MCS_PRESETS[text]
    pairs: list[Sequence[float]] = []
    for chunk in text.split(","):
        s, r = chunk.split(":")
        pairs.append((float(s), float(r)))
    return tuple((s, r) for s, r in pairs)
