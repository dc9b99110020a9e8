"""TXOP-level CSMA/CA simulation of a deployment under a channel bonding policy.

Time is kept in integer microseconds so that simultaneous backoff expiries
(collisions) are exact. Every AP is saturated with downlink traffic and serves
its STAs round robin.
"""
from __future__ import annotations

import csv
import io
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from cbnet import channelization as chz
from cbnet import rf
from cbnet.deployment import Deployment, NodeKind

RESULT_MAGIC = "# cbnet-result v1"
RESULT_COLUMNS = (
    "node_code", "node_type", "bss_id", "throughput_mbps", "mean_rssi_dbm", "mean_sinr_db",
    "mean_interference_dbm",
) + tuple(f"airtime_ch{c}" for c in range(chz.N_CHANNELS))
INTERFERENCE_FLOOR_DBM = -120.0


class SimulationError(RuntimeError):
    pass


class ResultFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    duration_s: float = 1.0
    slot_us: int = 9
    difs_us: int = 34
    cw_slots: int = 16
    txop_ms: float = 5.0
    policy: str = "AM"
    seed: int = 0
    rf: rf.RfConfig = field(default_factory=rf.RfConfig)
    check: bool = True

    def __post_init__(self):
        if not (self.duration_s > 0 and self.slot_us > 0 and self.difs_us > 0 and self.txop_ms > 0):
            raise ValueError("durations must be positive")
        if self.cw_slots < 1:
            raise ValueError("cw_slots must be >= 1")
        if self.policy not in chz.POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_s * 1e6))

    @property
    def txop_us(self) -> int:
        return int(round(self.txop_ms * 1e3))


@dataclass
class SimResult:
    """Per-node outputs. AP throughput is always the sum of its STAs'."""

    sta_throughput: dict[str, float]
    sta_rssi: dict[str, float]
    sta_sinr: dict[str, float]
    ap_throughput: dict[str, float]
    ap_airtime: dict[str, tuple[float, ...]]
    ap_interference: dict[str, float]
    node_bss: dict[str, str]

    def __eq__(self, other):
        if not isinstance(other, SimResult):
            return NotImplemented
        return to_results_text(self) == to_results_text(other)


def check_policy(d: Deployment, policy: str) -> None:
    for ap in d.aps:
        chz.check_range(ap.primary, ap.min_channel, ap.max_channel)
        if policy == "SCB" and not chz.is_aligned_range(ap.min_channel, ap.max_channel):
            raise chz.ChannelError(
                f"{ap.code}: SCB needs an aligned power-of-two range, got "
                f"[{ap.min_channel}, {ap.max_channel}]")


class _Tx:
    __slots__ = ("ap", "sta", "bond", "mask", "width", "start", "end", "signal", "mcs", "rate",
                 "min_sinr", "failed")


def _stream_seed(seed: int, scenario_id: str, stream: int) -> list[int]:
    return [seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(scenario_id.encode()), stream]


def simulate(d: Deployment, cfg: SimConfig, stream: int = 0) -> SimResult:
    """Run one deployment; deterministic in ``(d, cfg, stream)``."""
    check_policy(d, cfg.policy)
    rng = np.random.default_rng(_stream_seed(cfg.seed, d.scenario_id, stream))
    rcfg = cfg.rf
    slot, difs, txop = cfg.slot_us, cfg.difs_us, cfg.txop_us
    horizon = cfg.duration_us

    # processing order for simultaneous events
    bsss = sorted(d.bsss, key=lambda b: b.ap.code)
    aps = [b.ap for b in bsss]
    n_ap = len(aps)
    ap_pos = np.array([a.position for a in aps], dtype=float)
    stas = [s for b in bsss for s in b.stas]
    sta_owner = [i for i, b in enumerate(bsss) for _ in b.stas]
    sta_of_ap = []
    k = 0
    for b in bsss:
        sta_of_ap.append(list(range(k, k + len(b.stas))))
        k += len(b.stas)
    sta_pos = np.array([s.position for s in stas], dtype=float).reshape(-1, 3)

    tx_power = np.array([a.tx_power for a in aps])
    # received mW per 20 MHz at width 1: [receiver, transmitting AP]
    g_ap = rf.dbm_to_mw(tx_power[None, :] - rf.path_loss(rf.distances(ap_pos, ap_pos), rcfg))
    np.fill_diagonal(g_ap, 0.0)
    g_sta = rf.dbm_to_mw(tx_power[None, :] - rf.path_loss(rf.distances(sta_pos, ap_pos), rcfg)) \
        if stas else np.zeros((0, n_ap))
    g_ap_l = g_ap.tolist()
    g_sta_l = g_sta.tolist()
    cca_mw = [10.0 ** (a.cca / 10.0) for a in aps]
    noise_mw = 10.0 ** (rcfg.noise_floor / 10.0)
    thresholds = [t for t, _ in rcfg.mcs_table]
    primaries = [a.primary for a in aps]
    ranges = [(a.min_channel, a.max_channel) for a in aps]

    counter = [int(rng.integers(cfg.cw_slots)) for _ in range(n_ap)]
    # APs without STAs never contend
    resume: list[int | None] = [0 if sta_of_ap[i] else None for i in range(n_ap)]
    current: list[_Tx | None] = [None] * n_ap
    rr = [0] * n_ap
    ongoing: list[_Tx] = []

    airtime = np.zeros((n_ap, chz.N_CHANNELS))
    delivered = [0.0] * len(stas)  # Mbit
    rssi_acc = [[] for _ in stas]
    sinr_acc = [[] for _ in stas]
    interf_int = [0.0] * n_ap  # mW * us on the primary

    def sensed(i: int, ch: int, txs) -> float:
        p = 0.0
        row = g_ap_l[i]
        for tx in txs:
            if tx.ap != i and tx.mask >> ch & 1:
                p += row[tx.ap] / tx.width
        return p

    def worst_interference(tx: _Tx, txs) -> float:
        row = g_sta_l[tx.sta]
        worst = 0.0
        for ch in tx.bond:
            p = 0.0
            for o in txs:
                if o is not tx and o.mask >> ch & 1:
                    p += row[o.ap] / o.width
            if p > worst:
                worst = p
        return worst

    def sinr_db(tx: _Tx, txs) -> float:
        return 10.0 * math.log10(tx.signal / (worst_interference(tx, txs) + noise_mw))

    def finish(tx: _Tx, until: int) -> None:
        if not tx.failed and tx.rate > 0:
            delivered[tx.sta] += tx.rate * (until - tx.start) * 1e-6
        rssi_acc[tx.sta].append(10.0 * math.log10(tx.signal))
        sinr_acc[tx.sta].append(tx.min_sinr)

    t = 0
    while True:
        t_next = horizon
        for tx in ongoing:
            if tx.end < t_next:
                t_next = tx.end
        for i in range(n_ap):
            if current[i] is None and resume[i] is not None:
                e = resume[i] + difs + counter[i] * slot
                if e < t_next:
                    t_next = e
        dt = t_next - t
        if dt > 0 and ongoing:
            for i in range(n_ap):
                interf_int[i] += sensed(i, primaries[i], ongoing) * dt
        t = t_next
        if t >= horizon:
            break

        # 1. transmissions ending now
        ended = [tx for tx in ongoing if tx.end == t]
        if ended:
            ongoing = [tx for tx in ongoing if tx.end != t]
            for tx in ended:
                finish(tx, tx.end)
                current[tx.ap] = None
                counter[tx.ap] = int(rng.integers(cfg.cw_slots))
                resume[tx.ap] = None
            for i in range(n_ap):
                if current[i] is None and resume[i] is None and sta_of_ap[i] \
                        and sensed(i, primaries[i], ongoing) < cca_mw[i]:
                    resume[i] = t

        # 2. backoff expiries now; all sense the medium as it was before anyone starts
        expiring = [i for i in range(n_ap) if current[i] is None and resume[i] is not None
                    and resume[i] + difs + counter[i] * slot == t]
        starting: list[_Tx] = []
        for i in expiring:
            lo, hi = ranges[i]
            free = 0
            for ch in range(lo, hi + 1):
                if sensed(i, ch, ongoing) < cca_mw[i]:
                    free |= 1 << ch
            bond = chz.select(cfg.policy, primaries[i], lo, hi, free, rng)
            if bond is None:
                counter[i] = int(rng.integers(cfg.cw_slots))
                resume[i] = t
                continue
            tx = _Tx()
            tx.ap = i
            tx.bond = bond
            tx.mask = chz.mask_from_channels(bond)
            tx.width = len(bond)
            tx.start = t
            tx.end = t + txop
            members = sta_of_ap[i]
            tx.sta = members[rr[i] % len(members)]
            rr[i] += 1
            tx.signal = g_sta_l[tx.sta][i] / tx.width
            s0 = sinr_db(tx, ongoing)
            tx.mcs = rf.mcs_index(s0, rcfg)
            tx.rate = 0.0 if tx.mcs < 0 else tx.width * rcfg.mcs_table[tx.mcs][1]
            tx.min_sinr = s0
            tx.failed = False
            starting.append(tx)
        if starting:
            if cfg.check:
                for tx in starting:
                    for o in ongoing:
                        if o.mask & tx.mask and g_ap_l[tx.ap][o.ap] / o.width >= cca_mw[tx.ap]:
                            raise SimulationError(
                                f"t={t}us: {aps[tx.ap].code} started over {aps[o.ap].code} "
                                f"which it senses above CCA")
            for tx in starting:
                current[tx.ap] = tx
                resume[tx.ap] = None
                for ch in tx.bond:
                    airtime[tx.ap, ch] += min(tx.end, horizon) - t
            ongoing.extend(starting)
            # new arrivals may break receptions already in progress
            for tx in ongoing:
                s = sinr_db(tx, ongoing)
                if s < tx.min_sinr:
                    tx.min_sinr = s
                if tx.mcs >= 0 and s < thresholds[tx.mcs]:
                    tx.failed = True
            # freeze backoff of anyone whose primary just turned busy
            for i in range(n_ap):
                if current[i] is None and resume[i] is not None \
                        and sensed(i, primaries[i], ongoing) >= cca_mw[i]:
                    elapsed = t - resume[i] - difs
                    if elapsed > 0:
                        counter[i] -= elapsed // slot
                    resume[i] = None

    for tx in ongoing:
        finish(tx, horizon)

    dur_s = horizon * 1e-6
    res = SimResult({}, {}, {}, {}, {}, {}, {})
    for i, b in enumerate(bsss):
        ap = b.ap
        widest = len(chz.enumerate_valid_bonds(ap.primary, ap.min_channel, ap.max_channel)[-1])
        for s_idx in sta_of_ap[i]:
            sta = stas[s_idx]
            res.sta_throughput[sta.code] = delivered[s_idx] / dur_s
            if rssi_acc[s_idx]:
                res.sta_rssi[sta.code] = float(np.mean(rssi_acc[s_idx]))
                res.sta_sinr[sta.code] = float(np.mean(sinr_acc[s_idx]))
            else:
                # never served: fall back to the static, interference-free link budget
                r0 = 10.0 * math.log10(g_sta_l[s_idx][i] / widest)
                res.sta_rssi[sta.code] = r0
                res.sta_sinr[sta.code] = r0 - rcfg.noise_floor
            res.node_bss[sta.code] = ap.bss_id
        res.ap_throughput[ap.code] = sum(res.sta_throughput[stas[s].code] for s in sta_of_ap[i])
        res.ap_airtime[ap.code] = tuple(float(v) for v in airtime[i] / horizon)
        mean_mw = interf_int[i] / horizon
        res.ap_interference[ap.code] = max(
            10.0 * math.log10(mean_mw) if mean_mw > 0 else -math.inf, INTERFERENCE_FLOOR_DBM)
        res.node_bss[ap.code] = ap.bss_id
    return _reorder(res, d)


def _reorder(res: SimResult, d: Deployment) -> SimResult:
    """Key order follows the deployment so serialization mirrors its CSV."""
    out = SimResult({}, {}, {}, {}, {}, {}, {})
    for b in d.bsss:
        a = b.ap.code
        out.ap_throughput[a] = res.ap_throughput[a]
        out.ap_airtime[a] = res.ap_airtime[a]
        out.ap_interference[a] = res.ap_interference[a]
        out.node_bss[a] = res.node_bss[a]
        for s in b.stas:
            c = s.code
            out.sta_throughput[c] = res.sta_throughput[c]
            out.sta_rssi[c] = res.sta_rssi[c]
            out.sta_sinr[c] = res.sta_sinr[c]
            out.node_bss[c] = res.node_bss[c]
    return out


def _simulate_star(args):
    d, cfg, stream = args
    return simulate(d, cfg, stream)


def batch_simulate(deployments, cfg: SimConfig, jobs: int = 1, streams=None) -> list[SimResult]:
    """Element-wise :func:`simulate`; results do not depend on ``jobs``.

    Errors are collected and re-raised together, tagged with list indices.
    """
    deployments = list(deployments)
    streams = list(range(len(deployments))) if streams is None else list(streams)
    tasks = [(d, cfg, s) for d, s in zip(deployments, streams)]
    results: list[SimResult | None] = [None] * len(tasks)
    errors = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_simulate_star, t) for t in tasks]
            for i, f in enumerate(futs):
                try:
                    results[i] = f.result()
                except Exception as exc:  # noqa: BLE001
                    errors.append((i, exc))
    else:
        for i, t in enumerate(tasks):
            try:
                results[i] = _simulate_star(t)
            except Exception as exc:  # noqa: BLE001
                errors.append((i, exc))
    if errors:
        msg = "; ".join(f"deployment {i}: {exc}" for i, exc in errors)
        raise SimulationError(f"{len(errors)} simulation(s) failed: {msg}")
    return results  # type: ignore[return-value]


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def to_results_text(r: SimResult) -> str:
    buf = io.StringIO()
    buf.write(RESULT_MAGIC + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for ap, bss in ((c, r.node_bss[c]) for c in r.ap_throughput):
        w.writerow([ap, int(NodeKind.AP), bss, _fmt(r.ap_throughput[ap]), "", "",
                    _fmt(r.ap_interference[ap]), *map(_fmt, r.ap_airtime[ap])])
        for sta in (c for c in r.sta_throughput if r.node_bss[c] == bss):
            w.writerow([sta, int(NodeKind.STA), bss, _fmt(r.sta_throughput[sta]),
                        _fmt(r.sta_rssi[sta]), _fmt(r.sta_sinr[sta]), "", *[""] * chz.N_CHANNELS])
    return buf.getvalue()


def write_results_csv(r: SimResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(to_results_text(r))


def from_results_text(text: str, path="<string>") -> SimResult:
    lines = text.splitlines()
    if not lines or lines[0].strip() != RESULT_MAGIC:
        raise ResultFormatError(f"{path}: line 1: expected header {RESULT_MAGIC!r}")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or tuple(header) != RESULT_COLUMNS:
        raise ResultFormatError(f"{path}: line 2: expected columns {','.join(RESULT_COLUMNS)}")
    res = SimResult({}, {}, {}, {}, {}, {}, {})
    ap_of_bss = {}
    for lineno, row in enumerate(reader, start=3):
        if len(row) != len(RESULT_COLUMNS):
            raise ResultFormatError(f"{path}: line {lineno}: expected {len(RESULT_COLUMNS)} fields, got {len(row)}")
        rec = dict(zip(RESULT_COLUMNS, row))

        def num(col, required=True):
            raw = rec[col]
            if raw == "":
                if required:
                    raise ResultFormatError(f"{path}: line {lineno}, column {col}: missing value")
                return None
            try:
                return float(raw)
            except ValueError:
                raise ResultFormatError(f"{path}: line {lineno}, column {col}: not a number: {raw!r}") from None

        code, bss = rec["node_code"], rec["bss_id"]
        if rec["node_type"] not in ("0", "1"):
            raise ResultFormatError(f"{path}: line {lineno}, column node_type: must be 0 or 1")
        thr = num("throughput_mbps")
        if thr < 0:
            raise ResultFormatError(f"{path}: line {lineno}, column throughput_mbps: negative")
        res.node_bss[code] = bss
        if rec["node_type"] == "0":
            ap_of_bss[bss] = code
            res.ap_throughput[code] = thr
            res.ap_interference[code] = num("mean_interference_dbm")
            air = tuple(num(f"airtime_ch{c}") for c in range(chz.N_CHANNELS))
            if any(not 0.0 <= a <= 1.0 for a in air):
                raise ResultFormatError(f"{path}: line {lineno}: airtime outside [0, 1]")
            res.ap_airtime[code] = air
        else:
            if bss not in ap_of_bss:
                raise ResultFormatError(f"{path}: line {lineno}, column bss_id: STA before/without its AP")
            res.sta_throughput[code] = thr
            res.sta_rssi[code] = num("mean_rssi_dbm")
            res.sta_sinr[code] = num("mean_sinr_db")
    return res


def read_results_csv(path) -> SimResult:
    with open(path, encoding="utf-8", newline="") as f:
        return from_results_text(f.read(), os.fspath(path))
