"""Scenario families, seeded random deployments and their CSV format."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from cbnet.channelization import N_CHANNELS, WIDTHS, ChannelError, check_range

CSV_MAGIC = "# cbnet-deployment v1"
CSV_COLUMNS = (
    "node_code", "node_type", "bss_id", "x", "y", "z", "primary_channel",
    "min_channel", "max_channel", "tx_power_dbm", "cca_dbm",
)
MIN_CELL_M = 1.0
JITTER = 0.25


class DeploymentError(ValueError):
    pass


class NodeKind(IntEnum):
    AP = 0
    STA = 1


@dataclass(frozen=True)
class Node:
    code: str
    kind: NodeKind
    bss_id: str
    position: tuple[float, float, float]
    primary: int
    min_channel: int
    max_channel: int
    tx_power: float = 20.0
    cca: float = -82.0


@dataclass(frozen=True)
class Bss:
    ap: Node
    stas: tuple[Node, ...]

    @property
    def bss_id(self) -> str:
        return self.ap.bss_id


@dataclass(frozen=True)
class Deployment:
    scenario_id: str
    map_size: tuple[float, float]
    bsss: tuple[Bss, ...]

    @property
    def aps(self) -> list[Node]:
        return [b.ap for b in self.bsss]

    @property
    def stas(self) -> list[Node]:
        return [s for b in self.bsss for s in b.stas]

    def nodes(self) -> list[Node]:
        out = []
        for b in self.bsss:
            out.append(b.ap)
            out.extend(b.stas)
        return out

    def validate(self) -> None:
        w, h = self.map_size
        if not (w > 0 and h > 0):
            raise DeploymentError(f"map size must be positive, got {self.map_size}")
        seen = set()
        for b in self.bsss:
            ap = b.ap
            if ap.kind != NodeKind.AP:
                raise DeploymentError(f"{ap.code}: BSS head is not an AP")
            try:
                check_range(ap.primary, ap.min_channel, ap.max_channel)
            except ChannelError as exc:
                raise DeploymentError(f"{ap.code}: {exc}") from None
            for node in (ap, *b.stas):
                if node.code in seen:
                    raise DeploymentError(f"duplicate node code {node.code}")
                seen.add(node.code)
                if node.bss_id != ap.bss_id:
                    raise DeploymentError(f"{node.code}: bss_id {node.bss_id} differs from AP {ap.bss_id}")
                if (node.primary, node.min_channel, node.max_channel, node.tx_power, node.cca) != (
                        ap.primary, ap.min_channel, ap.max_channel, ap.tx_power, ap.cca):
                    raise DeploymentError(f"{node.code}: channel/power settings differ from its AP")
                x, y, _ = node.position
                if not (0 <= x <= w and 0 <= y <= h):
                    raise DeploymentError(f"{node.code}: position {node.position} outside the map")
            for sta in b.stas:
                if sta.kind != NodeKind.STA:
                    raise DeploymentError(f"{sta.code}: expected an STA")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    width: float
    height: float
    ap_count: int
    sta_min: int
    sta_max: int
    deployment_count: int
    r_sta: float = 15.0
    tx_power: float = 20.0
    cca: float = -82.0

    def __post_init__(self):
        if min(self.ap_count, self.sta_min, self.deployment_count) < 1:
            raise DeploymentError(f"{self.name}: counts must be >= 1")
        if self.sta_max < self.sta_min:
            raise DeploymentError(f"{self.name}: empty STA range")
        if not (self.width > 0 and self.height > 0 and self.r_sta > 0):
            raise DeploymentError(f"{self.name}: map dimensions must be positive")


def builtin_specs() -> list[ScenarioSpec]:
    """The ten scenario families (six training, four test)."""
    rows = [
        ("training1a", 80, 60, 12, 10, 20, 100),
        ("training1b", 70, 50, 12, 10, 20, 100),
        ("training1c", 60, 40, 12, 10, 20, 100),
        ("training2a", 60, 40, 8, 5, 10, 100),
        ("training2b", 50, 30, 8, 5, 10, 100),
        ("training2c", 40, 20, 8, 5, 10, 100),
        ("test1", 80, 60, 4, 2, 10, 50),
        ("test2", 80, 60, 6, 2, 10, 50),
        ("test3", 80, 60, 8, 2, 10, 50),
        ("test4", 80, 60, 10, 2, 10, 50),
    ]
    return [ScenarioSpec(n, float(w), float(h), a, lo, hi, c) for n, w, h, a, lo, hi, c in rows]


def spec_by_name(name: str) -> ScenarioSpec:
    specs = {s.name: s for s in builtin_specs()}
    if name not in specs:
        raise DeploymentError(f"unknown scenario {name!r}; valid: {', '.join(specs)}")
    return specs[name]


def desk_scale(spec: ScenarioSpec) -> ScenarioSpec:
    """Same family with the STA-per-AP bounds halved (rounded up)."""
    return replace(spec, sta_min=math.ceil(spec.sta_min / 2), sta_max=math.ceil(spec.sta_max / 2))


# Ranges offered per width class; each class is equally likely.
_RANGE_CLASSES = [[(lo, lo + w - 1) for lo in range(0, N_CHANNELS, w)] for w in reversed(WIDTHS)]


def _grid_shape(n: int, width: float, height: float) -> tuple[int, int]:
    cols = max(1, math.ceil(math.sqrt(n * width / height)))
    rows = math.ceil(n / cols)
    return rows, cols


def generate(spec: ScenarioSpec, deployment_index: int, seed: int) -> Deployment:
    """Random deployment ``deployment_index`` of ``spec``; a pure function of its inputs."""
    if not 0 <= deployment_index < spec.deployment_count:
        raise DeploymentError(
            f"deployment index {deployment_index} outside [0, {spec.deployment_count})")
    rows, cols = _grid_shape(spec.ap_count, spec.width, spec.height)
    cw, ch = spec.width / cols, spec.height / rows
    if min(cw, ch) < MIN_CELL_M:
        raise DeploymentError(
            f"{spec.name}: {spec.width}x{spec.height} m map too small for {spec.ap_count} AP cells")
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, deployment_index])
    cells = np.sort(rng.permutation(rows * cols)[: spec.ap_count])
    bsss = []
    for i, cell in enumerate(cells):
        r, c = divmod(int(cell), cols)
        ax = (c + 0.5) * cw + rng.uniform(-JITTER, JITTER) * cw
        ay = (r + 0.5) * ch + rng.uniform(-JITTER, JITTER) * ch
        ap_pos = (round(ax, 4), round(ay, 4), 0.0)
        ranges = _RANGE_CLASSES[int(rng.integers(len(_RANGE_CLASSES)))]
        lo, hi = ranges[int(rng.integers(len(ranges)))]
        primary = int(rng.integers(lo, hi + 1))
        bss_id = f"BSS{i:02d}"
        common = dict(bss_id=bss_id, primary=primary, min_channel=lo, max_channel=hi,
                      tx_power=spec.tx_power, cca=spec.cca)
        ap = Node(code=f"AP{i:02d}", kind=NodeKind.AP, position=ap_pos, **common)
        n_sta = int(rng.integers(spec.sta_min, spec.sta_max + 1))
        stas = []
        for k in range(n_sta):
            rad = spec.r_sta * math.sqrt(rng.random())
            theta = 2 * math.pi * rng.random()
            sx = min(max(ax + rad * math.cos(theta), 0.0), spec.width)
            sy = min(max(ay + rad * math.sin(theta), 0.0), spec.height)
            stas.append(Node(code=f"STA{i:02d}_{k:02d}", kind=NodeKind.STA,
                             position=(round(sx, 4), round(sy, 4), 0.0), **common))
        bsss.append(Bss(ap, tuple(stas)))
    return Deployment(spec.name, (spec.width, spec.height), tuple(bsss))


def _fmt(v: float) -> str:
    return repr(float(v))


def to_csv_text(d: Deployment) -> str:
    buf = io.StringIO()
    w, h = d.map_size
    buf.write(f"{CSV_MAGIC} scenario={d.scenario_id} map={_fmt(w)}x{_fmt(h)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for n in d.nodes():
        x, y, z = n.position
        writer.writerow([n.code, int(n.kind), n.bss_id, f"{x:.4f}", f"{y:.4f}", f"{z:.4f}",
                         n.primary, n.min_channel, n.max_channel, _fmt(n.tx_power), _fmt(n.cca)])
    return buf.getvalue()


def write_csv(d: Deployment, path) -> None:
    d.validate()
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(to_csv_text(d))


def _parse_header(line: str, path) -> tuple[str, tuple[float, float]]:
    if not line.startswith(CSV_MAGIC):
        raise DeploymentError(f"{path}: line 1: expected header {CSV_MAGIC!r}")
    meta = dict(tok.split("=", 1) for tok in line[len(CSV_MAGIC):].split() if "=" in tok)
    try:
        w, h = (float(v) for v in meta["map"].split("x"))
        return meta["scenario"], (w, h)
    except (KeyError, ValueError):
        raise DeploymentError(f"{path}: line 1: missing scenario/map metadata") from None


def from_csv_text(text: str, path="<string>") -> Deployment:
    lines = text.splitlines()
    if not lines:
        raise DeploymentError(f"{path}: empty file")
    scenario, map_size = _parse_header(lines[0], path)
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise DeploymentError(f"{path}: line 2: expected columns {','.join(CSV_COLUMNS)}")
    aps: dict[str, Node] = {}
    sta_rows: list[tuple[int, Node]] = []
    for lineno, row in enumerate(reader, start=3):
        if len(row) != len(CSV_COLUMNS):
            raise DeploymentError(f"{path}: line {lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        rec = dict(zip(CSV_COLUMNS, row))

        def num(col, conv=float):
            try:
                return conv(rec[col])
            except ValueError:
                raise DeploymentError(
                    f"{path}: line {lineno}, column {col}: not a number: {rec[col]!r}") from None

        kind_raw = num("node_type", int)
        if kind_raw not in (0, 1):
            raise DeploymentError(f"{path}: line {lineno}, column node_type: must be 0 or 1")
        node = Node(
            code=rec["node_code"], kind=NodeKind(kind_raw), bss_id=rec["bss_id"],
            position=(num("x"), num("y"), num("z")), primary=num("primary_channel", int),
            min_channel=num("min_channel", int), max_channel=num("max_channel", int),
            tx_power=num("tx_power_dbm"), cca=num("cca_dbm"),
        )
        if node.kind == NodeKind.AP:
            if node.bss_id in aps:
                raise DeploymentError(f"{path}: line {lineno}, column bss_id: second AP for {node.bss_id}")
            aps[node.bss_id] = node
        else:
            sta_rows.append((lineno, node))
    stas: dict[str, list[Node]] = {b: [] for b in aps}
    for lineno, node in sta_rows:
        if node.bss_id not in aps:
            raise DeploymentError(f"{path}: line {lineno}, column bss_id: no AP for BSS {node.bss_id!r}")
        stas[node.bss_id].append(node)
    d = Deployment(scenario, map_size, tuple(Bss(aps[b], tuple(stas[b])) for b in aps))
    try:
        d.validate()
    except DeploymentError as exc:
        raise DeploymentError(f"{path}: {exc}") from None
    return d


def read_csv(path) -> Deployment:
    with open(path, encoding="utf-8", newline="") as f:
        return from_csv_text(f.read(), os.fspath(path))
