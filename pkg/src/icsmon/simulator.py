"""Operator workload replay against the online solver.

Each operator sits behind a switch chosen uniformly at random and opens
connections to random field devices. Interarrival times and connection
durations are exponential. The operator's own endpoint is an extra device
hung off its switch by a 1 Gbps link.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import Kind, Link, Vertex
from .online import AdmissionRejected, DEFAULT_TAU, OnlineState
from .topogen import GBPS, Instance
from .verify import Violation, check_online_state

BEGIN = "begin"
END = "end"
OPERATOR_LINK_BPS = GBPS


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    c: int
    u: int
    s: int | None = None  # operator's attachment switch
    t: int | None = None  # target device, begin events only


@dataclass(frozen=True)
class WorkloadConfig:
    operators: int
    mean_interarrival: float = 300.0
    mean_duration: float = 900.0
    horizon: float = 600.0
    seed: int = 0

    def __post_init__(self):
        if self.operators < 0:
            raise ValueError("operator count must be non-negative")
        if self.mean_interarrival <= 0 or self.mean_duration <= 0:
            raise ValueError("means must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


def generate_events(inst: Instance, cfg: WorkloadConfig) -> list[Event]:
    topo = inst.topology
    switches = list(topo.switches)
    targets = [v for v in topo.devices if v != topo.ids]
    if not switches or not targets:
        raise ValueError("instance needs at least one switch and one non-IDS device")
    rng = np.random.default_rng(cfg.seed)
    attach = [switches[i] for i in rng.integers(len(switches), size=cfg.operators)]

    events: list[Event] = []
    c = 0
    for u in range(cfg.operators):
        now = 0.0
        while True:
            now += float(rng.exponential(cfg.mean_interarrival))
            if now > cfg.horizon:
                break
            duration = float(rng.exponential(cfg.mean_duration))
            t = targets[int(rng.integers(len(targets)))]
            events.append(Event(now, BEGIN, c, u, attach[u], t))
            events.append(Event(now + duration, END, c, u, attach[u]))
            c += 1
    events.sort(key=lambda e: (e.time, e.kind == BEGIN, e.c))
    return events


# -- replay -------------------------------------------------------------------


@dataclass
class ConnectionRecord:
    c: int
    u: int
    target: int
    begin: float
    end: float | None = None
    stream_id: int | None = None
    min_bw: Fraction | None = None
    final_bw: Fraction | None = None
    rejected: bool = False


@dataclass
class RunStats:
    connections: dict[int, ConnectionRecord] = field(default_factory=dict)
    violations: list[tuple[float, Violation]] = field(default_factory=list)
    max_concurrent: int = 0
    widest_path_calls: int = 0

    @property
    def admitted(self) -> int:
        return sum(1 for r in self.connections.values() if not r.rejected)

    @property
    def rejections(self) -> int:
        return sum(1 for r in self.connections.values() if r.rejected)


def with_operators(inst: Instance, attach: dict[int, int]) -> tuple[Instance, dict[int, int]]:
    """Add one device per operator, linked to its switch.

    The new links get the same standard-reserve fraction as the rest of the
    network. Returns the augmented instance and the operator->device map.
    """
    topo = inst.topology
    next_id = max((v.id for v in topo.vertices), default=-1) + 1
    verts, links, devs = [], [], {}
    beta = dict(inst.beta)
    reserve = math.floor(inst.reserve_fraction * OPERATOR_LINK_BPS)
    for u in sorted(attach):
        vid = next_id + len(verts)
        verts.append(Vertex(vid, Kind.DEVICE, f"operator-{u}"))
        links.append(Link(vid, attach[u], OPERATOR_LINK_BPS))
        beta[(vid, attach[u])] = reserve
        beta[(attach[u], vid)] = reserve
        devs[u] = vid
    return replace(inst, topology=topo.with_vertices(verts, links), beta=beta), devs


def _sample(stats: RunStats, live: dict[int, int], state: OnlineState) -> None:
    for c, sid in live.items():
        rec = stats.connections[c]
        bw = state.streams[sid].assigned_bw
        rec.final_bw = bw
        if rec.min_bw is None or bw < rec.min_bw:
            rec.min_bw = bw


def run(
    inst: Instance,
    plan,
    trace: Sequence[Event],
    tau: float = DEFAULT_TAU,
    check_every: int = 1,
) -> RunStats:
    """Replay ``trace`` and collect per-connection bandwidth statistics.

    The online state is checked for budget and fairness violations after
    every ``check_every`` events (and after the last one).
    """
    attach = {}
    for ev in trace:
        if ev.kind == BEGIN:
            attach.setdefault(ev.u, ev.s)
    aug, devs = with_operators(inst, attach)
    state = OnlineState(aug, tau=tau, plan=plan)
    stats = RunStats()
    live: dict[int, int] = {}

    for n, ev in enumerate(trace, 1):
        if ev.kind == BEGIN:
            if ev.c in stats.connections:
                raise ValueError(f"connection {ev.c} begins twice")
            rec = ConnectionRecord(ev.c, ev.u, ev.t, ev.time)
            stats.connections[ev.c] = rec
            try:
                adm = state.admit(devs[ev.u], ev.t, ev.time)
            except AdmissionRejected:
                rec.rejected = True
            else:
                rec.stream_id = adm.stream.id
                live[ev.c] = adm.stream.id
                _sample(stats, live, state)
        elif ev.kind == END:
            rec = stats.connections.get(ev.c)
            if rec is None or rec.end is not None:
                raise ValueError(f"end of connection {ev.c} without a matching begin")
            rec.end = ev.time
            if not rec.rejected:
                state.remove(live.pop(ev.c))
                _sample(stats, live, state)
        else:
            raise ValueError(f"unknown event kind {ev.kind!r}")
        stats.max_concurrent = max(stats.max_concurrent, len(live))
        if n % check_every == 0 or n == len(trace):
            stats.violations += [(ev.time, v) for v in check_online_state(state)]
    stats.widest_path_calls = state.widest_path_calls
    return stats


# -- density report -----------------------------------------------------------


@dataclass(frozen=True)
class DensityRow:
    low: int
    high: int
    fraction: float


def _bucket(bw: int, per_decade: int) -> int:
    k = math.floor(math.log10(bw) * per_decade + 1e-9)
    # guard against log rounding at bucket edges
    while 10 ** (k / per_decade) > bw * (1 + 1e-12):
        k -= 1
    return k


def density_report(min_bws: Iterable[int | Fraction], per_decade: int = 10) -> list[DensityRow]:
    """Fraction of streams per logarithmic bandwidth bucket.

    ``min_bws`` holds each admitted stream's lifetime-minimum allocation in
    bits/s; values are floored to whole bits/s before bucketing.
    """
    values = [int(b) for b in min_bws]
    if not values:
        raise ValueError("no samples to report")
    counts: dict[int | None, int] = {}
    for v in values:
        k = None if v <= 0 else _bucket(v, per_decade)
        counts[k] = counts.get(k, 0) + 1
    total = len(values)
    rows = []
    for k in sorted(counts, key=lambda k: -math.inf if k is None else k):
        if k is None:
            low, high = 0, 1
        else:
            low, high = round(10 ** (k / per_decade)), round(10 ** ((k + 1) / per_decade))
        rows.append(DensityRow(low, high, counts[k] / total))
    return rows


def stats_min_bws(stats: RunStats) -> list[int]:
    return [int(r.min_bw) for r in sorted(stats.connections.values(), key=lambda r: r.c) if not r.rejected and r.min_bw is not None]


# -- CSV ----------------------------------------------------------------------

TRACE_HEADER = ("time", "kind", "c", "u", "s", "t")
STATS_HEADER = ("stream_id", "begin", "end", "min_bw", "final_bw", "rejected")
DENSITY_HEADER = ("bucket_low_bps", "bucket_high_bps", "fraction")


def _opt(x) -> str:
    return "" if x is None else str(x)


def write_trace(trace: Sequence[Event], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for e in trace:
            w.writerow((repr(e.time), e.kind, e.c, e.u, _opt(e.s), _opt(e.t)))


def read_trace(path: str | Path) -> list[Event]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        Event(
            float(r["time"]),
            r["kind"],
            int(r["c"]),
            int(r["u"]),
            int(r["s"]) if r["s"] else None,
            int(r["t"]) if r["t"] else None,
        )
        for r in rows
    ]


def write_stats(stats: RunStats, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_HEADER)
        for r in sorted(stats.connections.values(), key=lambda r: r.c):
            w.writerow(
                (
                    r.c,
                    repr(r.begin),
                    "" if r.end is None else repr(r.end),
                    "" if r.min_bw is None else int(r.min_bw),
                    "" if r.final_bw is None else int(r.final_bw),
                    int(r.rejected),
                )
            )


def read_stats_min_bws(path: str | Path) -> list[int]:
    with open(path, newline="") as fh:
        return [int(r["min_bw"]) for r in csv.DictReader(fh) if r["rejected"] == "0" and r["min_bw"] != ""]


def write_density(rows: Sequence[DensityRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DENSITY_HEADER)
        for r in rows:
            w.writerow((r.low, r.high, repr(r.fraction)))
