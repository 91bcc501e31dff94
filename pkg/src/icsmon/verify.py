"""Independent checks for offline plans and online states.

Only the instance and the plan (or state) are consulted; nothing here
depends on how a solution was produced.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import Edge, Topology
from .topogen import Instance


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str
    stream_id: int | None = None
    edge: Edge | None = None

    def to_dict(self) -> dict:
        out: dict = {"code": self.code}
        if self.stream_id is not None:
            out["stream_id"] = self.stream_id
        if self.edge is not None:
            out["edge"] = list(self.edge)
        out["detail"] = self.detail
        return out


def report_json(violations: Sequence[Violation]) -> str:
    return json.dumps([v.to_dict() for v in violations], indent=1)


def _walk_problems(topo: Topology, walk: Sequence[int], sid: int, what: str, simple: bool = True) -> list[Violation]:
    out = []
    if len(walk) < 2:
        return [Violation("too_short", f"{what} has fewer than two vertices", sid)]
    for e in zip(walk, walk[1:]):
        if not topo.has_edge(*e):
            out.append(Violation("missing_edge", f"{what} uses non-existent edge {e[0]}->{e[1]}", sid, e))
    if simple and len(set(walk)) != len(walk):
        out.append(Violation("not_simple", f"{what} repeats a vertex", sid))
    for v in walk[1:-1]:
        if not topo.is_switch(v):
            out.append(Violation("device_transit", f"{what} transits non-switch vertex {v}", sid))
    return out


def check_plan(
    inst: Instance,
    plan,
    ids_set: Sequence[int] | None = None,
    ids_capacity: int | None = None,
    ids_capacity_count: bool = False,
    flow_table: dict[int, int] | None = None,
) -> list[Violation]:
    """Every violated routing, observation or capacity rule of ``plan``.

    ``ids_set`` defaults to the plan's IDS list, or the topology's IDS.
    """
    topo = inst.topology
    if ids_set is None:
        ids_set = tuple(plan.ids) or ((topo.ids,) if topo.ids is not None else ())
    ids_ok = set(ids_set)
    by_id = {s.id: s for s in inst.critical}
    out: list[Violation] = []
    load: Counter[Edge] = Counter()
    ids_load = 0
    rules: Counter[int] = Counter()

    seen: set[int] = set()
    for r in plan.routes:
        sid = r.stream_id
        s = by_id.get(sid)
        if s is None:
            out.append(Violation("unknown_stream", f"route for unknown stream {sid}", sid))
            continue
        if sid in seen:
            out.append(Violation("duplicate_route", f"stream {sid} routed twice", sid))
            continue
        seen.add(sid)
        path = tuple(r.path)
        if not path or path[0] != s.src or path[-1] != s.dst:
            out.append(Violation("bad_endpoints", f"path must run {s.src}->{s.dst}", sid))
        out += _walk_problems(topo, path, sid, "path")
        for e in zip(path, path[1:]):
            load[e] += s.demand
        rules.update(path[:-1])

        replica = tuple(r.replica_path) if r.replica_path is not None else None
        if r.observed:
            if replica is None:
                out.append(Violation("observed_without_replica", "observed stream has no replica path", sid))
                continue
            if r.op is None or len(path) < 2 or r.op != path[-2] or not topo.is_switch(r.op):
                out.append(Violation("op_not_last_hop", f"observation point {r.op} is not the last switch before {s.dst}", sid))
            if not replica or replica[0] != r.op:
                out.append(Violation("replica_start", "replica does not start at the observation point", sid))
            if not replica or replica[-1] not in ids_ok:
                out.append(Violation("replica_end", "replica does not end at an IDS", sid))
            out += _walk_problems(topo, replica, sid, "replica")
            for e in zip(replica, replica[1:]):
                load[e] += s.demand
            rules.update(replica[:-1])
            if ids_capacity is not None and replica:
                ids_load += 1 if ids_capacity_count else s.demand
        elif replica is not None or r.op is not None:
            out.append(Violation("replica_on_unobserved", "unobserved stream carries a replica or op", sid))

    for sid in sorted(set(by_id) - seen):
        out.append(Violation("missing_stream", f"stream {sid} has no route", sid))

    for e in sorted(load, key=lambda e: topo.edge_index.get(e, len(topo.edge_index))):
        if e not in topo.capacity:
            continue
        cap = inst.critical_capacity(e)
        if load[e] > cap:
            out.append(Violation("capacity_exceeded", f"load {load[e]} bps exceeds critical capacity {cap} bps", edge=e))
    if ids_capacity is not None and ids_load > ids_capacity:
        out.append(Violation("ids_capacity_exceeded", f"IDS load {ids_load} exceeds {ids_capacity}"))
    for v, limit in sorted((flow_table or {}).items()):
        if rules[v] > limit:
            out.append(Violation("flow_table_exceeded", f"switch {v} needs {rules[v]} rules, limit {limit}"))
    return out


def check_online_state(state) -> list[Violation]:
    """Budget safety and max-min fairness of the standard allocation."""
    topo = state.topology
    out: list[Violation] = []
    usage: dict[Edge, Fraction] = {}
    share: dict[Edge, list] = {}
    for s in state.streams.values():
        if s.assigned_bw <= 0:
            out.append(Violation("non_positive_allocation", f"allocation {s.assigned_bw}", s.id))
        # online routes are glued from two widest paths and may revisit vertices
        out += _walk_problems(topo, s.path, s.id, "path", simple=False)
        out += _walk_problems(topo, s.replica_path, s.id, "replica", simple=False)
        for e, k in s.edge_uses().items():
            usage[e] = usage.get(e, Fraction(0)) + k * s.assigned_bw
            share.setdefault(e, []).append(s)

    for e in sorted(usage, key=lambda e: topo.edge_index.get(e, -1)):
        if usage[e] > state.budget(e):
            out.append(Violation("budget_exceeded", f"standard usage {usage[e]} exceeds budget {state.budget(e)}", edge=e))

    for s in sorted(state.streams.values(), key=lambda s: s.id):
        fair = any(
            usage[e] == state.budget(e) and all(o.assigned_bw <= s.assigned_bw for o in share[e])
            for e in s.edge_uses()
        )
        if not fair:
            out.append(Violation("not_max_min", "no saturated edge where the stream holds a maximal share", s.id))
    return out
