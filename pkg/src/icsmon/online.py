"""On-line admission of standard streams.

Standard streams live entirely inside the per-edge standard budget
``beta(e)``; critical reservations are never touched. A new stream gets a
path ``P`` (source to observation point, then observation point to
destination), an observation point as close as possible to the destination,
and a replica path ``Q`` to the IDS. All standard streams are then
re-allocated with max-min fair water filling in exact rationals.
"""

from __future__ import annotations

import heapq
import json
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .model import CriticalStream, Edge, Topology
from .topogen import Instance

DEFAULT_TAU = 0.010


class AdmissionRejected(Exception):
    """No observation point offers positive standard bandwidth."""


# -- widest path --------------------------------------------------------------


def _topology(g) -> Topology:
    return g if isinstance(g, Topology) else g.topology


def widest_path(g, caps: Mapping[Edge, int | Fraction], u: int, v: int) -> tuple[tuple[int, ...], int | Fraction] | None:
    """Path from u to v maximizing its minimum edge capacity.

    Interior vertices must be switches; edges with capacity <= 0 are
    unusable. Ties go to fewer hops, then to the lexicographically smallest
    vertex sequence. Returns ``(path, bottleneck)`` or None.
    """
    if u == v:
        raise ValueError("widest_path needs distinct endpoints")
    topo = _topology(g)
    succ, pred = topo.succ, topo.pred
    is_switch = topo.is_switch

    # phase 1: best achievable bottleneck (max-min Dijkstra)
    best: dict[int, int | Fraction] = {}
    heap: list[tuple] = []
    for w in succ[u]:
        c = caps.get((u, w), 0)
        if c > 0 and (w == v or is_switch(w)) and c > best.get(w, 0):
            best[w] = c
            heapq.heappush(heap, (-c, w))
    done: set[int] = set()
    while heap:
        negb, w = heapq.heappop(heap)
        if w in done:
            continue
        done.add(w)
        if w == v:
            break
        b = -negb
        for x in succ[w]:
            if x == u or (x != v and not is_switch(x)):
                continue
            c = caps.get((w, x), 0)
            if c <= 0:
                continue
            nb = c if c < b else b
            if nb > best.get(x, 0):
                best[x] = nb
                heapq.heappush(heap, (-nb, x))
    width = best.get(v)
    if width is None:
        return None

    # phase 2: hop distance to v over edges at least as wide as the optimum
    dist = {v: 0}
    queue = deque([v])
    while queue:
        x = queue.popleft()
        if x == u:
            continue
        for y in pred[x]:
            if y in dist or caps.get((y, x), 0) < width:
                continue
            if y != u and not is_switch(y):
                continue
            dist[y] = dist[x] + 1
            queue.append(y)

    # phase 3: lexicographically smallest shortest path
    path = [u]
    cur = u
    while cur != v:
        want = dist[cur] - 1
        for x in succ[cur]:
            if dist.get(x) == want and caps.get((cur, x), 0) >= width and (x == v or is_switch(x)):
                path.append(x)
                cur = x
                break
    return tuple(path), width


def shortest_path(g, u: int, v: int) -> tuple[int, ...] | None:
    """Hop-shortest, then lexicographically smallest, path ignoring capacities."""
    topo = _topology(g)
    caps = {e: 1 for e in topo.edges}
    found = widest_path(topo, caps, u, v)
    return None if found is None else found[0]


# -- water filling ------------------------------------------------------------


def water_fill(
    budgets: Mapping[Edge, int | Fraction],
    streams: Mapping[int, Iterable[Edge]],
    edge_order: Mapping[Edge, int] | None = None,
) -> dict[int, Fraction]:
    """Max-min fair allocation by repeatedly saturating the tightest edge.

    ``streams`` maps stream ids to the edges they cross; an edge listed
    twice for one stream carries that stream twice. Ties between equally
    tight edges go to the lowest edge id (``edge_order``, default tuple
    order).
    """
    uses: dict[int, Counter[Edge]] = {}
    for sid, edges in streams.items():
        c = Counter(edges)
        if not c:
            raise ValueError(f"stream {sid} crosses no edge")
        uses[sid] = c
    order = (lambda e: edge_order[e]) if edge_order is not None else (lambda e: e)
    cap = {e: Fraction(budgets.get(e, 0)) for c in uses.values() for e in c}
    on_edge: dict[Edge, dict[int, int]] = {}
    for sid, c in uses.items():
        for e, k in c.items():
            on_edge.setdefault(e, {})[sid] = k

    alloc: dict[int, Fraction] = {}
    while len(alloc) < len(uses):
        tight: Edge | None = None
        level: Fraction | None = None
        for e in sorted(on_edge, key=order):
            n = sum(on_edge[e].values())
            if n == 0:
                continue
            lv = cap[e] / n
            if level is None or lv < level:
                tight, level = e, lv
        for sid in sorted(on_edge[tight]):
            alloc[sid] = level
            for e, k in uses[sid].items():
                cap[e] -= k * level
                del on_edge[e][sid]
    return alloc


# -- state --------------------------------------------------------------------


@dataclass
class StandardStream:
    id: int
    src: int
    dst: int
    path: tuple[int, ...]
    op: int
    replica_path: tuple[int, ...]
    assigned_bw: Fraction = Fraction(0)
    admitted_at: float = 0.0

    def edge_uses(self) -> Counter[Edge]:
        c: Counter[Edge] = Counter(zip(self.path, self.path[1:]))
        c.update(zip(self.replica_path, self.replica_path[1:]))
        return c

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "src": self.src,
            "dst": self.dst,
            "path": list(self.path),
            "op": self.op,
            "replica_path": list(self.replica_path),
            "assigned_bps": int(self.assigned_bw),
            "assigned_exact": str(self.assigned_bw),
            "admitted_at": self.admitted_at,
        }


@dataclass(frozen=True)
class Admission:
    stream: StandardStream
    assignment: dict[int, Fraction]
    bottleneck: int | Fraction
    layer: int
    reassigned_at: float


@dataclass
class OnlineState:
    instance: Instance
    tau: float = DEFAULT_TAU
    plan: object | None = None
    streams: dict[int, StandardStream] = field(default_factory=dict)
    next_id: int = 0
    widest_path_calls: int = 0

    @property
    def topology(self) -> Topology:
        return self.instance.topology

    def budget(self, e: Edge) -> int:
        return self.instance.beta.get(e, 0)

    def sharing(self) -> dict[Edge, set[int]]:
        out: dict[Edge, set[int]] = {}
        for s in self.streams.values():
            for e in s.edge_uses():
                out.setdefault(e, set()).add(s.id)
        return out

    def usage(self) -> dict[Edge, Fraction]:
        out: dict[Edge, Fraction] = {}
        for s in self.streams.values():
            for e, k in s.edge_uses().items():
                out[e] = out.get(e, Fraction(0)) + k * s.assigned_bw
        return out

    def assignment(self) -> dict[int, Fraction]:
        return {sid: s.assigned_bw for sid, s in self.streams.items()}

    def _widest(self, caps, u, v):
        self.widest_path_calls += 1
        return widest_path(self.topology, caps, u, v)

    def _reassign(self) -> dict[int, Fraction]:
        budgets = {e: self.budget(e) for e in self.topology.edges}
        alloc = water_fill(
            budgets,
            {sid: list(s.edge_uses().elements()) for sid, s in self.streams.items()},
            self.topology.edge_index,
        )
        for sid, bw in alloc.items():
            self.streams[sid].assigned_bw = bw
        return dict(sorted(alloc.items()))

    # -- operations ----------------------------------------------------------

    def admit(self, s: int, t: int, now: float = 0.0) -> Admission:
        topo = self.topology
        if not (topo.is_device(s) and topo.is_device(t)) or s == t:
            raise ValueError("standard streams run between two distinct devices")
        d = topo.ids
        caps = per_edge_candidate_capacity(self)
        layers = distance_layers(topo, t)
        hops = hop_distance(topo, s, t)
        if hops is None:
            raise AdmissionRejected(f"{t} unreachable from {s}")
        k = max(hops - 2, 1)

        b_best: int | Fraction = 0
        best = None
        for i in range(1, k + 1):
            for v in layers.get(i, ()):
                so = self._widest(caps, s, v)
                od = self._widest(caps, v, d)
                ot = self._widest(caps, v, t)
                if so is None or od is None or ot is None:
                    continue
                b = min(so[1], od[1], ot[1])
                if b > b_best:
                    b_best = b
                    best = (v, so[0] + ot[0][1:], od[0], i)
            if best is not None:
                break
        if best is None:
            raise AdmissionRejected(f"no standard bandwidth for a stream {s}->{t}")

        op, path, replica, layer = best
        stream = StandardStream(self.next_id, s, t, path, op, replica, admitted_at=now + self.tau)
        self.next_id += 1
        self.streams[stream.id] = stream
        assignment = self._reassign()
        return Admission(stream, assignment, b_best, layer, now)

    def remove(self, sid: int) -> dict[int, Fraction]:
        if sid not in self.streams:
            raise KeyError(f"unknown standard stream {sid}")
        del self.streams[sid]
        if not self.streams:
            return {}
        return self._reassign()

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "streams": [s.to_dict() for s in sorted(self.streams.values(), key=lambda s: s.id)],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def per_edge_candidate_capacity(state: OnlineState) -> dict[Edge, int]:
    """beta(e) // (m + 1) where m is the number of standard streams on e."""
    shared = state.sharing()
    return {e: state.budget(e) // (len(shared.get(e, ())) + 1) for e in state.topology.edges}


def distance_layers(topo: Topology, t: int) -> dict[int, list[int]]:
    """Switches grouped by hop distance to ``t`` through switches only."""
    dist: dict[int, int] = {}
    frontier = [u for u in topo.pred[t] if topo.is_switch(u)]
    for u in frontier:
        dist[u] = 1
    queue = deque(frontier)
    while queue:
        x = queue.popleft()
        for y in topo.pred[x]:
            if y not in dist and topo.is_switch(y):
                dist[y] = dist[x] + 1
                queue.append(y)
    layers: dict[int, list[int]] = {}
    for v, i in dist.items():
        layers.setdefault(i, []).append(v)
    return {i: sorted(vs) for i, vs in layers.items()}


def hop_distance(topo: Topology, s: int, t: int) -> int | None:
    dist = {s: 0}
    queue = deque([s])
    while queue:
        x = queue.popleft()
        for y in topo.succ[x]:
            if y in dist:
                continue
            if y == t:
                return dist[x] + 1
            if topo.is_switch(y):
                dist[y] = dist[x] + 1
                queue.append(y)
    return None


def admit_stream(state: OnlineState, s: int, t: int, now: float = 0.0) -> Admission:
    return state.admit(s, t, now)


def remove_stream(state: OnlineState, sid: int) -> dict[int, Fraction]:
    return state.remove(sid)


# -- dynamic observation of critical streams ---------------------------------


@dataclass(frozen=True)
class ObservationResult:
    stream_id: int
    op: int | None = None
    replica_path: tuple[int, ...] | None = None
    bottleneck: int | Fraction | None = None
    bottleneck_edges: tuple[Edge, ...] = ()
    suggested_streams: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.op is not None


def critical_residual(inst: Instance, plan) -> dict[Edge, int]:
    """Critical capacity left after the plan's streams and replicas."""
    by_id = {s.id: s for s in inst.critical}
    residual = dict(inst.critical_capacities)
    for r in plan.routes:
        b = by_id[r.stream_id].demand
        for e in zip(r.path, r.path[1:]):
            residual[e] -= b
        if r.observed and r.replica_path:
            for e in zip(r.replica_path, r.replica_path[1:]):
                residual[e] -= b
    return residual


def observe_on_request(inst: Instance, plan, stream: CriticalStream | int) -> ObservationResult:
    """Find a replica route for a currently unobserved critical stream.

    Tries the last hop before the destination first and walks backward
    along the stream's path. If no hop reaches the IDS with enough critical
    residual, returns the edges limiting the replica route from the last
    hop together with the observed streams whose replicas cross them.
    """
    if isinstance(stream, int):
        stream = inst.stream(stream)
    topo = inst.topology
    d = topo.ids
    route = plan.route(stream.id)
    residual = critical_residual(inst, plan)
    hops = [v for v in reversed(route.path[1:-1]) if topo.is_switch(v)]
    for h in hops:
        if stream.demand == 0:
            p = shortest_path(topo, h, d)
            if p is not None:
                return ObservationResult(stream.id, h, p, 0)
            continue
        found = widest_path(topo, residual, h, d)
        if found is not None and found[1] >= stream.demand:
            return ObservationResult(stream.id, h, found[0], found[1])

    if not hops:
        return ObservationResult(stream.id)
    by_id = {s.id: s for s in inst.critical}
    replica_load: dict[Edge, int] = {}
    for r in plan.routes:
        if r.observed and r.replica_path:
            for e in zip(r.replica_path, r.replica_path[1:]):
                replica_load[e] = replica_load.get(e, 0) + by_id[r.stream_id].demand
    freeable = {e: residual[e] + replica_load.get(e, 0) for e in residual}
    found = widest_path(topo, freeable, hops[0], d)
    if found is None:
        return ObservationResult(stream.id)
    path = found[0]
    tight = tuple(e for e in zip(path, path[1:]) if residual[e] < stream.demand)
    tight_set = set(tight)
    suggested = sorted(
        r.stream_id
        for r in plan.routes
        if r.observed and r.replica_path and tight_set & set(zip(r.replica_path, r.replica_path[1:]))
    )
    return ObservationResult(stream.id, bottleneck=found[1], bottleneck_edges=tight, suggested_streams=tuple(suggested))
