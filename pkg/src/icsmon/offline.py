"""Exact desk-scale solver for the offline routing problem.

Each critical stream chooses one *option*: a simple source-to-destination
path, optionally with a replica path from the path's last switch to an IDS.
A depth-first branch and bound over streams (in id order) and options (in
enumeration order) finds the option combination maximizing the ILP
objective. Ties resolve to the lexicographically smallest option-index
vector, because the search visits combinations in that order and replaces
its incumbent only on strict improvement.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .model import CriticalStream, Edge, Topology
from .topogen import Instance

DEFAULT_OPTION_LIMIT = 200
MAX_EDGES = 40
MAX_STREAMS = 12

EXACT = "exact"
LIMITED = "enumeration-limited"
INFEASIBLE = "infeasible"


class InfeasibleError(Exception):
    """Some critical stream cannot be routed within the critical capacities."""


class SizeLimitError(Exception):
    """Instance exceeds the exact solver's configured size bound."""


@dataclass(frozen=True)
class StreamRoute:
    stream_id: int
    path: tuple[int, ...]
    observed: bool = False
    op: int | None = None
    replica_path: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.stream_id,
            "path": list(self.path),
            "observed": self.observed,
            "op": self.op,
            "replica_path": list(self.replica_path) if self.replica_path is not None else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> StreamRoute:
        rp = doc.get("replica_path")
        return cls(
            int(doc["id"]),
            tuple(int(v) for v in doc["path"]),
            bool(doc.get("observed", False)),
            None if doc.get("op") is None else int(doc["op"]),
            None if rp is None else tuple(int(v) for v in rp),
        )


@dataclass(frozen=True)
class OfflinePlan:
    routes: tuple[StreamRoute, ...]
    status: str = EXACT
    objective: Fraction | None = None
    ids: tuple[int, ...] = ()
    choice: tuple[int, ...] = field(default=(), compare=False)

    def route(self, sid: int) -> StreamRoute:
        for r in self.routes:
            if r.stream_id == sid:
                return r
        raise KeyError(f"no route for stream {sid}")

    @property
    def observed_count(self) -> int:
        return sum(1 for r in self.routes if r.observed)

    def to_dict(self) -> dict:
        obj = self.objective
        return {
            "status": self.status,
            "objective": None if obj is None else f"{obj.numerator}/{obj.denominator}",
            "objective_float": None if obj is None else float(obj),
            "ids": list(self.ids),
            "streams": [r.to_dict() for r in self.routes],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> OfflinePlan:
        obj = doc.get("objective")
        return cls(
            routes=tuple(StreamRoute.from_dict(r) for r in doc.get("streams", [])),
            status=doc.get("status", EXACT),
            objective=None if obj is None else Fraction(obj),
            ids=tuple(doc.get("ids", ())),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path: str | Path) -> OfflinePlan:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Option:
    path: tuple[int, ...]
    op: int | None = None
    replica_path: tuple[int, ...] | None = None

    @property
    def observed(self) -> bool:
        return self.replica_path is not None

    def edges(self) -> list[Edge]:
        es = list(zip(self.path, self.path[1:]))
        if self.replica_path is not None:
            es += list(zip(self.replica_path, self.replica_path[1:]))
        return es


# -- path enumeration ---------------------------------------------------------


def _transit_ok(topo: Topology, v: int, target: int) -> bool:
    return v == target or topo.is_switch(v)


def simple_paths(topo: Topology, src: int, dst: int, limit: int | None = None) -> tuple[list[tuple[int, ...]], bool]:
    """Simple src->dst paths whose interior vertices are switches.

    Ordered by hop count, then lexicographically. Returns ``(paths,
    complete)`` where ``complete`` is False when ``limit`` cut the list.
    """
    out: list[tuple[int, ...]] = []
    max_hops = len(topo.switches) + 1
    succ = topo.succ

    def extend(path: list[int], on_path: set[int], hops_left: int) -> Iterator[tuple[int, ...]]:
        tail = path[-1]
        for w in succ[tail]:
            if w in on_path or not _transit_ok(topo, w, dst):
                continue
            if hops_left == 1:
                if w == dst:
                    yield tuple(path) + (w,)
                continue
            if w == dst:
                continue
            path.append(w)
            on_path.add(w)
            yield from extend(path, on_path, hops_left - 1)
            path.pop()
            on_path.discard(w)

    for hops in range(1, max_hops + 1):
        for p in extend([src], {src}, hops):
            out.append(p)
            if limit is not None and len(out) > limit:
                return out[:limit], False
    return out, True


def enumerate_stream_options(
    inst: Instance,
    stream: CriticalStream,
    limit: int = DEFAULT_OPTION_LIMIT,
    ids_set: Sequence[int] | None = None,
) -> tuple[list[Option], bool]:
    """Candidate options for one stream and whether enumeration was complete.

    For every path: first the observed variants (replica paths to the
    nearest IDS first, then by the path ordering), then the unobserved one.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    topo = inst.topology
    ids_set = tuple(ids_set) if ids_set else (topo.ids,)
    paths, complete = simple_paths(topo, stream.src, stream.dst, limit)
    if not paths:
        raise InfeasibleError(f"no path from {stream.src} to {stream.dst} for stream {stream.id}")
    replicas: dict[int, list[tuple[int, ...]]] = {}
    options: list[Option] = []
    for p in paths:
        v = p[-2]
        if topo.is_switch(v):
            if v not in replicas:
                found: list[tuple[int, ...]] = []
                for d in ids_set:
                    rps, ok = simple_paths(topo, v, d, limit)
                    complete = complete and ok
                    found.extend(rps)
                found.sort(key=lambda rp: len(rp))
                replicas[v] = found
            options.extend(Option(p, v, rp) for rp in replicas[v])
        options.append(Option(p))
    return options, complete


# -- evaluation helpers -------------------------------------------------------


@dataclass
class _Compiled:
    """Per-option data in integer/Fraction form for fast search."""

    usage: list[tuple[tuple[int, int], ...]]  # (edge index, bits/s) pairs
    value: list[Fraction]
    observed: list[bool]
    ids_load: list[int]
    ft: list[tuple[tuple[int, int], ...]]  # (switch, rule count) pairs


def _compile(
    inst: Instance,
    stream: CriticalStream,
    options: list[Option],
    ids_capacity_count: bool,
    ft_keys: set[int],
) -> _Compiled:
    topo = inst.topology
    idx = topo.edge_index
    n_e = len(topo.edges)
    k = n_e * len(inst.critical) + 1
    comp = _Compiled([], [], [], [], [])
    for opt in options:
        counter: Counter[int] = Counter()
        cost = Fraction(0)
        for e in opt.edges():
            counter[idx[e]] += stream.demand
            cost += Fraction(stream.demand, inst.critical_capacity(e))
        comp.usage.append(tuple(sorted(counter.items())))
        val = n_e - cost
        if opt.observed:
            val += k * stream.relevance
        comp.value.append(val)
        comp.observed.append(opt.observed)
        comp.ids_load.append((1 if ids_capacity_count else stream.demand) if opt.observed else 0)
        rules: Counter[int] = Counter()
        for v in opt.path[:-1]:
            if v in ft_keys:
                rules[v] += 1
        if opt.replica_path is not None:
            for v in opt.replica_path[:-1]:
                if v in ft_keys:
                    rules[v] += 1
        comp.ft.append(tuple(sorted(rules.items())))
    return comp


@dataclass
class _Problem:
    inst: Instance
    streams: list[CriticalStream]
    options: list[list[Option]]
    compiled: list[_Compiled]
    capacity: list[int]
    ids_capacity: int | None
    flow_table: dict[int, int]

    @property
    def best_values(self) -> list[Fraction]:
        return [max(c.value) for c in self.compiled]


def _problem(
    inst: Instance,
    options: list[list[Option]],
    ids_capacity: int | None,
    ids_capacity_count: bool,
    flow_table: dict[int, int] | None,
) -> _Problem:
    streams = sorted(inst.critical, key=lambda s: s.id)
    ft = dict(flow_table or {})
    compiled = [_compile(inst, s, opts, ids_capacity_count, set(ft)) for s, opts in zip(streams, options)]
    caps = [inst.critical_capacity(e) for e in inst.topology.edges]
    return _Problem(inst, streams, options, compiled, caps, ids_capacity, ft)


def _build_plan(prob: _Problem, choice: Sequence[int], value: Fraction, status: str) -> OfflinePlan:
    routes = []
    for s, opts, i in zip(prob.streams, prob.options, choice):
        o = opts[i]
        routes.append(StreamRoute(s.id, o.path, o.observed, o.op if o.observed else None, o.replica_path))
    ids = tuple(sorted({o.replica_path[-1] for o in (prob.options[k][i] for k, i in enumerate(choice)) if o.observed}))
    return OfflinePlan(tuple(routes), status, value, ids, tuple(choice))


# -- branch and bound ---------------------------------------------------------


def _search(prob: _Problem, prefix: Sequence[int] = ()) -> tuple[Fraction | None, tuple[int, ...] | None, int]:
    """DFS over option indices, starting below a fixed ``prefix``.

    Returns (best value, best choice, nodes visited).
    """
    n = len(prob.streams)
    residual = list(prob.capacity)
    ids_left = prob.ids_capacity
    ft_left = dict(prob.flow_table)
    best_rest = prob.best_values
    suffix_bound = [Fraction(0)] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix_bound[i] = suffix_bound[i + 1] + best_rest[i]

    best_val: Fraction | None = None
    best_choice: tuple[int, ...] | None = None
    choice: list[int] = []
    nodes = 0

    def fits(k: int, i: int) -> bool:
        comp = prob.compiled[k]
        for e, u in comp.usage[i]:
            if residual[e] < u:
                return False
        if ids_left is not None and comp.ids_load[i] > ids_left:
            return False
        for v, c in comp.ft[i]:
            if ft_left[v] < c:
                return False
        return True

    def apply(k: int, i: int, sign: int) -> None:
        nonlocal ids_left
        comp = prob.compiled[k]
        for e, u in comp.usage[i]:
            residual[e] -= sign * u
        if ids_left is not None:
            ids_left -= sign * comp.ids_load[i]
        for v, c in comp.ft[i]:
            ft_left[v] -= sign * c

    def dfs(k: int, value: Fraction) -> None:
        nonlocal best_val, best_choice, nodes
        nodes += 1
        if k == n:
            if best_val is None or value > best_val:
                best_val, best_choice = value, tuple(choice)
            return
        if best_val is not None and value + suffix_bound[k] <= best_val:
            return
        comp = prob.compiled[k]
        fixed = prefix[k] if k < len(prefix) else None
        indices = (fixed,) if fixed is not None else range(len(comp.value))
        for i in indices:
            if not fits(k, i):
                continue
            if best_val is not None and value + comp.value[i] + suffix_bound[k + 1] <= best_val:
                continue
            apply(k, i, 1)
            choice.append(i)
            dfs(k + 1, value + comp.value[i])
            choice.pop()
            apply(k, i, -1)

    dfs(0, Fraction(0))
    return best_val, best_choice, nodes


def _search_subtree(args) -> tuple[Fraction | None, tuple[int, ...] | None, int]:
    prob, first = args
    return _search(prob, (first,))


def solve_exact(
    inst: Instance,
    options: list[list[Option]] | None = None,
    *,
    limit: int = DEFAULT_OPTION_LIMIT,
    ids_set: Sequence[int] | None = None,
    ids_capacity: int | None = None,
    ids_capacity_count: bool = False,
    flow_table: dict[int, int] | None = None,
    max_edges: int = MAX_EDGES,
    max_streams: int = MAX_STREAMS,
    jobs: int = 1,
) -> OfflinePlan:
    """Maximize the ILP objective over enumerated options.

    Raises SizeLimitError above the size bound and InfeasibleError when no
    combination routes every stream.
    """
    topo = inst.topology
    if len(topo.edges) > max_edges or len(inst.critical) > max_streams:
        raise SizeLimitError(
            f"instance has {len(topo.edges)} edges and {len(inst.critical)} streams; the exact solver "
            f"accepts at most {max_edges} edges and {max_streams} streams (use --mode export-lp)"
        )
    streams = sorted(inst.critical, key=lambda s: s.id)
    complete = True
    if options is None:
        options = []
        for s in streams:
            opts, ok = enumerate_stream_options(inst, s, limit, ids_set)
            options.append(opts)
            complete = complete and ok
    prob = _problem(inst, options, ids_capacity, ids_capacity_count, flow_table)

    if not streams:
        return OfflinePlan((), EXACT, Fraction(0), ())

    if jobs > 1 and len(options[0]) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_search_subtree, [(prob, i) for i in range(len(options[0]))]))
        best_val, best_choice = None, None
        for val, ch, _ in results:
            if val is None:
                continue
            if best_val is None or val > best_val or (val == best_val and ch < best_choice):
                best_val, best_choice = val, ch
    else:
        best_val, best_choice, _ = _search(prob)

    if best_choice is None:
        raise InfeasibleError("no option combination routes every critical stream within capacity")
    return _build_plan(prob, best_choice, best_val, EXACT if complete else LIMITED)


# -- exhaustive oracle --------------------------------------------------------


def _oracle_paths(topo: Topology, src: int, dst: int) -> list[tuple[int, ...]]:
    import networkx as nx

    g = nx.DiGraph()
    g.add_nodes_from(v.id for v in topo.vertices)
    for a, b in topo.edges:
        if (a == src or topo.is_switch(a)) and (b == dst or topo.is_switch(b)):
            g.add_edge(a, b)
    paths = [tuple(p) for p in nx.all_simple_paths(g, src, dst)]
    return sorted(paths, key=lambda p: (len(p), p))


def brute_force_oracle(
    inst: Instance,
    *,
    ids_set: Sequence[int] | None = None,
    ids_capacity: int | None = None,
    ids_capacity_count: bool = False,
    flow_table: dict[int, int] | None = None,
    max_switches: int = 8,
    max_streams: int = 3,
) -> OfflinePlan:
    """Evaluate every option combination; same ordering and tie-break as solve_exact.

    Paths come from networkx rather than the solver's own enumerator.
    """
    topo = inst.topology
    if len(topo.switches) > max_switches or len(inst.critical) > max_streams:
        raise SizeLimitError("instance too large for the exhaustive oracle")
    ids_set = tuple(ids_set) if ids_set else (topo.ids,)
    streams = sorted(inst.critical, key=lambda s: s.id)
    all_options: list[list[Option]] = []
    for s in streams:
        opts: list[Option] = []
        paths = _oracle_paths(topo, s.src, s.dst)
        if not paths:
            raise InfeasibleError(f"no path for stream {s.id}")
        for p in paths:
            v = p[-2]
            if topo.is_switch(v):
                reps = [rp for d in ids_set for rp in _oracle_paths(topo, v, d)]
                reps.sort(key=len)
                opts.extend(Option(p, v, rp) for rp in reps)
            opts.append(Option(p))
        all_options.append(opts)

    n_e = len(topo.edges)
    k = n_e * len(streams) + 1
    caps = {e: inst.critical_capacity(e) for e in topo.edges}
    best_val: Fraction | None = None
    best_choice: tuple[int, ...] | None = None
    for choice in itertools.product(*(range(len(o)) for o in all_options)):
        load: Counter[Edge] = Counter()
        ids_load = 0
        rules: Counter[int] = Counter()
        value = Fraction(0)
        for s, opts, i in zip(streams, all_options, choice):
            o = opts[i]
            for e in o.edges():
                load[e] += s.demand
            value += n_e - sum((Fraction(s.demand, caps[e]) for e in o.edges()), Fraction(0))
            if o.observed:
                value += k * s.relevance
                ids_load += 1 if ids_capacity_count else s.demand
            for v in o.path[:-1] + (o.replica_path[:-1] if o.replica_path else ()):
                rules[v] += 1
        if any(load[e] > caps[e] for e in load):
            continue
        if ids_capacity is not None and ids_load > ids_capacity:
            continue
        if flow_table and any(rules[v] > lim for v, lim in flow_table.items()):
            continue
        if best_val is None or value > best_val:
            best_val, best_choice = value, choice
    if best_choice is None:
        raise InfeasibleError("no feasible combination")
    prob = _problem(inst, all_options, ids_capacity, ids_capacity_count, flow_table)
    return _build_plan(prob, best_choice, best_val, EXACT)


def all_feasible_plans(inst: Instance, options: Iterable[list[Option]] | None = None) -> Iterator[tuple[tuple[int, ...], list[Option]]]:
    """Every capacity-feasible option combination (tiny instances only)."""
    topo = inst.topology
    streams = sorted(inst.critical, key=lambda s: s.id)
    if options is None:
        options = [enumerate_stream_options(inst, s, 10**6)[0] for s in streams]
    options = list(options)
    caps = {e: inst.critical_capacity(e) for e in topo.edges}
    for choice in itertools.product(*(range(len(o)) for o in options)):
        load: Counter[Edge] = Counter()
        picked = [opts[i] for opts, i in zip(options, choice)]
        for s, o in zip(streams, picked):
            for e in o.edges():
                load[e] += s.demand
        if all(load[e] <= caps[e] for e in load):
            yield choice, picked
