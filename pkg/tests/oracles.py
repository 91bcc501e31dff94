"""Reference implementations used only by the tests.

Each one solves its problem the slow, obvious way so that it shares as
little code as possible with the package under test.
"""

from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction

import networkx as nx
import numpy as np


def progressive_filling(budgets, streams):
    """Raise every unfrozen stream at the same rate; freeze on saturation."""
    uses = {sid: Counter(es) for sid, es in streams.items()}
    alloc = {sid: Fraction(0) for sid in uses}
    frozen: set = set()
    while len(frozen) < len(uses):
        active = [sid for sid in uses if sid not in frozen]
        step = None
        for e in {e for sid in active for e in uses[sid]}:
            used = sum(k * alloc[sid] for sid in uses for ee, k in uses[sid].items() if ee == e)
            rate = sum(uses[sid][e] for sid in active)
            d = (Fraction(budgets.get(e, 0)) - used) / rate
            step = d if step is None else min(step, d)
        for sid in active:
            alloc[sid] += step
        for e in {e for sid in active for e in uses[sid]}:
            used = sum(k * alloc[sid] for sid in uses for ee, k in uses[sid].items() if ee == e)
            if used == budgets.get(e, 0):
                frozen.update(sid for sid in active if e in uses[sid])
    return alloc


def _digraph(topo, caps, u, v):
    g = nx.DiGraph()
    g.add_nodes_from(x.id for x in topo.vertices)
    for a, b in topo.edges:
        if caps.get((a, b), 0) <= 0:
            continue
        if (a == u or topo.is_switch(a)) and (b == v or topo.is_switch(b)):
            g.add_edge(a, b)
    return g


def widest_by_enumeration(topo, caps, u, v):
    """Max-bottleneck path over all simple paths; ties: fewer hops, then lexicographic."""
    g = _digraph(topo, caps, u, v)
    best = None
    for p in nx.all_simple_paths(g, u, v):
        w = min(caps[e] for e in zip(p, p[1:]))
        key = (-w, len(p), tuple(p))
        if best is None or key < best[0]:
            best = (key, tuple(p), w)
    return None if best is None else (best[1], best[2])


def switch_distance_layers(topo, t):
    """Switch -> hop distance to t, travelling only through switches."""
    g = nx.DiGraph()
    for a, b in topo.edges:
        if topo.is_switch(a) and (topo.is_switch(b) or b == t):
            g.add_edge(a, b)
    if t not in g:
        return {}
    lengths = nx.single_source_shortest_path_length(g.reverse(copy=False), t)
    return {v: dlen for v, dlen in lengths.items() if v != t}


def admit_by_enumeration(topo, caps, s, t, d):
    """(op, b) chosen by exhaustive search: nearest layer with b>0, max b, lowest id."""
    g = nx.DiGraph()
    for a, b in topo.edges:
        if (a == s or topo.is_switch(a)) and (b == t or topo.is_switch(b)):
            g.add_edge(a, b)
    try:
        hops = nx.shortest_path_length(g, s, t)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None
    k = max(hops - 2, 1)
    dist = switch_distance_layers(topo, t)
    for i in range(1, k + 1):
        cands = []
        for v in sorted(x for x, dv in dist.items() if dv == i):
            parts = [widest_by_enumeration(topo, caps, a, b) for a, b in ((s, v), (v, d), (v, t))]
            if any(p is None for p in parts):
                continue
            b = min(p[1] for p in parts)
            if b > 0:
                cands.append((-b, v))
        if cands:
            negb, v = min(cands)
            return v, -negb
    return None


def exhaustive_binary_optimum(model):
    """Best objective of an IlpModel by trying every 0/1 assignment (<= ~20 vars)."""
    names = model.variables()
    rows = list(model.rows())
    best = None
    for bits in itertools.product((0, 1), repeat=len(names)):
        ones = {n for n, b in zip(names, bits) if b}
        if all(r.satisfied(ones) for r in rows):
            val = model.evaluate(ones)
            if best is None or val > best:
                best = val
    return best


def milp_optimum(model):
    """Optimal objective of an IlpModel via scipy's MILP solver (float)."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    names = model.variables()
    idx = {n: i for i, n in enumerate(names)}
    terms, const = model.objective()
    c = np.zeros(len(names))
    for coef, v in terms:
        c[idx[v]] -= float(coef)
    rows = list(model.rows())
    if not rows:
        return Fraction(const)
    a = np.zeros((len(rows), len(names)))
    lo = np.full(len(rows), -np.inf)
    hi = np.full(len(rows), np.inf)
    for i, r in enumerate(rows):
        for coef, v in r.terms:
            a[i, idx[v]] += float(coef)
        if r.sense in ("<=", "="):
            hi[i] = float(r.rhs)
        if r.sense in (">=", "="):
            lo[i] = float(r.rhs)
    res = milp(
        c,
        constraints=LinearConstraint(a, lo, hi),
        integrality=np.ones(len(names)),
        bounds=Bounds(0, 1),
    )
    if res.status != 0:
        return None
    return const - res.fun


def _switch_paths(topo, u, v):
    g = nx.DiGraph()
    for a, b in topo.edges:
        if (a == u or topo.is_switch(a)) and (b == v or topo.is_switch(b)):
            g.add_edge(a, b)
    if u not in g or v not in g:
        return []
    return [tuple(p) for p in nx.all_simple_paths(g, u, v)]


def feasible_observed_sets(inst):
    """Stream-id sets observed by at least one capacity-feasible plan."""
    topo = inst.topology
    d = topo.ids
    streams = sorted(inst.critical, key=lambda s: s.id)
    per_stream = []
    for s in streams:
        opts = []
        for p in _switch_paths(topo, s.src, s.dst):
            edges = list(zip(p, p[1:]))
            opts.append((edges, False))
            op = p[-2]
            if topo.is_switch(op):
                for r in _switch_paths(topo, op, d):
                    opts.append((edges + list(zip(r, r[1:])), True))
        per_stream.append(opts)
    caps = {e: inst.critical_capacity(e) for e in topo.edges}
    found = set()

    def walk(i, load, observed):
        if i == len(streams):
            found.add(frozenset(observed))
            return
        s = streams[i]
        for edges, obs in per_stream[i]:
            extra = Counter(edges)
            if all(load[e] + k * s.demand <= caps[e] for e, k in extra.items()):
                for e, k in extra.items():
                    load[e] += k * s.demand
                walk(i + 1, load, observed | {s.id} if obs else observed)
                for e, k in extra.items():
                    load[e] -= k * s.demand

    walk(0, Counter(), frozenset())
    return found
