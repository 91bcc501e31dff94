"""ILP model for critical-stream routing with IDS replica streams.

Variables are binary: ``x_s<sid>_e<a>_<b>`` routes stream ``sid`` over edge
(a, b); ``r_s<sid>_e<a>_<b>`` (single IDS) or ``r_s<sid>_d<ids>_e<a>_<b>``
(multi IDS) routes its replica. Capacities are the critical capacities of the
instance, i.e. link capacity minus the standard-stream budget.

The model is kept structural: rows are produced on demand by
:meth:`IlpModel.rows` for small models, while :func:`export_lp` renders large
models from per-vertex text templates. Both go through the same row helpers.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Iterator, TextIO

from .model import CriticalStream, Edge, Topology
from .topogen import Instance

Term = tuple[Fraction | int, str]

# stands in for "s<sid>" inside template text
_PH = "\x01"
_TERMS_PER_LINE = 8
_NAMES_PER_LINE = 10


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[Term, ...]
    sense: str  # "<=", ">=", "="
    rhs: Fraction | int

    def satisfied(self, ones: set[str]) -> bool:
        lhs = sum((c for c, v in self.terms if v in ones), 0)
        if self.sense == "<=":
            return lhs <= self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass(frozen=True)
class IlpModel:
    instance: Instance
    ids_set: tuple[int, ...]
    multi: bool = False
    ids_capacity: int | None = None
    ids_capacity_count: bool = False
    flow_table: dict[int, int] = field(default_factory=dict)

    # -- basic quantities ----------------------------------------------------

    @property
    def topology(self) -> Topology:
        return self.instance.topology

    @property
    def streams(self) -> tuple[CriticalStream, ...]:
        return tuple(sorted(self.instance.critical, key=lambda s: s.id))

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self.topology.edges

    @property
    def K(self) -> int:
        return len(self.edges) * len(self.instance.critical) + 1

    def capacity(self, e: Edge) -> int:
        return self.instance.critical_capacity(e)

    # -- naming --------------------------------------------------------------

    def x(self, tag: str, e: Edge) -> str:
        return f"x_{tag}_e{e[0]}_{e[1]}"

    def r(self, tag: str, d: int, e: Edge) -> str:
        if self.multi:
            return f"r_{tag}_d{d}_e{e[0]}_{e[1]}"
        return f"r_{tag}_e{e[0]}_{e[1]}"

    def variables(self) -> list[str]:
        out: list[str] = []
        for s in self.streams:
            out.extend(self._stream_variables(f"s{s.id}"))
        return out

    def _stream_variables(self, tag: str) -> list[str]:
        names = [self.x(tag, e) for e in self.edges]
        for d in self.ids_set:
            names.extend(self.r(tag, d, e) for e in self.edges)
        return names

    # -- row helpers (shared by generic and template rendering) -------------

    def _flow_terms(self, var, v: int) -> list[Term]:
        topo = self.topology
        terms: list[Term] = [(1, var((v, w))) for w in topo.succ[v]]
        terms += [(-1, var((u, v))) for u in topo.pred[v]]
        return terms

    def _flow_row(self, tag: str, v: int) -> Row:
        return Row(f"flow_{tag}_v{v}", tuple(self._flow_terms(lambda e: self.x(tag, e), v)), "=", 0)

    def _rflow_row(self, tag: str, d: int, v: int) -> Row:
        dtag = f"{tag}_d{d}" if self.multi else tag
        return Row(f"rflow_{dtag}_v{v}", tuple(self._flow_terms(lambda e: self.r(tag, d, e), v)), "=", 0)

    def _rexit_rows(self, tag: str, d: int) -> list[Row]:
        dtag = f"{tag}_d{d}" if self.multi else tag
        return [Row(f"rexit_{dtag}_e{d}_{w}", ((1, self.r(tag, d, (d, w))),), "=", 0) for w in self.topology.succ[d]]

    def _incident(self, v: int) -> list[Edge]:
        idx = self.topology.edge_index
        es = [(v, w) for w in self.topology.succ[v]] + [(u, v) for u in self.topology.pred[v]]
        return sorted(es, key=idx.__getitem__)

    def _mx_rows(self, tag: str, dev: int) -> list[Row]:
        return [Row(f"mx_{tag}_e{e[0]}_{e[1]}", ((1, self.x(tag, e)),), "=", 0) for e in self._incident(dev)]

    def _mr_rows(self, tag: str, d: int, dev: int) -> list[Row]:
        dtag = f"{tag}_d{d}" if self.multi else tag
        return [Row(f"mr_{dtag}_e{e[0]}_{e[1]}", ((1, self.r(tag, d, e)),), "=", 0) for e in self._incident(dev)]

    def _endpoint_rows(self, s: CriticalStream, tag: str) -> list[Row]:
        # Out(s)=1 and In(t)=1 alone admit a loop at each endpoint instead of a
        # path, so flow back into s and out of t is forbidden as well.
        topo = self.topology
        rows = [
            Row(f"src_{tag}", tuple((1, self.x(tag, (s.src, w))) for w in topo.succ[s.src]), "=", 1),
            Row(f"dst_{tag}", tuple((1, self.x(tag, (u, s.dst))) for u in topo.pred[s.dst]), "=", 1),
        ]
        if topo.pred[s.src]:
            rows.append(Row(f"srcin_{tag}", tuple((1, self.x(tag, (u, s.src))) for u in topo.pred[s.src]), "=", 0))
        if topo.succ[s.dst]:
            rows.append(Row(f"dstout_{tag}", tuple((1, self.x(tag, (s.dst, w))) for w in topo.succ[s.dst]), "=", 0))
        return rows

    def observation_points(self, s: CriticalStream) -> list[int]:
        topo = self.topology
        return [u for u in topo.pred[s.dst] if topo.is_switch(u)]

    def _has_edges(self, v: int) -> bool:
        return bool(self.topology.succ[v] or self.topology.pred[v])

    def _stream_rows(self, s: CriticalStream, tag: str) -> Iterator[Row]:
        topo = self.topology
        for v in sorted(topo.succ):
            if v not in (s.src, s.dst) and self._has_edges(v):
                yield self._flow_row(tag, v)
        yield from self._endpoint_rows(s, tag)
        ops = self.observation_points(s)
        for d in self.ids_set:
            for v in topo.switches:
                if v not in ops and self._has_edges(v):
                    yield self._rflow_row(tag, d, v)
        for v in ops:
            terms: list[Term] = []
            for d in self.ids_set:
                terms += self._flow_terms(lambda e, d=d: self.r(tag, d, e), v)
            terms.append((-1, self.x(tag, (v, s.dst))))
            yield Row(f"rsrc_{tag}_v{v}", tuple(terms), "<=", 0)
        for d in self.ids_set:
            yield from self._rexit_rows(tag, d)
        for dev in topo.devices:
            if dev not in (s.src, s.dst):
                yield from self._mx_rows(tag, dev)
        for d in self.ids_set:
            for dev in topo.devices:
                if dev != d:
                    yield from self._mr_rows(tag, d, dev)

    def _capacity_rows(self) -> Iterator[Row]:
        streams = self.streams
        if not streams:
            return
        for e in self.edges:
            terms: list[Term] = []
            for s in streams:
                tag = f"s{s.id}"
                terms.append((s.demand, self.x(tag, e)))
                terms += [(s.demand, self.r(tag, d, e)) for d in self.ids_set]
            yield Row(f"cap_e{e[0]}_{e[1]}", tuple(terms), "<=", self.capacity(e))

    def _extension_rows(self) -> Iterator[Row]:
        topo = self.topology
        if self.ids_capacity is not None:
            d = self.ids_set[0]
            terms = [
                (1 if self.ids_capacity_count else s.demand, self.r(f"s{s.id}", d, (u, d)))
                for s in self.streams
                for u in topo.pred[d]
            ]
            yield Row("idscap", tuple(terms), "<=", self.ids_capacity)
        for v in sorted(self.flow_table):
            terms = []
            for s in self.streams:
                tag = f"s{s.id}"
                terms += [(1, self.x(tag, (v, w))) for w in topo.succ[v]]
                for d in self.ids_set:
                    terms += [(1, self.r(tag, d, (v, w))) for w in topo.succ[v]]
            yield Row(f"ft_v{v}", tuple(terms), "<=", self.flow_table[v])

    def rows(self) -> Iterator[Row]:
        yield from self._capacity_rows()
        for s in self.streams:
            yield from self._stream_rows(s, f"s{s.id}")
        yield from self._extension_rows()

    # -- objective -----------------------------------------------------------

    def _objective_terms(self, s: CriticalStream, tag: str) -> list[Term]:
        terms: list[Term] = [(-Fraction(s.demand, self.capacity(e)), self.x(tag, e)) for e in self.edges]
        for d in self.ids_set:
            for e in self.edges:
                coef = -Fraction(s.demand, self.capacity(e))
                if e[1] == d:
                    coef += self.K * s.relevance
                terms.append((coef, self.r(tag, d, e)))
        return terms

    def objective(self) -> tuple[list[Term], int]:
        terms: list[Term] = []
        for s in self.streams:
            terms += self._objective_terms(s, f"s{s.id}")
        return terms, len(self.streams) * len(self.edges)

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, ones: Iterable[str]) -> Fraction:
        ones = set(ones)
        terms, const = self.objective()
        return Fraction(const) + sum((Fraction(c) for c, v in terms if v in ones), Fraction(0))

    def violated(self, ones: Iterable[str]) -> list[str]:
        ones = set(ones)
        return [row.name for row in self.rows() if not row.satisfied(ones)]

    # -- summary -------------------------------------------------------------

    def summary(self) -> dict:
        topo = self.topology
        n_d = len(self.ids_set)
        n_s = len(self.streams)
        active = [v for v in topo.succ if self._has_edges(v)]
        deg = {v: len(topo.succ[v]) + len(topo.pred[v]) for v in topo.succ}
        dev_deg = sum(deg[v] for v in topo.devices)
        counts = {
            "capacity": len(self.edges) if n_s else 0,
            "flow": 0,
            "source": n_s,
            "sink": n_s,
            "endpoint_direction": 0,
            "replica_flow": 0,
            "replica_source": 0,
            "replica_ids_exit": n_s * sum(len(topo.succ[d]) for d in self.ids_set),
            "device_no_switch": 0,
            "replica_device_no_switch": n_s * sum(dev_deg - deg[d] for d in self.ids_set),
            "ids_capacity": int(self.ids_capacity is not None),
            "flow_table": len(self.flow_table),
        }
        active_switches = [v for v in topo.switches if self._has_edges(v)]
        for s in self.streams:
            counts["flow"] += sum(1 for v in active if v not in (s.src, s.dst))
            ops = set(self.observation_points(s))
            counts["replica_flow"] += n_d * sum(1 for v in active_switches if v not in ops)
            counts["replica_source"] += len(ops)
            counts["device_no_switch"] += dev_deg - deg[s.src] - deg[s.dst]
            counts["endpoint_direction"] += bool(topo.pred[s.src]) + bool(topo.succ[s.dst])
        n_vars = n_s * len(self.edges) * (1 + n_d)
        return {
            "variables": n_vars,
            "binaries": n_vars,
            "constraints": sum(counts.values()),
            "by_family": counts,
            "K": self.K,
            "edges": len(self.edges),
            "streams": n_s,
            "ids": list(self.ids_set),
        }


# -- builders -----------------------------------------------------------------


def _check_instance(inst: Instance) -> None:
    topo = inst.topology
    for s in inst.critical:
        for end in (s.src, s.dst):
            if not topo.is_device(end):
                raise ValueError(f"stream {s.id}: endpoint {end} is not a device")
    for e in topo.edges:
        if inst.critical_capacity(e) <= 0:
            raise ValueError(f"edge {e[0]}->{e[1]} has zero critical capacity")


def build_base(inst: Instance) -> IlpModel:
    _check_instance(inst)
    if inst.topology.ids is None:
        raise ValueError("instance has no IDS")
    return IlpModel(inst, (inst.topology.ids,))


def build_multi_ids(inst: Instance, ids_set: Iterable[int]) -> IlpModel:
    ids = tuple(sorted(set(ids_set)))
    if not ids:
        raise ValueError("empty IDS set")
    for d in ids:
        if not inst.topology.is_device(d):
            raise ValueError(f"IDS {d} is not a device")
    _check_instance(inst)
    return IlpModel(inst, ids, multi=True)


def add_ids_capacity(m: IlpModel, capacity: int, count: bool = False) -> IlpModel:
    """Limit total replica bandwidth (or, with ``count``, replica count) into the IDS."""
    if m.multi:
        raise ValueError("IDS capacity applies to single-IDS models")
    if m.ids_capacity is not None:
        raise ValueError("IDS capacity already set")
    if capacity < 0:
        raise ValueError("negative IDS capacity")
    return replace(m, ids_capacity=capacity, ids_capacity_count=count)


def add_flow_table_limits(m: IlpModel, ft: dict[int, int]) -> IlpModel:
    for v, n in ft.items():
        if n < 0:
            raise ValueError(f"negative flow-table limit for switch {v}")
        if not m.topology.is_switch(v):
            raise ValueError(f"flow-table limit on non-switch vertex {v}")
    merged = dict(m.flow_table)
    merged.update(ft)
    return replace(m, flow_table=merged)


# -- LP export ----------------------------------------------------------------


def _fmt(c: Fraction | int) -> str:
    if isinstance(c, int) or (isinstance(c, Fraction) and c.denominator == 1):
        return str(int(c))
    return f"{float(c):.15g}"


def _render_terms(terms: Iterable[Term], signed: bool = False) -> str:
    parts: list[str] = []
    for i, (c, v) in enumerate(terms):
        neg = c < 0
        mag = -c if neg else c
        body = v if mag == 1 else f"{_fmt(mag)} {v}"
        if i == 0 and not signed:
            parts.append(f"-{body}" if neg else body)
        else:
            if i % _TERMS_PER_LINE == 0:
                parts.append("\n  ")
            else:
                parts.append(" ")
            parts.append(f"- {body}" if neg else f"+ {body}")
    return "".join(parts) if parts else "0"


def render_row(row: Row) -> str:
    return f" {row.name}: {_render_terms(row.terms)} {row.sense} {_fmt(row.rhs)}\n"


def _render_names(names: list[str]) -> str:
    return "".join(" " + " ".join(names[i : i + _NAMES_PER_LINE]) + "\n" for i in range(0, len(names), _NAMES_PER_LINE))


class _Templates:
    """Stream-independent text blocks with a placeholder for the stream tag."""

    def __init__(self, m: IlpModel):
        self.m = m
        topo = m.topology
        self.flow = {v: render_row(m._flow_row(_PH, v)) for v in sorted(topo.succ) if m._has_edges(v)}
        self.rflow = {
            d: {v: render_row(m._rflow_row(_PH, d, v)) for v in topo.switches if m._has_edges(v)} for d in m.ids_set
        }
        self.rexit = "".join(render_row(r) for d in m.ids_set for r in m._rexit_rows(_PH, d))
        self.mx = {dev: "".join(render_row(r) for r in m._mx_rows(_PH, dev)) for dev in topo.devices}
        self.mr = {
            d: "".join(render_row(r) for dev in topo.devices if dev != d for r in m._mr_rows(_PH, d, dev))
            for d in m.ids_set
        }
        self.binaries = m._stream_variables(_PH)
        self._objective: dict[tuple[int, int], str] = {}

    def objective_text(self, s: CriticalStream) -> str:
        key = (s.demand, s.relevance)
        if key not in self._objective:
            self._objective[key] = _render_terms(self.m._objective_terms(s, _PH), signed=True)
        return self._objective[key].replace(_PH, f"s{s.id}")

    def stream_block(self, s: CriticalStream) -> str:
        m = self.m
        parts = [text for v, text in self.flow.items() if v not in (s.src, s.dst)]
        parts.extend(render_row(r) for r in m._endpoint_rows(s, _PH))
        ops = m.observation_points(s)
        for d in m.ids_set:
            parts.extend(text for v, text in self.rflow[d].items() if v not in ops)
        for v in ops:
            terms: list[Term] = []
            for d in m.ids_set:
                terms += m._flow_terms(lambda e, d=d: m.r(_PH, d, e), v)
            terms.append((-1, m.x(_PH, (v, s.dst))))
            parts.append(render_row(Row(f"rsrc_{_PH}_v{v}", tuple(terms), "<=", 0)))
        parts.append(self.rexit)
        parts.extend(text for dev, text in self.mx.items() if dev not in (s.src, s.dst))
        for d in m.ids_set:
            parts.append(self.mr[d])
        return "".join(parts).replace(_PH, f"s{s.id}")


def _objective_text(m: IlpModel, tmpl: _Templates | None) -> str:
    chunks: list[str] = []
    streams = m.streams
    for s in streams:
        if tmpl is not None:
            body = tmpl.objective_text(s)
        else:
            body = _render_terms(m._objective_terms(s, f"s{s.id}"), signed=True)
        chunks.append(body)
    const = len(streams) * len(m.edges)
    if not chunks:
        return f" obj: {const}\n"
    return " obj: " + "\n  ".join(chunks) + f"\n  + {const}\n"


def _capacity_text(m: IlpModel) -> str:
    streams = m.streams
    if not streams:
        return ""
    prefixes: list[str] = []
    for s in streams:
        tag = f"s{s.id}"
        coef = "" if s.demand == 1 else f"{s.demand} "
        prefixes.append(f"{coef}x_{tag}_e")
        for d in m.ids_set:
            prefixes.append(f"{coef}r_{tag}_d{d}_e" if m.multi else f"{coef}r_{tag}_e")
    out = []
    for e in m.edges:
        sfx = f"{e[0]}_{e[1]}"
        terms = [p + sfx for p in prefixes]
        lines = [" + ".join(terms[i : i + _TERMS_PER_LINE]) for i in range(0, len(terms), _TERMS_PER_LINE)]
        out.append(f" cap_e{sfx}: " + "\n  + ".join(lines) + f" <= {m.capacity(e)}\n")
    return "".join(out)


def export_lp(m: IlpModel, sink: TextIO | None = None, fast: bool = True) -> str | None:
    """Write the model in CPLEX LP format.

    Returns the text when ``sink`` is None. ``fast=False`` renders every row
    individually; the output is byte-identical either way.
    """
    out = sink if sink is not None else io.StringIO()
    tmpl = _Templates(m) if fast else None
    out.write(f"\\ icsmon ILP model: {m.topology.name or 'instance'}\n")
    out.write("Maximize\n")
    out.write(_objective_text(m, tmpl))
    out.write("Subject To\n")
    if fast:
        out.write(_capacity_text(m))
        for s in m.streams:
            out.write(tmpl.stream_block(s))
        for row in m._extension_rows():
            out.write(render_row(row))
    else:
        for row in m.rows():
            out.write(render_row(row))
    out.write("Binary\n")
    for s in m.streams:
        if fast:
            out.write(_render_names(tmpl.binaries).replace(_PH, f"s{s.id}"))
        else:
            out.write(_render_names(m._stream_variables(f"s{s.id}")))
    out.write("End\n")
    if sink is None:
        return out.getvalue()
    return None


def summary_json(m: IlpModel) -> str:
    return json.dumps(m.summary(), indent=2, sort_keys=True)


# -- objective of a decoded plan ---------------------------------------------


def plan_assignment(m: IlpModel, plan) -> set[str]:
    """Variables set to one by an offline plan."""
    ones: set[str] = set()
    for route in plan.routes:
        tag = f"s{route.stream_id}"
        for e in zip(route.path, route.path[1:]):
            ones.add(m.x(tag, e))
        if route.observed and route.replica_path:
            d = route.replica_path[-1]
            for e in zip(route.replica_path, route.replica_path[1:]):
                ones.add(m.r(tag, d, e))
    return ones


def objective_value(inst: Instance, plan) -> Fraction:
    """Exact objective of the 0/1 assignment induced by ``plan``."""
    topo = inst.topology
    n_e = len(topo.edges)
    k = n_e * len(inst.critical) + 1
    by_id = {s.id: s for s in inst.critical}
    total = Fraction(0)
    for route in plan.routes:
        s = by_id[route.stream_id]
        used = set(zip(route.path, route.path[1:]))
        rep = set(zip(route.replica_path, route.replica_path[1:])) if route.observed and route.replica_path else set()
        for e in used | rep:
            if e not in topo.capacity:
                raise ValueError(f"plan uses unknown edge {e[0]}->{e[1]}")
        load = sum(Fraction(s.demand, inst.critical_capacity(e)) for e in used)
        load += sum(Fraction(s.demand, inst.critical_capacity(e)) for e in rep)
        total += n_e - load
        if rep:
            total += k * s.relevance
    # streams missing from the plan still contribute their full residual term
    total += n_e * (len(inst.critical) - len({r.stream_id for r in plan.routes}))
    return total
