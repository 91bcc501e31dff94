"""Core domain types: topology, vertices, links, critical streams.

A physical link is stored once and expanded into two directed edges of equal
capacity. Edge ids are dense: link ``i`` yields edge ``2*i`` (a->b) and edge
``2*i + 1`` (b->a). All bandwidths are integer bits per second.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

DEFAULT_LINK_BPS = 10**9

Edge = tuple[int, int]


class Kind(str, enum.Enum):
    SWITCH = "switch"
    DEVICE = "device"


@dataclass(frozen=True)
class Vertex:
    id: int
    kind: Kind
    label: str = ""


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    capacity: int


@dataclass(frozen=True)
class CriticalStream:
    id: int
    src: int
    dst: int
    demand: int
    relevance: int = 1

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"stream {self.id}: source equals destination")
        if self.relevance < 1:
            raise ValueError(f"stream {self.id}: relevance must be >= 1")
        if self.demand < 0:
            raise ValueError(f"stream {self.id}: negative demand")


@dataclass(frozen=True)
class ReplicaSpec:
    """Replica of a critical stream, from its observation point to an IDS."""

    stream_id: int
    source: int
    dest: int
    demand: int


@dataclass(frozen=True)
class Topology:
    vertices: tuple[Vertex, ...]
    links: tuple[Link, ...]
    ids: int | None = None
    name: str = ""

    @classmethod
    def build(cls, vertices: Iterable[Vertex], links: Iterable[Link], ids: int | None = None, name: str = "") -> Topology:
        return cls(tuple(vertices), tuple(links), ids, name)

    # -- lookups -------------------------------------------------------------

    @cached_property
    def _by_id(self) -> dict[int, Vertex]:
        return {v.id: v for v in self.vertices}

    def vertex(self, vid: int) -> Vertex:
        try:
            return self._by_id[vid]
        except KeyError:
            raise KeyError(f"unknown vertex {vid}") from None

    def __contains__(self, vid: int) -> bool:
        return vid in self._by_id

    def is_switch(self, vid: int) -> bool:
        v = self._by_id.get(vid)
        return v is not None and v.kind is Kind.SWITCH

    def is_device(self, vid: int) -> bool:
        v = self._by_id.get(vid)
        return v is not None and v.kind is Kind.DEVICE

    @cached_property
    def switches(self) -> tuple[int, ...]:
        return tuple(sorted(v.id for v in self.vertices if v.kind is Kind.SWITCH))

    @cached_property
    def devices(self) -> tuple[int, ...]:
        return tuple(sorted(v.id for v in self.vertices if v.kind is Kind.DEVICE))

    @cached_property
    def edges(self) -> tuple[Edge, ...]:
        out: list[Edge] = []
        for link in self.links:
            out.append((link.a, link.b))
            out.append((link.b, link.a))
        return tuple(out)

    @cached_property
    def edge_index(self) -> dict[Edge, int]:
        return {e: i for i, e in enumerate(self.edges)}

    @cached_property
    def capacity(self) -> dict[Edge, int]:
        caps: dict[Edge, int] = {}
        for link in self.links:
            caps[(link.a, link.b)] = link.capacity
            caps[(link.b, link.a)] = link.capacity
        return caps

    @cached_property
    def succ(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {v.id: [] for v in self.vertices}
        for a, b in self.edges:
            if a in out:
                out[a].append(b)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    @cached_property
    def pred(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {v.id: [] for v in self.vertices}
        for a, b in self.edges:
            if b in out:
                out[b].append(a)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    def has_edge(self, a: int, b: int) -> bool:
        return (a, b) in self.edge_index

    # -- derived topologies --------------------------------------------------

    def with_vertices(self, extra_vertices: Iterable[Vertex], extra_links: Iterable[Link]) -> Topology:
        return Topology(self.vertices + tuple(extra_vertices), self.links + tuple(extra_links), self.ids, self.name)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "vertices": [{"id": v.id, "label": v.label, "kind": v.kind.value} for v in self.vertices],
            "links": [{"a": l.a, "b": l.b, "capacity_bps": l.capacity} for l in self.links],
            "ids": self.ids,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Topology:
        vertices = [Vertex(int(v["id"]), Kind(v.get("kind", "switch")), v.get("label") or "") for v in doc["vertices"]]
        links = [Link(int(l["a"]), int(l["b"]), int(l.get("capacity_bps", DEFAULT_LINK_BPS))) for l in doc["links"]]
        ids = doc.get("ids")
        return cls(tuple(vertices), tuple(links), None if ids is None else int(ids), doc.get("name", ""))


def validate_topology(t: Topology, require_ids: bool = True) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    problems: list[str] = []
    seen: set[int] = set()
    for v in t.vertices:
        if v.id < 0:
            problems.append(f"negative vertex id {v.id}")
        if v.id in seen:
            problems.append(f"duplicate vertex id {v.id}")
        seen.add(v.id)

    pairs: set[Edge] = set()
    for link in t.links:
        ends_ok = True
        for end in (link.a, link.b):
            if end not in seen:
                problems.append(f"link endpoint {end} does not exist")
                ends_ok = False
        if link.a == link.b:
            problems.append(f"self-loop on vertex {link.a}")
        if link.capacity <= 0:
            problems.append(f"non-positive capacity on link {link.a}-{link.b}")
        if ends_ok and t.is_device(link.a) and t.is_device(link.b):
            problems.append(f"device-device edge {link.a}-{link.b}")
        for pair in ((link.a, link.b), (link.b, link.a)):
            if pair in pairs:
                problems.append(f"duplicate edge {pair[0]}->{pair[1]}")
            pairs.add(pair)

    if t.ids is None:
        if require_ids:
            problems.append("IDS missing")
    elif not t.is_device(t.ids):
        problems.append(f"IDS not in M (vertex {t.ids})")
    return problems


def incident_bandwidth_sum(t: Topology, v: int) -> int:
    """Sum of capacities of physical links incident to ``v``, each link once."""
    t.vertex(v)
    return sum(l.capacity for l in t.links if v in (l.a, l.b))


def candidate_observation_points(t: Topology, stream: CriticalStream) -> set[int]:
    return {u for u in t.pred.get(stream.dst, ()) if t.is_switch(u)}


def replica_spec(stream: CriticalStream, op: int, ids: int) -> ReplicaSpec:
    return ReplicaSpec(stream.id, op, ids, stream.demand)


# -- file formats -------------------------------------------------------------

_SPEED_KEYS = ("capacity_bps", "bandwidth", "capacity", "LinkSpeedRaw")


def read_graphml(path: str | Path, default_bps: int = DEFAULT_LINK_BPS) -> Topology:
    """Import nodes and edges of a GraphML backbone as switch vertices.

    Ids are assigned densely in file order. Parallel links are merged with
    summed capacity; self-loops are dropped.
    """
    import networkx as nx

    g = nx.read_graphml(str(path))
    ids = {n: i for i, n in enumerate(g.nodes)}
    vertices = [Vertex(ids[n], Kind.SWITCH, str(g.nodes[n].get("label", n))) for n in g.nodes]
    merged: dict[Edge, int] = {}
    order: list[Edge] = []
    for a, b, data in g.edges(data=True):
        if a == b:
            continue
        cap = default_bps
        for key in _SPEED_KEYS:
            if data.get(key) not in (None, ""):
                cap = int(float(data[key]))
                break
        key = (min(ids[a], ids[b]), max(ids[a], ids[b]))
        if key not in merged:
            order.append(key)
            merged[key] = 0
        merged[key] += cap
    links = [Link(a, b, merged[(a, b)]) for a, b in order]
    return Topology(tuple(vertices), tuple(links), None, Path(path).stem)


def load_topology(path: str | Path) -> Topology:
    path = Path(path)
    if path.suffix.lower() in (".graphml", ".xml"):
        return read_graphml(path)
    with open(path) as fh:
        doc = json.load(fh)
    if "topology" in doc:
        doc = doc["topology"]
    return Topology.from_dict(doc)


def save_topology(t: Topology, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(t.to_dict(), fh, indent=1)


@dataclass
class TopologyBuilder:
    """Incremental topology construction with dense ids."""

    vertices: list[Vertex] = field(default_factory=list)
    links: list[Link] = field(default_factory=list)

    def add(self, kind: Kind, label: str = "") -> int:
        vid = len(self.vertices)
        self.vertices.append(Vertex(vid, kind, label))
        return vid

    def link(self, a: int, b: int, capacity: int) -> None:
        self.links.append(Link(a, b, capacity))

    def topology(self, ids: int | None = None, name: str = "") -> Topology:
        return Topology(tuple(self.vertices), tuple(self.links), ids, name)

