"""Evaluation instance reconstruction.

Each backbone router receives ``floor(10 / i**alpha)`` identical substations,
where ``i`` is the router's 1-based rank by incident bandwidth. A substation
has two access switches uplinked to the router and 12 devices dual-homed to
both switches. The IDS hangs off the router with the largest incident
bandwidth.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .model import (
    CriticalStream,
    Edge,
    Kind,
    Topology,
    TopologyBuilder,
    incident_bandwidth_sum,
    load_topology,
)

KBPS = 1000
GBPS = 10**9

SUBSTATION_LINK_BPS = GBPS
IDS_LINK_BPS = GBPS

BUNDLED_BACKBONES = ("cesnet", "attmpls", "agis", "uninet")

ALPHA_GRID = tuple(round(0.70 + 0.01 * k, 2) for k in range(31))


@dataclass(frozen=True)
class DeviceRole:
    name: str
    quantity: int
    from_scada: int
    to_scada: int


@dataclass(frozen=True)
class SubstationTemplate:
    roles: tuple[DeviceRole, ...]
    access_switches: int = 2

    @property
    def device_count(self) -> int:
        # field devices plus the SCADA server
        return sum(r.quantity for r in self.roles) + 1

    @property
    def stream_count(self) -> int:
        return 2 * sum(r.quantity for r in self.roles)


def substation_template() -> SubstationTemplate:
    return SubstationTemplate(
        roles=(
            DeviceRole("VoltageMeter", 2, 10 * KBPS, 100 * KBPS),
            DeviceRole("CircuitSwitch", 2, 1500, 1500),
            DeviceRole("Breaker", 2, 1500, 1500),
            DeviceRole("CurrentMeter", 2, 10 * KBPS, 100 * KBPS),
            DeviceRole("PowerTransformer", 1, 50 * KBPS, 500 * KBPS),
            DeviceRole("HMI", 1, 30000 * KBPS, 3000 * KBPS),
            DeviceRole("HistorianDB", 1, 30000 * KBPS, 3000 * KBPS),
        )
    )


@dataclass(frozen=True)
class Instance:
    topology: Topology
    critical: tuple[CriticalStream, ...]
    beta: dict[Edge, int] = field(default_factory=dict)
    alpha: float | None = None
    q: int = 0
    routers: tuple[int, ...] = ()
    reserve_fraction: float = 0.0
    seed: int | None = None

    def standard_budget(self, e: Edge) -> int:
        return self.beta.get(e, 0)

    def critical_capacity(self, e: Edge) -> int:
        return self.topology.capacity[e] - self.beta.get(e, 0)

    @property
    def critical_capacities(self) -> dict[Edge, int]:
        return {e: c - self.beta.get(e, 0) for e, c in self.topology.capacity.items()}

    def stream(self, sid: int) -> CriticalStream:
        for s in self.critical:
            if s.id == sid:
                return s
        raise KeyError(f"unknown stream {sid}")

    def counts(self) -> dict[str, int]:
        return {
            "vertices": len(self.topology.vertices),
            "links": len(self.topology.links),
            "streams": len(self.critical),
            "q": self.q,
        }

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.to_dict(),
            "critical": [
                {"id": s.id, "src": s.src, "dst": s.dst, "demand_bps": s.demand, "relevance": s.relevance}
                for s in self.critical
            ],
            "beta": [{"from": a, "to": b, "beta_bps": v} for (a, b), v in self.beta.items()],
            "alpha": self.alpha,
            "q": self.q,
            "routers": list(self.routers),
            "reserve_fraction": self.reserve_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Instance:
        topo = Topology.from_dict(doc["topology"])
        streams = tuple(
            CriticalStream(int(s["id"]), int(s["src"]), int(s["dst"]), int(s["demand_bps"]), int(s.get("relevance", 1)))
            for s in doc.get("critical", [])
        )
        beta = {(int(b["from"]), int(b["to"])): int(b["beta_bps"]) for b in doc.get("beta", [])}
        return cls(
            topology=topo,
            critical=streams,
            beta=beta,
            alpha=doc.get("alpha"),
            q=int(doc.get("q", 0)),
            routers=tuple(doc.get("routers", ())),
            reserve_fraction=float(doc.get("reserve_fraction", 0.0)),
            seed=doc.get("seed"),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path: str | Path) -> Instance:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- backbones ----------------------------------------------------------------


def load_backbone(name_or_path: str | Path) -> Topology:
    """Load a bundled backbone by name, or a GraphML / topology JSON file."""
    key = str(name_or_path).lower()
    if key in BUNDLED_BACKBONES:
        ref = resources.files("icsmon.data.backbones").joinpath(f"{key}.json")
        with ref.open() as fh:
            return Topology.from_dict(json.load(fh))
    return load_topology(name_or_path)


def rank_routers(backbone: Topology, routers: tuple[int, ...] | None = None) -> list[int]:
    """Routers by descending incident bandwidth, ties by ascending id."""
    routers = tuple(routers) if routers is not None else backbone.switches
    return sorted(routers, key=lambda v: (-incident_bandwidth_sum(backbone, v), v))


def substations_per_rank(n_routers: int, alpha: float) -> list[int]:
    # the epsilon keeps exact quotients such as 10/2**1.0 from flooring low
    return [math.floor(10 / i**alpha + 1e-9) for i in range(1, n_routers + 1)]


def total_substations(n_routers: int, alpha: float) -> int:
    return sum(substations_per_rank(n_routers, alpha))


def find_alpha(backbone: Topology | int, q_target: int) -> float | None:
    """Smallest alpha on the 0.70..1.00 grid whose total substation count is ``q_target``."""
    if q_target < 1:
        raise ValueError("q_target must be >= 1")
    n = backbone if isinstance(backbone, int) else len(backbone.switches)
    for alpha in ALPHA_GRID:
        if total_substations(n, alpha) == q_target:
            return alpha
    return None


def nearest_alpha(backbone: Topology | int, q_target: int) -> tuple[float, int]:
    """Grid alpha whose total substation count is closest to ``q_target``."""
    n = backbone if isinstance(backbone, int) else len(backbone.switches)
    best = min(ALPHA_GRID, key=lambda a: (abs(total_substations(n, a) - q_target), a))
    return best, total_substations(n, best)


def place_ids(obj: Topology | Instance) -> int:
    """Router with the largest incident bandwidth (lowest id on ties).

    For an Instance, only router-to-router links count, so the answer is
    the same as on the bare backbone.
    """
    if isinstance(obj, Instance):
        routers = set(obj.routers) or set(obj.topology.switches)
        links = tuple(l for l in obj.topology.links if l.a in routers and l.b in routers)
        backbone = Topology(tuple(v for v in obj.topology.vertices if v.id in routers), links)
    else:
        backbone = obj
    if not backbone.switches:
        raise ValueError("backbone has no routers")
    return rank_routers(backbone)[0]


def attach_substations(
    backbone: Topology,
    tmpl: SubstationTemplate | None = None,
    alpha: float = 0.7,
    seed: int = 0,
) -> Instance:
    """Grow a backbone into an evaluation instance.

    The construction is fully deterministic; ``seed`` is recorded on the
    instance for provenance only.
    """
    tmpl = tmpl or substation_template()
    if not backbone.vertices:
        raise ValueError("empty backbone")
    if backbone.devices:
        raise ValueError("backbone must contain only switch vertices")

    b = TopologyBuilder()
    remap: dict[int, int] = {}
    for v in backbone.vertices:
        remap[v.id] = b.add(Kind.SWITCH, v.label)
    for link in backbone.links:
        b.link(remap[link.a], remap[link.b], link.capacity)

    ranked = rank_routers(backbone)
    counts = substations_per_rank(len(ranked), alpha)
    streams: list[CriticalStream] = []
    q = 0
    for router, n_sub in zip(ranked, counts):
        r = remap[router]
        rlabel = backbone.vertex(router).label or f"r{router}"
        for k in range(n_sub):
            q += 1
            prefix = f"{rlabel}/sub{k + 1}"
            access = [b.add(Kind.SWITCH, f"{prefix}/sw{j + 1}") for j in range(tmpl.access_switches)]
            scada = b.add(Kind.DEVICE, f"{prefix}/SCADA")
            devices: list[tuple[int, DeviceRole]] = []
            for role in tmpl.roles:
                for j in range(role.quantity):
                    devices.append((b.add(Kind.DEVICE, f"{prefix}/{role.name}{j + 1}"), role))
            for dev in [scada] + [d for d, _ in devices]:
                for sw in access:
                    b.link(dev, sw, SUBSTATION_LINK_BPS)
            for sw in access:
                b.link(sw, r, SUBSTATION_LINK_BPS)
            for dev, role in devices:
                streams.append(CriticalStream(len(streams), scada, dev, role.from_scada))
                streams.append(CriticalStream(len(streams), dev, scada, role.to_scada))

    ids = b.add(Kind.DEVICE, "IDS")
    b.link(ids, remap[place_ids(backbone)], IDS_LINK_BPS)
    topo = b.topology(ids=ids, name=backbone.name)
    return Instance(
        topology=topo,
        critical=tuple(streams),
        beta={},
        alpha=alpha,
        q=q,
        routers=tuple(remap[v.id] for v in backbone.vertices),
        reserve_fraction=0.0,
        seed=seed,
    )


def reserve_standard_fraction(inst: Instance, fraction: float) -> Instance:
    if not 0 <= fraction < 1:
        raise ValueError(f"reserve fraction {fraction} outside [0, 1)")
    beta = {e: math.floor(fraction * c) for e, c in inst.topology.capacity.items()}
    return replace(inst, beta=beta, reserve_fraction=fraction)


def generate_instance(
    backbone: Topology,
    alpha: float = 0.7,
    seed: int = 0,
    reserve_fraction: float = 0.05,
) -> Instance:
    return reserve_standard_fraction(attach_substations(backbone, substation_template(), alpha, seed), reserve_fraction)


# -- tiny random instances (test corpus and demos) -----------------------------


def tiny_instance(
    seed: int,
    max_switches: int = 8,
    max_streams: int = 3,
    extra_links: int = 2,
    n_devices: int = 4,
) -> Instance:
    """Small random instance: capacities in 1..10 Mbps, demands in 1..3 Mbps.

    A random spanning tree over the switches plus up to ``extra_links``
    chords, devices single- or dual-homed, one IDS. Device links draw from
    3..10 Mbps so most instances stay feasible.
    """
    rng = random.Random(seed)
    n_sw = rng.randint(3, max_switches)
    b = TopologyBuilder()
    sw = [b.add(Kind.SWITCH, f"s{i}") for i in range(n_sw)]
    pairs: set[tuple[int, int]] = set()

    def mbps(lo: int = 1) -> int:
        return rng.randint(lo, 10) * 10**6

    for i in range(1, n_sw):
        j = rng.randrange(i)
        pairs.add((j, i))
        b.link(sw[j], sw[i], mbps())
    for _ in range(rng.randint(0, extra_links)):
        i, j = sorted(rng.sample(range(n_sw), 2))
        if (i, j) not in pairs:
            pairs.add((i, j))
            b.link(sw[i], sw[j], mbps())

    devs = []
    for k in range(n_devices):
        d = b.add(Kind.DEVICE, f"h{k}")
        homes = rng.sample(sw, 2 if rng.random() < 0.3 else 1)
        for s in sorted(homes):
            b.link(d, s, mbps(3))
        devs.append(d)
    ids = b.add(Kind.DEVICE, "IDS")
    b.link(ids, rng.choice(sw), mbps(3))

    streams = []
    for k in range(rng.randint(1, max_streams)):
        src, dst = rng.sample(devs, 2)
        streams.append(CriticalStream(k, src, dst, rng.randint(1, 3) * 10**6, rng.randint(1, 2)))
    return Instance(topology=b.topology(ids=ids, name=f"tiny-{seed}"), critical=tuple(streams), seed=seed)
