from dataclasses import replace

import networkx as nx
import pytest

from icsmon import offline, verify
from icsmon.formulation import objective_value
from icsmon.model import CriticalStream, Kind, TopologyBuilder
from icsmon.offline import (
    EXACT,
    LIMITED,
    InfeasibleError,
    OfflinePlan,
    SizeLimitError,
    brute_force_oracle,
    enumerate_stream_options,
    simple_paths,
    solve_exact,
)
from icsmon.topogen import Instance, tiny_instance

MBPS = 10**6


def _diamond():
    b = TopologyBuilder()
    s = b.add(Kind.DEVICE, "s")
    a = b.add(Kind.SWITCH, "a")
    b1 = b.add(Kind.SWITCH, "b1")
    b2 = b.add(Kind.SWITCH, "b2")
    t = b.add(Kind.DEVICE, "t")
    d = b.add(Kind.DEVICE, "d")
    for u, v in ((s, a), (a, b1), (a, b2), (b1, t), (b2, t), (b1, d), (b2, d)):
        b.link(u, v, 10 * MBPS)
    return Instance(b.topology(ids=d), (CriticalStream(0, s, t, MBPS),))


def _contention():
    """Direct a-b edge fits one of two streams; the other detours via c."""
    b = TopologyBuilder()
    a, sb, c = (b.add(Kind.SWITCH, n) for n in "abc")
    s1, s2, t1, t2, d = (b.add(Kind.DEVICE, n) for n in ("s1", "s2", "t1", "t2", "d"))
    b.link(a, sb, 5 * MBPS)
    b.link(a, c, 5 * MBPS)
    b.link(c, sb, 5 * MBPS)
    for h, w in ((s1, a), (s2, a), (t1, sb), (t2, sb), (d, sb)):
        b.link(h, w, 100 * MBPS)
    streams = (CriticalStream(0, s1, t1, 5 * MBPS), CriticalStream(1, s2, t2, 3 * MBPS))
    return Instance(b.topology(ids=d), streams)


class TestEnumeration:
    def test_line_two_options(self, line):
        inst = Instance(line, (CriticalStream(0, 0, 3, MBPS),))
        opts, complete = enumerate_stream_options(inst, inst.critical[0])
        assert complete
        assert [(o.path, o.replica_path) for o in opts] == [((0, 1, 2, 3), (2, 4)), ((0, 1, 2, 3), None)]

    def test_diamond(self):
        inst = _diamond()
        opts, _ = enumerate_stream_options(inst, inst.critical[0])
        assert len(opts) >= 4
        assert opts[0].path == (0, 1, 2, 4) and opts[0].replica_path == (2, 5)
        assert {o.path for o in opts} == {(0, 1, 2, 4), (0, 1, 3, 4)}

    def test_limit_one_keeps_shortest(self):
        inst = _diamond()
        opts, complete = enumerate_stream_options(inst, inst.critical[0], limit=1)
        assert not complete
        assert {o.path for o in opts} == {(0, 1, 2, 4)}

    def test_errors(self, line):
        inst = Instance(line, (CriticalStream(0, 0, 3, MBPS),))
        with pytest.raises(ValueError):
            enumerate_stream_options(inst, inst.critical[0], limit=0)
        b = TopologyBuilder()
        x, y = b.add(Kind.DEVICE), b.add(Kind.DEVICE)
        b.add(Kind.SWITCH)
        lonely = Instance(b.topology(ids=y), (CriticalStream(0, x, y, 1),))
        with pytest.raises(InfeasibleError):
            enumerate_stream_options(lonely, lonely.critical[0])

    def test_simple_paths_match_networkx(self):
        for seed in range(15):
            topo = tiny_instance(seed).topology
            g = nx.DiGraph()
            for a, b in topo.edges:
                g.add_edge(a, b)
            for src in topo.devices[:2]:
                for dst in topo.devices:
                    if dst == src:
                        continue
                    ours, complete = simple_paths(topo, src, dst)
                    ref = sorted(
                        (tuple(p) for p in nx.all_simple_paths(g, src, dst) if all(topo.is_switch(v) for v in p[1:-1])),
                        key=lambda p: (len(p), p),
                    )
                    assert complete and ours == ref


class TestSolve:
    def test_single_stream_observed(self, line):
        inst = Instance(line, (CriticalStream(0, 0, 3, MBPS),))
        plan = solve_exact(inst)
        route = plan.route(0)
        assert route.observed and route.op == 2 and route.replica_path == (2, 4)
        assert plan.objective > len(line.edges) + 1

    def test_replica_over_capacity_left_unobserved(self, line):
        inst = Instance(line, (CriticalStream(0, 0, 3, 6 * MBPS),), beta={(2, 4): 5 * MBPS, (4, 2): 5 * MBPS})
        plan = solve_exact(inst)
        assert not plan.route(0).observed
        assert brute_force_oracle(inst).routes == plan.routes

    def test_contention(self):
        inst = _contention()
        plan = solve_exact(inst)
        assert plan.route(0).path == (3, 0, 1, 5)
        assert plan.route(1).path == (4, 0, 2, 1, 6)
        oracle = brute_force_oracle(inst)
        assert (oracle.objective, oracle.routes) == (plan.objective, plan.routes)

    def test_objective_is_exact_rational(self):
        plan = solve_exact(_contention())
        assert plan.objective == objective_value(_contention(), plan)

    def test_size_limit(self, cesnet):
        with pytest.raises(SizeLimitError, match="export-lp"):
            solve_exact(cesnet)

    def test_infeasible(self, line):
        inst = Instance(line, (CriticalStream(0, 0, 3, 20 * MBPS),))
        with pytest.raises(InfeasibleError):
            solve_exact(inst)
        with pytest.raises(InfeasibleError):
            brute_force_oracle(inst)

    def test_empty(self, line):
        plan = solve_exact(Instance(line, ()))
        assert plan.routes == () and plan.objective == 0

    def test_enumeration_limited_status(self):
        assert solve_exact(_diamond(), limit=1).status == LIMITED
        assert solve_exact(_diamond()).status == EXACT

    def test_parallel_matches_sequential(self):
        for seed in (1, 3, 5, 8):
            inst = tiny_instance(seed)
            try:
                seq = solve_exact(inst)
            except InfeasibleError:
                continue
            par = solve_exact(inst, jobs=2)
            assert (par.objective, par.routes, par.choice) == (seq.objective, seq.routes, seq.choice)

    def test_oracle_size_bound(self, cesnet):
        with pytest.raises(SizeLimitError):
            brute_force_oracle(cesnet)


def test_solver_plans_verify_clean():
    for seed in range(40):
        inst = tiny_instance(seed)
        try:
            plan = solve_exact(inst)
        except InfeasibleError:
            continue
        assert verify.check_plan(inst, plan) == []


def test_observed_count_is_maximal():
    for seed in range(30):
        inst = tiny_instance(seed)
        try:
            plan = solve_exact(inst)
        except InfeasibleError:
            continue
        best = max(sum(o.observed for o in picked) for _, picked in offline.all_feasible_plans(inst))
        assert plan.observed_count == best


def test_monotone_in_capacity():
    for seed in range(25):
        inst = tiny_instance(seed)
        try:
            before = solve_exact(inst).objective
        except InfeasibleError:
            continue
        link = inst.topology.links[seed % len(inst.topology.links)]
        boosted_links = tuple(
            replace(l, capacity=l.capacity + 5 * MBPS) if l == link else l for l in inst.topology.links
        )
        boosted = replace(inst, topology=replace(inst.topology, links=boosted_links))
        assert solve_exact(boosted).objective >= before


def test_plan_json_roundtrip(tmp_path):
    plan = solve_exact(_contention())
    path = tmp_path / "plan.json"
    plan.save(path)
    back = OfflinePlan.load(path)
    assert back == plan
    assert back.objective == plan.objective
    again = tmp_path / "again.json"
    back.save(again)
    assert again.read_text() == path.read_text()
