import json
import random
from dataclasses import replace
from fractions import Fraction

from mutations import plan_mutations

from icsmon import verify
from icsmon.model import CriticalStream
from icsmon.offline import InfeasibleError, OfflinePlan, StreamRoute, solve_exact
from icsmon.online import AdmissionRejected, OnlineState
from icsmon.topogen import Instance, tiny_instance

MBPS = 10**6


def _solved(n=40):
    out = []
    for seed in range(n):
        inst = tiny_instance(seed)
        try:
            out.append((inst, solve_exact(inst)))
        except InfeasibleError:
            pass
    return out


def _codes(violations):
    return {v.code for v in violations}


def test_valid_line_plan(line):
    inst = Instance(line, (CriticalStream(0, 0, 3, MBPS),))
    plan = OfflinePlan((StreamRoute(0, (0, 1, 2, 3), True, 2, (2, 4)),))
    assert verify.check_plan(inst, plan) == []


def test_op_not_last_hop(line):
    inst = Instance(line, (CriticalStream(0, 0, 3, MBPS),))
    plan = OfflinePlan((StreamRoute(0, (0, 1, 2, 3), True, 1, (1, 2, 4)),))
    assert _codes(verify.check_plan(inst, plan)) == {"op_not_last_hop"}


def test_overbooking_by_one_bps_names_edge(line):
    inst = Instance(line, (CriticalStream(0, 0, 3, 10 * MBPS),), beta={(1, 2): 1, (2, 1): 0})
    plan = OfflinePlan((StreamRoute(0, (0, 1, 2, 3)),))
    out = verify.check_plan(inst, plan)
    assert [(v.code, v.edge) for v in out] == [("capacity_exceeded", (1, 2))]
    doc = json.loads(verify.report_json(out))
    assert doc == [{"code": "capacity_exceeded", "edge": [1, 2], "detail": out[0].detail}]


def test_replica_load_counts(line):
    inst = Instance(line, (CriticalStream(0, 0, 3, 6 * MBPS),), beta={(2, 4): 5 * MBPS})
    plan = OfflinePlan((StreamRoute(0, (0, 1, 2, 3), True, 2, (2, 4)),))
    assert [(v.code, v.edge) for v in verify.check_plan(inst, plan)] == [("capacity_exceeded", (2, 4))]


def test_optional_constraints(line):
    streams = (CriticalStream(0, 0, 3, MBPS), CriticalStream(1, 3, 0, 2 * MBPS))
    inst = Instance(line, streams)
    plan = OfflinePlan(
        (
            StreamRoute(0, (0, 1, 2, 3), True, 2, (2, 4)),
            StreamRoute(1, (3, 2, 1, 0), False),
        )
    )
    assert verify.check_plan(inst, plan, ids_capacity=MBPS) == []
    assert _codes(verify.check_plan(inst, plan, ids_capacity=MBPS - 1)) == {"ids_capacity_exceeded"}
    assert verify.check_plan(inst, plan, ids_capacity=1, ids_capacity_count=True) == []
    # switch 2 forwards stream 0, its replica and stream 1
    assert verify.check_plan(inst, plan, flow_table={2: 3}) == []
    assert _codes(verify.check_plan(inst, plan, flow_table={2: 2})) == {"flow_table_exceeded"}
    assert _codes(verify.check_plan(inst, plan, ids_set=(3,))) == {"replica_end"}


def test_solver_output_is_clean():
    for inst, plan in _solved():
        assert verify.check_plan(inst, plan) == []


def test_every_mutation_is_caught():
    total = 0
    for inst, plan in _solved(25):
        for label, bad in plan_mutations(inst, plan):
            total += 1
            assert verify.check_plan(inst, bad), label
    assert total >= 100


def test_fresh_online_state(line):
    assert verify.check_online_state(OnlineState(Instance(line, ()))) == []


def _busy_state(seed, events):
    inst = tiny_instance(seed)
    beta = {e: MBPS for e in inst.topology.edges}
    state = OnlineState(replace(inst, beta=beta))
    rng = random.Random(seed)
    devices = [v for v in inst.topology.devices if v != inst.topology.ids]
    for _ in range(events):
        if state.streams and rng.random() < 0.4:
            state.remove(rng.choice(sorted(state.streams)))
        else:
            s, t = rng.sample(devices, 2)
            try:
                state.admit(s, t)
            except AdmissionRejected:
                pass
    return state


def test_inflated_allocation_flagged():
    state = _busy_state(3, 20)
    assert state.streams and verify.check_online_state(state) == []
    victim = min(state.streams)
    s = state.streams[victim]
    state.streams[victim] = replace(s, assigned_bw=s.assigned_bw + Fraction(1, 7))
    assert _codes(verify.check_online_state(state)) & {"budget_exceeded", "not_max_min"}


def test_deflated_allocation_breaks_fairness():
    state = _busy_state(3, 20)
    victim = min(state.streams)
    s = state.streams[victim]
    state.streams[victim] = replace(s, assigned_bw=s.assigned_bw / 2)
    assert "not_max_min" in _codes(verify.check_online_state(state))


def test_five_hundred_events_clean():
    for seed in (0, 1):
        assert verify.check_online_state(_busy_state(seed, 500)) == []
