from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safeplan.automaton import ProductAutomaton, bounded_traces, make_fsa, product
from safeplan.checker import Result, verify_product
from safeplan.composition import (
    CompositionPlan,
    build_joint,
    check_connection,
    compose_and_certify,
    default_connections,
    reachable_monitor_states,
)
from safeplan.errors import InvalidConnection, PreconditionViolated
from safeplan.exe2fsa import compile_plan
from safeplan.fixtures import load_fixture_plan, load_fixture_system
from safeplan.logic import TRUE, Prop, neg
from safeplan.spec_logic import build_monitor, parse_spec
from safeplan.system_model import build_transition_system, transition_system_over

from helpers import random_fsa, random_spec

DRIVING = load_fixture_system("driving")
TS = build_transition_system(DRIVING)
PHI1 = DRIVING.specs[0]
ROUTE = ("go_straight", "turn_left", "go_straight", "turn_right")


def part(name: str):
    return compile_plan(load_fixture_plan(name), DRIVING)


def raw(labels, succ, initials, sensors=("pedestrian",), execs=("publish velocity", "stop")) -> ProductAutomaton:
    labels = tuple(frozenset(l) for l in labels)
    return ProductAutomaton(
        keys=tuple((i, 0) for i in range(len(labels))),
        labels=labels,
        succ=tuple(tuple(s) for s in succ),
        initials=tuple(initials),
        sensor_props=tuple(sensors),
        exec_props=frozenset(execs),
        sensor_labels=tuple(l & set(sensors) for l in labels),
        seal_exits=(len(labels) - 1,),
    )


def test_adversarial_two_by_two():
    # part 1 ends having sensed a pedestrian; part 2 starts by publishing
    p1 = raw([set(), {"pedestrian"}], [[1], [1]], [0])
    p2 = raw([{"publish velocity"}, {"publish velocity"}], [[1], [1]], [0])
    m = build_monitor(PHI1.root)
    assert verify_product(p1, PHI1).passed and verify_product(p2, PHI1).passed
    check = check_connection(p1, p2, {(1, 0)}, m)
    assert check.result is Result.FAIL
    assert (check.witness.source, check.witness.target, check.witness.reason) == (1, 0, "error")
    assert "publish velocity" in check.witness.describe(m)
    joint = build_joint(CompositionPlan((make_fsa([set()], []),) * 2, (frozenset({(1, 0)}),)), [p1, p2])
    assert not verify_product(joint, PHI1).passed


def test_empty_connection_passes_vacuously():
    p1 = raw([set(), {"pedestrian"}], [[1], [1]], [0])
    p2 = raw([{"publish velocity"}], [[0]], [0])
    assert check_connection(p1, p2, set(), build_monitor(PHI1.root)).passed


def test_go_straight_then_turn_left():
    p1, p2 = product(part("go_straight"), TS), product(part("turn_left"), TS)
    assert check_connection(p1, p2, default_connections(p1, p2), build_monitor(PHI1.root)).passed


def test_invalid_connection_and_precondition():
    p1, p2 = product(part("go_straight"), TS), product(part("turn_left"), TS)
    m = build_monitor(PHI1.root)
    non_initial = next(i for i in p2.states if i not in p2.initials)
    with pytest.raises(InvalidConnection):
        check_connection(p1, p2, {(0, non_initial)}, m)
    bad = product(part("turn_right_90_degrees_1"), TS)
    with pytest.raises(PreconditionViolated):
        check_connection(bad, p2, default_connections(bad, p2), m)


def test_driving_route_certifies():
    plan = CompositionPlan(tuple(part(n) for n in ROUTE))
    certs, joint = compose_and_certify(plan, TS, [PHI1])
    assert [c.result for c in certs] == [Result.PASS]
    assert all(v.passed for v in certs[0].part_verdicts)
    assert verify_product(joint, PHI1).passed
    assert not any(joint.part(b) < joint.part(a) for a, b in joint.transitions())


def test_composition_rejects_unverified_part():
    plan = CompositionPlan((part("go_straight"), part("turn_right_90_degrees_1")))
    with pytest.raises(PreconditionViolated):
        compose_and_certify(plan, TS, [PHI1])


def test_single_part_matches_its_verdict():
    certs, joint = compose_and_certify(CompositionPlan((part("turn_right_90_degrees_2"),)), TS, [PHI1])
    assert certs[0].certified
    assert certs[0].part_verdicts[0].result is Result.PASS
    assert len(joint) == len(product(part("turn_right_90_degrees_2"), TS))


def test_order_robustness():
    names = ["go_straight", "turn_left", "turn_right", "u_turn"]
    m = build_monitor(PHI1.root)
    products = {n: product(part(n), TS) for n in names}
    for a, b in itertools.permutations(names, 2):
        assert check_connection(products[a], products[b], default_connections(products[a], products[b]), m).passed
    for order in itertools.permutations(names, 3):
        certs, _ = compose_and_certify(CompositionPlan(tuple(part(n) for n in order)), TS, [PHI1])
        assert certs[0].certified, order


def test_joint_contains_part_traces():
    plan = CompositionPlan(tuple(part(n) for n in ROUTE[:3]))
    products = [product(f, TS) for f in plan.parts]
    joint = build_joint(plan, products)
    for k in range(1, 6):
        assert bounded_traces(products[0], k) <= bounded_traces(joint, k)
    assert len(joint) == sum(len(p) for p in products)


def test_carry_over_is_required_for_deeper_specs():
    # G(a -> X X !x): part 1 ends on a, part 2 starts a-free then does x
    ts = transition_system_over(["a"])
    spec = parse_spec("G(a -> X X !x)")
    f1 = make_fsa([set(), {"y"}], [(0, Prop("a"), 1), (1, Prop("a"), 1)])
    f2 = make_fsa([set(), {"x"}], [(0, neg(Prop("a")), 1), (1, neg(Prop("a")), 1)])
    p1, p2 = product(f1, ts), product(f2, ts)
    m = build_monitor(spec.root)
    known = ("a", "x", "y")
    assert verify_product(p1, spec, known_props=known).passed
    assert verify_product(p2, spec, known_props=known).passed
    last = next(i for i in p1.states if p1.fsa_state(i) == 1)
    conn = frozenset((last, b) for b in p2.initials)
    at = reachable_monitor_states(p1, m)
    # the plain no-error condition alone would accept this connection
    assert all(m.table[s][m.letter_index(p2.labels[b])] != m.error for a, b in conn for s in at[a])
    check = check_connection(p1, p2, conn, m)
    assert check.result is Result.FAIL and check.witness.reason == "carry-over"
    joint = build_joint(CompositionPlan((f1, f2), (conn,)), [p1, p2])
    assert not verify_product(joint, spec, known_props=known).passed


def random_parts(rng: random.Random, n: int, spec, ts):
    out = []
    for _ in range(200):
        f = random_fsa(rng, ("a",), ("x", "y"), max_states=3)
        if verify_product(product(f, ts), spec, known_props=("a", "x", "y")).passed:
            out.append(f)
            if len(out) == n:
                return out
    return None


@settings(max_examples=80, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(2, 3))
def test_certification_is_sound(rng, n):
    ts = transition_system_over(["a"])
    spec = random_spec(rng, ["a", "x", "y"], max_x=2, max_clauses=1)
    parts = random_parts(rng, n, spec, ts)
    if parts is None:
        return
    certs, joint = compose_and_certify(CompositionPlan(tuple(parts)), ts, [spec])
    if certs[0].certified:
        assert verify_product(joint, spec, known_props=("a", "x", "y")).passed
