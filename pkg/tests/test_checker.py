from __future__ import annotations

import random
import re
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safeplan import logic
from safeplan.automaton import make_fsa, product
from safeplan.checker import (
    Result,
    Verdict,
    brute_force_check,
    explain,
    to_smv,
    verify,
    verify_all,
    verify_many,
    verify_product,
)
from safeplan.errors import BudgetExceeded, NotAFailure, StateBudgetExceeded
from safeplan.exe2fsa import compile_plan
from safeplan.fixtures import load_fixture_plan, load_fixture_spec, load_fixture_system
from safeplan.logic import TRUE
from safeplan.plan_frontend import parse_plan
from safeplan.spec_logic import build_monitor, parse_spec, render
from safeplan.system_model import build_transition_system, transition_system_over

from helpers import EXECS, SENSORS, random_fsa, random_spec, ts_over


def setup(plan: str, system: str):
    s = load_fixture_system(system)
    return compile_plan(load_fixture_plan(plan), s), build_transition_system(s), s


def replay_is_sound(p, f, cx) -> bool:
    """Connected path from an initial state; every clause-monitor accepts the
    prefix without error except at its last step for the violated clause."""
    ids = [s.product_state for s in cx.steps]
    if ids[0] not in p.initials:
        return False
    if any(b not in p.succ[a] for a, b in zip(ids, ids[1:])):
        return False
    if [p.labels[i] for i in ids] != list(cx.prefix):
        return False
    clause = next(c for c in f.clauses() if render(c) == cx.clause)
    m = build_monitor(clause)
    states = [m.run(cx.prefix[: n + 1]) for n in range(len(cx))]
    return [m.is_error(s) for s in states] == [False] * (len(cx) - 1) + [True]


def test_turn_right_regression():
    fsa, ts, s = setup("turn_right_90_degrees_1", "driving")
    phi1 = s.specs[0]
    t0 = time.perf_counter()
    v = verify(fsa, ts, phi1)
    assert time.perf_counter() - t0 < 1.0
    assert v.result is Result.FAIL
    cx = v.counterexample
    assert any("pedestrian" in a.label and "publish velocity" in b.label for a, b in zip(cx.steps, cx.steps[1:]))
    assert replay_is_sound(product(fsa, ts), phi1, cx)
    fsa2, _, _ = setup("turn_right_90_degrees_2", "driving")
    assert verify(fsa2, ts, phi1).passed


def test_bring_backpack_regression():
    fsa, ts, s = setup("bring_backpack_1", "codebotler")
    v = verify(fsa, ts, s.specs[0])
    assert v.result is Result.FAIL
    last = v.counterexample.steps[-1].label
    assert logic.evaluate(logic.conj(logic.neg(logic.Prop("backpack")), logic.Prop("ask")), last)
    fsa2, _, _ = setup("bring_backpack_2", "codebotler")
    assert verify(fsa2, ts, s.specs[0]).passed


def test_verdict_invariant_is_enforced():
    with pytest.raises(ValueError):
        Verdict(Result.FAIL)


def test_verify_all_examples():
    fsa, ts, _ = setup("turn_right_90_degrees_2", "driving")
    specs = [load_fixture_spec(n) for n in ("phi1", "phi2", "phi3")]
    assert [v.result for v in verify_all(fsa, ts, specs)] == [Result.PASS] * 3
    assert verify_all(fsa, ts, []) == []


def test_car_sensor_exposes_turn_right_2():
    # with a real car sensor the plan never checks for cars
    fsa, ts, s = setup("turn_right_90_degrees_2", "driving_extended")
    assert [v.result for v in verify_all(fsa, ts, s.specs)] == [Result.PASS, Result.PASS, Result.FAIL]


def test_absent_prop_is_constantly_false_with_warning(caplog):
    fsa, ts, _ = setup("turn_right_90_degrees_1", "driving")
    specs = [load_fixture_spec("phi1"), load_fixture_spec("phi3")]
    with caplog.at_level("WARNING"):
        verdicts = verify_all(fsa, ts, specs)
    assert [v.result for v in verdicts] == [Result.FAIL, Result.PASS]
    assert verdicts[1].warnings and "car" in verdicts[1].warnings[0]
    assert "car" in caplog.text


def test_verify_all_short_circuit():
    fsa, ts, _ = setup("turn_right_90_degrees_1", "driving")
    specs = [load_fixture_spec("phi1"), load_fixture_spec("phi3")]
    assert len(verify_all(fsa, ts, specs, short_circuit=True)) == 1


def test_brute_force_examples():
    fsa, ts, s = setup("turn_right_90_degrees_1", "driving")
    assert brute_force_check(product(fsa, ts), s.specs[0], 6).result is Result.FAIL
    assert brute_force_check(product(fsa, ts), s.specs[0], 3).result is Result.PASS
    fsa2, _, _ = setup("turn_right_90_degrees_2", "driving")
    assert brute_force_check(product(fsa2, ts), s.specs[0], 8).passed
    assert brute_force_check(product(fsa2, ts), s.specs[0], 8, naive=True).passed
    single = product(make_fsa([set()], [(0, TRUE, 0)]), transition_system_over(["pedestrian"]))
    assert brute_force_check(single, s.specs[0], 8).passed


def test_brute_force_naive_matches_quotient():
    fsa, ts, s = setup("turn_right_90_degrees_1", "driving")
    p = product(fsa, ts)
    a = brute_force_check(p, s.specs[0], 6)
    b = brute_force_check(p, s.specs[0], 6, naive=True)
    assert a.result == b.result and len(a.counterexample) == len(b.counterexample) == 4


def test_explain_bring_backpack():
    text = load_fixture_plan("bring_backpack_1")
    fsa, ts, s = setup("bring_backpack_1", "codebotler")
    report = explain(verify(fsa, ts, s.specs[0]), parse_plan(text))
    last = report.strip().splitlines()[-1]
    assert "¬backpack ∧ ask" in last
    assert re.search(r"line \d+: response = ask\(", report)


def test_explain_turn_right():
    text = load_fixture_plan("turn_right_90_degrees_1")
    fsa, ts, s = setup("turn_right_90_degrees_1", "driving")
    report = explain(verify(fsa, ts, s.specs[0]), text)
    assert "velocity_publisher" in report.splitlines()[-2]
    assert report.startswith("FAIL phi1")
    assert explain(verify(fsa, ts, s.specs[0]), text) == report


def test_explain_rejects_pass():
    fsa, ts, s = setup("turn_right_90_degrees_2", "driving")
    with pytest.raises(NotAFailure):
        explain(verify(fsa, ts, s.specs[0]))


def test_to_dict_shape():
    fsa, ts, s = setup("turn_right_90_degrees_1", "driving")
    d = verify(fsa, ts, s.specs[0]).to_dict()
    assert d["result"] == "fail" and d["spec"] == "phi1"
    assert [step["label"] for step in d["counterexample"]][-1] == ["publish velocity"]


def test_state_budget():
    fsa, ts, s = setup("bring_backpack_1", "codebotler")
    with pytest.raises(StateBudgetExceeded):
        verify(fsa, ts, parse_spec("G !zzz"), budget_states=3)


def test_brute_force_budget():
    rng = random.Random(0)
    fsa = random_fsa(rng, ["a", "b", "c"], max_states=4)
    p = product(fsa, transition_system_over(["a", "b", "c"]))
    with pytest.raises(BudgetExceeded):
        brute_force_check(p, "G(a -> X X b)", 40, budget=5)


def test_verify_many_keeps_input_order():
    jobs = []
    for name, system in [("turn_right_90_degrees_1", "driving"), ("turn_right_90_degrees_2", "driving"), ("bring_backpack_1", "codebotler"), ("bring_backpack_2", "codebotler")]:
        fsa, ts, s = setup(name, system)
        jobs.append((product(fsa, ts), s.specs[0]))
    jobs = jobs * 3
    expected = [verify_product(p, f) for p, f in jobs]
    assert verify_many(jobs, workers=4) == expected
    assert [v.result for v in expected[:4]] == [Result.FAIL, Result.PASS, Result.FAIL, Result.PASS]


def test_robot_dog_fixtures():
    s = load_fixture_system("robot_dog")
    ts = build_transition_system(s)
    expected = {
        "robot_dog_safe": [True, True, True],
        "robot_dog_unsafe_person": [False, True, True],
        "robot_dog_unsafe_target": [True, False, True],
        "robot_dog_unsafe_signal": [True, True, False],
    }
    for plan, want in expected.items():
        verdicts = verify_all(compile_plan(load_fixture_plan(plan), s), ts, s.specs)
        assert [v.passed for v in verdicts] == want, plan


def test_smv_export():
    fsa, ts, s = setup("turn_right_90_degrees_1", "driving")
    text = to_smv(product(fsa, ts), s.specs)
    assert "MODULE main" in text and "TRANS" in text
    assert "LTLSPEC G (((pedestrian) -> (X (!(publish_velocity)))))" in text
    n = len(product(fsa, ts))
    assert re.search(r"state : \{" + ", ".join(f"q{i}" for i in range(n)) + r"\}", text)
    assert to_smv(product(fsa, ts), s.specs) == text


def test_smv_deadlock_gets_sink():
    fsa = make_fsa([set(), {"x"}], [(0, TRUE, 1)])
    text = to_smv(product(fsa, transition_system_over([])), [parse_spec("G !x")])
    assert "dead" in text


# ------------------------------------------------------------------ oracle properties


def instance(rng: random.Random):
    sensors = SENSORS[: rng.randint(1, 2)]
    execs = EXECS[: rng.randint(1, 2)]
    fsa = random_fsa(rng, sensors, execs)
    spec = random_spec(rng, list(sensors + execs))
    return product(fsa, ts_over(sensors)), spec, sensors + execs


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_verify_matches_brute_force(rng):
    p, f, props = instance(rng)
    v = verify_product(p, f, known_props=props)
    k = len(p) * max(len(build_monitor(c)) for c in f.clauses()) + 1
    b = brute_force_check(p, f, k)
    assert v.result == b.result
    if not v.passed:
        assert len(v.counterexample) == len(b.counterexample)


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_counterexamples_are_minimal_and_replayable(rng):
    p, f, props = instance(rng)
    v = verify_product(p, f, known_props=props)
    if v.passed:
        return
    cx = v.counterexample
    assert replay_is_sound(p, f, cx)
    assert brute_force_check(p, f, len(cx) - 1, naive=True).passed if len(cx) > 1 else True
    assert brute_force_check(p, f, len(cx), naive=True).result is Result.FAIL


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_pass_survives_adversarial_walks(rng):
    p, f, props = instance(rng)
    if not verify_product(p, f, known_props=props).passed:
        return
    monitors = [build_monitor(c) for c in f.clauses()]
    for _ in range(30):
        i = rng.choice(p.initials)
        word = [p.labels[i]]
        for _ in range(12):
            if not p.succ[i]:
                break
            i = rng.choice(list(p.succ[i]))
            word.append(p.labels[i])
        assert not any(m.is_error(m.run(word)) for m in monitors)


def test_stable_and_source_modes_can_differ():
    # x is entered on a, so x must be absent the step after a only in
    # the literal mode, where the environment may drop a on entry
    fsa = make_fsa([set(), {"x"}], [(0, logic.Prop("a"), 1), (1, TRUE, 0)])
    ts = transition_system_over(["a"])
    f = parse_spec("G(x -> a)")
    assert verify(fsa, ts, f).passed
    assert not verify(fsa, ts, f, guard_mode="source").passed
