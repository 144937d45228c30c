"""Random instance generators and independent oracles shared by the tests."""

from __future__ import annotations

import itertools
import os
import random
from pathlib import Path
from typing import Iterable, Sequence

from safeplan import logic
from safeplan.automaton import Fsa, make_fsa
from safeplan.logic import FALSE, TRUE, Guard, Prop
from safeplan.spec_logic import (
    Always,
    Atom,
    Bool,
    Conj,
    Disj,
    Formula,
    Implies,
    Neg,
    Next,
    SafetyFormula,
    render,
)
from safeplan.system_model import transition_system_over

SENSORS = ("a", "b")
EXECS = ("x", "y")


def random_guard(rng: random.Random, props: Sequence[str], depth: int = 2) -> Guard:
    roll = rng.random()
    if depth == 0 or roll < 0.35 or not props:
        if not props or rng.random() < 0.15:
            return rng.choice([TRUE, FALSE])
        return Prop(rng.choice(list(props)))
    if roll < 0.5:
        return logic.neg(random_guard(rng, props, depth - 1))
    parts = [random_guard(rng, props, depth - 1) for _ in range(2)]
    return logic.conj(*parts) if roll < 0.75 else logic.disj(*parts)


def random_fsa(rng: random.Random, sensors: Sequence[str] = SENSORS, execs: Sequence[str] = EXECS, max_states: int = 4) -> Fsa:
    n = rng.randint(1, max_states)
    labels = [frozenset()]
    for _ in range(n - 1):
        labels.append(frozenset(e for e in execs if rng.random() < 0.45))
    edges = []
    for s in range(n):
        for _ in range(rng.choice([0, 1, 1, 2, 2, 3])):
            edges.append((s, random_guard(rng, sensors), rng.randrange(n)))
    return make_fsa(labels, edges)


def _pure(rng: random.Random, props: Sequence[str], xdepth: int, depth: int) -> Formula:
    """A G-free formula."""
    roll = rng.random()
    if depth == 0 or roll < 0.3:
        if rng.random() < 0.08:
            return Bool(rng.random() < 0.5)
        return Atom(rng.choice(list(props)))
    if roll < 0.45:
        return Neg(_pure(rng, props, xdepth, depth - 1))
    if roll < 0.6 and xdepth > 0:
        return Next(_pure(rng, props, xdepth - 1, depth - 1))
    a, b = _pure(rng, props, xdepth, depth - 1), _pure(rng, props, xdepth, depth - 1)
    if roll < 0.75:
        return Conj((a, b))
    if roll < 0.9:
        return Disj((a, b))
    return Implies(a, b)


def _positive(rng: random.Random, props: Sequence[str], xdepth: int, depth: int) -> Formula:
    """Body of a G-clause; G may appear only in positive positions."""
    roll = rng.random()
    if depth == 0 or roll < 0.55:
        return _pure(rng, props, xdepth, depth)
    if roll < 0.65:
        return Always(_positive(rng, props, xdepth, depth - 1))
    if roll < 0.75 and xdepth > 0:
        return Next(_positive(rng, props, xdepth - 1, depth - 1))
    if roll < 0.85:
        return Conj((_positive(rng, props, xdepth, depth - 1), _positive(rng, props, xdepth, depth - 1)))
    if roll < 0.93:
        return Disj((_positive(rng, props, xdepth, depth - 1), _pure(rng, props, xdepth, depth - 1)))
    return Implies(_pure(rng, props, xdepth, depth - 1), _positive(rng, props, xdepth, depth - 1))


def random_clause(rng: random.Random, props: Sequence[str], max_x: int = 2, depth: int = 3) -> Formula:
    return Always(_positive(rng, props, max_x, depth))


def random_spec(rng: random.Random, props: Sequence[str], max_x: int = 2, max_clauses: int = 2) -> SafetyFormula:
    clauses = tuple(random_clause(rng, props, max_x) for _ in range(rng.randint(1, max_clauses)))
    root = clauses[0] if len(clauses) == 1 else Conj(clauses)
    return SafetyFormula(root, text=render(root))


def random_word(rng: random.Random, props: Sequence[str], max_len: int = 6) -> tuple[frozenset[str], ...]:
    return tuple(frozenset(p for p in props if rng.random() < 0.5) for _ in range(rng.randint(0, max_len)))


def ts_over(sensors: Iterable[str] = SENSORS):
    return transition_system_over(sensors)


def fsa_edges(fsa: Fsa) -> dict[tuple[int, int], Guard]:
    out: dict[tuple[int, int], Guard] = {}
    for t in fsa.transitions:
        key = (t.source, t.target)
        out[key] = logic.disj(out[key], t.guard) if key in out else t.guard
    return out


def isomorphic(fsa: Fsa, labels: Sequence[Iterable[str]], edges: Iterable[tuple[int, Guard, int]]) -> bool:
    """Brute-force graph isomorphism respecting initial state, labels and
    guards (up to logical equivalence).  The expected automaton has initial
    state 0."""
    labels = [frozenset(l) for l in labels]
    if len(labels) != len(fsa.labels):
        return False
    want: dict[tuple[int, int], Guard] = {}
    for s, g, t in edges:
        want[(s, t)] = logic.disj(want[(s, t)], g) if (s, t) in want else g
    want = {k: g for k, g in want.items() if logic.is_satisfiable(g)}
    got = {k: g for k, g in fsa_edges(fsa).items() if logic.is_satisfiable(g)}
    if len(want) != len(got):
        return False
    others = [i for i in range(len(labels)) if i != 0]
    targets = [i for i in fsa.states if i != fsa.initial]
    for perm in itertools.permutations(targets):
        m = {0: fsa.initial, **dict(zip(others, perm))}
        if any(labels[i] != fsa.labels[m[i]] for i in m):
            continue
        ok = True
        for (s, t), g in want.items():
            h = got.get((m[s], m[t]))
            if h is None or not logic.equivalent(g, h):
                ok = False
                break
        if ok:
            return True
    return False


def replay_monitor(m, word) -> list[int]:
    states, s = [], m.initial
    for letter in word:
        s = m.step(s, letter)
        states.append(s)
    return states


GOLDEN = Path(__file__).parent / "golden"


def assert_golden(name: str, text: str) -> None:
    """Compare against tests/golden/<name>; SAFEPLAN_UPDATE_GOLDEN=1 rewrites."""
    path = GOLDEN / name
    if os.environ.get("SAFEPLAN_UPDATE_GOLDEN") == "1":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    assert path.exists(), f"missing golden file {name}; run with SAFEPLAN_UPDATE_GOLDEN=1"
    assert text == path.read_text(encoding="utf-8")
