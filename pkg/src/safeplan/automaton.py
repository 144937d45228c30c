"""Finite-state plan automata, their product with the transition system, and
joint automata of sequentially composed plans.

Products are indexed: state ``i`` has a key (``(p, q)`` for a plain product,
``(part, p, q)`` for a joint automaton), a label, and a sorted successor
list.  By default a guarded FSA edge ``(p, g, p')`` is taken from ``(p, q)``
to ``(p', q')`` only when ``g`` holds on both sensor valuations, i.e. the
tested condition is still true when the branch's action executes
(``guard_mode="stable"``).  ``guard_mode="source"`` only evaluates ``g`` at
the source valuation.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import logic
from .errors import BudgetExceeded, InvalidConnection, PropSetMismatch, UnknownProp, ValidationError
from .logic import Guard
from .plan_frontend import SourceSpan
from .system_model import TransitionSystem

log = logging.getLogger(__name__)

GUARD_MODES = ("stable", "source")
DEFAULT_TRACE_BUDGET = 1_000_000


@dataclass(frozen=True, order=True)
class Transition:
    source: int
    target: int
    guard: Guard = field(compare=False)

    def sort_key(self) -> tuple:
        return (self.source, self.target, logic.render(self.guard))


@dataclass(frozen=True)
class Fsa:
    """Plan automaton: state labels are sets of execution props."""

    labels: tuple[frozenset[str], ...]
    transitions: tuple[Transition, ...]
    initial: int = 0
    provenance: tuple[Optional[SourceSpan], ...] = ()
    seal_exits: tuple[int, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        n = len(self.labels)
        if not 0 <= self.initial < n:
            raise ValidationError(f"initial state {self.initial} does not exist")
        if self.labels[self.initial]:
            raise ValidationError("initial state must have an empty label")
        for t in self.transitions:
            if not (0 <= t.source < n and 0 <= t.target < n):
                raise ValidationError(f"transition {t.source}->{t.target} references a missing state")
        if self.provenance and len(self.provenance) != n:
            raise ValidationError("provenance must cover every state")
        if not self.provenance:
            object.__setattr__(self, "provenance", (None,) * n)

    @property
    def states(self) -> range:
        return range(len(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def out(self, p: int) -> list[Transition]:
        return [t for t in self.transitions if t.source == p]

    def guard_props(self) -> frozenset[str]:
        out: set[str] = set()
        for t in self.transitions:
            out |= logic.props(t.guard)
        return frozenset(out)

    def exec_props(self) -> frozenset[str]:
        out: set[str] = set()
        for lab in self.labels:
            out |= lab
        return frozenset(out)

    def to_dict(self) -> dict:
        states = []
        for i, lab in enumerate(self.labels):
            span = self.provenance[i]
            states.append({"id": i, "label": sorted(lab), "span": None if span is None else str(span)})
        return {
            "name": self.name,
            "initial": self.initial,
            "states": states,
            "transitions": [
                {"from": t.source, "guard": logic.render(t.guard, ascii=True), "to": t.target}
                for t in sorted(self.transitions, key=Transition.sort_key)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def make_fsa(labels: Sequence[Iterable[str]], edges: Iterable[tuple[int, Guard, int]], initial: int = 0, **kw) -> Fsa:
    """Convenience constructor from ``(source, guard, target)`` triples."""
    trans = tuple(sorted((Transition(s, t, g) for s, g, t in edges), key=Transition.sort_key))
    return Fsa(labels=tuple(frozenset(l) for l in labels), transitions=trans, initial=initial, **kw)


# ------------------------------------------------------------------ product


@dataclass(frozen=True)
class ProductAutomaton:
    keys: tuple[tuple[int, ...], ...]
    labels: tuple[frozenset[str], ...]
    succ: tuple[tuple[int, ...], ...]
    initials: tuple[int, ...]
    sensor_props: tuple[str, ...]
    exec_props: frozenset[str]
    sensor_labels: tuple[frozenset[str], ...] = field(repr=False)
    provenance: tuple[Optional[SourceSpan], ...] = field(default=(), repr=False)
    seal_exits: tuple[int, ...] = ()
    pruned: bool = True
    guard_mode: str = "stable"

    @property
    def states(self) -> range:
        return range(len(self.keys))

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def n_transitions(self) -> int:
        return sum(len(s) for s in self.succ)

    def transitions(self) -> list[tuple[int, int]]:
        return [(i, j) for i in self.states for j in self.succ[i]]

    def part(self, i: int) -> int:
        k = self.keys[i]
        return k[0] if len(k) == 3 else 0

    def fsa_state(self, i: int) -> int:
        return self.keys[i][-2]

    def ts_state(self, i: int) -> int:
        return self.keys[i][-1]

    @property
    def is_joint(self) -> bool:
        return bool(self.keys) and len(self.keys[0]) == 3

    def name(self, i: int) -> str:
        base = f"s{self.fsa_state(i)}@{_set_text(self.sensor_labels[i])}"
        return f"P{self.part(i)}:{base}" if self.is_joint else base

    def index(self, key: tuple[int, ...]) -> int:
        return self.keys.index(key)


def _set_text(s: Iterable[str]) -> str:
    return "{" + ",".join(sorted(s)) + "}"


def product(
    fsa: Fsa,
    ts: TransitionSystem,
    *,
    guard_mode: str = "stable",
    prune: bool = True,
    initial_valuations: Optional[Iterable[Iterable[str]]] = None,
) -> ProductAutomaton:
    """Synchronous product of a plan automaton with the transition system."""
    if guard_mode not in GUARD_MODES:
        raise ValueError(f"guard_mode must be one of {GUARD_MODES}")
    unknown = fsa.guard_props() - set(ts.props)
    if unknown:
        raise UnknownProp(f"guards reference props outside AP_S: {sorted(unknown)}")
    clash = fsa.exec_props() & set(ts.props)
    if clash:
        raise UnknownProp(f"props used both as sensor and execution labels: {sorted(clash)}")

    qs = list(ts.states)
    sat = [[q for q in qs if logic.evaluate(t.guard, ts.label(q))] for t in fsa.transitions]
    sat_sets = [set(s) for s in sat]
    by_src: dict[int, list[int]] = {}
    for k, t in enumerate(fsa.transitions):
        by_src.setdefault(t.source, []).append(k)

    def successors(p: int, q: int) -> list[tuple[int, int]]:
        out = set()
        for k in by_src.get(p, ()):
            if q not in sat_sets[k]:
                continue
            targets = sat[k] if guard_mode == "stable" else qs
            t = fsa.transitions[k].target
            out.update((t, q2) for q2 in targets)
        return sorted(out)

    if initial_valuations is None:
        init_qs = qs
    else:
        init_qs = sorted({ts.state_of(v) for v in initial_valuations})
    init_keys = [(fsa.initial, q) for q in init_qs]

    if prune:
        seen = set(init_keys)
        queue = deque(init_keys)
        edges: dict[tuple[int, int], list[tuple[int, int]]] = {}
        while queue:
            key = queue.popleft()
            edges[key] = successors(*key)
            for nxt in edges[key]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        keys = sorted(seen)
    else:
        keys = [(p, q) for p in fsa.states for q in qs]
        edges = {k: successors(*k) for k in keys}

    index = {k: i for i, k in enumerate(keys)}
    seal = set(fsa.seal_exits)
    return ProductAutomaton(
        keys=tuple(keys),
        labels=tuple(fsa.labels[p] | ts.label(q) for p, q in keys),
        succ=tuple(tuple(sorted(index[n] for n in edges[k])) for k in keys),
        initials=tuple(index[k] for k in init_keys),
        sensor_props=ts.props,
        exec_props=fsa.exec_props(),
        sensor_labels=tuple(ts.label(q) for _, q in keys),
        provenance=tuple(fsa.provenance[p] for p, _ in keys),
        seal_exits=tuple(i for i, (p, _) in enumerate(keys) if p in seal),
        pruned=prune,
        guard_mode=guard_mode,
    )


# ------------------------------------------------------------------ traces


def bounded_traces(p: ProductAutomaton, k: int, budget: int = DEFAULT_TRACE_BUDGET) -> set[tuple[frozenset[str], ...]]:
    """All label sequences of length `k` along paths from initial states."""
    if k < 1:
        raise ValueError("k must be at least 1")
    frontier: dict[tuple, set[int]] = {}
    for i in p.initials:
        frontier.setdefault((p.labels[i],), set()).add(i)
    for _ in range(k - 1):
        nxt: dict[tuple, set[int]] = {}
        size = 0
        for prefix, states in frontier.items():
            for s in states:
                for t in p.succ[s]:
                    bucket = nxt.setdefault(prefix + (p.labels[t],), set())
                    if t not in bucket:
                        bucket.add(t)
                        size += 1
            if size > budget:
                raise BudgetExceeded(f"more than {budget} (prefix, state) pairs at length {len(prefix) + 1}")
        frontier = nxt
    return set(frontier)


# ------------------------------------------------------------------ joint automaton


def _as_joint_keys(p: ProductAutomaton, shift: int) -> list[tuple[int, int, int]]:
    if p.is_joint:
        return [(k[0] + shift, k[1], k[2]) for k in p.keys]
    return [(shift, k[0], k[1]) for k in p.keys]


def join(p1: ProductAutomaton, p2: ProductAutomaton, connect: Iterable[tuple[int, int]]) -> ProductAutomaton:
    """Joint automaton: disjoint union plus one-way connection edges."""
    if tuple(p1.sensor_props) != tuple(p2.sensor_props):
        raise PropSetMismatch(f"sensor props differ: {list(p1.sensor_props)} vs {list(p2.sensor_props)}")
    if (p1.exec_props | p2.exec_props) & set(p1.sensor_props):
        raise PropSetMismatch("execution labels collide with sensor props")
    connect = sorted(set(connect))
    initials2 = set(p2.initials)
    for a, b in connect:
        if not 0 <= a < len(p1):
            raise InvalidConnection(f"source state {a} is not a state of the first automaton")
        if b not in initials2:
            raise InvalidConnection(f"target state {b} is not an initial state of the second automaton")

    keys1 = _as_joint_keys(p1, 0)
    shift = 1 + max((k[0] for k in keys1), default=-1)
    keys2 = _as_joint_keys(p2, shift)
    n1 = len(p1)
    succ = [set(s) for s in p1.succ] + [{n1 + t for t in s} for s in p2.succ]
    for a, b in connect:
        succ[a].add(n1 + b)
    return ProductAutomaton(
        keys=tuple(keys1 + keys2),
        labels=p1.labels + p2.labels,
        succ=tuple(tuple(sorted(s)) for s in succ),
        initials=p1.initials,
        sensor_props=p1.sensor_props,
        exec_props=p1.exec_props | p2.exec_props,
        sensor_labels=p1.sensor_labels + p2.sensor_labels,
        provenance=p1.provenance + p2.provenance,
        seal_exits=tuple(n1 + i for i in p2.seal_exits),
        pruned=p1.pruned and p2.pruned,
        guard_mode=p1.guard_mode,
    )


# ------------------------------------------------------------------ DOT export


def _dot_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _label_text(lab: frozenset[str]) -> str:
    return ", ".join(sorted(lab)) if lab else "∅"


def fsa_to_dot(fsa: Fsa, name: str = "") -> str:
    lines = [f"digraph {_dot_str(name or fsa.name or 'fsa')} {{", "  rankdir=LR;", "  node [shape=circle];"]
    lines.append('  __start [shape=point, label=""];')
    for i in fsa.states:
        lines.append(f"  s{i} [label={_dot_str(_label_text(fsa.labels[i]))}];")
    lines.append(f"  __start -> s{fsa.initial};")
    for t in sorted(fsa.transitions, key=Transition.sort_key):
        lines.append(f"  s{t.source} -> s{t.target} [label={_dot_str(logic.render(t.guard))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def product_to_dot(p: ProductAutomaton, name: str = "product") -> str:
    lines = [f"digraph {_dot_str(name)} {{", "  rankdir=LR;", "  node [shape=box];"]
    for i in p.states:
        label = _dot_str(p.name(i))[:-1] + "\\n" + _dot_str(_label_text(p.labels[i]))[1:]
        lines.append(f"  {_dot_str(p.name(i))} [label={label}];")
    for k, i in enumerate(p.initials):
        lines.append(f'  __start{k} [shape=point, label=""];')
        lines.append(f"  __start{k} -> {_dot_str(p.name(i))};")
    for i, j in p.transitions():
        lines.append(f"  {_dot_str(p.name(i))} -> {_dot_str(p.name(j))};")
    lines.append("}")
    return "\n".join(lines) + "\n"
