"""Compositional certification of sequentially composed plans.

Each part is verified on its own.  A connection (q, q') from a state of one
part to an initial state of the next is safe for a monitor when every
non-error monitor state the first part can be in at q, stepped by the label
of q', stays out of error and lands where the second part's own run would
start.  When every adjacent pair passes, the joint automaton is certified
without exploring it.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .automaton import Fsa, ProductAutomaton, join, product
from .checker import Result, Verdict, verify_product
from .errors import InvalidConnection, PreconditionViolated
from .spec_logic import Monitor, SafetyFormula, build_monitor, render
from .system_model import TransitionSystem

log = logging.getLogger(__name__)

Connection = tuple[int, int]


@dataclass(frozen=True)
class Witness:
    source: int
    target: int
    monitor_state: int
    reason: str  # "error" or "carry-over"

    def describe(self, m: Optional[Monitor] = None) -> str:
        state = m.describe(self.monitor_state) if m is not None else f"m{self.monitor_state}"
        return f"{self.reason}: state {self.source} -> initial {self.target} with monitor {state}"


@dataclass(frozen=True)
class ConnectionCheck:
    result: Result
    witness: Optional[Witness] = None

    @property
    def passed(self) -> bool:
        return self.result is Result.PASS


@dataclass(frozen=True)
class CompositionPlan:
    """Parts in execution order; ``connections[i]`` joins part i to part i+1.

    A missing or None entry means the default: every seal exit of part i to
    every initial product state of part i+1.
    """

    parts: tuple[Fsa, ...]
    connections: tuple[Optional[frozenset[Connection]], ...] = ()

    def __post_init__(self) -> None:
        if not self.parts:
            raise ValueError("a composition needs at least one part")
        if len(self.connections) > max(len(self.parts) - 1, 0):
            raise ValueError("more connection sets than adjacent pairs")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(f.name or f"part{i}" for i, f in enumerate(self.parts))

    def connection(self, i: int) -> Optional[frozenset[Connection]]:
        return self.connections[i] if i < len(self.connections) else None


@dataclass(frozen=True)
class PairFailure:
    pair: int
    clause: str
    witness: Witness


@dataclass(frozen=True)
class Certification:
    """Outcome of the compositional check for one specification.

    ``result`` is PASS when the composed plan is certified.  FAIL means the
    sufficient condition did not hold, not that the composition is unsafe.
    """

    result: Result
    spec: str
    name: str = ""
    failures: tuple[PairFailure, ...] = ()
    part_verdicts: tuple[Verdict, ...] = field(default=(), compare=False)

    @property
    def certified(self) -> bool:
        return self.result is Result.PASS


def default_connections(p1: ProductAutomaton, p2: ProductAutomaton) -> frozenset[Connection]:
    return frozenset((e, i) for e in p1.seal_exits for i in p2.initials)


def reachable_monitor_states(p: ProductAutomaton, m: Monitor) -> list[set[int]]:
    """Non-error monitor states reachable at each product state.

    The monitor has consumed the trace up to and including the state's label.
    """
    letters = [m.letter_index(lab) for lab in p.labels]
    at: list[set[int]] = [set() for _ in p.states]
    queue: deque[tuple[int, int]] = deque()
    for i in p.initials:
        s = m.table[m.initial][letters[i]]
        if s != m.error and s not in at[i]:
            at[i].add(s)
            queue.append((i, s))
    while queue:
        i, s = queue.popleft()
        for j in p.succ[i]:
            t = m.table[s][letters[j]]
            if t != m.error and t not in at[j]:
                at[j].add(t)
                queue.append((j, t))
    return at


def _no_error(p: ProductAutomaton, m: Monitor) -> bool:
    letters = [m.letter_index(lab) for lab in p.labels]
    seen: set[tuple[int, int]] = set()
    queue: deque[tuple[int, int]] = deque()
    for i in p.initials:
        node = (i, m.table[m.initial][letters[i]])
        if node[1] == m.error:
            return False
        if node not in seen:
            seen.add(node)
            queue.append(node)
    while queue:
        i, s = queue.popleft()
        for j in p.succ[i]:
            node = (j, m.table[s][letters[j]])
            if node[1] == m.error:
                return False
            if node not in seen:
                seen.add(node)
                queue.append(node)
    return True


def check_connection(
    p1: ProductAutomaton,
    p2: ProductAutomaton,
    connect: Iterable[Connection],
    m: Monitor,
    *,
    assume_verified: bool = False,
) -> ConnectionCheck:
    connect = sorted(set(connect))
    initials2 = set(p2.initials)
    for a, b in connect:
        if not 0 <= a < len(p1) or b not in initials2:
            raise InvalidConnection(f"connection ({a}, {b}) is not from a state of part 1 to an initial state of part 2")
    if not assume_verified:
        for k, p in ((1, p1), (2, p2)):
            if not _no_error(p, m):
                raise PreconditionViolated(f"part {k} does not satisfy the monitor on its own")
    if not connect:
        return ConnectionCheck(Result.PASS)
    at = reachable_monitor_states(p1, m)
    for q, q2 in connect:
        letter = m.letter_index(p2.labels[q2])
        native = m.table[m.initial][letter]
        for mq in sorted(at[q]):
            carried = m.table[mq][letter]
            if carried == m.error:
                return ConnectionCheck(Result.FAIL, Witness(q, q2, mq, "error"))
            if carried != native:
                return ConnectionCheck(Result.FAIL, Witness(q, q2, mq, "carry-over"))
    return ConnectionCheck(Result.PASS)


def build_joint(plan: CompositionPlan, products: Sequence[ProductAutomaton]) -> ProductAutomaton:
    """Fold `join` left to right, translating each connection set."""
    joint = products[0]
    offset = 0
    for i in range(1, len(products)):
        prev, cur = products[i - 1], products[i]
        conn = plan.connection(i - 1)
        if conn is None:
            conn = default_connections(prev, cur)
        joint = join(joint, cur, [(offset + a, b) for a, b in conn])
        offset += len(prev)
    return joint


def compose_and_certify(
    plan: CompositionPlan,
    ts: TransitionSystem,
    specs: Sequence[SafetyFormula],
    *,
    guard_mode: str = "stable",
    known_props: Optional[Iterable[str]] = None,
) -> tuple[list[Certification], ProductAutomaton]:
    """Certify the composed plan for each spec from per-part verdicts.

    `known_props` is the system vocabulary, used only for absent-proposition
    warnings on the per-part checks."""
    products = [product(f, ts, guard_mode=guard_mode) for f in plan.parts]
    certs = []
    for spec in specs:
        verdicts = tuple(verify_product(p, spec, known_props=known_props) for p in products)
        failed = [plan.ids[k] for k, v in enumerate(verdicts) if not v.passed]
        if failed:
            raise PreconditionViolated(f"parts {failed} do not satisfy {spec.name or spec.text}")
        failures = []
        for clause in spec.clauses():
            m = build_monitor(clause)
            for i in range(len(products) - 1):
                conn = plan.connection(i)
                if conn is None:
                    conn = default_connections(products[i], products[i + 1])
                check = check_connection(products[i], products[i + 1], conn, m, assume_verified=True)
                if not check.passed:
                    failures.append(PairFailure(i, render(clause), check.witness))
        result = Result.FAIL if failures else Result.PASS
        if failures:
            log.info("composition of %s not certified for %s: %d failing pairs", plan.ids, spec.name or spec.text, len(failures))
        certs.append(Certification(result, spec.text, spec.name, tuple(failures), verdicts))
    return certs, build_joint(plan, products)
