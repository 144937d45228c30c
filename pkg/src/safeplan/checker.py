"""Verification of plan products against safety specifications.

The checker explores the synchronous product of the plan/TS product with a
bad-prefix monitor breadth first.  The monitor consumes the label of every
visited state, including the initial one, so a counterexample is the label
sequence of a product path whose last letter drives the monitor into error.
BFS order makes the first counterexample found a shortest one.
"""

from __future__ import annotations

import logging
import re
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .automaton import Fsa, ProductAutomaton, bounded_traces, product
from .errors import BudgetExceeded, NotAFailure, StateBudgetExceeded
from .plan_frontend import PlanAst, SourceSpan
from .semantics import TableauOracle, is_bad_prefix
from .spec_logic import (
    Always,
    Atom,
    Bool,
    Conj,
    Disj,
    Formula,
    Implies,
    Monitor,
    Neg,
    Next,
    SafetyFormula,
    build_monitor,
    formula_props,
    render,
)
from .system_model import TransitionSystem

log = logging.getLogger(__name__)

DEFAULT_STATE_BUDGET = 1_000_000
DEFAULT_TIME_BUDGET_MS: Optional[float] = None


class Result(str, Enum):
    PASS = "pass"
    FAIL = "fail"


@dataclass(frozen=True)
class Step:
    product_state: int
    fsa_state: int
    ts_state: int
    monitor_state: Optional[int]
    label: frozenset[str]
    sensors: frozenset[str]
    valuation: str
    span: Optional[SourceSpan] = None
    part: int = 0


@dataclass(frozen=True)
class Counterexample:
    steps: tuple[Step, ...]
    clause: str

    @property
    def prefix(self) -> tuple[frozenset[str], ...]:
        return tuple(s.label for s in self.steps)

    @property
    def path(self) -> tuple[tuple[int, int, Optional[int]], ...]:
        return tuple((s.fsa_state, s.ts_state, s.monitor_state) for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class Stats:
    explored: int = 0
    elapsed_ms: float = 0.0
    product_states: int = 0
    monitor_states: int = 0


@dataclass(frozen=True)
class Verdict:
    result: Result
    spec: str = ""
    name: str = ""
    counterexample: Optional[Counterexample] = None
    stats: Stats = field(default_factory=Stats, compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if (self.result is Result.FAIL) != (self.counterexample is not None):
            raise ValueError("a Fail verdict carries a counterexample and a Pass verdict does not")

    @property
    def passed(self) -> bool:
        return self.result is Result.PASS

    def to_dict(self) -> dict:
        out = {"spec": self.name or self.spec, "formula": self.spec, "result": self.result.value}
        if self.counterexample is not None:
            cx = self.counterexample
            out["clause"] = cx.clause
            out["counterexample"] = [
                {
                    "state": s.product_state,
                    "fsa_state": s.fsa_state,
                    "ts_state": s.ts_state,
                    "monitor_state": s.monitor_state,
                    "label": sorted(s.label),
                    "valuation": s.valuation,
                    "line": s.span.line if s.span else None,
                }
                for s in cx.steps
            ]
        out["stats"] = {"explored": self.stats.explored, "product_states": self.stats.product_states, "monitor_states": self.stats.monitor_states}
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


# ------------------------------------------------------------------ helpers


def props_in_order(f: Formula) -> list[str]:
    """Atoms in order of first occurrence."""
    out: list[str] = []

    def go(g: Formula) -> None:
        if isinstance(g, Atom):
            if g.name not in out:
                out.append(g.name)
        elif isinstance(g, (Neg, Next, Always)):
            go(g.operand)
        elif isinstance(g, Implies):
            go(g.lhs)
            go(g.rhs)
        elif isinstance(g, (Conj, Disj)):
            for op in g.operands:
                go(op)

    go(f)
    return out


def valuation_text(label: Iterable[str], props: Sequence[str]) -> str:
    present = set(label)
    if not props:
        return "true"
    return " ∧ ".join(p if p in present else f"¬{p}" for p in props)


def _as_formula(f: SafetyFormula | Formula | str) -> SafetyFormula:
    from .spec_logic import parse_spec

    if isinstance(f, SafetyFormula):
        return f
    if isinstance(f, str):
        return parse_spec(f)
    return SafetyFormula(root=f, text=render(f))


def _absent_prop_warnings(f: SafetyFormula, p: ProductAutomaton, known: Optional[Iterable[str]]) -> tuple[str, ...]:
    if known is not None:
        universe, where = set(known), "is not part of the system"
    else:
        universe, where = set(p.sensor_props) | set(p.exec_props), "occurs neither in the environment nor in the plan"
    missing = sorted(f.props() - universe)
    return tuple(f"proposition {m!r} {where}; treated as constantly false" for m in missing)


class _Clock:
    def __init__(self, budget_ms: Optional[float]):
        self.start = time.perf_counter()
        self.budget = budget_ms

    def ms(self) -> float:
        return (time.perf_counter() - self.start) * 1000.0

    def check(self) -> None:
        if self.budget is not None and self.ms() > self.budget:
            raise BudgetExceeded(f"time budget of {self.budget:g} ms exceeded")


# ------------------------------------------------------------------ BFS


def _search(p: ProductAutomaton, m: Monitor, budget_states: int, clock: _Clock):
    letters = [m.letter_index(lab) for lab in p.labels]
    parent: dict[tuple[int, int], Optional[tuple[int, int]]] = {}
    queue: deque[tuple[int, int]] = deque()
    for i in p.initials:
        node = (i, m.table[m.initial][letters[i]])
        if node not in parent:
            parent[node] = None
            if node[1] == m.error:
                return node, parent
            queue.append(node)
    explored = 0
    while queue:
        i, s = queue.popleft()
        explored += 1
        if explored & 1023 == 0:
            clock.check()
        row = m.table[s]
        for j in p.succ[i]:
            node = (j, row[letters[j]])
            if node in parent:
                continue
            parent[node] = (i, s)
            if len(parent) > budget_states:
                raise StateBudgetExceeded(f"explored more than {budget_states} (product, monitor) states")
            if node[1] == m.error:
                return node, parent
            queue.append(node)
    return None, parent


def _steps(p: ProductAutomaton, nodes: list[tuple[int, Optional[int]]], props: Sequence[str]) -> tuple[Step, ...]:
    return tuple(
        Step(
            product_state=i,
            fsa_state=p.fsa_state(i),
            ts_state=p.ts_state(i),
            monitor_state=s,
            label=p.labels[i],
            sensors=p.sensor_labels[i],
            valuation=valuation_text(p.labels[i], props),
            span=p.provenance[i] if p.provenance else None,
            part=p.part(i),
        )
        for i, s in nodes
    )


def verify_product(
    p: ProductAutomaton,
    f: SafetyFormula | Formula | str,
    *,
    budget_states: int = DEFAULT_STATE_BUDGET,
    budget_ms: Optional[float] = DEFAULT_TIME_BUDGET_MS,
    known_props: Optional[Iterable[str]] = None,
) -> Verdict:
    """Check every top-level G-clause; report the shortest violation."""
    spec = _as_formula(f)
    clock = _Clock(budget_ms)
    warns = _absent_prop_warnings(spec, p, known_props)
    for w in warns:
        log.warning(w)
    best: Optional[Counterexample] = None
    explored = 0
    monitor_states = 0
    for clause in spec.clauses():
        m = build_monitor(clause)
        monitor_states += len(m)
        hit, parent = _search(p, m, budget_states, clock)
        explored += len(parent)
        if hit is None:
            continue
        nodes = [hit]
        while parent[nodes[-1]] is not None:
            nodes.append(parent[nodes[-1]])
        nodes.reverse()
        cx = Counterexample(_steps(p, nodes, props_in_order(clause)), clause=render(clause))
        if best is None or len(cx) < len(best):
            best = cx
    stats = Stats(explored=explored, elapsed_ms=clock.ms(), product_states=len(p), monitor_states=monitor_states)
    result = Result.PASS if best is None else Result.FAIL
    return Verdict(result, spec=spec.text or render(spec.root), name=spec.name, counterexample=best, stats=stats, warnings=warns)


def verify(
    fsa: Fsa,
    ts: TransitionSystem,
    f: SafetyFormula | Formula | str,
    *,
    guard_mode: str = "stable",
    **kw,
) -> Verdict:
    """Does every trace of ``fsa ⊗ ts`` satisfy `f`?"""
    return verify_product(product(fsa, ts, guard_mode=guard_mode), f, **kw)


def verify_all(
    fsa: Fsa,
    ts: TransitionSystem,
    specs: Sequence[SafetyFormula | Formula | str],
    *,
    short_circuit: bool = False,
    guard_mode: str = "stable",
    **kw,
) -> list[Verdict]:
    p = product(fsa, ts, guard_mode=guard_mode)
    out: list[Verdict] = []
    for f in specs:
        v = verify_product(p, f, **kw)
        out.append(v)
        if short_circuit and not v.passed:
            break
    return out


def verify_many(jobs: Sequence[tuple[ProductAutomaton, SafetyFormula]], workers: int = 4, **kw) -> list[Verdict]:
    """Independent (product, spec) checks; results in input order."""
    if workers <= 1 or len(jobs) <= 1:
        return [verify_product(p, f, **kw) for p, f in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: verify_product(job[0], job[1], **kw), jobs))


# ------------------------------------------------------------------ brute force


def brute_force_check(
    p: ProductAutomaton,
    f: SafetyFormula | Formula | str,
    k: int,
    *,
    naive: bool = False,
    budget: int = 2_000_000,
) -> Verdict:
    """Enumerate product prefixes of length ≤ k and ask the semantic oracle.

    Prefixes reaching the same product state with the same tableau
    configuration have identical futures, so only one representative of
    each is extended.  ``naive=True`` instead enumerates every prefix with
    `bounded_traces` (exponential; for cross-checking small cases).
    """
    spec = _as_formula(f)
    best: Optional[Counterexample] = None
    explored = 0
    for clause in spec.clauses():
        props = props_in_order(clause)
        if naive:
            for length in range(1, k + 1):
                bad = sorted((t for t in bounded_traces(p, length, budget) if is_bad_prefix(clause, t)), key=lambda t: [sorted(x) for x in t])
                explored += 1
                if bad:
                    steps = tuple(Step(-1, -1, -1, None, lab, frozenset(), valuation_text(lab, props)) for lab in bad[0])
                    cx = Counterexample(steps, clause=render(clause))
                    if best is None or len(cx) < len(best):
                        best = cx
                    break
            continue
        oracle = TableauOracle(clause)
        parent: dict[tuple, Optional[tuple]] = {}
        level = []
        for i in p.initials:
            node = (i, oracle.advance(oracle.initial(), p.labels[i]))
            if node not in parent:
                parent[node] = None
                level.append(node)
        hit = None
        for depth in range(1, k + 1):
            hit = next((node for node in level if oracle.is_bad(node[1])), None)
            if hit is not None or depth == k:
                break
            nxt = []
            for i, conf in level:
                for j in p.succ[i]:
                    node = (j, oracle.advance(conf, p.labels[j]))
                    if node not in parent:
                        parent[node] = (i, conf)
                        nxt.append(node)
                        if len(parent) > budget:
                            raise BudgetExceeded(f"brute-force enumeration exceeds {budget} classes")
            level = nxt
            if not level:
                break
        explored += len(parent)
        if hit is None:
            continue
        nodes = [hit]
        while parent[nodes[-1]] is not None:
            nodes.append(parent[nodes[-1]])
        nodes.reverse()
        cx = Counterexample(_steps(p, [(i, None) for i, _ in nodes], props), clause=render(clause))
        if best is None or len(cx) < len(best):
            best = cx
    result = Result.PASS if best is None else Result.FAIL
    return Verdict(result, spec=spec.text or render(spec.root), name=spec.name, counterexample=best, stats=Stats(explored=explored, product_states=len(p)))


# ------------------------------------------------------------------ reports


def explain(v: Verdict, plan: PlanAst | str | None = None) -> str:
    """Step-by-step counterexample report with plan source lines."""
    if v.passed or v.counterexample is None:
        raise NotAFailure("explain() needs a Fail verdict")
    source = plan.source if isinstance(plan, PlanAst) else (plan or "")
    lines_of = source.splitlines()
    cx = v.counterexample
    title = f"{v.name}: {v.spec}" if v.name else v.spec
    rows = []
    for k, s in enumerate(cx.steps, 1):
        state = f"P{s.part}:s{s.fsa_state}" if s.part else f"s{s.fsa_state}"
        env = "{" + ", ".join(sorted(s.sensors)) + "}"
        src = "-"
        if s.span is not None and 0 < s.span.line <= len(lines_of):
            src = f"line {s.span.line}: {lines_of[s.span.line - 1].strip()}"
        elif s.span is not None:
            src = f"line {s.span.line}"
        rows.append((str(k), state, env, s.valuation, src))
    header = ("step", "plan state", "environment", "valuation", "source")
    widths = [max(len(r[c]) for r in rows + [header]) for c in range(4)]
    out = [f"FAIL {title}", f"violated clause: {cx.clause}", f"counterexample ({len(cx)} steps):"]
    out.append("  " + "  ".join(h.ljust(widths[c]) if c < 4 else h for c, h in enumerate(header)).rstrip())
    for r in rows:
        out.append("  " + "  ".join(x.ljust(widths[c]) if c < 4 else x for c, x in enumerate(r)).rstrip())
    last = cx.steps[-1]
    out.append(f"violation at step {len(cx)}: {last.valuation}")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------ SMV export


def _smv_ident(name: str, taken: set[str]) -> str:
    base = re.sub(r"[^A-Za-z0-9_]", "_", name)
    if not re.match(r"[A-Za-z_]", base):
        base = "p_" + base
    ident = base
    k = 2
    while ident in taken:
        ident = f"{base}_{k}"
        k += 1
    taken.add(ident)
    return ident


def _smv_formula(f: Formula, names: dict[str, str]) -> str:
    if isinstance(f, Atom):
        return names.get(f.name, "FALSE")
    if isinstance(f, Bool):
        return "TRUE" if f.value else "FALSE"
    if isinstance(f, Neg):
        return f"!({_smv_formula(f.operand, names)})"
    if isinstance(f, Next):
        return f"X ({_smv_formula(f.operand, names)})"
    if isinstance(f, Always):
        return f"G ({_smv_formula(f.operand, names)})"
    if isinstance(f, Implies):
        return f"(({_smv_formula(f.lhs, names)}) -> ({_smv_formula(f.rhs, names)}))"
    sym = " & " if isinstance(f, Conj) else " | "
    return "(" + sym.join(_smv_formula(op, names) for op in f.operands) + ")"


def to_smv(p: ProductAutomaton, specs: Sequence[SafetyFormula]) -> str:
    """NuSMV-style model of the product for external cross-checking.

    Paths that end in a state without successors continue in a ``dead``
    sink where every proposition is false.
    """
    state_names = [f"q{i}" for i in p.states]
    taken: set[str] = {"state", "dead", *state_names}
    props = sorted(set(p.sensor_props) | set(p.exec_props) | {a for f in specs for a in formula_props(f.root)})
    prop_names = {a: _smv_ident(a, taken) for a in props}
    dead_needed = any(not p.succ[i] for i in p.states)
    values = state_names + (["dead"] if dead_needed else [])
    out = [f"-- {state_names[i]} = {p.name(i)}" for i in p.states]
    out += ["MODULE main", "VAR", f"  state : {{{', '.join(values)}}};", "INIT"]
    out.append(f"  state in {{{', '.join(state_names[i] for i in p.initials)}}}")
    out.append("TRANS")
    out.append("  case")
    for i in p.states:
        targets = [state_names[j] for j in p.succ[i]] or ["dead"]
        out.append(f"    state = {state_names[i]} : next(state) in {{{', '.join(targets)}}};")
    if dead_needed:
        out.append("    state = dead : next(state) = dead;")
    out.append("  esac")
    out.append("DEFINE")
    for a in props:
        holders = [state_names[i] for i in p.states if a in p.labels[i]]
        expr = f"state in {{{', '.join(holders)}}}" if holders else "FALSE"
        out.append(f"  {prop_names[a]} := {expr};")
    for f in specs:
        tag = f"  -- {f.name}" if f.name else ""
        out.append(f"LTLSPEC {_smv_formula(f.root, prop_names)}{tag}")
    return "\n".join(out) + "\n"
