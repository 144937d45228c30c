"""Compile a resolved plan AST into a plan automaton.

Each statement compiles to a fragment with a guarded *entry* (where control
goes when the fragment starts: a state or a pass-through exit) and a list of
pending *exits* ``(state, guard, kind)`` that are wired once the successor is
known.  Execution calls create a state labeled with their proposition; every
other statement is transparent.

* ``if``/``elif``/``else`` create one unlabeled test state; arm ``i`` is
  taken under ``not c1 and ... and ci`` and, without ``else``, the residual
  guard leaves the chain.
* ``while`` tests its condition at every entry and re-entry; a body that can
  complete without reaching a state gets an explicit unlabeled loop head.
* Conditions that cannot be sensed (comparisons, unmapped calls, variables)
  are existentially quantified, so both outcomes stay possible.
* The finished plan restarts: normal and return exits go back to the initial
  state.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from . import logic
from .automaton import Fsa, Transition
from .errors import UnsupportedNode
from .logic import FALSE, TRUE, Guard
from .plan_frontend import (
    Assign,
    Call,
    Break,
    CAnd,
    CAtom,
    CConst,
    CNot,
    COr,
    CondExpr,
    CUnknown,
    Effect,
    ExprStmt,
    FunctionDef,
    IfChain,
    NoOp,
    PlanAst,
    ResolvedCond,
    Return,
    SourceSpan,
    While,
    call_args,
    exec_effects,
    parse_plan,
    resolve_conditions,
    resolve_expr,
)
from .system_model import SystemSpec, map_call

log = logging.getLogger(__name__)


class CompileWarning(UserWarning):
    pass


class UnguardedInfiniteLoop(CompileWarning):
    pass


class UnmappedCall(CompileWarning):
    pass


class UnreachableState(CompileWarning):
    pass


NORMAL, BREAK, RETURN = "normal", "break", "return"
Target = Union[int, str]
_UNKNOWN_PREFIX = "?"


@dataclass(frozen=True)
class _Frag:
    entry: tuple[tuple[Guard, Target], ...]
    exits: tuple[tuple[int, Guard, str], ...] = ()


EPSILON = _Frag(entry=((TRUE, NORMAL),))


@dataclass(frozen=True)
class FsaFragment:
    """A Table-1 building block: its sealed automaton plus the ports it
    exposed before sealing."""

    fsa: Fsa
    entry: int
    normal_exits: frozenset[int] = frozenset()
    break_exits: frozenset[int] = frozenset()
    return_exits: frozenset[int] = frozenset()


def _sat(g: Guard) -> bool:
    return g != FALSE and logic.is_satisfiable(g)


def cond_guard(tree: CondExpr) -> Guard:
    if isinstance(tree, CAtom):
        return logic.Prop(tree.prop)
    if isinstance(tree, CUnknown):
        return logic.Prop(_UNKNOWN_PREFIX + tree.key)
    if isinstance(tree, CConst):
        return logic.Const(tree.value)
    if isinstance(tree, CNot):
        return logic.neg(cond_guard(tree.operand))
    parts = [cond_guard(op) for op in tree.operands]
    return logic.conj(*parts) if isinstance(tree, CAnd) else logic.disj(*parts)


def _unknowns(g: Guard) -> set[str]:
    return {p for p in logic.props(g) if p.startswith(_UNKNOWN_PREFIX)}


def _project(g: Guard, unknowns: set[str]) -> Guard:
    """Quantify unsensed atoms away; keeps the written form when possible."""
    if not unknowns & logic.props(g):
        return g
    return logic.simplify(logic.exists(g, unknowns))


@dataclass
class _Builder:
    system: SystemSpec
    labels: list[frozenset[str]] = field(default_factory=list)
    spans: list[Optional[SourceSpan]] = field(default_factory=list)
    edges: list[tuple[int, Guard, int]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    renumber: dict[int, int] = field(default_factory=dict)

    def state(self, label: Sequence[str] = (), span: Optional[SourceSpan] = None) -> int:
        self.labels.append(frozenset(label))
        self.spans.append(span)
        return len(self.labels) - 1

    def edge(self, src: int, g: Guard, dst: int) -> None:
        if _sat(g):
            self.edges.append((src, g, dst))

    def warn(self, category: type, message: str) -> None:
        self.warnings.append(message)
        log.warning(message)
        warnings.warn(message, category, stacklevel=3)

    # -------------------------------------------------------------- wiring

    def link(self, src: int, g: Guard, entry, kind_out: list) -> None:
        """Continue from `src` under `g` into `entry`; markers become exits."""
        for g2, t in entry:
            gg = logic.conj(g, g2)
            if not _sat(gg):
                continue
            if isinstance(t, int):
                self.edge(src, gg, t)
            else:
                kind_out.append((src, gg, t))

    def seq(self, a: _Frag, b: _Frag) -> _Frag:
        entry: list[tuple[Guard, Target]] = []
        for g, t in a.entry:
            if t == NORMAL:
                for g2, t2 in b.entry:
                    gg = logic.conj(g, g2)
                    if _sat(gg):
                        entry.append((gg, t2))
            else:
                entry.append((g, t))
        exits: list = []
        for s, g, kind in a.exits:
            if kind == NORMAL:
                self.link(s, g, b.entry, exits)
            else:
                exits.append((s, g, kind))
        exits.extend(b.exits)
        return _Frag(tuple(entry), tuple(exits))

    def chain(self, frags: Sequence[_Frag]) -> _Frag:
        out = EPSILON
        for f in frags:
            out = self.seq(out, f)
        return out

    # -------------------------------------------------------------- statements

    def call_state(self, eff: Effect) -> _Frag:
        s = self.state([eff.prop], eff.call.span)
        return _Frag(entry=((TRUE, s),), exits=((s, TRUE, NORMAL),))

    def effects(self, effs: Sequence[Effect]) -> _Frag:
        return self.chain([self.call_state(e) for e in effs])

    def block(self, stmts) -> _Frag:
        return self.chain([self.stmt(s) for s in stmts])

    def stmt(self, s) -> _Frag:
        if isinstance(s, NoOp):
            return EPSILON
        if isinstance(s, Break):
            return _Frag(entry=((TRUE, BREAK),))
        if isinstance(s, Return):
            effs = exec_effects(s.value, self.system) if s.value is not None else ()
            return self.seq(self.effects(effs), _Frag(entry=((TRUE, RETURN),)))
        if isinstance(s, Assign):
            return self.effects(exec_effects(s.value, self.system))
        if isinstance(s, ExprStmt):
            effs = exec_effects(s.expr, self.system)
            self._check_unmapped(s)
            return self.effects(effs)
        if isinstance(s, IfChain):
            return self.if_chain(s)
        if isinstance(s, While):
            return self.while_loop(s)
        raise UnsupportedNode(f"cannot compile {type(s).__name__}")

    def _check_unmapped(self, s: ExprStmt) -> None:
        e = s.expr
        if not isinstance(e, Call):
            return
        if map_call(self.system, e.func, call_args(e)) is not None:
            return
        if self.system.function(e.func) is not None:
            return
        self.warn(UnmappedCall, f"line {s.span.line}: call {e.func}() is not mapped to a proposition; treated as a no-op")

    def _cond(self, c) -> ResolvedCond:
        return c if isinstance(c, ResolvedCond) else resolve_expr(c, self.system)

    def if_chain(self, node: IfChain) -> _Frag:
        conds = [self._cond(c) for c, _ in node.arms]
        effs = tuple(e for c in conds for e in c.effects)
        head = self.state((), node.span)
        guards = [cond_guard(c.tree) for c in conds]
        unknowns = set().union(*(_unknowns(g) for g in guards))
        exits: list = []
        taken: list[Guard] = []
        bodies = [b for _, b in node.arms]
        if node.orelse is not None:
            bodies.append(node.orelse)
        for i, body in enumerate(bodies):
            if i < len(guards):
                raw = logic.conj(*[logic.neg(g) for g in taken], guards[i])
                taken.append(guards[i])
            else:
                raw = logic.conj(*[logic.neg(g) for g in taken])
            arm = _project(raw, unknowns)
            frag = self.block(body)
            self.link(head, arm, frag.entry, exits)
            exits.extend(frag.exits)
        if node.orelse is None:
            residual = _project(logic.conj(*[logic.neg(g) for g in taken]), unknowns)
            if _sat(residual):
                exits.append((head, residual, NORMAL))
        return self.seq(self.effects(effs), _Frag(entry=((TRUE, head),), exits=tuple(exits)))

    def while_loop(self, node: While) -> _Frag:
        cond = self._cond(node.cond)
        g = cond_guard(cond.tree)
        unknowns = _unknowns(g)
        g_true = _project(g, unknowns)
        g_false = _project(logic.neg(g), unknowns)
        n_before = len(self.labels)
        body = self.block(node.body)
        labeled = any(self.labels[i] for i in range(n_before, len(self.labels)))
        if g_true == TRUE and not labeled and not cond.effects:
            self.warn(UnguardedInfiniteLoop, f"line {node.span.line}: 'while' loop executes no action and never leaves on its own")

        epsilon_body = any(t == NORMAL for _, t in body.entry)
        if not epsilon_body and not cond.effects:
            # the condition is re-tested on every (re-)entry
            entry: list[tuple[Guard, Target]] = []
            for gb, t in body.entry:
                gg = logic.conj(g_true, gb)
                if _sat(gg):
                    entry.append((gg, NORMAL if t == BREAK else t))
            if _sat(g_false):
                entry.append((g_false, NORMAL))
            exits: list = []
            for s, ge, kind in body.exits:
                if kind == NORMAL:
                    self.link(s, ge, entry, exits)
                elif kind == BREAK:
                    exits.append((s, ge, NORMAL))
                else:
                    exits.append((s, ge, kind))
            return _Frag(tuple(entry), tuple(exits))

        # explicit loop head, followed by any condition effects
        loop = self.state((), node.span)
        test = self.seq(_Frag(entry=((TRUE, NORMAL),)), self.effects(cond.effects))
        exits = []
        # states (or the head itself) where the condition is evaluated
        tests: list[tuple[int, Guard]] = []
        if any(t == NORMAL for _, t in test.entry):
            tests.append((loop, TRUE))
        self.link(loop, TRUE, [(gt, t) for gt, t in test.entry if t != NORMAL], exits)
        tests.extend((s, ge) for s, ge, kind in test.exits if kind == NORMAL)
        body_entry = [(logic.conj(g_true, gb), t) for gb, t in body.entry]
        for s, ge in tests:
            for gb, t in body_entry:
                gg = logic.conj(ge, gb)
                if not _sat(gg):
                    continue
                if t == NORMAL:
                    self.edge(s, gg, loop)
                elif t == BREAK:
                    exits.append((s, gg, NORMAL))
                elif isinstance(t, int):
                    self.edge(s, gg, t)
                else:
                    exits.append((s, gg, t))
            gf = logic.conj(ge, g_false)
            if _sat(gf):
                exits.append((s, gf, NORMAL))
        for s, ge, kind in body.exits:
            if kind == NORMAL:
                self.edge(s, ge, loop)
            elif kind == BREAK:
                exits.append((s, ge, NORMAL))
            else:
                exits.append((s, ge, kind))
        return _Frag(entry=((TRUE, loop),), exits=tuple(exits))

    # -------------------------------------------------------------- sealing

    def seal(self, frag: _Frag, root_stmts, name: str) -> Fsa:
        compound = [s for s in root_stmts if not _transparent(s, self.system)]
        if (
            len(compound) == 1
            and isinstance(compound[0], (While, IfChain))
            and len(frag.entry) == 1
            and frag.entry[0][0] == TRUE
            and isinstance(frag.entry[0][1], int)
            and not self.labels[frag.entry[0][1]]
        ):
            p0 = frag.entry[0][1]
        else:
            p0 = self.state()
            for g, t in frag.entry:
                self.edge(p0, g, p0 if isinstance(t, str) else t)
        seal_exits = []
        for s, g, kind in frag.exits:
            self.edge(s, g, p0)
            seal_exits.append(s)
        return self.finalize(p0, seal_exits, name)

    def finalize(self, p0: int, seal_exits: list[int], name: str) -> Fsa:
        merged: dict[tuple[int, int], Guard] = {}
        for s, g, t in self.edges:
            key = (s, t)
            merged[key] = logic.disj(merged[key], g) if key in merged else g
        out: dict[int, list[tuple[int, Guard]]] = {}
        for (s, t), g in sorted(merged.items()):
            g = logic.simplify(g)
            if g != FALSE:
                out.setdefault(s, []).append((t, g))
        order = [p0]
        seen = {p0}
        i = 0
        while i < len(order):
            for t, _ in out.get(order[i], ()):
                if t not in seen:
                    seen.add(t)
                    order.append(t)
            i += 1
        dropped = [s for s in range(len(self.labels)) if s not in seen]
        for s in dropped:
            span = self.spans[s]
            where = f"line {span.line}: " if span else ""
            what = ", ".join(sorted(self.labels[s])) or "test"
            self.warn(UnreachableState, f"{where}unreachable {what} state removed")
        new = {old: k for k, old in enumerate(order)}
        self.renumber = new
        trans = []
        for s in order:
            for t, g in out.get(s, ()):
                trans.append(Transition(new[s], new[t], g))
        trans.sort(key=Transition.sort_key)
        return Fsa(
            labels=tuple(self.labels[s] for s in order),
            transitions=tuple(trans),
            initial=0,
            provenance=tuple(self.spans[s] for s in order),
            seal_exits=tuple(sorted({new[s] for s in seal_exits if s in new})),
            warnings=tuple(self.warnings),
            name=name,
        )


def _transparent(s, system: SystemSpec) -> bool:
    """Statements that compile to no state and no control transfer."""
    if isinstance(s, NoOp):
        return True
    if isinstance(s, Assign):
        return not exec_effects(s.value, system)
    if isinstance(s, ExprStmt):
        return not exec_effects(s.expr, system)
    return False


def tree2fsa(plan: PlanAst | FunctionDef, system: SystemSpec) -> Fsa:
    """Plan automaton of a parsed plan (conditions resolved on the fly).

    >>> from safeplan.fixtures import load_fixture_system
    >>> src = "def f():\\n    while True:\\n        if pedestrian_observed():\\n            stop()\\n        else:\\n            velocity_publisher(1, 0)\\n"
    >>> len(tree2fsa(parse_plan(src), load_fixture_system("driving")))
    3
    """
    if isinstance(plan, PlanAst):
        plan = resolve_conditions(plan, system)
        root = plan.root
    else:
        root = plan
    b = _Builder(system)
    frag = b.block(root.body)
    return b.seal(frag, root.body, root.name)


def compile_plan(text: str, system: SystemSpec) -> Fsa:
    return tree2fsa(parse_plan(text), system)


def keyword_processor(node, system: SystemSpec) -> FsaFragment:
    """Table-1 rule for a single construct: a ``while``, an ``if`` chain, or a
    sequence of execution-call statements."""
    if isinstance(node, (While, IfChain)):
        stmts = (node,)
    elif isinstance(node, (list, tuple)) and node and all(isinstance(s, ExprStmt) for s in node):
        stmts = tuple(node)
    else:
        raise UnsupportedNode(f"no keyword rule for {type(node).__name__}")
    b = _Builder(system)
    frag = b.block(stmts)
    ports = {NORMAL: set(), BREAK: set(), RETURN: set()}
    for s, _, kind in frag.exits:
        ports[kind].add(s)
    fsa = b.seal(frag, stmts, "")
    remap = b.renumber
    return FsaFragment(
        fsa=fsa,
        entry=fsa.initial,
        normal_exits=frozenset(remap[s] for s in ports[NORMAL] if s in remap),
        break_exits=frozenset(remap[s] for s in ports[BREAK] if s in remap),
        return_exits=frozenset(remap[s] for s in ports[RETURN] if s in remap),
    )
