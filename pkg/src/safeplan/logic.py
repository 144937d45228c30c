"""Propositional formulas used as transition guards.

Smart constructors (`conj`, `disj`, `neg`) fold constants and flatten nested
operators but keep operand order, so a guard written ``backpack and person``
renders as ``backpack ∧ person``.  `simplify` additionally collapses
tautologies and contradictions by truth table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Union


@dataclass(frozen=True)
class Prop:
    name: str


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    operand: "Guard"


@dataclass(frozen=True)
class And:
    operands: tuple["Guard", ...]


@dataclass(frozen=True)
class Or:
    operands: tuple["Guard", ...]


Guard = Union[Prop, Const, Not, And, Or]

TRUE = Const(True)
FALSE = Const(False)

# above this many distinct props the truth-table pass in simplify() is skipped
TRUTH_TABLE_LIMIT = 12


def props(g: Guard) -> frozenset[str]:
    if isinstance(g, Prop):
        return frozenset((g.name,))
    if isinstance(g, Const):
        return frozenset()
    if isinstance(g, Not):
        return props(g.operand)
    out: set[str] = set()
    for op in g.operands:
        out |= props(op)
    return frozenset(out)


def evaluate(g: Guard, valuation: Iterable[str]) -> bool:
    true = valuation if isinstance(valuation, (set, frozenset)) else frozenset(valuation)
    return _eval(g, true)


def _eval(g: Guard, true) -> bool:
    if isinstance(g, Prop):
        return g.name in true
    if isinstance(g, Const):
        return g.value
    if isinstance(g, Not):
        return not _eval(g.operand, true)
    if isinstance(g, And):
        return all(_eval(op, true) for op in g.operands)
    return any(_eval(op, true) for op in g.operands)


def neg(g: Guard) -> Guard:
    if isinstance(g, Const):
        return Const(not g.value)
    if isinstance(g, Not):
        return g.operand
    return Not(g)


def _dedupe(ops: Iterable[Guard]) -> list[Guard]:
    seen: list[Guard] = []
    for op in ops:
        if op not in seen:
            seen.append(op)
    return seen


def conj(*gs: Guard) -> Guard:
    flat: list[Guard] = []
    for g in gs:
        if isinstance(g, And):
            flat.extend(g.operands)
        elif g == TRUE:
            continue
        elif g == FALSE:
            return FALSE
        else:
            flat.append(g)
    flat = _dedupe(flat)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    for op in flat:
        if neg(op) in flat:
            return FALSE
    return And(tuple(flat))


def disj(*gs: Guard) -> Guard:
    flat: list[Guard] = []
    for g in gs:
        if isinstance(g, Or):
            flat.extend(g.operands)
        elif g == FALSE:
            continue
        elif g == TRUE:
            return TRUE
        else:
            flat.append(g)
    flat = _dedupe(flat)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    for op in flat:
        if neg(op) in flat:
            return TRUE
    return Or(tuple(flat))


def substitute(g: Guard, name: str, value: bool) -> Guard:
    """Replace atom `name` by a constant and re-fold."""
    if isinstance(g, Prop):
        return Const(value) if g.name == name else g
    if isinstance(g, Const):
        return g
    if isinstance(g, Not):
        return neg(substitute(g.operand, name, value))
    parts = [substitute(op, name, value) for op in g.operands]
    return conj(*parts) if isinstance(g, And) else disj(*parts)


def exists(g: Guard, names: Iterable[str]) -> Guard:
    """Existentially quantify the given atoms away."""
    for name in sorted(set(names)):
        if name in props(g):
            g = disj(substitute(g, name, True), substitute(g, name, False))
    return g


def valuations(names: Iterable[str]):
    names = sorted(set(names))
    for bits in itertools.product((False, True), repeat=len(names)):
        yield frozenset(n for n, b in zip(names, bits) if b)


def is_satisfiable(g: Guard) -> bool:
    return any(_eval(g, v) for v in valuations(props(g)))


def is_tautology(g: Guard) -> bool:
    return all(_eval(g, v) for v in valuations(props(g)))


def equivalent(a: Guard, b: Guard) -> bool:
    names = props(a) | props(b)
    return all(_eval(a, v) == _eval(b, v) for v in valuations(names))


def simplify(g: Guard) -> Guard:
    if isinstance(g, Const) or len(props(g)) > TRUTH_TABLE_LIMIT:
        return g
    if is_tautology(g):
        return TRUE
    if not is_satisfiable(g):
        return FALSE
    return g


def _quote(name: str) -> str:
    return f'"{name}"' if " " in name else name


def render(g: Guard, *, ascii: bool = False) -> str:
    """Human-readable text; ``ascii=True`` emits the spec-formula token set."""
    return _render(g, ascii, top=True)


def _render(g: Guard, ascii: bool, top: bool) -> str:
    if isinstance(g, Prop):
        return _quote(g.name) if ascii else g.name
    if isinstance(g, Const):
        if ascii:
            return "true" if g.value else "false"
        return "True" if g.value else "False"
    if isinstance(g, Not):
        inner = _render(g.operand, ascii, top=False)
        return ("!" if ascii else "¬") + inner
    sym = {And: ("&", "∧"), Or: ("|", "∨")}[type(g)][0 if ascii else 1]
    text = f" {sym} ".join(_render(op, ascii, top=False) for op in g.operands)
    return text if top else f"({text})"
