"""Reference semantics for bad prefixes, used as a test oracle.

This deliberately shares nothing with the monitor construction: it works on
the raw formula tree with explicit polarities (no negation normal form, no
DNF keys).  A configuration is the set of obligation sets reachable after the
consumed prefix; the prefix is bad when none of them admits an infinite
continuation.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product
from typing import Iterable, Iterator

from .errors import NotSafetyFragment
from .spec_logic import (
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
    formula_props,
)

Obligation = tuple  # (formula, polarity)
ObSet = frozenset  # of Obligation


def _alternatives(obs: ObSet) -> list[tuple[dict[str, bool], ObSet]]:
    """Expand an obligation set into (current literals, next obligations)."""
    results: list[tuple[dict[str, bool], ObSet]] = []

    def go(todo: list[Obligation], lits: dict[str, bool], nxt: set) -> None:
        if not todo:
            results.append((dict(lits), frozenset(nxt)))
            return
        (f, pol), rest = todo[0], todo[1:]
        if isinstance(f, Bool):
            if f.value == pol:
                go(rest, lits, nxt)
            return
        if isinstance(f, Atom):
            if lits.get(f.name, pol) != pol:
                return
            had = f.name in lits
            lits[f.name] = pol
            go(rest, lits, nxt)
            if not had:
                del lits[f.name]
            return
        if isinstance(f, Neg):
            go([(f.operand, not pol)] + rest, lits, nxt)
            return
        if isinstance(f, Implies):
            go([(Disj((Neg(f.lhs), f.rhs)), pol)] + rest, lits, nxt)
            return
        if isinstance(f, Next):
            go(rest, lits, nxt | {(f.operand, pol)})
            return
        if isinstance(f, Always):
            if not pol:
                raise NotSafetyFragment("negated G is an eventuality")
            go([(f.operand, True)] + rest, lits, nxt | {(f, True)})
            return
        conjunctive = isinstance(f, Conj) == pol
        if conjunctive:
            go([(op, pol) for op in f.operands] + rest, lits, nxt)
        else:
            for op in f.operands:
                go([(op, pol)] + rest, lits, nxt)

    go(sorted(obs, key=repr), {}, set())
    return results


@lru_cache(maxsize=None)
def _alts_cached(obs: ObSet):
    return tuple((tuple(sorted(l.items())), n) for l, n in _alternatives(obs))


def _matches(lits: tuple, letter: frozenset[str]) -> bool:
    return all((name in letter) == pol for name, pol in lits)


class TableauOracle:
    """Explicit nondeterministic tableau for one formula."""

    def __init__(self, formula: Formula | SafetyFormula):
        self.formula = formula.root if isinstance(formula, SafetyFormula) else formula
        self.props = tuple(sorted(formula_props(self.formula)))
        self._viable: dict[ObSet, bool] = {}

    def initial(self) -> frozenset[ObSet]:
        return frozenset({frozenset({(self.formula, True)})})

    def advance(self, config: frozenset[ObSet], letter: Iterable[str]) -> frozenset[ObSet]:
        present = frozenset(letter)
        out = set()
        for obs in config:
            for lits, nxt in _alts_cached(obs):
                if _matches(lits, present):
                    out.add(nxt)
        return frozenset(out)

    def is_bad(self, config: frozenset[ObSet]) -> bool:
        return not any(self.viable(obs) for obs in config)

    def viable(self, obs: ObSet) -> bool:
        if obs not in self._viable:
            self._solve(obs)
        return self._viable[obs]

    def _solve(self, root: ObSet) -> None:
        # explore obligation sets reachable from root, then take the greatest
        # fixpoint of "some letter leads to a viable set"
        graph: dict[ObSet, set[ObSet]] = {}
        stack = [root]
        while stack:
            s = stack.pop()
            if s in graph or s in self._viable:
                continue
            succ = {nxt for _, nxt in _alts_cached(s)}
            graph[s] = succ
            stack.extend(succ)
        alive = set(graph)
        changed = True
        while changed:
            changed = False
            for s in list(alive):
                if not any(t in alive or self._viable.get(t, False) for t in graph[s]):
                    alive.discard(s)
                    changed = True
        for s in graph:
            self._viable[s] = s in alive


def is_bad_prefix(formula: Formula | SafetyFormula, word: Iterable[Iterable[str]]) -> bool:
    """True iff no infinite extension of `word` satisfies `formula`."""
    oracle = TableauOracle(formula)
    config = oracle.initial()
    for letter in word:
        config = oracle.advance(config, letter)
    return oracle.is_bad(config)


def all_words(props: Iterable[str], length: int) -> Iterator[tuple[frozenset[str], ...]]:
    props = sorted(set(props))
    letters = [frozenset(p for p, b in zip(props, bits) if b) for bits in product((False, True), repeat=len(props))]
    yield from product(letters, repeat=length)
