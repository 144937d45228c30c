"""Safety-fragment LTL: parsing, progression and bad-prefix monitors.

Formulas are built from G, X, negation, conjunction, disjunction and
implication over propositional atoms.  A monitor is the closure of formula
progression over all valuations of the referenced atoms.  Progressed formulas
are keyed by a canonical DNF whose literals constrain the current letter and
whose ``next`` obligations constrain the remaining suffix.  States from which
no infinite continuation can avoid falsification are merged into the error
state, and the resulting DFA is minimised.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import NotSafetyFragment, SpecSyntaxError, StateBudgetExceeded

# ---------------------------------------------------------------- formula AST


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Neg:
    operand: "Formula"


@dataclass(frozen=True)
class Conj:
    operands: tuple["Formula", ...]


@dataclass(frozen=True)
class Disj:
    operands: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Next:
    operand: "Formula"


@dataclass(frozen=True)
class Always:
    operand: "Formula"


Formula = Union[Atom, Bool, Neg, Conj, Disj, Implies, Next, Always]


@dataclass(frozen=True)
class SafetyFormula:
    """A named, parsed specification."""

    root: Formula
    text: str = ""
    name: str = ""

    def props(self) -> frozenset[str]:
        return formula_props(self.root)

    def clauses(self) -> tuple[Formula, ...]:
        """Top-level G-clauses; each is checked by its own monitor."""
        if isinstance(self.root, Conj):
            return self.root.operands
        return (self.root,)

    def __str__(self) -> str:
        return self.text or render(self.root)


def formula_props(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset((f.name,))
    if isinstance(f, Bool):
        return frozenset()
    if isinstance(f, (Neg, Next, Always)):
        return formula_props(f.operand)
    if isinstance(f, Implies):
        return formula_props(f.lhs) | formula_props(f.rhs)
    out: set[str] = set()
    for op in f.operands:
        out |= formula_props(op)
    return frozenset(out)


def next_depth(f: Formula) -> int:
    """Maximum nesting of X."""
    if isinstance(f, (Atom, Bool)):
        return 0
    if isinstance(f, Next):
        return 1 + next_depth(f.operand)
    if isinstance(f, (Neg, Always)):
        return next_depth(f.operand)
    if isinstance(f, Implies):
        return max(next_depth(f.lhs), next_depth(f.rhs))
    return max(next_depth(op) for op in f.operands)


def _prop_text(name: str) -> str:
    return name if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) and name not in _RESERVED else f'"{name}"'


def render(f: Formula) -> str:
    """Concrete syntax accepted by `parse_spec` (round-trips)."""
    if isinstance(f, Atom):
        return _prop_text(f.name)
    if isinstance(f, Bool):
        return "true" if f.value else "false"
    if isinstance(f, Neg):
        return "!" + _wrap(f.operand)
    if isinstance(f, Next):
        return "X " + _wrap(f.operand)
    if isinstance(f, Always):
        return "G " + _wrap(f.operand)
    if isinstance(f, Implies):
        return f"{_wrap(f.lhs)} -> {_wrap(f.rhs)}"
    sym = " & " if isinstance(f, Conj) else " | "
    return sym.join(_wrap(op) for op in f.operands)


def _wrap(f: Formula) -> str:
    text = render(f)
    if isinstance(f, (Atom, Bool, Neg, Next, Always)):
        return text
    return f"({text})"


# ------------------------------------------------------------------- parsing

_RESERVED = {"G", "X", "F", "U", "W", "R", "true", "false"}

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<str>"[^"]*")
      | (?P<op>->|&&|\|\||[()!&|~¬∧∨→□◯◇])
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    )""",
    re.VERBOSE,
)

_UNICODE = {"¬": "!", "~": "!", "∧": "&", "&&": "&", "∨": "|", "||": "|", "→": "->", "□": "G", "◯": "X", "◇": "F"}


def _normalize_name(name: str) -> str:
    return " ".join(name.split())


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r} at offset {pos}")
        start = pos
        pos = m.end()
        if m.group("str") is not None:
            tokens.append(("prop", _normalize_name(m.group("str")[1:-1]), start))
        elif m.group("op") is not None:
            op = _UNICODE.get(m.group("op"), m.group("op"))
            tokens.append(("op", op, start))
        else:
            word = m.group("ident")
            if word in ("true", "false"):
                tokens.append(("const", word, start))
            elif word in _RESERVED:
                tokens.append(("op", word, start))
            elif set(word) <= {"G", "X", "F"}:
                # fused operator runs such as "GF" or "XX"
                tokens.extend(("op", ch, start + i) for i, ch in enumerate(word))
            else:
                tokens.append(("prop", word, start))
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, val, pos = self.take()
        if val != value or kind != "op":
            raise SpecSyntaxError(f"expected {value!r} at offset {pos}, found {val or kind!r}")

    def parse(self) -> Formula:
        f = self.implication()
        kind, val, pos = self.peek()
        if kind != "eof":
            if val in ("U", "W", "R"):
                raise NotSafetyFragment(f"binary temporal operator {val} is outside the safety fragment")
            raise SpecSyntaxError(f"unexpected {val!r} at offset {pos}")
        return f

    def implication(self) -> Formula:
        lhs = self.disjunction()
        if self.peek()[1] == "->" and self.peek()[0] == "op":
            self.take()
            return Implies(lhs, self.implication())
        return lhs

    def disjunction(self) -> Formula:
        ops = [self.conjunction()]
        while self.peek() [0:2] == ("op", "|"):
            self.take()
            ops.append(self.conjunction())
        return ops[0] if len(ops) == 1 else Disj(tuple(ops))

    def conjunction(self) -> Formula:
        ops = [self.unary()]
        while self.peek()[0:2] == ("op", "&"):
            self.take()
            ops.append(self.unary())
        return ops[0] if len(ops) == 1 else Conj(tuple(ops))

    def unary(self) -> Formula:
        kind, val, pos = self.peek()
        if kind == "op" and val == "!":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "G":
            self.take()
            return Always(self.unary())
        if kind == "op" and val == "X":
            self.take()
            return Next(self.unary())
        if kind == "op" and val == "F":
            raise NotSafetyFragment(f"F (eventually) at offset {pos} is outside the safety fragment")
        return self.atom()

    def atom(self) -> Formula:
        kind, val, pos = self.take()
        if kind == "op" and val == "(":
            f = self.implication()
            self.expect(")")
            return f
        if kind == "const":
            return Bool(val == "true")
        if kind == "prop":
            return Atom(val)
        if kind == "op" and val in ("U", "W", "R"):
            raise NotSafetyFragment(f"binary temporal operator {val} is outside the safety fragment")
        raise SpecSyntaxError(f"unexpected {val or kind!r} at offset {pos}")


def parse_formula(text: str) -> Formula:
    """Parse without the top-level G-clause requirement."""
    root = _Parser(text).parse()
    to_nnf(root)  # polarity check
    return root


def parse_spec(text: str, name: str = "") -> SafetyFormula:
    """Parse a specification; its top level must be G-clauses joined by &.

    >>> sorted(parse_spec('G("pedestrian" -> X !"publish velocity")').props())
    ['pedestrian', 'publish velocity']
    """
    root = parse_formula(text)
    clauses = root.operands if isinstance(root, Conj) else (root,)
    for clause in clauses:
        if not isinstance(clause, Always):
            raise NotSafetyFragment(f"top-level clause {render(clause)!r} is not of the form G(...)")
    return SafetyFormula(root=root, text=" ".join(text.split()), name=name)


# ---------------------------------------------------------- negation normal form


def to_nnf(f: Formula, positive: bool = True) -> Formula:
    """Push negations to atoms; a negated G would need F, which is rejected."""
    if isinstance(f, Atom):
        return f if positive else Neg(f)
    if isinstance(f, Bool):
        return f if positive else Bool(not f.value)
    if isinstance(f, Neg):
        return to_nnf(f.operand, not positive)
    if isinstance(f, Implies):
        return to_nnf(Disj((Neg(f.lhs), f.rhs)), positive)
    if isinstance(f, Next):
        return Next(to_nnf(f.operand, positive))
    if isinstance(f, Always):
        if not positive:
            raise NotSafetyFragment(f"negated G in {render(f)!r} yields an eventuality")
        return Always(to_nnf(f.operand, True))
    ops = tuple(to_nnf(op, positive) for op in f.operands)
    if isinstance(f, Conj) == positive:
        return Conj(ops)
    return Disj(ops)


# --------------------------------------------------------------- canonical DNF
#
# A clause is a frozenset of basics:
#   ("L", name, polarity)  literal on the current letter
#   ("N", dnf)             dnf must hold from the next position
#   ("A", dnf)             G dnf, only inside deferred ("N") bodies

Dnf = frozenset
TRUE_DNF: Dnf = frozenset({frozenset()})
FALSE_DNF: Dnf = frozenset()


def _consistent(clause: frozenset) -> bool:
    for b in clause:
        if b[0] == "L" and ("L", b[1], not b[2]) in clause:
            return False
    return True


def _absorb(clauses: Iterable[frozenset]) -> Dnf:
    ordered = sorted(set(clauses), key=len)
    kept: list[frozenset] = []
    for c in ordered:
        if not any(k <= c for k in kept):
            kept.append(c)
    return frozenset(kept)


def _and(a: Dnf, b: Dnf) -> Dnf:
    out = []
    for x in a:
        for y in b:
            c = x | y
            if _consistent(c):
                out.append(c)
    return _absorb(out)


def _or(a: Dnf, b: Dnf) -> Dnf:
    return _absorb(a | b)


def _deferred(f: Formula) -> Dnf:
    """DNF of an NNF formula with G kept as an opaque basic."""
    if isinstance(f, Bool):
        return TRUE_DNF if f.value else FALSE_DNF
    if isinstance(f, Atom):
        return frozenset({frozenset({("L", f.name, True)})})
    if isinstance(f, Neg):
        return frozenset({frozenset({("L", f.operand.name, False)})})
    if isinstance(f, Next):
        body = _deferred(f.operand)
        if body == TRUE_DNF:
            return TRUE_DNF
        return frozenset({frozenset({("N", body)})})
    if isinstance(f, Always):
        body = _deferred(f.operand)
        if body == TRUE_DNF:
            return TRUE_DNF
        return frozenset({frozenset({("A", body)})})
    if isinstance(f, Conj):
        acc = TRUE_DNF
        for op in f.operands:
            acc = _and(acc, _deferred(op))
        return acc
    acc = FALSE_DNF
    for op in f.operands:
        acc = _or(acc, _deferred(op))
    return acc


_current_cache: dict[Dnf, Dnf] = {}


def _current(d: Dnf) -> Dnf:
    """Unfold every G basic as ``body & X G body`` at the current position."""
    hit = _current_cache.get(d)
    if hit is not None:
        return hit
    out = FALSE_DNF
    for clause in d:
        acc = TRUE_DNF
        for b in clause:
            if b[0] == "A":
                part = _and(_current(b[1]), frozenset({frozenset({("N", frozenset({frozenset({b})}))})}))
            else:
                part = frozenset({frozenset({b})})
            acc = _and(acc, part)
            if not acc:
                break
        out = _or(out, acc)
    _current_cache[d] = out
    return out


def canonical(f: Formula) -> Dnf:
    """Canonical key of a fragment formula (equal keys ⇒ equivalent)."""
    return _current(_deferred(to_nnf(f)))


def _step_dnf(state: Dnf, letter: frozenset[str]) -> Dnf:
    out = FALSE_DNF
    for clause in state:
        ok = True
        nexts = []
        for b in clause:
            if b[0] == "L":
                if (b[1] in letter) != b[2]:
                    ok = False
                    break
            else:
                nexts.append(b[1])
        if not ok:
            continue
        acc = TRUE_DNF
        for body in nexts:
            acc = _and(acc, _current(body))
            if not acc:
                break
        out = _or(out, acc)
    return out


def _dnf_props(d: Dnf) -> set[str]:
    out: set[str] = set()
    for clause in d:
        for b in clause:
            if b[0] == "L":
                out.add(b[1])
            else:
                out |= _dnf_props(b[1])
    return out


# ------------------------------------------------------------ syntactic progress


def _simplify(f: Formula) -> Formula:
    if isinstance(f, (Conj, Disj)):
        unit, zero = (True, False) if isinstance(f, Conj) else (False, True)
        ops: list[Formula] = []
        for op in f.operands:
            op = _simplify(op)
            if isinstance(op, Bool):
                if op.value == zero:
                    return Bool(zero)
                continue
            if isinstance(op, type(f)):
                ops.extend(x for x in op.operands if x not in ops)
            elif op not in ops:
                ops.append(op)
        if not ops:
            return Bool(unit)
        return ops[0] if len(ops) == 1 else type(f)(tuple(ops))
    return f


def _progress_syntax(f: Formula, letter: frozenset[str]) -> Formula:
    if isinstance(f, Bool):
        return f
    if isinstance(f, Atom):
        return Bool(f.name in letter)
    if isinstance(f, Neg):
        inner = _progress_syntax(f.operand, letter)
        if isinstance(inner, Bool):
            return Bool(not inner.value)
        return inner.operand if isinstance(inner, Neg) else Neg(inner)
    if isinstance(f, Implies):
        lhs = _progress_syntax(f.lhs, letter)
        rhs = _progress_syntax(f.rhs, letter)
        if isinstance(lhs, Bool):
            return rhs if lhs.value else Bool(True)
        if isinstance(rhs, Bool):
            if rhs.value:
                return Bool(True)
            return lhs.operand if isinstance(lhs, Neg) else Neg(lhs)
        return Implies(lhs, rhs)
    if isinstance(f, Next):
        return f.operand
    if isinstance(f, Always):
        return _simplify(Conj((_progress_syntax(f.operand, letter), f)))
    ops = tuple(_progress_syntax(op, letter) for op in f.operands)
    return _simplify(type(f)(ops))


def progress(f: Formula, valuation: Iterable[str]) -> Formula:
    """One progression step; returns ``false`` exactly when the consumed
    letter leaves no satisfying continuation."""
    letter = frozenset(valuation)
    root = f.root if isinstance(f, SafetyFormula) else f
    nxt = _step_dnf(_current(_deferred(to_nnf(root))), letter)
    if not _viable(nxt):
        return Bool(False)
    return _progress_syntax(root, letter)


def _viable(state: Dnf, budget: int = 10_000) -> bool:
    if not state:
        return False
    props = sorted(_dnf_props(state))
    letters = _letters(props)
    graph: dict[Dnf, list[Dnf]] = {}
    todo = [state]
    while todo:
        s = todo.pop()
        if s in graph:
            continue
        succs = [_step_dnf(s, a) for a in letters]
        succs = [t for t in succs if t]
        graph[s] = succs
        todo.extend(t for t in succs if t not in graph)
        if len(graph) > budget:
            raise StateBudgetExceeded("progression closure exceeds budget")
    alive = _greatest_fixpoint(graph)
    return state in alive


def _greatest_fixpoint(graph: dict) -> set:
    alive = set(graph)
    changed = True
    while changed:
        changed = False
        for s in list(alive):
            if not any(t in alive for t in graph[s]):
                alive.discard(s)
                changed = True
    return alive


def _letters(props: list[str]) -> list[frozenset[str]]:
    return [frozenset(p for i, p in enumerate(props) if mask >> i & 1) for mask in range(1 << len(props))]


# ------------------------------------------------------------------- monitors

DEFAULT_MONITOR_BUDGET = 5_000


@dataclass(frozen=True)
class Monitor:
    """Deterministic bad-prefix recognizer.

    ``table[s][mask]`` is the successor of state ``s`` on the letter whose
    bits (in ``props`` order) are set in ``mask``.  ``error`` is absorbing.
    """

    formula: Formula
    props: tuple[str, ...]
    states: tuple[Formula, ...]
    keys: tuple[Dnf, ...] = field(repr=False)
    table: tuple[tuple[int, ...], ...] = field(repr=False)
    initial: int = 0
    error: int = -1

    def letter_index(self, valuation: Iterable[str]) -> int:
        present = valuation if isinstance(valuation, (set, frozenset)) else frozenset(valuation)
        mask = 0
        for i, p in enumerate(self.props):
            if p in present:
                mask |= 1 << i
        return mask

    def step(self, state: int, valuation: Iterable[str]) -> int:
        return self.table[state][self.letter_index(valuation)]

    def run(self, word: Iterable[Iterable[str]], state: int | None = None) -> int:
        s = self.initial if state is None else state
        for letter in word:
            s = self.step(s, letter)
        return s

    def is_error(self, state: int) -> bool:
        return state == self.error

    def __len__(self) -> int:
        return len(self.states)

    def describe(self, state: int) -> str:
        return "false" if state == self.error else render(self.states[state])


def build_monitor(f: Formula | SafetyFormula, budget: int = DEFAULT_MONITOR_BUDGET) -> Monitor:
    """Closure of progression from `f`, dead states merged into ``false``."""
    root = f.root if isinstance(f, SafetyFormula) else f
    nnf = to_nnf(root)
    props = tuple(sorted(formula_props(root)))
    letters = _letters(list(props))

    start = _current(_deferred(nnf))
    keys: list[Dnf] = [start]
    shown: list[Formula] = [root]
    index = {start: 0}
    raw: list[list[int]] = []
    queue = deque([0])
    while queue:
        s = queue.popleft()
        row = []
        for letter in letters:
            t = _step_dnf(keys[s], letter)
            if t not in index:
                index[t] = len(keys)
                keys.append(t)
                shown.append(_progress_syntax(shown[s], letter) if keys[s] else Bool(False))
                queue.append(index[t])
                if len(keys) > budget:
                    raise StateBudgetExceeded(f"monitor for {render(root)!r} exceeds {budget} states")
            row.append(index[t])
        while len(raw) <= s:
            raw.append([])
        raw[s] = row

    graph = {s: [t for t in raw[s] if keys[t]] for s in range(len(keys))}
    alive = _greatest_fixpoint({s: graph[s] for s in graph if keys[s]})

    # Moore refinement; block 0 collects every dead state
    block = [1 if s in alive else 0 for s in range(len(keys))]
    while True:
        sig = {}
        new_block = []
        for s in range(len(keys)):
            key = (block[s],) + (tuple(block[t] for t in raw[s]) if s in alive else ())
            new_block.append(sig.setdefault(key, len(sig)))
        if len(sig) == len(set(block)):
            block = new_block
            break
        block = new_block

    # renumber blocks in BFS order from the start state
    order: dict[int, int] = {}
    rep: dict[int, int] = {}
    queue = deque([0])
    seen = {0}
    while queue:
        s = queue.popleft()
        b = block[s]
        if b not in order:
            order[b] = len(order)
            rep[b] = s
        for t in raw[s]:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    dead_blocks = {block[s] for s in range(len(keys)) if s not in alive}
    error_block = next(iter(dead_blocks), None)
    if error_block is None:
        error = len(order)
        order[-1] = error
    else:
        error = order[error_block]
    n = len(order)
    table = [[error] * len(letters) for _ in range(n)]
    states: list[Formula] = [Bool(False)] * n
    state_keys: list[Dnf] = [FALSE_DNF] * n
    for b, i in order.items():
        if b == -1 or b == error_block:
            continue
        s = rep[b]
        states[i] = shown[s]
        state_keys[i] = keys[s]
        table[i] = [order[block[t]] for t in raw[s]]
    return Monitor(
        formula=root,
        props=props,
        states=tuple(states),
        keys=tuple(state_keys),
        table=tuple(tuple(r) for r in table),
        initial=order[block[0]],
        error=error,
    )
