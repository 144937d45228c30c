"""Parser for the indentation-delimited plan language.

The language is a small imperative subset: one top-level ``def`` whose body
uses ``while``, ``if``/``elif``/``else``, calls, assignments, ``return``,
``break`` and ``pass``.  Lexing reuses the standard ``tokenize`` module; the
grammar (see docs/plan-language.md) is recognised by recursive descent.
"""

from __future__ import annotations

import ast as _pyast
import io
import tokenize
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import PlanSyntaxError, UnsupportedConstruct
from .system_model import UNKNOWN, PropKind, SystemSpec, map_call


@dataclass(frozen=True, order=True)
class SourceSpan:
    line: int
    column: int
    end_line: int
    end_column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}-{self.end_line}:{self.end_column}"


NO_SPAN = SourceSpan(0, 0, 0, 0)


def _span_field():
    return field(default=NO_SPAN, compare=False, repr=False)


# ------------------------------------------------------------------ expressions


@dataclass(frozen=True)
class Name:
    id: str
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class Literal:
    value: Union[str, int, float, bool, None]
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...] = ()
    kwargs: tuple[tuple[str, "Expr"], ...] = ()
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    values: tuple["Expr", ...]
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class UnaryOp:
    op: str  # "not" | "-" | "+"
    operand: "Expr"
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class Compare:
    left: "Expr"
    ops: tuple[str, ...]
    comparators: tuple["Expr", ...]
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class BinOp:
    left: "Expr"
    op: str
    right: "Expr"
    span: SourceSpan = _span_field()


Expr = Union[Name, Literal, Call, BoolOp, UnaryOp, Compare, BinOp]


# ------------------------------------------------------------------ statements


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    body: tuple["Stmt", ...]
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class While:
    cond: "Condition"
    body: tuple["Stmt", ...]
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class IfChain:
    arms: tuple[tuple["Condition", tuple["Stmt", ...]], ...]
    orelse: Optional[tuple["Stmt", ...]] = None
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class Assign:
    targets: tuple[str, ...]
    value: Expr
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class Return:
    value: Optional[Expr] = None
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class Break:
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr
    span: SourceSpan = _span_field()


@dataclass(frozen=True)
class NoOp:
    text: str = "pass"
    span: SourceSpan = _span_field()


Stmt = Union[While, IfChain, Assign, Return, Break, ExprStmt, NoOp]


# ------------------------------------------------------------------ resolved conditions


@dataclass(frozen=True)
class CAtom:
    prop: str


@dataclass(frozen=True)
class CUnknown:
    key: str


@dataclass(frozen=True)
class CConst:
    value: bool


@dataclass(frozen=True)
class CNot:
    operand: "CondExpr"


@dataclass(frozen=True)
class CAnd:
    operands: tuple["CondExpr", ...]


@dataclass(frozen=True)
class COr:
    operands: tuple["CondExpr", ...]


CondExpr = Union[CAtom, CUnknown, CConst, CNot, CAnd, COr]


@dataclass(frozen=True)
class Effect:
    """An execution call evaluated while testing a condition."""

    prop: str
    call: Call


@dataclass(frozen=True)
class ResolvedCond:
    tree: CondExpr
    effects: tuple[Effect, ...]
    source: Expr

    @property
    def text(self) -> str:
        return print_expr(self.source)


Condition = Union[Expr, ResolvedCond]


@dataclass(frozen=True)
class PlanAst:
    root: FunctionDef
    source: str = field(default="", compare=False, repr=False)


# ------------------------------------------------------------------ parser

_UNSUPPORTED_KEYWORDS = {
    "for": "for loops",
    "try": "exception handling",
    "except": "exception handling",
    "finally": "exception handling",
    "raise": "exceptions",
    "with": "context managers",
    "class": "class definitions",
    "lambda": "lambda expressions",
    "yield": "generators",
    "async": "coroutines",
    "await": "coroutines",
    "global": "global declarations",
    "nonlocal": "nonlocal declarations",
    "del": "del statements",
    "assert": "assert statements",
    "continue": "continue statements",
    "import": "imports inside a plan",
    "from": "imports inside a plan",
}
_COMPARE_OPS = {"==", "!=", "<", ">", "<=", ">="}
_AUG_OPS = {"+=": "+", "-=": "-", "*=": "*", "/=": "/"}
_NOOP_CALLS = {"time.sleep", "sleep"}

_Tok = tokenize.TokenInfo


def _lex(text: str) -> list[_Tok]:
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.lstrip(" ")
        if stripped.startswith("\t"):
            raise PlanSyntaxError("tab indentation is not allowed", lineno, len(line) - len(stripped) + 1)
    toks: list[_Tok] = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(text).readline):
            if tok.type in (tokenize.COMMENT, tokenize.NL, tokenize.ENCODING):
                continue
            if tok.type == tokenize.ERRORTOKEN and not tok.string.isspace():
                raise PlanSyntaxError(f"invalid character {tok.string!r}", tok.start[0], tok.start[1] + 1)
            if tok.type == tokenize.ERRORTOKEN:
                continue
            toks.append(tok)
    except IndentationError as exc:
        raise PlanSyntaxError(f"inconsistent indentation ({exc.msg})", exc.lineno or 0, (exc.offset or 0) or 1) from None
    except tokenize.TokenError as exc:
        msg, (line, col) = exc.args
        raise PlanSyntaxError(f"unexpected end of input ({msg})", line, col + 1) from None
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def at(self, string: str, type_: Optional[int] = None) -> bool:
        t = self.tok
        if type_ is not None and t.type != type_:
            return False
        return t.string == string and t.type in (tokenize.OP, tokenize.NAME)

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Optional[_Tok] = None) -> PlanSyntaxError:
        t = tok or self.tok
        return PlanSyntaxError(msg, t.start[0], t.start[1] + 1)

    def expect(self, string: str) -> _Tok:
        if not self.at(string):
            found = self.tok.string or tokenize.tok_name[self.tok.type]
            raise self.error(f"expected {string!r}, found {found!r}")
        return self.advance()

    def expect_type(self, type_: int, what: str) -> _Tok:
        if self.tok.type != type_:
            found = self.tok.string.strip() or tokenize.tok_name[self.tok.type]
            raise self.error(f"expected {what}, found {found!r}")
        return self.advance()

    def span_from(self, start: _Tok) -> SourceSpan:
        j = self.i - 1
        while j > 0 and self.toks[j].type in (tokenize.NEWLINE, tokenize.INDENT, tokenize.DEDENT):
            j -= 1
        end = self.toks[j]
        return SourceSpan(start.start[0], start.start[1] + 1, end.end[0], end.end[1] + 1)

    def unsupported(self, tok: _Tok, what: str) -> UnsupportedConstruct:
        return UnsupportedConstruct(f"unsupported construct: {what}", tok.start[0], tok.start[1] + 1)

    # top level
    def plan(self) -> FunctionDef:
        func: Optional[FunctionDef] = None
        while self.tok.type != tokenize.ENDMARKER:
            if self.tok.type == tokenize.NEWLINE:
                self.advance()
            elif self.at("def"):
                if func is not None:
                    raise self.unsupported(self.tok, "more than one top-level function")
                func = self.funcdef()
            elif self.at("import") or self.at("from"):
                self.import_stmt()
            else:
                raise self.error("expected a top-level 'def'")
        if func is None:
            raise self.error("plan contains no function definition")
        return func

    def import_stmt(self) -> None:
        while self.tok.type not in (tokenize.NEWLINE, tokenize.ENDMARKER):
            self.advance()

    def funcdef(self) -> FunctionDef:
        start = self.expect("def")
        name = self.expect_type(tokenize.NAME, "function name").string
        self.expect("(")
        params: list[str] = []
        while not self.at(")"):
            params.append(self.expect_type(tokenize.NAME, "parameter name").string)
            if self.at("="):
                raise self.unsupported(self.tok, "default parameter values")
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        self.expect(":")
        body = self.suite()
        return FunctionDef(name, tuple(params), body, self.span_from(start))

    def suite(self) -> tuple[Stmt, ...]:
        if self.tok.type != tokenize.NEWLINE:
            return (self.simple_stmt(),)
        self.advance()
        self.expect_type(tokenize.INDENT, "an indented block")
        body: list[Stmt] = []
        while self.tok.type != tokenize.DEDENT:
            if self.tok.type == tokenize.NEWLINE:
                self.advance()
                continue
            body.append(self.statement())
        self.advance()
        return tuple(body)

    def statement(self) -> Stmt:
        t = self.tok
        if t.type == tokenize.NAME:
            if t.string == "while":
                return self.while_stmt()
            if t.string == "if":
                return self.if_stmt()
            if t.string == "def":
                raise self.unsupported(t, "nested function definitions")
            if t.string in ("elif", "else"):
                raise self.error(f"{t.string!r} without a matching 'if'")
        if t.type == tokenize.INDENT:
            raise self.error("unexpected indentation")
        return self.simple_stmt()

    def end_of_simple(self) -> None:
        if self.tok.type == tokenize.ENDMARKER:
            return
        if self.at(";"):
            raise self.unsupported(self.tok, "semicolon-separated statements")
        self.expect_type(tokenize.NEWLINE, "end of line")

    def simple_stmt(self) -> Stmt:
        start = self.tok
        word = start.string if start.type == tokenize.NAME else ""
        if word in _UNSUPPORTED_KEYWORDS:
            raise self.unsupported(start, _UNSUPPORTED_KEYWORDS[word])
        if word == "pass":
            self.advance()
            node: Stmt = NoOp("pass", self.span_from(start))
        elif word == "break":
            self.advance()
            node = Break(self.span_from(start))
        elif word == "return":
            self.advance()
            value = None
            if self.tok.type not in (tokenize.NEWLINE, tokenize.ENDMARKER):
                value = self.expr()
            node = Return(value, self.span_from(start))
        else:
            node = self.expr_or_assign()
        self.end_of_simple()
        return node

    def expr_or_assign(self) -> Stmt:
        start = self.tok
        first = self.target_list_or_expr()
        if self.at("="):
            targets: list[str] = []
            value: Expr = first
            while self.at("="):
                targets.extend(self._targets(value, start))
                self.advance()
                value = self.target_list_or_expr()
            return Assign(tuple(targets), value, self.span_from(start))
        if self.tok.type == tokenize.OP and self.tok.string in _AUG_OPS:
            op = _AUG_OPS[self.advance().string]
            (target,) = self._targets(first, start)
            value = self.expr()
            rhs = BinOp(Name(target, first.span), op, value, self.span_from(start))
            return Assign((target,), rhs, self.span_from(start))
        if self.tok.type == tokenize.OP and self.tok.string.endswith("=") and self.tok.string not in _COMPARE_OPS:
            raise self.unsupported(self.tok, f"operator {self.tok.string}")
        if isinstance(first, Call) and first.func in _NOOP_CALLS:
            return NoOp(print_expr(first), self.span_from(start))
        return ExprStmt(first, self.span_from(start))

    def target_list_or_expr(self) -> Expr:
        start = self.tok
        first = self.expr()
        if not self.at(","):
            return first
        items = [first]
        while self.at(","):
            self.advance()
            items.append(self.expr())
        if all(isinstance(x, Name) for x in items):
            # tuple targets are encoded as a comma-joined name
            return Name(", ".join(x.id for x in items), self.span_from(start))
        raise self.unsupported(start, "tuple expressions")

    def _targets(self, e: Expr, tok: _Tok) -> list[str]:
        if isinstance(e, Name):
            return [part.strip() for part in e.id.split(",")]
        raise self.unsupported(tok, "assignment to a non-name target")

    def while_stmt(self) -> While:
        start = self.expect("while")
        cond = self.expr()
        self.expect(":")
        body = self.suite()
        if self.at("else"):
            raise self.unsupported(self.tok, "while/else")
        return While(cond, body, self.span_from(start))

    def if_stmt(self) -> IfChain:
        start = self.expect("if")
        arms = []
        cond = self.expr()
        self.expect(":")
        arms.append((cond, self.suite()))
        orelse = None
        while self.at("elif"):
            self.advance()
            cond = self.expr()
            self.expect(":")
            arms.append((cond, self.suite()))
        if self.at("else"):
            self.advance()
            self.expect(":")
            orelse = self.suite()
        return IfChain(tuple(arms), orelse, self.span_from(start))

    # expressions
    def expr(self) -> Expr:
        if self.at("lambda"):
            raise self.unsupported(self.tok, "lambda expressions")
        start = self.tok
        e = self.or_test()
        if self.at("if"):
            raise self.unsupported(start, "conditional expressions")
        return e

    def or_test(self) -> Expr:
        start = self.tok
        values = [self.and_test()]
        while self.at("or"):
            self.advance()
            values.append(self.and_test())
        return values[0] if len(values) == 1 else BoolOp("or", tuple(values), self.span_from(start))

    def and_test(self) -> Expr:
        start = self.tok
        values = [self.not_test()]
        while self.at("and"):
            self.advance()
            values.append(self.not_test())
        return values[0] if len(values) == 1 else BoolOp("and", tuple(values), self.span_from(start))

    def not_test(self) -> Expr:
        if self.at("not"):
            start = self.advance()
            operand = self.not_test()
            return UnaryOp("not", operand, self.span_from(start))
        return self.comparison()

    def comp_op(self) -> Optional[str]:
        t = self.tok
        if t.type == tokenize.OP and t.string in _COMPARE_OPS:
            self.advance()
            return t.string
        if self.at("in"):
            self.advance()
            return "in"
        if self.at("not") and self.toks[self.i + 1].string == "in":
            self.advance()
            self.advance()
            return "not in"
        if self.at("is"):
            self.advance()
            if self.at("not"):
                self.advance()
                return "is not"
            return "is"
        return None

    def comparison(self) -> Expr:
        start = self.tok
        left = self.arith()
        ops: list[str] = []
        rights: list[Expr] = []
        while True:
            op = self.comp_op()
            if op is None:
                break
            ops.append(op)
            rights.append(self.arith())
        if not ops:
            return left
        return Compare(left, tuple(ops), tuple(rights), self.span_from(start))

    def arith(self) -> Expr:
        start = self.tok
        left = self.term()
        while self.tok.type == tokenize.OP and self.tok.string in ("+", "-"):
            op = self.advance().string
            left = BinOp(left, op, self.term(), self.span_from(start))
        return left

    def term(self) -> Expr:
        start = self.tok
        left = self.factor()
        while self.tok.type == tokenize.OP and self.tok.string in ("*", "/", "//", "%"):
            op = self.advance().string
            left = BinOp(left, op, self.factor(), self.span_from(start))
        return left

    def factor(self) -> Expr:
        if self.tok.type == tokenize.OP and self.tok.string in ("-", "+"):
            start = self.advance()
            operand = self.factor()
            return UnaryOp(start.string, operand, self.span_from(start))
        return self.postfix()

    def postfix(self) -> Expr:
        start = self.tok
        e = self.atom()
        while True:
            if self.at("."):
                self.advance()
                attr = self.expect_type(tokenize.NAME, "attribute name").string
                if not isinstance(e, Name):
                    raise self.unsupported(start, "attribute access on an expression")
                e = Name(f"{e.id}.{attr}", self.span_from(start))
            elif self.at("("):
                if not isinstance(e, Name):
                    raise self.unsupported(start, "calling a computed value")
                e = self.call_args(e.id, start)
            elif self.at("["):
                raise self.unsupported(self.tok, "subscripts")
            else:
                return e

    def call_args(self, func: str, start: _Tok) -> Call:
        self.expect("(")
        args: list[Expr] = []
        kwargs: list[tuple[str, Expr]] = []
        while not self.at(")"):
            if self.tok.type == tokenize.OP and self.tok.string in ("*", "**"):
                raise self.unsupported(self.tok, "argument unpacking")
            if self.tok.type == tokenize.NAME and self.toks[self.i + 1].string == "=" and self.toks[self.i + 1].type == tokenize.OP:
                key = self.advance().string
                self.advance()
                kwargs.append((key, self.expr()))
            else:
                if kwargs:
                    raise self.error("positional argument after keyword argument")
                args.append(self.expr())
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        return Call(func, tuple(args), tuple(kwargs), self.span_from(start))

    def atom(self) -> Expr:
        t = self.tok
        if t.type == tokenize.NAME:
            if t.string in ("True", "False", "None"):
                self.advance()
                return Literal({"True": True, "False": False, "None": None}[t.string], self.span_from(t))
            if t.string in _UNSUPPORTED_KEYWORDS:
                raise self.unsupported(t, _UNSUPPORTED_KEYWORDS[t.string])
            if t.string in ("and", "or", "not", "if", "else", "elif", "while", "def", "pass", "break", "return", "in", "is"):
                raise self.error(f"unexpected keyword {t.string!r}")
            self.advance()
            return Name(t.string, self.span_from(t))
        if t.type == tokenize.NUMBER:
            self.advance()
            try:
                value = _pyast.literal_eval(t.string)
            except (ValueError, SyntaxError):
                raise self.error(f"invalid number {t.string!r}", t) from None
            if isinstance(value, complex):
                raise self.unsupported(t, "complex numbers")
            return Literal(value, self.span_from(t))
        if t.type == tokenize.STRING:
            parts = []
            while self.tok.type == tokenize.STRING:
                s = self.advance()
                if s.string.lstrip("rRbBuU")[:1] not in ("'", '"') or s.string[:1] in "fFbB":
                    raise self.unsupported(s, "non-plain string literals")
                parts.append(_pyast.literal_eval(s.string))
            return Literal("".join(parts), self.span_from(t))
        if self.at("("):
            self.advance()
            if self.at(")"):
                raise self.unsupported(t, "tuple expressions")
            e = self.expr()
            if self.at(","):
                raise self.unsupported(t, "tuple expressions")
            self.expect(")")
            return e
        if self.at("[") or self.at("{"):
            raise self.unsupported(t, "collection literals")
        found = t.string.strip() or tokenize.tok_name[t.type]
        raise self.error(f"unexpected {found!r}")


def parse_plan(text: str) -> PlanAst:
    """Parse plan source into an AST with 1-based source spans.

    >>> parse_plan("def f():\\n    pass\\n").root.body
    (NoOp(text='pass'),)
    """
    root = _Parser(text).plan()
    _check_breaks(root.body, in_loop=False)
    return PlanAst(root=root, source=text)


def _check_breaks(body, in_loop: bool) -> None:
    for stmt in body:
        if isinstance(stmt, Break) and not in_loop:
            raise PlanSyntaxError("'break' outside loop", stmt.span.line, stmt.span.column)
        if isinstance(stmt, While):
            _check_breaks(stmt.body, True)
        elif isinstance(stmt, IfChain):
            for _, arm in stmt.arms:
                _check_breaks(arm, in_loop)
            if stmt.orelse is not None:
                _check_breaks(stmt.orelse, in_loop)


# ------------------------------------------------------------------ printer

_PREC = {"or": 1, "and": 2, "not": 3, "cmp": 4, "+": 5, "-": 5, "*": 6, "/": 6, "//": 6, "%": 6, "unary": 7}


def _prec(e: Expr) -> int:
    if isinstance(e, BoolOp):
        return _PREC[e.op]
    if isinstance(e, UnaryOp):
        return _PREC["not"] if e.op == "not" else _PREC["unary"]
    if isinstance(e, Compare):
        return _PREC["cmp"]
    if isinstance(e, BinOp):
        return _PREC[e.op]
    return 9


def _child(e: Expr, min_prec: int) -> str:
    text = print_expr(e)
    return f"({text})" if _prec(e) < min_prec else text


def print_expr(e: Expr) -> str:
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Literal):
        if isinstance(e.value, str):
            return _quote(e.value)
        return repr(e.value)
    if isinstance(e, Call):
        parts = [print_expr(a) for a in e.args] + [f"{k}={print_expr(v)}" for k, v in e.kwargs]
        return f"{e.func}({', '.join(parts)})"
    if isinstance(e, BoolOp):
        p = _PREC[e.op]
        return f" {e.op} ".join(_child(v, p + 1) for v in e.values)
    if isinstance(e, UnaryOp):
        if e.op == "not":
            return "not " + _child(e.operand, _PREC["not"])
        return e.op + _child(e.operand, _PREC["unary"])
    if isinstance(e, Compare):
        out = _child(e.left, _PREC["cmp"] + 1)
        for op, right in zip(e.ops, e.comparators):
            out += f" {op} " + _child(right, _PREC["cmp"] + 1)
        return out
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        return f"{_child(e.left, p)} {e.op} {_child(e.right, p + 1)}"
    raise TypeError(f"not an expression: {e!r}")


def _quote(s: str) -> str:
    body = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{body}"'


def _cond_text(c: Condition) -> str:
    return print_expr(c.source if isinstance(c, ResolvedCond) else c)


def print_plan(plan: PlanAst | FunctionDef, indent: str = "    ") -> str:
    """Pretty-print; ``parse_plan(print_plan(p)) == p``."""
    root = plan.root if isinstance(plan, PlanAst) else plan
    lines = [f"def {root.name}({', '.join(root.params)}):"]
    _print_body(root.body, 1, indent, lines)
    return "\n".join(lines) + "\n"


def _print_body(body, depth: int, indent: str, lines: list[str]) -> None:
    pad = indent * depth
    if not body:
        lines.append(pad + "pass")
    for stmt in body:
        if isinstance(stmt, While):
            lines.append(f"{pad}while {_cond_text(stmt.cond)}:")
            _print_body(stmt.body, depth + 1, indent, lines)
        elif isinstance(stmt, IfChain):
            for k, (cond, arm) in enumerate(stmt.arms):
                lines.append(f"{pad}{'if' if k == 0 else 'elif'} {_cond_text(cond)}:")
                _print_body(arm, depth + 1, indent, lines)
            if stmt.orelse is not None:
                lines.append(f"{pad}else:")
                _print_body(stmt.orelse, depth + 1, indent, lines)
        elif isinstance(stmt, Assign):
            lines.append(f"{pad}{' = '.join(stmt.targets)} = {print_expr(stmt.value)}")
        elif isinstance(stmt, Return):
            lines.append(pad + ("return" if stmt.value is None else f"return {print_expr(stmt.value)}"))
        elif isinstance(stmt, Break):
            lines.append(pad + "break")
        elif isinstance(stmt, ExprStmt):
            lines.append(pad + print_expr(stmt.expr))
        elif isinstance(stmt, NoOp):
            lines.append(pad + stmt.text)
        else:
            raise TypeError(f"not a statement: {stmt!r}")


# ------------------------------------------------------------------ traversal helpers


def iter_nodes(node):
    """Preorder walk over statements and expressions."""
    yield node
    if isinstance(node, PlanAst):
        yield from iter_nodes(node.root)
    elif isinstance(node, FunctionDef):
        for s in node.body:
            yield from iter_nodes(s)
    elif isinstance(node, While):
        yield from iter_nodes(node.cond.source if isinstance(node.cond, ResolvedCond) else node.cond)
        for s in node.body:
            yield from iter_nodes(s)
    elif isinstance(node, IfChain):
        for cond, arm in node.arms:
            yield from iter_nodes(cond.source if isinstance(cond, ResolvedCond) else cond)
            for s in arm:
                yield from iter_nodes(s)
        for s in node.orelse or ():
            yield from iter_nodes(s)
    elif isinstance(node, Assign):
        yield from iter_nodes(node.value)
    elif isinstance(node, Return) and node.value is not None:
        yield from iter_nodes(node.value)
    elif isinstance(node, ExprStmt):
        yield from iter_nodes(node.expr)
    elif isinstance(node, Call):
        for a in node.args:
            yield from iter_nodes(a)
        for _, v in node.kwargs:
            yield from iter_nodes(v)
    elif isinstance(node, BoolOp):
        for v in node.values:
            yield from iter_nodes(v)
    elif isinstance(node, UnaryOp):
        yield from iter_nodes(node.operand)
    elif isinstance(node, Compare):
        yield from iter_nodes(node.left)
        for c in node.comparators:
            yield from iter_nodes(c)
    elif isinstance(node, BinOp):
        yield from iter_nodes(node.left)
        yield from iter_nodes(node.right)


# ------------------------------------------------------------------ condition resolution


def call_args(call: Call) -> list:
    """Literal argument values, `UNKNOWN` for anything computed."""
    out = []
    for a in call.args:
        if isinstance(a, Literal) and a.value is not None:
            out.append(a.value if isinstance(a.value, str) else repr(a.value))
        else:
            out.append(UNKNOWN)
    return out


def exec_effects(e: Expr, system: SystemSpec) -> tuple[Effect, ...]:
    """Mapped execution calls inside `e`, in evaluation order."""
    out: list[Effect] = []

    def visit(x: Expr) -> None:
        if isinstance(x, Call):
            for a in x.args:
                visit(a)
            for _, v in x.kwargs:
                visit(v)
            prop = map_call(system, x.func, call_args(x))
            if prop is not None and system.prop(prop).kind is PropKind.EXEC:
                out.append(Effect(prop, x))
        elif isinstance(x, BoolOp):
            for v in x.values:
                visit(v)
        elif isinstance(x, UnaryOp):
            visit(x.operand)
        elif isinstance(x, Compare):
            visit(x.left)
            for c in x.comparators:
                visit(c)
        elif isinstance(x, BinOp):
            visit(x.left)
            visit(x.right)

    visit(e)
    return tuple(out)


def resolve_expr(e: Expr, system: SystemSpec) -> ResolvedCond:
    def tree(x: Expr) -> CondExpr:
        if isinstance(x, Literal):
            return CConst(bool(x.value))
        if isinstance(x, BoolOp):
            parts = tuple(tree(v) for v in x.values)
            return CAnd(parts) if x.op == "and" else COr(parts)
        if isinstance(x, UnaryOp) and x.op == "not":
            return CNot(tree(x.operand))
        if isinstance(x, Call):
            prop = map_call(system, x.func, call_args(x))
            if prop is not None and system.prop(prop).kind is PropKind.SENSOR:
                return CAtom(prop)
        return CUnknown(print_expr(x))

    return ResolvedCond(tree(e), exec_effects(e, system), e)


def resolve_conditions(plan: PlanAst, system: SystemSpec) -> PlanAst:
    """Rewrite every loop/branch condition into a `ResolvedCond`."""

    def cond(c: Condition) -> ResolvedCond:
        return c if isinstance(c, ResolvedCond) else resolve_expr(c, system)

    def body(stmts):
        out = []
        for s in stmts:
            if isinstance(s, While):
                s = replace(s, cond=cond(s.cond), body=body(s.body))
            elif isinstance(s, IfChain):
                arms = tuple((cond(c), body(b)) for c, b in s.arms)
                s = replace(s, arms=arms, orelse=None if s.orelse is None else body(s.orelse))
            out.append(s)
        return tuple(out)

    return PlanAst(root=replace(plan.root, body=body(plan.root.body)), source=plan.source)
