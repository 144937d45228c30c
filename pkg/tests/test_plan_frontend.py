from __future__ import annotations

import keyword

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safeplan.errors import PlanSyntaxError, UnsupportedConstruct
from safeplan.fixtures import list_fixtures, load_fixture_plan, load_fixture_system
from safeplan.plan_frontend import (
    UNKNOWN,
    Assign,
    BoolOp,
    Break,
    CAnd,
    CAtom,
    CConst,
    CNot,
    Call,
    Compare,
    CUnknown,
    ExprStmt,
    FunctionDef,
    IfChain,
    Literal,
    Name,
    NoOp,
    PlanAst,
    Return,
    UnaryOp,
    While,
    call_args,
    iter_nodes,
    parse_plan,
    print_plan,
    resolve_conditions,
    resolve_expr,
)


def parse_body(src: str):
    return parse_plan(src).root.body


def test_turn_right_2_structure():
    root = parse_plan(load_fixture_plan("turn_right_90_degrees_2")).root
    assert isinstance(root, FunctionDef) and root.name == "turn_right_90_degrees_2"
    loop = root.body[-1]
    assert isinstance(loop, While) and loop.cond == Literal(True)
    (chain,) = loop.body
    assert isinstance(chain, IfChain)
    (cond, body), = chain.arms
    assert cond == Call("pedestrian_observed")
    assert body == (ExprStmt(Call("stop")),)
    assert chain.orelse == (ExprStmt(Call("velocity_publisher", (Name("linear"), Name("angular")))),)


def test_empty_plan_is_single_noop():
    root = parse_plan("def f():\n    pass\n").root
    assert root.body == (NoOp("pass"),)


def test_bring_backpack_1_comparison_condition():
    plan = parse_plan(load_fixture_plan("bring_backpack_1"))
    compares = [n for n in iter_nodes(plan.root) if isinstance(n, Compare)]
    assert compares == [Compare(Name("response"), ("==",), (Literal("Yes"),))]
    system = load_fixture_system("codebotler")
    tree = resolve_expr(compares[0], system).tree
    assert isinstance(tree, CUnknown)


def test_resolve_compound_sensor_condition():
    system = load_fixture_system("codebotler")
    expr = BoolOp("and", (Call("is_in_room", (Literal("backpack"),)), Call("is_in_room", (Literal("person"),))))
    assert resolve_expr(expr, system).tree == CAnd((CAtom("backpack"), CAtom("person")))
    assert resolve_expr(Literal(True), system).tree == CConst(True)
    neg = resolve_expr(UnaryOp("not", Call("is_in_room", (Literal("backpack"),))), system)
    assert neg.tree == CNot(CAtom("backpack"))


def test_resolve_conditions_rewrites_every_condition():
    system = load_fixture_system("codebotler")
    plan = resolve_conditions(parse_plan(load_fixture_plan("bring_backpack_2")), system)
    loops = [n for n in iter_nodes(plan.root) if isinstance(n, While)]
    chains = [n for n in iter_nodes(plan.root) if isinstance(n, IfChain)]
    assert loops and chains
    for n in loops:
        assert hasattr(n.cond, "tree")
    for n in chains:
        assert all(hasattr(c, "tree") for c, _ in n.arms)


def test_call_args_marks_non_literals_unknown():
    assert call_args(Call("f", (Literal("x"), Name("v"), Literal(3)))) == ["x", UNKNOWN, "3"]


def test_elif_normalizes_into_arms():
    src = "def f():\n    if a():\n        x()\n    elif b():\n        y()\n    else:\n        z()\n"
    (chain,) = parse_body(src)
    assert len(chain.arms) == 2 and chain.orelse == (ExprStmt(Call("z")),)


def test_sleep_is_noop_and_augmented_assignment_desugars():
    body = parse_body("def f():\n    time.sleep(1)\n    d += 0.5\n")
    assert isinstance(body[0], NoOp)
    assert isinstance(body[1], Assign) and body[1].targets == ("d",)


@pytest.mark.parametrize(
    "src",
    [
        "def f():\n    for i in range(3):\n        stop()\n",
        "def f():\n    try:\n        stop()\n    except:\n        pass\n",
        "def f():\n    def g():\n        pass\n",
        "def f():\n    with x:\n        pass\n",
        "def f():\n    x = [1, 2]\n",
        "def f():\n    while True:\n        continue\n",
        "def f():\n    stop(); go()\n",
    ],
)
def test_unsupported_constructs(src):
    with pytest.raises(UnsupportedConstruct):
        parse_plan(src)


@pytest.mark.parametrize(
    "src, line",
    [
        ("def f():\n\tstop()\n", 2),
        ("def f():\n    stop(\n", 3),
        ("def f():\n    if x\n        stop()\n", 2),
        ("def f():\n    break\n", 2),
        ("stop()\n", 1),
        ("def f():\n    pass\ndef g():\n    pass\n", 3),
    ],
)
def test_syntax_errors_carry_position(src, line):
    with pytest.raises(PlanSyntaxError) as info:
        parse_plan(src)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


@pytest.mark.parametrize("name", list_fixtures("plans"))
def test_fixture_plans_parse_and_round_trip(name):
    text = load_fixture_plan(name)
    plan = parse_plan(text)
    assert parse_plan(print_plan(plan)) == plan


@pytest.mark.parametrize("name", list_fixtures("plans"))
def test_spans_lie_within_source(name):
    text = load_fixture_plan(name)
    lines = text.splitlines()
    for node in iter_nodes(parse_plan(text).root):
        span = getattr(node, "span", None)
        if span is None:
            continue
        assert 1 <= span.line <= span.end_line <= len(lines)
        assert 1 <= span.column <= len(lines[span.line - 1]) + 1
        assert span.end_column <= len(lines[span.end_line - 1]) + 1


# ------------------------------------------------------------------ round-trip property

IDENT = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True).filter(
    lambda s: not keyword.iskeyword(s) and s not in {"sleep", "true", "false", "none"}
)
LITERALS = st.one_of(
    st.integers(0, 999).map(Literal),
    st.sampled_from([0.5, 1.25, 10.0]).map(Literal),
    st.text(st.sampled_from("abc XYZ?!"), max_size=6).map(Literal),
    st.sampled_from([True, False, None]).map(Literal),
)


def exprs():
    leaf = st.one_of(IDENT.map(Name), LITERALS)
    return st.recursive(
        leaf,
        lambda inner: st.one_of(
            st.builds(lambda f, a: Call(f, tuple(a)), IDENT, st.lists(inner, max_size=2)),
            st.builds(lambda op, vs: BoolOp(op, tuple(vs)), st.sampled_from(["and", "or"]), st.lists(inner, min_size=2, max_size=3)),
            inner.map(lambda e: UnaryOp("not", e)),
            st.builds(lambda a, op, b: Compare(a, (op,), (b,)), inner, st.sampled_from(["==", "<", ">=", "!="]), inner),
        ),
        max_leaves=6,
    )


def stmts(in_loop: bool, depth: int):
    simple = [
        st.builds(lambda f, a: ExprStmt(Call(f, tuple(a))), IDENT, st.lists(exprs(), max_size=2)),
        st.builds(lambda t, v: Assign((t,), v), IDENT, exprs()),
        st.just(NoOp("pass")),
        st.one_of(st.none(), exprs()).map(Return),
    ]
    if in_loop:
        simple.append(st.just(Break()))
    options = list(simple)
    if depth > 0:
        options.append(st.builds(lambda c, b: While(c, tuple(b)), exprs(), st.lists(stmts(True, depth - 1), min_size=1, max_size=3)))
        options.append(
            st.builds(
                lambda arms, orelse: IfChain(tuple((c, tuple(b)) for c, b in arms), tuple(orelse) if orelse else None),
                st.lists(st.tuples(exprs(), st.lists(stmts(in_loop, depth - 1), min_size=1, max_size=2)), min_size=1, max_size=3),
                st.one_of(st.none(), st.lists(stmts(in_loop, depth - 1), min_size=1, max_size=2)),
            )
        )
    return st.one_of(*options)


@settings(max_examples=150, deadline=None)
@given(IDENT, st.lists(stmts(False, 2), min_size=1, max_size=4))
def test_print_parse_round_trip(name, body):
    plan = PlanAst(FunctionDef(name, (), tuple(body)))
    text = print_plan(plan)
    assert parse_plan(text) == plan
