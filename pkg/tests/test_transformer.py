from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import PROPERTY
from oracles import gamblers_ruin, geometric_halting, naive_value_iteration, naive_wp
from pgcl_term.errors import LoopNotAllowed, NegativeExpectation, PgclError, ProbabilityOutOfRange
from pgcl_term.parser import parse_bexpr, parse_domain, parse_expr, parse_program
from pgcl_term.syntax import (
    And,
    Assign,
    BinOp,
    Call,
    Iverson,
    Lit,
    Not,
    PChoice,
    State,
    Var,
    compiled,
    eval_expr,
)
from pgcl_term.transformer import (
    Table,
    ValueIteration,
    awp_eval,
    loop_value_iteration,
    monus,
    reachable_states,
    wp_eval,
    wp_symbolic,
)
from strategies import (
    loop_free,
    loop_free_det,
    nonneg_rat,
    post_expr,
    states,
    with_loops,
    x_body,
    x_guard,
)

F = Fraction
X = Var("x")
APP_D = "{ {x := 1} [1/3] {x := 0} } [] { {x := 0} [1/3] {x := 1} }"
GEOMETRIC = "while (x != 0) { {x := 0} [1/2] {skip} }"
APP_C = "while (x != 0) { if (x = 1) { {x := 0} [1/2] {x := 2} } else { x := 2 } }"
BIASED = "while (x > 0) { {x := x-1} [1/3] {x := x+1} }"
DEMONIC_BODY = "{x := x-1} [1/2] { {x := x+1} [] {skip} }"


def wp(text, post, fuel=64, **s):
    return wp_eval(parse_program(text), parse_expr(post), State(**s), fuel)


def post_fn(text):
    e = parse_expr(text)
    return lambda s: eval_expr(e, s)


# ------------------------------------------------------------------ wp_eval

def test_demonic_choice_takes_minimum():
    assert min(F(4), F(3)) == 3
    r = wp("{x := x+1} [] {skip}", "x", x=3)
    assert r.value == 3 and r.exact


@pytest.mark.parametrize("post, expected", [("iverson(x=1)", F(1, 3)), ("iverson(x=0)", F(1, 3)),
                                            ("iverson(x=1)+iverson(x=0)", F(1))])
def test_additivity_failure(post, expected):
    prog = parse_program(APP_D)
    for x0 in (0, 1, 7):
        assert naive_wp(prog, post_fn(post), State(x=x0)) == expected
        r = wp_eval(prog, parse_expr(post), State(x=x0))
        assert r.value == expected and r.exact


def test_geometric_loop_with_ten_unfoldings():
    assert geometric_halting(10) == F(1023, 1024)
    prog = parse_program(GEOMETRIC)
    assert naive_wp(prog, lambda s: F(1), State(x=1), fuel=10) == F(1023, 1024)
    r = wp_eval(prog, Lit(F(1)), State(x=1), fuel=10)
    assert r.value == F(1023, 1024) and not r.exact


def test_loop_that_never_runs_is_exact():
    r = wp(GEOMETRIC, "1", x=0)
    assert r.value == 1 and r.exact


def test_loop_exits_found_within_fuel_are_exact():
    # deterministic countdown: 3 body executions, fuel 3 is enough
    r = wp("while (x > 0) { x := x - 1 }", "x + 1", fuel=3, x=3)
    assert r.value == 1 and r.exact
    r = wp("while (x > 0) { x := x - 1 }", "x + 1", fuel=2, x=3)
    assert r.value == 0 and not r.exact


def test_probability_out_of_range():
    with pytest.raises(ProbabilityOutOfRange) as info:
        wp("{skip} [x] {skip}", "1", x=F(3, 2))
    assert info.value.state == State(x=F(3, 2))


def test_zero_probability_branch_is_not_evaluated():
    r = wp("{x := 1/y} [0] {skip}", "x", x=1, y=0)
    assert r.value == 1


def test_negative_post_is_rejected():
    with pytest.raises(NegativeExpectation):
        wp("x := x - 5", "x", x=1)


def test_fuel_must_be_positive():
    with pytest.raises(ValueError):
        wp("skip", "1", fuel=0)


# ----------------------------------------------------------------- awp_eval

def test_angelic_choice_takes_maximum():
    assert awp_eval(parse_program("{x := x+1} [] {skip}"), X, State(x=3)) == 4


def test_demonic_walk_body_is_angelic_martingale():
    # 1/2 (x-1) + 1/2 max(x+1, x) = x
    assert F(1, 2) * 4 + F(1, 2) * max(6, 5) == 5
    assert awp_eval(parse_program(DEMONIC_BODY), X, State(x=5)) == 5


def test_awp_equals_wp_without_demonic_choice():
    p = parse_program("{x := x-1} [1/3] {x := 2*x}")
    s = State(x=4)
    assert awp_eval(p, X, s) == wp_eval(p, X, s).value == F(1, 3) * 3 + F(2, 3) * 8


def test_awp_rejects_loops():
    with pytest.raises(LoopNotAllowed):
        awp_eval(parse_program(GEOMETRIC), Lit(F(1)), State(x=1))


# -------------------------------------------------------------------- monus

def test_monus_values():
    assert monus(F(5), F(3)) == 2
    assert monus(F(3), F(5)) == 0


def test_monus_scaling_by_one_over_h():
    assert monus(F(1), F(1, 2)) == F(1, 2)
    for h in (F(1), F(2), F(10), F(1, 3)):
        for v in (F(0), F(1, 2), F(5)):
            assert monus(h, v) / h == monus(F(1), v / h)


# ---------------------------------------------------------- value iteration

def test_counterexample_loop_halts_with_probability_half():
    prog = parse_program(APP_C)
    dom = parse_domain("x=0..10")
    oracle = naive_value_iteration(prog.cond, prog.body, lambda s: F(1), dom.states(), 2)
    assert oracle[State(x=1)] == F(1, 2)
    for k in (2, 3, 10, 50):
        t = loop_value_iteration(prog.cond, prog.body, Lit(F(1)), dom, k)
        assert t[State(x=1)] == F(1, 2)


def test_biased_walk_approaches_ruin_probability():
    oracle = gamblers_ruin(F(2, 3), 1)
    assert oracle == F(1, 2)
    prog = parse_program(BIASED)
    t = loop_value_iteration(prog.cond, prog.body, Lit(F(1)), parse_domain("x=0..200"), 10_000)
    v = t[State(x=1)]
    assert oracle - F(5, 1000) <= v <= oracle


def test_zero_iterations_give_zero_table():
    prog = parse_program(BIASED)
    t = loop_value_iteration(prog.cond, prog.body, Lit(F(1)), parse_domain("x=0..20"), 0)
    assert all(v == 0 for _, v in t.items())


def test_geometric_value_iteration_counts_guard_evaluations():
    prog = parse_program(GEOMETRIC)
    vi = ValueIteration(prog.cond, prog.body, Lit(F(1)), parse_domain("x=0..1"))
    assert vi.step(10).value(State(x=1)) == F(511, 512)
    assert vi.step(1).value(State(x=1)) == F(1023, 1024)


def test_tables_read_zero_outside_domain():
    t = Table(parse_domain("x=0..2"), {State(x=1): F(1, 2)})
    assert t[State(x=1)] == F(1, 2)
    assert t[State(x=5)] == 0
    assert t(State(x=1, q=F(1, 3))) == F(1, 2)  # extra variables are projected away


def test_domain_must_cover_loop_variables():
    prog = parse_program("while (x > 0) { x := x - y }")
    with pytest.raises(PgclError):
        ValueIteration(prog.cond, prog.body, Lit(F(1)), parse_domain("x=0..3"))


def test_dead_helper_variable_need_not_be_in_domain():
    prog = parse_program("while (x > 0) { q := 1/(x+1); {x := 0} [q] {x := x+1} }")
    vi = ValueIteration(prog.cond, prog.body, Lit(F(1)), parse_domain("x=0..30"))
    assert vi.step(3).value(State(x=1)) == F(1, 2) + F(1, 2) * F(1, 3)


def test_reachable_states_match_explicit_domain():
    prog = parse_program(BIASED)
    dom = reachable_states(prog, State(x=1), 40)
    assert len(dom) == 42
    a = ValueIteration(prog.cond, prog.body, Lit(F(1)), dom).step(40).value(State(x=1))
    b = ValueIteration(prog.cond, prog.body, Lit(F(1)), parse_domain("x=0..100")).step(40).value(State(x=1))
    assert a == b


def test_value_iteration_agrees_with_oracle_on_fixture():
    prog = parse_program(APP_C)
    dom = parse_domain("x=0..4")
    f = parse_expr("x + 1")
    oracle = naive_value_iteration(prog.cond, prog.body, post_fn("x + 1"), dom.states(), 6)
    t = loop_value_iteration(prog.cond, prog.body, f, dom, 6)
    assert {s: t[s] for s in dom.states()} == oracle


# ----------------------------------------------------------------- symbolic

def test_symbolic_wp_of_assignment_is_substitution():
    assert wp_symbolic(parse_program("x := x + 1"), X) == parse_expr("x + 1")


def test_symbolic_wp_rejects_loops():
    with pytest.raises(LoopNotAllowed):
        wp_symbolic(parse_program(GEOMETRIC), X)


# --------------------------------------------------------------- properties

@PROPERTY
@given(loop_free, post_expr, states)
def test_engine_matches_structural_recursion(c, f, s):
    fn = compiled(f)
    assert wp_eval(c, f, s).value == naive_wp(c, fn, s)
    assert awp_eval(c, f, s) == naive_wp(c, fn, s, angelic=True)


@PROPERTY
@given(with_loops(), st.integers(-2, 7), st.integers(1, 4))
def test_loops_match_structural_recursion_and_feasibility(c, x0, fuel):
    s = State(x=x0)
    r = wp_eval(c, Lit(F(1)), s, fuel)
    assert r.value == naive_wp(c, lambda _: F(1), s, fuel)
    assert 0 <= r.value <= 1


@PROPERTY
@given(loop_free, post_expr, post_expr, states)
def test_monotonicity(c, f, h, s):
    g = BinOp("+", f, h)  # f <= g everywhere since h >= 0
    assert wp_eval(c, f, s).value <= wp_eval(c, g, s).value


@PROPERTY
@given(loop_free, post_expr, nonneg_rat, states)
def test_scaling(c, f, k, s):
    scaled = BinOp("*", Lit(k), f)
    assert wp_eval(c, scaled, s).value == k * wp_eval(c, f, s).value


@PROPERTY
@given(loop_free, post_expr, states)
def test_demonic_below_angelic(c, f, s):
    r = wp_eval(c, f, s)
    assert r.exact
    assert r.value <= awp_eval(c, f, s)


@PROPERTY
@given(loop_free_det, post_expr, states)
def test_demonic_equals_angelic_without_choice(c, f, s):
    assert wp_eval(c, f, s).value == awp_eval(c, f, s)


@PROPERTY
@given(loop_free, post_expr, st.builds(Fraction, st.integers(1, 40), st.integers(1, 4)), states)
def test_truncated_variant_inequality(c, v, h, s):
    # H monus awp(C, V) <= wp(C, H monus V)
    lhs = monus(h, awp_eval(c, v, s))
    rhs = wp_eval(c, Call("monus", (Lit(h), v)), s).value
    assert lhs <= rhs


@PROPERTY
@given(loop_free, states)
def test_feasibility(c, s):
    r = wp_eval(c, Lit(F(1)), s)
    assert r.value <= 1
    assert r.value == 1  # loop-free programs always terminate


@PROPERTY
@given(loop_free, post_expr, states)
def test_symbolic_matches_pointwise(c, f, s):
    assert eval_expr(wp_symbolic(c, f), s) == wp_eval(c, f, s).value
    assert eval_expr(wp_symbolic(c, f, angelic=True), s) == awp_eval(c, f, s)


SMALL = parse_domain("x=0..6")
x_post = st.one_of(
    st.builds(lambda k: Lit(Fraction(k)), st.integers(0, 3)),
    st.builds(lambda k: Iverson(parse_bexpr(f"x = {k}")), st.integers(0, 6)),
    st.just(X),
)


@PROPERTY
@given(x_guard, x_body, x_post)
def test_value_iteration_is_monotone_and_bounded(g, body, f):
    fn = compiled(f)
    sup = max(fn(s) for s in SMALL.states())
    vi = ValueIteration(g, body, f, SMALL)
    prev = [vi.value(s) for s in SMALL.states()]
    assert all(v == 0 for v in prev)
    for _ in range(6):
        vi.step(1)
        cur = [vi.value(s) for s in SMALL.states()]
        assert all(a <= b <= sup for a, b in zip(prev, cur))
        prev = cur
    oracle = naive_value_iteration(g, body, fn, SMALL.states(), 6)
    assert {s: vi.value(s) for s in SMALL.states()} == oracle


@PROPERTY
@given(x_guard, x_guard, x_body, st.integers(0, 8))
def test_strengthened_guard_halts_no_more_often(a, b, body, k):
    # while (A and B) with post [not A] never beats while (A) with post [not A]
    post = Iverson(Not(a))
    strong = loop_value_iteration(And(a, b), body, post, SMALL, k)
    weak = loop_value_iteration(a, body, post, SMALL, k)
    for s in SMALL.states():
        assert strong[s] <= weak[s]


def _chain(values, weights):
    """{x := v1} [p1] { {x := v2} [p2'] {...} } realising the given weights."""
    total = sum(weights)
    prog = Assign("x", Lit(values[-1]))
    rest = weights[-1]
    for v, w in zip(reversed(values[:-1]), reversed(weights[:-1])):
        rest += w
        prog = PChoice(Assign("x", Lit(v)), Lit(F(w, rest)), prog)
    return prog, [F(w, total) for w in weights]


@PROPERTY
@given(
    st.lists(st.tuples(nonneg_rat, st.integers(1, 9)), min_size=1, max_size=6),
    nonneg_rat,
    st.lists(st.builds(Fraction, st.integers(1, 60), st.integers(1, 4)), min_size=0, max_size=4),
)
def test_supermartingale_iff_truncations_rise(dist, c, ladder):
    values = [v for v, _ in dist]
    prog, probs = _chain(values, [w for _, w in dist])
    expected = sum(p * v for p, v in zip(probs, values))
    assert wp_eval(prog, X, State(x=0)).value == expected
    top = 2 * max(values + [c])
    hs = sorted(set(ladder) | {top + 1})
    truncations_rise = all(
        monus(h, c) <= wp_eval(prog, Call("monus", (Lit(h), X)), State(x=0)).value for h in hs
    )
    if expected <= c:
        assert truncations_rise
    if truncations_rise:
        assert expected <= c
