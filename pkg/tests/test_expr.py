import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tocl import expr as ex
from tocl.expr import ExprSyntaxError, SingularEvaluationError, VecExpr, differentiate, parse, simplify

B2 = "t - (1/3)*t^4 - 2*x1*x3 - (2*t^2 + t^3 + (1/5)*t^5)*x1^2"


def test_parse_second_control_component_vanishes_at_origin():
    e = parse(B2, 3)
    assert e.evaluate(0.0, (0, 0, 0)) == 0.0
    assert e.evaluate_exact(Fraction(1), (Fraction(1), 0, 0)) == Fraction(1) - Fraction(1, 3) - Fraction(16, 5)


def test_zero_expression():
    e = parse("0", 2)
    assert e.is_zero()
    for v in ("t", "x1", "x2"):
        assert differentiate(e, v).is_zero()


def test_power_rule():
    e = parse("x2^3", 2)
    assert e.evaluate(0.0, (0, 2)) == 8
    assert differentiate(e, "x2").evaluate(0.0, (0, 2)) == 12


def test_derivative_examples():
    assert str(differentiate(parse("-2*t*x1", 3), "t")) == "-2*x1"
    assert differentiate(parse("7/3", 1), "t").is_zero()
    assert differentiate(parse("t^3 + (1/5)*t^5 - t^2", 1), "t").evaluate(1.0) == pytest.approx(2.0)


def test_evaluate_examples():
    assert parse("x1", 3).evaluate(0.0, (5, 0, 0)) == 5
    with pytest.raises(SingularEvaluationError) as info:
        parse("1/t", 1).evaluate(0.0, (0,))
    assert "t" in str(info.value)
    with pytest.raises(SingularEvaluationError):
        VecExpr.parse(["x1", "1/t"], 2).compile()(0.0, [1.0, 0.0])


def test_simplify_examples():
    assert str(simplify(parse("0*x1 + t", 1))) == "t"
    assert str(simplify(parse("x1 - x1", 1))) == "0"


@pytest.mark.parametrize("text, pos", [("x1 +", 4), ("2 * (t", 6), ("t $ 1", 2)])
def test_syntax_errors_report_position(text, pos):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text, 2)
    assert info.value.position == pos


def test_unknown_identifier_and_dimension():
    with pytest.raises(ExprSyntaxError):
        parse("y + 1", 2)
    with pytest.raises(ExprSyntaxError):
        parse("x4", 3)
    with pytest.raises(ExprSyntaxError):
        parse("x1^t", 1)


def test_precedence():
    assert parse("-2^2", 1).evaluate(0.0) == -4
    assert parse("2*3^2", 1).evaluate(0.0) == 18
    assert parse("1 - 2 - 3", 1).evaluate(0.0) == -4
    assert parse("8/2/2", 1).evaluate(0.0) == 2


def test_rationals_stay_exact():
    e = parse("1/3*t + 1/5", 1)
    assert e.evaluate_exact(Fraction(1)) == Fraction(8, 15)


def test_transcendental_functions():
    e = parse("sin(t)*exp(x1) + cos(x1)", 1)
    assert e.evaluate(0.3, (0.2,)) == pytest.approx(math.sin(0.3) * math.exp(0.2) + math.cos(0.2))
    d = differentiate(e, "x1")
    assert d.evaluate(0.3, (0.2,)) == pytest.approx(math.sin(0.3) * math.exp(0.2) - math.sin(0.2))


# -- random expressions ---------------------------------------------------------------------

N = 2
leaves = st.one_of(
    st.sampled_from(["t", "x1", "x2"]),
    st.fractions(min_value=-3, max_value=3, max_denominator=5).map(lambda q: f"({q})"),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, children).map(lambda p: f"({p[0]} + {p[1]})"),
        st.tuples(children, children).map(lambda p: f"({p[0]} - {p[1]})"),
        st.tuples(children, children).map(lambda p: f"({p[0]} * {p[1]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda p: f"({p[0]})^{p[1]}"),
        children.map(lambda c: f"-({c})"),
        children.map(lambda c: f"sin({c})"),
        children.map(lambda c: f"exp(({c})/4)"),
        st.tuples(children, children).map(lambda p: f"({p[0]}) / (3 + ({p[1]})^2)"),
    )


exprs = st.recursive(leaves, _combine, max_leaves=8)
points = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * (N + 1))


def _fd(e: ex.Expr, point, var: int) -> float:
    """Central differences with one Richardson step."""
    def f(h):
        p = list(point)
        p[var] += h
        q = list(point)
        q[var] -= h
        return (e.evaluate(p[0], p[1:]) - e.evaluate(q[0], q[1:])) / (2 * h)

    h = 1e-3
    return (4 * f(h / 2) - f(h)) / 3


@settings(max_examples=150, deadline=None)
@given(exprs, points, st.integers(0, N))
def test_derivative_matches_finite_differences(text, point, var):
    e = parse(text, N)
    exact = differentiate(e, var).evaluate(point[0], point[1:])
    approx = _fd(e, point, var)
    assert exact == pytest.approx(approx, rel=1e-6, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(exprs, points)
def test_mixed_partials_commute(text, point):
    e = parse(text, N)
    a = differentiate(differentiate(e, 0), 1).evaluate(point[0], point[1:])
    b = differentiate(differentiate(e, 1), 0).evaluate(point[0], point[1:])
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(exprs)
def test_simplify_preserves_value(text):
    e = parse(text, N)
    s = simplify(e)
    rng = np.random.default_rng(0)
    for p in rng.uniform(-1, 1, size=(20, N + 1)):
        want = e.evaluate(p[0], p[1:])
        assert s.evaluate(p[0], p[1:]) == pytest.approx(want, rel=1e-12, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(exprs)
def test_print_parse_round_trip(text):
    e = parse(text, N)
    once = parse(str(e), N)
    assert once == e
    assert parse(str(once), N) == once


def test_vector_compile_matches_evaluate():
    v = VecExpr.parse(["x1*x2", "t^2 - x2", B2], 3)
    f = v.compile()
    p = (0.3, [0.5, -0.7, 0.2])
    np.testing.assert_allclose(f(p[0], p[1]), v.evaluate(*p), rtol=1e-15)
