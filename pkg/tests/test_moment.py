import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from tocl.moment import (BangBangControl, MomentProblem, MomentSolveError, control_on_horizon, moments,
                         residual, solve, solve_n3_gap, verify_minimality)

K013 = (0, 1, 3)
Y_A = (0.4, 0.1457, -0.0714)


def test_moments_examples():
    np.testing.assert_allclose(moments(BangBangControl(1, (), 1.0), K013), [1, 0.5, 0.25])
    np.testing.assert_array_equal(moments(BangBangControl(1, (0.0, 0.0), 0.0), K013), 0)
    y = moments(BangBangControl(-1, (0.1251, 0.8740), 1.0978), K013)
    np.testing.assert_allclose(y, Y_A, atol=5e-4)
    # the other sign branch is far away
    assert np.max(np.abs(moments(BangBangControl(1, (0.1251, 0.8740), 1.0978), K013) - Y_A)) > 0.1


def test_moments_piecewise_formula():
    ctrl = BangBangControl(1, (0.2, 0.5), 0.9)
    for k, yk in zip((0, 2, 5), moments(ctrl, (0, 2, 5))):
        val, _ = quad(lambda t: t ** k * ctrl.value(t), 0, 0.9, points=(0.2, 0.5))
        assert val == pytest.approx(yk, abs=1e-12)


def test_solve_case_a():
    ctrl = solve(MomentProblem(K013, Y_A))
    assert ctrl.sigma == -1
    assert ctrl.theta == pytest.approx(1.0978, abs=1e-3)
    assert ctrl.switches == pytest.approx((0.1251, 0.8740), abs=1e-3)
    assert residual(ctrl, MomentProblem(K013, Y_A)) <= 1e-10


def test_solve_zero_target():
    ctrl = solve(MomentProblem(K013, (0, 0, 0)))
    assert ctrl.theta == 0 and ctrl.pieces() == []


def test_solve_no_switch_target():
    ctrl = solve(MomentProblem(K013, (1, 0.5, 0.25)))
    assert ctrl.sigma == 1
    assert ctrl.theta == pytest.approx(1.0, abs=1e-10)
    assert ctrl.effective_switches == ()


def test_problem_validation():
    with pytest.raises(ValueError):
        MomentProblem((0, 0, 1), (1, 2, 3))
    with pytest.raises(ValueError):
        MomentProblem((0, 1), (1, 2, 3))
    with pytest.raises(ValueError):
        BangBangControl(1, (0.5, 0.2), 1.0)


def test_sextic_solver_matches_newton():
    a = solve(MomentProblem(K013, Y_A))
    b = solve_n3_gap(Y_A)
    assert a.sigma == b.sigma
    assert b.theta == pytest.approx(a.theta, abs=1e-8)
    assert b.switches == pytest.approx(a.switches, abs=1e-8)
    assert solve_n3_gap((0, 0, 0)).theta == 0


def test_sextic_solver_rejects_degenerate_targets():
    with pytest.raises(MomentSolveError):
        solve_n3_gap((1, 0.5, 0.25))  # needs no switch at all


def test_minimality_certificates():
    p = MomentProblem(K013, Y_A)
    ctrl = solve(p)
    assert verify_minimality(ctrl, p)
    inflated, res = control_on_horizon(p, 1.1 * ctrl.theta, tol_rel=1e-9)
    assert inflated is not None and residual(inflated, p) < 1e-8
    assert not verify_minimality(inflated, p)
    assert verify_minimality(ctrl, p)
    assert solve(p).theta < inflated.theta
    assert verify_minimality(BangBangControl(1, (), 0.0), MomentProblem(K013, (0, 0, 0)))


def test_other_exponent_sets():
    for k in [(0,), (2,), (0, 1), (0, 1, 2, 3), (1, 4, 6)]:
        n = len(k)
        gen = BangBangControl(-1, tuple(np.linspace(0.2, 0.7, n - 1)), 0.9)
        p = MomentProblem(k, tuple(moments(gen, k)))
        ctrl = solve(p)
        assert ctrl.theta == pytest.approx(0.9, abs=1e-9)
        assert residual(ctrl, p) < 1e-10


@st.composite
def controls(draw, exponents=K013):
    n = len(exponents)
    theta = draw(st.floats(0.05, 1.0))
    sw = sorted(draw(st.lists(st.floats(0.0, 1.0), min_size=n - 1, max_size=n - 1)))
    sigma = draw(st.sampled_from([1, -1]))
    return BangBangControl(sigma, tuple(theta * s for s in sw), theta)


@settings(max_examples=40, deadline=None)
@given(controls())
def test_round_trip(gen):
    p = MomentProblem(K013, tuple(moments(gen, K013)))
    ctrl = solve(p)
    assert ctrl.theta <= gen.theta + 1e-9
    assert residual(ctrl, p) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(controls(), st.sampled_from([0.5, 2.0]))
def test_homogeneity(gen, lam):
    base = solve(MomentProblem(K013, tuple(moments(gen, K013))))
    scaled = solve(MomentProblem(K013, tuple(moments(gen.scaled(lam), K013))))
    assert scaled.theta == pytest.approx(lam * base.theta, rel=1e-8, abs=1e-12)
    assert scaled.switches == pytest.approx(tuple(lam * s for s in base.switches), rel=1e-7, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(controls())
def test_sign_symmetry(gen):
    y = moments(gen, K013)
    a = solve(MomentProblem(K013, tuple(y)))
    b = solve(MomentProblem(K013, tuple(-y)))
    assert b.sigma == -a.sigma
    assert b.theta == pytest.approx(a.theta, rel=1e-12)
    assert b.switches == pytest.approx(a.switches, rel=1e-10, abs=1e-12)


def test_warm_start_agrees_with_exhaustive():
    p = MomentProblem(K013, Y_A)
    cold = solve(p)
    warm = solve(MomentProblem(K013, (0.4, 0.146, -0.0713)), guess=cold, exhaustive=False)
    again = solve(MomentProblem(K013, (0.4, 0.146, -0.0713)))
    assert warm.theta == pytest.approx(again.theta, abs=1e-12)


def test_control_serialization():
    c = BangBangControl(-1, (0.1, 0.4), 0.9)
    assert BangBangControl.from_dict(c.to_dict()) == c
    assert c.value(0.05) == -1 and c.value(0.2) == 1 and c.value(0.5) == -1
    assert c.value(1.0) == 0
