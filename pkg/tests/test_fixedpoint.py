import json

import numpy as np
import pytest

from tocl.fixedpoint import Diverged, driftless_integral, fixed_point_residual, iterate, iterate_auto
from tocl.linearize import F0_at

from conftest import CASE_A, CASE_B


@pytest.fixture(scope="module")
def trace_a(gap_driftless):
    return iterate(gap_driftless, CASE_A, 1.0)


def test_case_a_converges(trace_a):
    assert trace_a.converged
    assert trace_a.residuals[-1] < 1e-8
    np.testing.assert_allclose(trace_a.iterates[0], [0.4, 0.184, -0.1], atol=1e-10)
    np.testing.assert_allclose(trace_a.limit, [0.4, 0.1457, -0.0714], atol=1e-3)
    ctrl = trace_a.final_control
    assert ctrl.theta == pytest.approx(1.0978, abs=1e-3)
    assert ctrl.switches == pytest.approx((0.1251, 0.8740), abs=1e-3)


def test_case_a_steering_condition(trace_a, gap_driftless):
    end = trace_a.F0 + driftless_integral(gap_driftless, trace_a.final_control)
    assert np.max(np.abs(end)) < 1e-6


def test_case_a_contraction_tail(trace_a):
    res = np.array(trace_a.residuals)
    tail = res[res < 1e-3]
    ratios = tail[1:] / tail[:-1]
    assert np.all(ratios[-10:] < 1)


def test_residual_at_limit_and_start(trace_a, gap_driftless):
    assert fixed_point_residual(trace_a.limit, gap_driftless, CASE_A) < 1e-7
    assert fixed_point_residual(trace_a.iterates[0], gap_driftless, CASE_A) > 0
    assert fixed_point_residual([0, 0, 0], gap_driftless, [0, 0, 0]) == 0


def test_zero_start(gap_driftless):
    tr = iterate(gap_driftless, [0, 0, 0])
    assert tr.converged and tr.iterations == 1
    assert tr.final_control.theta == 0


def test_limit_independent_of_relaxation(trace_a, gap_driftless):
    half = iterate(gap_driftless, CASE_A, 0.5, F0=trace_a.F0)
    assert half.converged
    np.testing.assert_allclose(half.limit, trace_a.limit, atol=1e-6)


def test_case_b_plain_diverges_and_relaxed_converges(gap_driftless):
    F0 = F0_at(gap_driftless, CASE_B)
    plain = iterate(gap_driftless, CASE_B, 1.0, F0=F0)
    assert plain.status == "diverged"
    assert plain.iterations <= 200
    relaxed = iterate(gap_driftless, CASE_B, 0.25, F0=F0)
    assert relaxed.converged and relaxed.iterations <= 300


@pytest.mark.xfail(strict=True, reason="105 relaxed iterations reach 1e-8 here against 120 published; "
                                       "no choice of norm closes the gap (see decision log)")
def test_case_b_published_iteration_count(gap_driftless):
    relaxed = iterate(gap_driftless, CASE_B, 0.25, tol=1e-8)
    assert abs(relaxed.iterations - 120) <= 10


def test_auto_schedule(gap_driftless):
    tr = iterate_auto(gap_driftless, CASE_B)
    assert tr.converged
    assert [a["c"] for a in tr.attempts][-1] == tr.c
    assert tr.attempts[0]["status"] == "diverged"


def test_trace_rows_are_json(trace_a):
    rows = json.loads(json.dumps(trace_a.rows()))
    assert rows[0]["r"] == 0 and len(rows[0]["y"]) == 3
    assert rows[1]["residual"] == pytest.approx(trace_a.residuals[1])


def test_invalid_relaxation(gap_driftless):
    with pytest.raises(ValueError):
        iterate(gap_driftless, CASE_A, 1.5)
    with pytest.raises(ValueError):
        iterate(gap_driftless, CASE_A, 0.0)


def test_diverged_exception_message(gap_driftless):
    tr = iterate(gap_driftless, CASE_B, 1.0)
    assert "smaller c" in str(Diverged(tr))
