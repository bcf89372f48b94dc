import json
from pathlib import Path

import numpy as np
import pytest

from tocl.fixedpoint import iterate
from tocl.linearize import F_at
from tocl.model import ControlSystem
from tocl.moment import BangBangControl
from tocl.sim import NeighborhoodExit, integrate, integrate_driftless, read_csv, write_csv

from conftest import CASE_A, CASE_B

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def solved_a(gap_driftless):
    return iterate(gap_driftless, CASE_A, 1.0)


def test_published_control_steers_to_origin(gap_system):
    ctrl = BangBangControl(-1, (0.1251, 0.8740), 1.0978)
    traj = integrate(gap_system, CASE_A, ctrl)
    assert traj.terminal_error < 1e-3


def test_zero_dynamics_stay_put():
    sys = ControlSystem.from_strings(["0", "0"], ["0", "0"])
    traj = integrate(sys, [0.3, -0.2], BangBangControl(1, (0.5,), 1.0))
    np.testing.assert_array_equal(traj.states, np.tile([0.3, -0.2], (len(traj), 1)))


def test_samples_and_switch_alignment(gap_system, solved_a):
    ctrl = solved_a.final_control
    traj = integrate(gap_system, CASE_A, ctrl)
    assert np.all(np.diff(traj.times) > 0)
    for s in ctrl.effective_switches:
        assert s in traj.times
    assert traj.times[0] == 0 and traj.times[-1] == ctrl.theta
    steps = np.diff(traj.times)
    assert steps.max() <= ctrl.theta / 2000 * (1 + 1e-12)
    # u switches exactly at the switching times
    i = int(np.where(traj.times == ctrl.effective_switches[0])[0][0])
    assert traj.controls[i - 1] == ctrl.sigma and traj.controls[i] == -ctrl.sigma


def test_rk4_order(gap_system, solved_a):
    ctrl = solved_a.final_control
    ref = integrate(gap_system, CASE_A, ctrl, step_hint=ctrl.theta / 6400).terminal_state
    errs = [np.linalg.norm(integrate(gap_system, CASE_A, ctrl, step_hint=ctrl.theta / m).terminal_state - ref)
            for m in (50, 100, 200)]
    for a, b in zip(errs, errs[1:]):
        assert 8 <= a / b <= 32


def test_driftless_steering(gap_driftless, solved_a):
    traj = integrate_driftless(gap_driftless, solved_a.F0, solved_a.final_control)
    assert traj.terminal_error < 1e-6
    empty = integrate_driftless(gap_driftless, [0.1, 0.2, 0.3], BangBangControl(1, (0.0, 0.0), 0.0))
    assert len(empty) == 1
    np.testing.assert_array_equal(empty.states[0], [0.1, 0.2, 0.3])


def test_two_integrators_agree(gap_system, gap_driftless, solved_a):
    ctrl = solved_a.final_control
    x = integrate(gap_system, CASE_A, ctrl)
    z = integrate_driftless(gap_driftless, solved_a.F0, ctrl)
    np.testing.assert_allclose(F_at(gap_driftless, ctrl.theta, x.terminal_state), z.terminal_state, atol=1e-4)
    assert abs(x.terminal_error - z.terminal_error) < 1e-3 + 1e-6


def test_case_b_fixture_steers(gap_system):
    fx = json.loads((FIXTURES / "case_b.json").read_text())
    ctrl = BangBangControl(fx["sigma"], tuple(fx["switches"]), fx["theta"])
    assert integrate(gap_system, CASE_B, ctrl).terminal_error < 1e-3


def test_neighborhood_exit(gap_system):
    tight = ControlSystem(3, gap_system.a, gap_system.b, gap_system.t_radius, 0.45)
    with pytest.raises(NeighborhoodExit) as info:
        integrate(tight, CASE_A, BangBangControl(-1, (0.1251, 0.8740), 1.0978))
    assert 0 < info.value.time < 1.0978


def test_csv_round_trip(tmp_path, gap_system, solved_a):
    traj = integrate(gap_system, CASE_A, solved_a.final_control, step_hint=0.05)
    path = tmp_path / "traj.csv"
    write_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,u"
    assert len(lines) == len(traj) + 1
    back = read_csv(path)
    np.testing.assert_allclose(back.states, traj.states, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(back.times, traj.times, rtol=1e-11)
