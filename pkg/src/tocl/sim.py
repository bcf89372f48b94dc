"""Verification by simulation under a bang-bang control.

The nonlinear system is integrated with classic RK4 on each constancy
interval separately, so every switching time is a grid node.  The driftless
system is integrated in closed form.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fixedpoint import _antiderivatives
from .linearize import DriftlessForm
from .model import ControlSystem
from .moment import BangBangControl


class NeighborhoodExit(RuntimeError):
    def __init__(self, time: float, state):
        self.time = time
        self.state = list(map(float, state))
        super().__init__(f"state left the declared neighborhood at t={time:.6g}: {self.state}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n)
    controls: np.ndarray
    switches: tuple[float, ...] = ()

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def terminal_error(self) -> float:
        return float(np.linalg.norm(self.states[-1]))

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return len(self.times)


def _piece_grid(a: float, b: float, h: float) -> np.ndarray:
    steps = max(1, math.ceil((b - a) / h - 1e-12))
    grid = a + (b - a) * np.arange(steps + 1) / steps
    grid[-1] = b
    return grid


def _assemble(ctrl: BangBangControl, segments) -> Trajectory:
    times, states, controls = [], [], []
    for idx, (grid, xs, u) in enumerate(segments):
        start = 0 if idx == 0 else 1  # boundary node already stored by the previous piece
        times.extend(grid[start:])
        states.extend(xs[start:])
        controls.extend([u] * (len(grid) - start))
        if idx > 0:
            controls[len(times) - len(grid)] = u  # right-continuous value at the switch
    return Trajectory(np.asarray(times), np.asarray(states), np.asarray(controls, dtype=float),
                      ctrl.effective_switches)


def integrate(sys: ControlSystem, x0: Sequence[float], ctrl: BangBangControl,
              step_hint: float | None = None, check_neighborhood: bool = True) -> Trajectory:
    """RK4 with fixed step ``<= step_hint`` (default ``theta/2000``) on each piece."""
    x = np.asarray(x0, dtype=float).copy()
    if ctrl.theta == 0 or not ctrl.pieces():
        return Trajectory(np.array([0.0]), x[None, :], np.array([0.0]))
    h = step_hint or ctrl.theta / 2000
    f_a, f_b = sys.drift, sys.control_field
    segments = []
    for a, b, u in ctrl.pieces():
        grid = _piece_grid(a, b, h)
        xs = [x.copy()]
        for t0, t1 in zip(grid[:-1], grid[1:]):
            dt = t1 - t0

            def f(t, s):
                return f_a(t, s) + f_b(t, s) * u

            k1 = f(t0, x)
            k2 = f(t0 + dt / 2, x + dt / 2 * k1)
            k3 = f(t0 + dt / 2, x + dt / 2 * k2)
            k4 = f(t1, x + dt * k3)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if check_neighborhood and not (np.all(np.isfinite(x)) and np.max(np.abs(x)) <= sys.x_radius):
                raise NeighborhoodExit(t1, x)
            xs.append(x.copy())
        segments.append((grid, xs, u))
    return _assemble(ctrl, segments)


def integrate_driftless(df: DriftlessForm, z0: Sequence[float], ctrl: BangBangControl,
                        step_hint: float | None = None) -> Trajectory:
    """``z' = g(t) u`` integrated exactly (up to series truncation) on each piece."""
    z = np.asarray(z0, dtype=float).copy()
    if ctrl.theta == 0 or not ctrl.pieces():
        return Trajectory(np.array([0.0]), z[None, :], np.array([0.0]))
    prims = _antiderivatives(df)
    h = step_hint or ctrl.theta / 2000
    segments = []
    for a, b, u in ctrl.pieces():
        grid = _piece_grid(a, b, h)
        Pa = np.array([P.evaluate(a) for P in prims])
        xs = [z + u * (np.array([P.evaluate(t) for P in prims]) - Pa) for t in grid]
        z = xs[-1].copy()
        segments.append((grid, xs, u))
    return _assemble(ctrl, segments)


def write_csv(traj: Trajectory, path) -> None:
    """One row per sample, header ``t,x1,...,xn,u``, 12 significant digits."""
    header = ["t"] + [f"x{i + 1}" for i in range(traj.n)] + ["u"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, x, u in zip(traj.times, traj.states, traj.controls):
            writer.writerow([f"{v:.12g}" for v in (t, *x, u)])


def read_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))
    return Trajectory(data[:, 0], data[:, 1:-1], data[:, -1])
