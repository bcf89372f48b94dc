"""Successive approximations for the time-optimal problem in driftless coordinates.

    y^0     = L^{-1} F(0, x0)
    y^{r+1} = c L^{-1} (F(0, x0) + int_0^{theta(y^r)} g(t) u(t; y^r) dt) + y^r

where ``(theta(y), u(.; y))`` solves the moment min-problem for the
exponents ``k_1..k_n``.  ``c = 1`` is the plain scheme; ``0 < c < 1`` is the
relaxed one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import moment
from .linearize import DriftlessForm, F0_at
from .moment import BangBangControl, MomentProblem, MomentSolveError

log = logging.getLogger(__name__)

AUTO_SCHEDULE = (1.0, 0.5, 0.25, 0.125)


class FixedPointError(RuntimeError):
    pass


class Diverged(FixedPointError):
    def __init__(self, trace: "FixedPointTrace"):
        self.trace = trace
        super().__init__(f"successive approximations diverged with c={trace.c:g} after "
                         f"{trace.iterations} iterations; retry with a smaller c")


@dataclass
class FixedPointTrace:
    iterates: list[np.ndarray]
    residuals: list[float]
    thetas: list[float]
    c: float
    status: str = "running"  # converged | diverged | max_iter
    final_control: BangBangControl | None = None
    tail_bound: float = 0.0
    message: str = ""
    F0: np.ndarray | None = None
    attempts: list[dict] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def limit(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def rows(self) -> list[dict]:
        """One record per step: ``(r, y^r, residual, theta(y^r))``."""
        out = []
        for r, y in enumerate(self.iterates):
            out.append({
                "r": r,
                "y": [float(v) for v in y],
                "residual": float(self.residuals[r]) if r < len(self.residuals) else None,
                "theta": float(self.thetas[r]) if r < len(self.thetas) else None,
            })
        return out


def _antiderivatives(df: DriftlessForm):
    cache = df.__dict__.get("_antideriv_cache")
    if cache is None:
        cache = [gi.antiderivative() for gi in df.g]
        df.__dict__["_antideriv_cache"] = cache
    return cache


def driftless_integral(df: DriftlessForm, ctrl: BangBangControl) -> np.ndarray:
    """``int_0^theta g(t) u(t) dt`` from exact antiderivatives of the truncated series."""
    prims = _antiderivatives(df)
    total = np.zeros(df.n)
    for a, b, u in ctrl.pieces():
        total += u * np.array([P.evaluate(b) - P.evaluate(a) for P in prims])
    return total


def truncation_tail(df: DriftlessForm, theta: float) -> float:
    """Size estimate of the neglected series tail on ``[0, theta]``.

    The coefficient bound is the largest magnitude among the last quarter of
    the retained coefficients (zero for polynomial ``g``).
    """
    K = df.order
    start = K - max(K // 4, 1)
    bound = 0.0
    for gi in df.g:
        for kk in range(start, K):
            bound = max(bound, abs(float(gi.coefficient(kk))))
    return theta ** (K + 1) / (K + 1) * bound


def _inverse_L(df: DriftlessForm) -> np.ndarray:
    return np.linalg.inv(df.L_float())


def fixed_point_map(y, df: DriftlessForm, F0, *, guess=None):
    """``(T(y), control)`` with ``T(y) = L^{-1}(F0 + int g u(.; y)) + y``."""
    y = np.asarray(y, dtype=float)
    ctrl = moment.solve(MomentProblem(df.roots, tuple(y)), guess=guess, exhaustive=guess is None)
    step = _inverse_L(df) @ (np.asarray(F0) + driftless_integral(df, ctrl))
    return y + step, ctrl


def fixed_point_residual(y: Sequence[float], df: DriftlessForm, x0=None, *, F0=None) -> float:
    """``||y - T(y)||``; zero exactly at the fixed point."""
    if F0 is None:
        F0 = F0_at(df, x0)
    Ty, _ = fixed_point_map(y, df, F0)
    return float(np.linalg.norm(np.asarray(y, dtype=float) - Ty))


def _diverging(residuals: list[float], window: int, growth: int) -> bool:
    if len(residuals) < window + 1:
        return False
    tail = residuals[-(window + 1):]
    ups = sum(1 for a, b in zip(tail, tail[1:]) if b > a)
    return ups >= growth


def iterate(df: DriftlessForm, x0: Sequence[float], c: float = 1.0, *, tol: float = 1e-8,
            max_iter: int = 1000, F0=None, window: int = 10, growth: int = 8,
            blowup: float = 1e3) -> FixedPointTrace:
    """Run the (relaxed) successive approximations until ``||y^{r+1} - y^r|| < tol``.

    Divergence is declared when the step size grew in ``growth`` of the last
    ``window`` steps, or when ``||y^r||`` exceeds ``blowup * ||y^0||``.
    """
    if not 0 < c <= 1:
        raise ValueError("relaxation factor c must lie in (0, 1]")
    if not df.indicial.satisfied_cond5:
        raise FixedPointError("condition (14) does not hold; successive approximations are not justified")
    if F0 is None:
        F0 = F0_at(df, x0)
    F0 = np.asarray(F0, dtype=float)
    Linv = _inverse_L(df)
    y = Linv @ F0
    trace = FixedPointTrace([y.copy()], [], [], c, F0=F0)
    y0_norm = float(np.linalg.norm(y))
    if y0_norm == 0.0:
        trace.residuals.append(0.0)
        trace.thetas.append(0.0)
        trace.iterates.append(y.copy())
        trace.status = "converged"
        trace.final_control = moment.solve(MomentProblem(df.roots, tuple(y)))
        return trace
    ctrl = None
    for r in range(max_iter):
        try:
            ctrl = moment.solve(MomentProblem(df.roots, tuple(y)), guess=ctrl, exhaustive=ctrl is None)
        except MomentSolveError as exc:
            if _diverging(trace.residuals, window, growth // 2):
                trace.status = "diverged"
                trace.message = f"inner moment solve failed while diverging: {exc}"
                return trace
            raise
        y_new = c * (Linv @ (F0 + driftless_integral(df, ctrl))) + y
        res = float(np.linalg.norm(y_new - y))
        trace.thetas.append(ctrl.theta)
        trace.residuals.append(res)
        trace.iterates.append(y_new)
        y = y_new
        log.debug("iter %d: residual %.3e theta %.6f", r + 1, res, ctrl.theta)
        if res < tol:
            trace.status = "converged"
            break
        if _diverging(trace.residuals, window, growth) or np.linalg.norm(y) > blowup * y0_norm:
            trace.status = "diverged"
            trace.message = f"residual growth detected at iteration {r + 1}"
            return trace
    else:
        trace.status = "max_iter"
        trace.message = f"no convergence within {max_iter} iterations"
        return trace
    trace.final_control = moment.solve(MomentProblem(df.roots, tuple(y)), guess=ctrl, exhaustive=False)
    trace.tail_bound = truncation_tail(df, trace.final_control.theta)
    return trace


def iterate_auto(df: DriftlessForm, x0: Sequence[float], schedule: Sequence[float] = AUTO_SCHEDULE,
                 **kw) -> FixedPointTrace:
    """Try ``c = 1, 1/2, 1/4, 1/8`` in turn until the iteration converges."""
    if "F0" not in kw or kw["F0"] is None:
        kw["F0"] = F0_at(df, x0)
    attempts = []
    trace = None
    for c in schedule:
        trace = iterate(df, x0, c, **kw)
        attempts.append({"c": c, "status": trace.status, "iterations": trace.iterations})
        if trace.converged:
            break
        log.info("c=%g: %s after %d iterations", c, trace.status, trace.iterations)
    trace.attempts = attempts
    return trace
