"""Power moment min-problem with gaps.

Given exponents ``k_1 < ... < k_n`` and a target ``y``, find the smallest
``theta`` and a control ``|u| <= 1`` on ``[0, theta]`` with
``int_0^theta t^{k_i} u(t) dt = y_i``.  The optimum is bang-bang with at
most ``n - 1`` switchings, so the unknowns are the switching times and
``theta``; they are found by damped Newton from a multi-start grid.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
TIE_TOL = 1e-10
THETA_FACTORS = (1.0, 1.5, 2.0, 3.0)


class MomentSolveError(RuntimeError):
    def __init__(self, message: str, best_residual: float = np.inf, best=None):
        self.best_residual = best_residual
        self.best = best
        super().__init__(f"{message} (best residual {best_residual:.3g})")


@dataclass(frozen=True)
class MomentProblem:
    exponents: tuple[int, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        k = tuple(int(v) for v in self.exponents)
        if len(k) != len(self.y):
            raise ValueError("exponents and target must have the same length")
        if not k or k[0] < 0 or any(b <= a for a, b in zip(k, k[1:])):
            raise ValueError(f"exponents must be nonnegative and strictly increasing, got {k}")
        object.__setattr__(self, "exponents", k)
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))

    @property
    def n(self) -> int:
        return len(self.exponents)


@dataclass(frozen=True)
class BangBangControl:
    """``u = sigma`` on ``[0, t_1)``, then alternating sign at each switch, up to ``theta``.

    Coincident switching times cancel, so fewer effective switchings are
    encoded by coalescing times (the canonical form parks spare ones at
    ``theta``).
    """

    sigma: int
    switches: tuple[float, ...]
    theta: float

    def __post_init__(self):
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")
        sw = tuple(float(s) for s in self.switches)
        object.__setattr__(self, "switches", sw)
        object.__setattr__(self, "theta", float(self.theta))
        pts = (0.0, *sw, self.theta)
        if self.theta < 0 or any(b < a for a, b in zip(pts, pts[1:])):
            raise ValueError(f"switching times must satisfy 0 <= t_1 <= ... <= theta, got {pts}")

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (0.0, *self.switches, self.theta)

    def pieces(self) -> list[tuple[float, float, int]]:
        """Nonempty constancy intervals ``(start, end, u)``."""
        bp = self.breakpoints
        out = []
        for j in range(len(bp) - 1):
            if bp[j + 1] > bp[j]:
                out.append((bp[j], bp[j + 1], self.sigma * (-1) ** j))
        return out

    def value(self, t: float) -> int:
        """Right-continuous control value; 0 outside ``[0, theta]``."""
        if t < 0 or t > self.theta or self.theta == 0:
            return 0
        pieces = self.pieces()
        for a, b, u in pieces:
            if a <= t < b:
                return u
        return pieces[-1][2]

    @property
    def effective_switches(self) -> tuple[float, ...]:
        p = self.pieces()
        return tuple(a for (a, _, u), (_, _, prev) in zip(p[1:], p[:-1]) if u != prev)

    def scaled(self, lam: float) -> "BangBangControl":
        return BangBangControl(self.sigma, tuple(lam * s for s in self.switches), lam * self.theta)

    def negated(self) -> "BangBangControl":
        return BangBangControl(-self.sigma, self.switches, self.theta)

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "switches": list(self.switches), "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "BangBangControl":
        return cls(int(d["sigma"]), tuple(d["switches"]), float(d["theta"]))


def _moments(sigma: int, switches: np.ndarray, theta: float, k1: np.ndarray) -> np.ndarray:
    """Closed form with ``k1 = k + 1``."""
    m = len(switches)
    total = ((-1) ** m) * theta ** k1
    for j, s in enumerate(switches):
        total = total + (2.0 * (-1) ** j) * s ** k1
    return sigma * total / k1


def _jacobian(sigma: int, switches: np.ndarray, theta: float, k: np.ndarray,
              with_theta: bool = True) -> np.ndarray:
    m = len(switches)
    cols = [2.0 * sigma * (-1) ** j * switches[j] ** k for j in range(m)]
    if with_theta:
        cols.append(sigma * (-1) ** m * theta ** k)
    return np.column_stack(cols)


def moments(ctrl: BangBangControl, exponents: Sequence[int]) -> np.ndarray:
    """``int_0^theta t^{k_i} u(t) dt`` for each exponent, in closed form."""
    k1 = np.asarray(exponents, dtype=float) + 1.0
    if ctrl.theta == 0:
        return np.zeros(len(k1))
    return _moments(ctrl.sigma, np.asarray(ctrl.switches, dtype=float), ctrl.theta, k1)


def _isotonic(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto nondecreasing vectors (pool adjacent violators)."""
    blocks: list[list[float]] = []
    for value in v:
        blocks.append([value, 1.0])
        while len(blocks) > 1 and blocks[-2][0] / blocks[-2][1] > blocks[-1][0] / blocks[-1][1]:
            s, c = blocks.pop()
            blocks[-1][0] += s
            blocks[-1][1] += c
    out = []
    for s, c in blocks:
        out.extend([s / c] * int(c))
    return np.asarray(out)


def _project(s: np.ndarray, theta: float) -> tuple[np.ndarray, float]:
    theta = max(theta, 0.0)
    if len(s):
        s = np.clip(_isotonic(s), 0.0, theta)
    return s, theta


def _newton(k: np.ndarray, y: np.ndarray, sigma: int, s0, theta0: float, *,
            fixed_theta: bool = False, tol: float, max_iter: int = 80):
    """Damped (Armijo) Gauss-Newton with projection onto the ordered simplex.

    Returns ``(switches, theta, residual_norm)``.
    """
    k1 = k + 1.0
    s, theta = _project(np.asarray(s0, dtype=float), theta0)
    F = _moments(sigma, s, theta, k1) - y
    norm = float(np.linalg.norm(F))
    m = len(s)
    for _ in range(max_iter):
        if norm <= tol:
            # two polishing steps, kept only if they do not hurt
            for _p in range(2):
                J = _jacobian(sigma, s, theta, k, not fixed_theta)
                d = np.linalg.lstsq(J, -F, rcond=None)[0]
                s2, th2 = _project(s + d[:m], theta if fixed_theta else theta + d[m])
                F2 = _moments(sigma, s2, th2, k1) - y
                n2 = float(np.linalg.norm(F2))
                if n2 >= norm:
                    break
                s, theta, F, norm = s2, th2, F2, n2
            break
        J = _jacobian(sigma, s, theta, k, not fixed_theta)
        d = np.linalg.lstsq(J, -F, rcond=None)[0]
        alpha = 1.0
        while True:
            s2, th2 = _project(s + alpha * d[:m], theta if fixed_theta else theta + alpha * d[m])
            F2 = _moments(sigma, s2, th2, k1) - y
            n2 = float(np.linalg.norm(F2))
            if n2 <= (1.0 - 1e-4 * alpha) * norm:
                break
            alpha *= 0.5
            if alpha < 1e-10:
                return s, theta, norm
        s, theta, F, norm = s2, th2, F2, n2
    return s, theta, norm


def _canonical(sigma: int, s: np.ndarray, theta: float, n: int, snap: float) -> BangBangControl:
    """Drop empty intervals, merge equal neighbours and park spare switches at theta."""
    bp = [0.0, *[float(v) for v in s], float(theta)]
    pieces = []
    for j in range(len(bp) - 1):
        a, b = bp[j], bp[j + 1]
        if b - a <= snap:
            continue
        u = sigma * (-1) ** j
        if pieces and pieces[-1][2] == u:
            pieces[-1][1] = b
        else:
            pieces.append([a, b, u])
    if not pieces:
        return BangBangControl(sigma, (theta,) * (n - 1), theta)
    # stretch pieces to close the snapped gaps
    pieces[0][0] = 0.0
    for p, q in zip(pieces, pieces[1:]):
        q[0] = p[1]
    pieces[-1][1] = theta
    switches = [p[0] for p in pieces[1:]]
    switches += [theta] * (n - 1 - len(switches))
    return BangBangControl(int(pieces[0][2]), tuple(switches[: n - 1]), theta)


def _starts(k: np.ndarray, y: np.ndarray) -> list[tuple[int, np.ndarray, float]]:
    n = len(k)
    base = float(np.max((np.abs(y) * (k + 1.0)) ** (1.0 / (k + 1.0))))
    out = []
    for factor in THETA_FACTORS:
        th = base * factor
        sw = th * np.arange(1, n) / n
        for sigma in (1, -1):
            out.append((sigma, sw.copy(), th))
    return out


def _fallback_starts(k: np.ndarray, y: np.ndarray, count: int = 96):
    n = len(k)
    base = float(np.max((np.abs(y) * (k + 1.0)) ** (1.0 / (k + 1.0))))
    rng = np.random.default_rng(12345)
    out = []
    for _ in range(count):
        th = base * rng.uniform(0.5, 6.0)
        sw = np.sort(rng.uniform(0.0, th, n - 1))
        out.append((int(rng.choice([1, -1])), sw, th))
    return out


def _try_start(k, y, sigma, sw, th, tol, n, polish_tol=None):
    """Newton from one start, then canonical form.  Accepts residual <= ``tol``."""
    target = min(tol, polish_tol) if polish_tol is not None else tol
    s, theta, res = _newton(k, y, sigma, sw, th, tol=target)
    if res > tol:
        return None, res
    snap = 1e-9 * max(theta, 1e-300)
    ctrl = _canonical(sigma, s, theta, n, snap=snap)
    res_c = float(np.linalg.norm(moments(ctrl, k) - y))
    if res_c > target:
        # snapping a tiny interval moved the moments; re-polish in the reduced structure
        s2, th2, _ = _newton(k, y, ctrl.sigma, np.asarray(ctrl.switches), ctrl.theta, tol=target * 1e-2)
        ctrl = _canonical(ctrl.sigma, s2, th2, n, snap=snap)
        res_c = float(np.linalg.norm(moments(ctrl, k) - y))
    if res_c > tol:
        ctrl = _canonical(sigma, s, theta, n, snap=0.0)
        res_c = float(np.linalg.norm(moments(ctrl, k) - y))
        if res_c > tol:
            return None, res
    return ctrl, res_c


def solve(p: MomentProblem, *, guess: BangBangControl | None = None, exhaustive: bool = True,
          tol: float = RESIDUAL_TOL) -> BangBangControl:
    """Minimal-``theta`` bang-bang control reproducing the target moments.

    Every start of the multi-start grid runs damped Newton for both signs of
    the first constancy interval; among the feasible results the smallest
    ``theta`` wins.  With ``exhaustive=False`` a feasible ``guess`` is
    returned straight away (used by the fixed-point loop for warm starts).
    """
    k = np.asarray(p.exponents, dtype=float)
    y = np.asarray(p.y, dtype=float)
    n = p.n
    if not np.any(y):
        return BangBangControl(1, (0.0,) * (n - 1), 0.0)
    ynorm = float(np.linalg.norm(y))
    abs_tol = tol * max(1.0, ynorm)
    # candidates meeting the relative bound win over those only meeting the absolute one;
    # at small scales the absolute bound admits spurious near-solutions
    strict = tol * ynorm
    starts = _starts(k, y)
    if guess is not None and guess.theta > 0:
        starts.insert(0, (guess.sigma, np.asarray(guess.switches, dtype=float), guess.theta))
    found: list[tuple[BangBangControl, float]] = []
    best_res = np.inf
    for attempt, pool in enumerate((starts, _fallback_starts(k, y))):
        for idx, (sigma, sw, th) in enumerate(pool):
            ctrl, res = _try_start(k, y, sigma, sw, th, abs_tol, n, strict)
            best_res = min(best_res, res)
            if ctrl is None:
                continue
            found.append((ctrl, res))
            if not exhaustive and res <= strict:
                return ctrl
        if any(res <= strict for _, res in found):
            break
        log.debug("moment solve: no strictly feasible start in pool %d, widening", attempt)
    if not found:
        raise MomentSolveError(f"no feasible bang-bang control for y={y.tolist()}", best_res)
    precise = [c for c, res in found if res <= strict]
    return _select(precise or [c for c, _ in found])


def _select(found: list[BangBangControl]) -> BangBangControl:
    theta_min = min(c.theta for c in found)
    near = [c for c in found if c.theta <= theta_min * (1 + TIE_TOL) + 1e-300]
    distinct: list[BangBangControl] = []
    for c in sorted(near, key=lambda c: (c.switches, c.sigma)):
        if not any(c.sigma == d.sigma and np.allclose(c.switches, d.switches, rtol=0, atol=1e-8 * max(c.theta, 1))
                   for d in distinct):
            distinct.append(c)
    if len(distinct) > 1:
        log.warning("moment solve: %d distinct minimizers within tolerance; taking lexicographically first",
                    len(distinct))
    best = min(distinct, key=lambda c: (c.switches, c.theta))
    return best


def residual(ctrl: BangBangControl, p: MomentProblem) -> float:
    return float(np.linalg.norm(moments(ctrl, p.exponents) - np.asarray(p.y)))


def control_on_horizon(p: MomentProblem, theta: float, *, grid: int = 8,
                       tol_rel: float = 1e-6) -> tuple[BangBangControl | None, float]:
    """A bang-bang control with up to ``n`` switches reproducing ``y`` on ``[0, theta]``.

    Dense multi-start Gauss-Newton over the switching times with ``theta``
    fixed.  Returns ``(control or None, best_residual)``.
    """
    k = np.asarray(p.exponents, dtype=float)
    y = np.asarray(p.y, dtype=float)
    n = p.n
    threshold = tol_rel * float(np.linalg.norm(y))
    nodes = theta * (np.arange(grid) + 0.5) / grid
    best = np.inf
    for combo in itertools.combinations_with_replacement(range(grid), n):
        sw = nodes[list(combo)]
        for sigma in (1, -1):
            s, _, res = _newton(k, y, sigma, sw, theta, fixed_theta=True, tol=threshold * 1e-3,
                                max_iter=60)
            best = min(best, res)
            if res <= threshold:
                return BangBangControl(sigma, tuple(float(v) for v in s), theta), res
    return None, best


def reachable_with_switches(p: MomentProblem, theta: float, **kw) -> tuple[bool, float]:
    """Is ``y`` reproduced on ``[0, theta]`` with up to n switches?  ``(feasible, best_residual)``."""
    ctrl, best = control_on_horizon(p, theta, **kw)
    return ctrl is not None, best


def verify_minimality(ctrl: BangBangControl, p: MomentProblem, shrink: float = 0.02, **kw) -> bool:
    """True iff no control reproduces ``y`` on the shortened horizon ``(1 - shrink) * theta``."""
    if not np.any(p.y):
        return True
    feasible, _ = reachable_with_switches(p, (1.0 - shrink) * ctrl.theta, **kw)
    return not feasible


def solve_n3_gap(y: Sequence[float], *, tol: float = RESIDUAL_TOL) -> BangBangControl:
    """Exponents (0, 1, 3) with exactly two switchings, via the sextic in theta.

    With ``u = sigma`` on the first and third intervals,
    ``t2 - t1 = c1``, ``t2^2 - t1^2 = c2``, ``t2^4 - t1^4 = c3`` where
    ``c1 = (theta - sigma y1)/2``, ``c2 = theta^2/2 - sigma y2`` and
    ``c3 = theta^4/2 - 2 sigma y3``; eliminating the switches leaves
    ``c2^3 + c2 c1^4 - 2 c3 c1^2 = 0``.
    """
    from numpy.polynomial import Polynomial as P

    y = np.asarray(y, dtype=float)
    if y.shape != (3,):
        raise ValueError("solve_n3_gap needs a 3-vector")
    if not np.any(y):
        return BangBangControl(1, (0.0, 0.0), 0.0)
    k = np.array([0.0, 1.0, 3.0])
    abs_tol = tol * max(1.0, float(np.linalg.norm(y)))
    candidates = []
    for sigma in (1, -1):
        c1 = P([-sigma * y[0] / 2, 0.5])
        c2 = P([-sigma * y[1], 0.0, 0.5])
        c3 = P([-2 * sigma * y[2], 0.0, 0.0, 0.0, 0.5])
        poly = c2 ** 3 + c2 * c1 ** 4 - 2 * c3 * c1 ** 2
        for root in poly.roots():
            if abs(root.imag) > 1e-8 * max(1.0, abs(root)) or root.real <= 0:
                continue
            th = float(root.real)
            a1, a2 = c1(th), c2(th)
            if a1 <= 0 or a2 == 0:
                continue
            t1 = 0.5 * (a2 / a1 - a1)
            t2 = 0.5 * (a2 / a1 + a1)
            slack = 1e-9 * th
            if not (-slack < t1 < t2 < th + slack):
                continue
            # polish the root with Newton on the full system
            s, th_p, res = _newton(k, y, sigma, np.array([t1, t2]), th, tol=abs_tol * 1e-2, max_iter=20)
            if res > abs_tol:
                continue
            if not (0 < s[0] < s[1] < th_p):
                continue
            candidates.append(BangBangControl(sigma, (float(s[0]), float(s[1])), float(th_p)))
    if not candidates:
        raise MomentSolveError(f"no admissible root with 0 < t1 < t2 < theta for y={y.tolist()}")
    return min(candidates, key=lambda c: c.theta)
