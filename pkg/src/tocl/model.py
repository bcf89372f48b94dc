"""Affine control systems ``x' = a(t, x) + b(t, x) u`` and the operator R.

``apply_R`` implements ``R c = c_t + c_x a - a_x c``; iterating it on ``b``
gives the columns of the matrix ``R(t, x) = (b, Rb, ..., R^{n-1} b)`` whose
properties drive the linearizability test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from . import expr as ex
from .expr import Expr, VecExpr

log = logging.getLogger(__name__)

NODE_BUDGET = 200_000
ZERO_TOL = 1e-9
RANK_TOL = 1e-9


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ControlSystem:
    n: int
    a: VecExpr
    b: VecExpr
    t_radius: float = 1.0
    x_radius: float = 1.0
    name: str = ""

    def __post_init__(self):
        if len(self.a) != self.n or len(self.b) != self.n:
            raise ModelError(f"drift and control field must have {self.n} components")
        if self.t_radius <= 0 or self.x_radius <= 0:
            raise ModelError("neighborhood radii must be positive")
        for i, comp in enumerate(list(self.a) + list(self.b)):
            bad = [v for v in comp.variables() if v > self.n]
            if bad:
                raise ModelError(f"component {i} uses x{bad[0]} beyond dimension {self.n}")
        # equilibrium: a(t, 0) == 0
        zero = np.zeros(self.n)
        for t in np.linspace(-self.t_radius, self.t_radius, 21):
            va = self.a.evaluate(t, zero)
            if np.max(np.abs(va)) > 1e-12:
                raise ModelError(f"a(t, 0) != 0 at t={t:.6g}: origin is not an equilibrium")

    @classmethod
    def from_strings(cls, a: Sequence[str], b: Sequence[str], *, t_radius=1.0, x_radius=1.0,
                     name: str = "") -> "ControlSystem":
        n = len(a)
        return cls(n, VecExpr.parse(a, n), VecExpr.parse(b, n), float(t_radius), float(x_radius), name)

    @cached_property
    def drift(self):
        return self.a.compile()

    @cached_property
    def control_field(self):
        return self.b.compile()

    def rhs(self, t: float, x, u: float) -> np.ndarray:
        return self.drift(t, x) + self.control_field(t, x) * u


def _jacobian(c: VecExpr) -> list[list[Expr]]:
    return [[ex.differentiate(ci, j + 1) for j in range(c.n)] for ci in c]


def apply_R(c: VecExpr, sys: ControlSystem, budget: int = NODE_BUDGET) -> VecExpr:
    """``c_t + c_x a - a_x c``, simplified."""
    if len(c) != sys.n:
        raise ModelError("field dimension mismatch")
    cx = _jacobian(c)
    ax = _jacobian(sys.a)
    out = []
    for i in range(sys.n):
        term = ex.differentiate(c[i], 0)
        for j in range(sys.n):
            term = ex.add(term, ex.mul(cx[i][j], sys.a[j]))
            term = ex.sub(term, ex.mul(ax[i][j], c[j]))
        if term.size() > budget:
            raise ex.ExpressionOverflow(
                f"R c component {i + 1} has {term.size()} nodes (budget {budget}); "
                "use the numeric mode")
        out.append(ex.simplify(term))
    return VecExpr(tuple(out))


def lie_bracket(c: VecExpr, d: VecExpr) -> VecExpr:
    """``[c, d] = d_x c - c_x d``."""
    if len(c) != len(d):
        raise ModelError("field dimension mismatch")
    n = len(c)
    cx, dx = _jacobian(c), _jacobian(d)
    out = []
    for i in range(n):
        term: Expr = ex.ZERO
        for j in range(n):
            term = ex.add(term, ex.mul(dx[i][j], c[j]))
            term = ex.sub(term, ex.mul(cx[i][j], d[j]))
        out.append(ex.simplify(term))
    return VecExpr(tuple(out))


@dataclass(frozen=True)
class IteratedFields:
    """``fields[i] = R^i b`` for ``i = 0..n``."""

    system: ControlSystem
    fields: tuple[VecExpr, ...]

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def R_matrix(self) -> list[list[Expr]]:
        n = self.n
        return [[self.fields[j][i] for j in range(n)] for i in range(n)]

    @cached_property
    def _compiled(self):
        return [f.compile() for f in self.fields]

    def R(self, t: float, x) -> np.ndarray:
        """Numeric ``R(t, x)``; columns are ``R^j b``."""
        cols = [self._compiled[j](t, x) for j in range(self.n)]
        return np.column_stack(cols)

    def top(self, t: float, x) -> np.ndarray:
        """Numeric ``R^n b(t, x)``."""
        return self._compiled[self.n](t, x)


def iterated_fields(sys: ControlSystem, budget: int = NODE_BUDGET) -> IteratedFields:
    fields = [sys.b.simplify()]
    for _ in range(sys.n):
        fields.append(apply_R(fields[-1], sys, budget))
    return IteratedFields(sys, tuple(fields))


def det_R(fields: IteratedFields, t: float, x) -> float:
    return float(np.linalg.det(fields.R(t, x)))


def det_expr(matrix: list[list[Expr]]) -> Expr:
    """Symbolic determinant by cofactor expansion (small n only)."""
    n = len(matrix)
    if n == 1:
        return matrix[0][0]
    total: Expr = ex.ZERO
    for j in range(n):
        if matrix[0][j].is_zero():
            continue
        minor = [row[:j] + row[j + 1:] for row in matrix[1:]]
        term = ex.mul(matrix[0][j], det_expr(minor))
        total = ex.add(total, term) if j % 2 == 0 else ex.sub(total, term)
    return ex.simplify(total)


# -- numeric certificates ---------------------------------------------------------------

@dataclass
class Verdict:
    """Outcome of one condition check.

    ``status`` is ``pass_symbolic``, ``pass_numeric``, ``fail`` or
    ``undetermined``.
    """

    name: str
    status: str
    detail: str = ""
    witness: dict | None = None
    grid: dict | None = None
    tol: float | None = None
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status in ("pass_symbolic", "pass_numeric")

    def to_dict(self) -> dict:
        out = {"name": self.name, "status": self.status, "detail": self.detail}
        for key in ("witness", "grid", "tol"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.data:
            out["data"] = self.data
        return out


def halton_grid(sys: ControlSystem, count: int = 64, exclude_t0: bool = False,
                t_margin: float = 1e-3) -> np.ndarray:
    """Deterministic Halton points over ``(-delta, delta) x [-rho, rho]^n``; rows are ``(t, x)``."""
    sampler = qmc.Halton(d=sys.n + 1, scramble=False)
    sampler.fast_forward(1)  # skip the all-zeros point
    pts = sampler.random(count * 2 if exclude_t0 else count)
    pts = 2.0 * pts - 1.0
    pts[:, 0] *= sys.t_radius
    pts[:, 1:] *= sys.x_radius
    if exclude_t0:
        pts = pts[np.abs(pts[:, 0]) > t_margin * sys.t_radius][:count]
    return pts


def _grid_info(points: np.ndarray) -> dict:
    return {"kind": "halton", "points": int(len(points))}


def check_brackets(fields: IteratedFields, tol: float = ZERO_TOL, count: int = 64) -> Verdict:
    """Condition 1: all ``[R^i b, R^j b]`` vanish for ``0 <= i < j <= n-1``."""
    n = fields.n
    pts = halton_grid(fields.system, count)
    symbolic = True
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            br = lie_bracket(fields.fields[i], fields.fields[j])
            if br.is_zero():
                continue
            symbolic = False
            fn = br.compile()
            for p in pts:
                v = float(np.max(np.abs(fn(p[0], p[1:]))))
                worst = max(worst, v)
                if v >= tol:
                    return Verdict(
                        "brackets", "fail", f"[R^{i}b, R^{j}b] != 0",
                        witness={"i": i, "j": j, "t": float(p[0]), "x": p[1:].tolist(),
                                 "value": fn(p[0], p[1:]).tolist(), "bracket": str(br)},
                        grid=_grid_info(pts), tol=tol)
    if symbolic:
        return Verdict("brackets", "pass_symbolic", "all brackets simplify to 0")
    return Verdict("brackets", "pass_numeric", f"max |bracket| = {worst:.3g}",
                   grid=_grid_info(pts), tol=tol)


def check_rank(fields: IteratedFields, tol: float = RANK_TOL, count: int = 64) -> Verdict:
    """Condition 2: ``rank R(t, x) = n`` away from ``t = 0``."""
    pts = halton_grid(fields.system, count, exclude_t0=True)
    worst = np.inf
    for p in pts:
        R = fields.R(p[0], p[1:])
        s = np.linalg.svd(R, compute_uv=False)
        ratio = s[-1] / max(s[0], np.finfo(float).tiny)
        worst = min(worst, ratio)
        if ratio <= tol:
            return Verdict("rank", "fail", "R(t, x) is rank deficient",
                           witness={"t": float(p[0]), "x": p[1:].tolist(),
                                    "sigma_min_over_max": float(ratio)},
                           grid=_grid_info(pts), tol=tol)
    return Verdict("rank", "pass_numeric", f"min sigma_min/sigma_max = {worst:.3g}",
                   grid=_grid_info(pts), tol=tol)
