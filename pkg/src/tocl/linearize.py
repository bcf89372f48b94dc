"""Linearizability test and driftless canonical form.

Pipeline: ``gamma(t) = R^{-1} R^n b`` as Laurent series, the indicial
polynomial and its integer roots, the V coefficients, the Frobenius-type
recurrence for the driftless field ``g(t)``, and the change of variables at
``t = 0`` obtained by integrating ``M(x) = G(t) R^{-1}(t, x)|_{t=0}`` along
coordinate segments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import model
from .expr import ExpressionOverflow, SingularEvaluationError
from .model import ControlSystem, IteratedFields, Verdict
from .series import (DEFAULT_ORDER, LaurentSeries, SeriesError, falling_factorial,
                     fit_from_samples, from_expr, symmetric_samples)

log = logging.getLogger(__name__)


class LinearizationError(ValueError):
    pass


class ConditionFailure(LinearizationError):
    def __init__(self, condition: str, message: str, witness: dict | None = None):
        self.condition = condition
        self.witness = witness
        super().__init__(f"{condition}: {message}")


class RecurrenceBreakdown(LinearizationError):
    pass


class ExtrapolationError(LinearizationError):
    pass


class QuadratureError(LinearizationError):
    pass


# -- gamma ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaSeries:
    components: tuple[LaurentSeries, ...]
    exact: bool
    method: str
    x_samples: tuple = ()

    @property
    def n(self) -> int:
        return len(self.components)

    def coefficient(self, i: int, j: int):
        """``gamma_{i,j}`` with 1-based component index ``i``."""
        return self.components[i - 1].coefficient(j)

    def __getitem__(self, i):
        return self.components[i]


def _rational_samples(sys: ControlSystem, count: int) -> list[tuple[Fraction, ...]]:
    rho = Fraction(sys.x_radius).limit_denominator(1000)
    pattern = [Fraction(1, 3), Fraction(-2, 7), Fraction(3, 11), Fraction(-5, 13), Fraction(4, 17),
               Fraction(-6, 19), Fraction(7, 23)]
    out = [tuple(Fraction(0) for _ in range(sys.n))]
    for s in range(1, count):
        out.append(tuple(rho * pattern[(s * (i + 2) + i) % len(pattern)] * (1 if (s + i) % 2 else -1)
                         for i in range(sys.n)))
    return out


def solve_series(A: list[list[LaurentSeries]], b: list[LaurentSeries]) -> list[LaurentSeries]:
    """Gaussian elimination over truncated Laurent series (pivot on lowest lead)."""
    n = len(b)
    A = [row[:] for row in A]
    b = b[:]
    for col in range(n):
        candidates = [r for r in range(col, n) if not A[r][col].is_zero()]
        if not candidates:
            raise SeriesError("singular series matrix")
        piv = min(candidates, key=lambda r: A[r][col].lead)
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        inv = A[col][col].inverse()
        for r in range(col + 1, n):
            if A[r][col].is_zero():
                continue
            f = A[r][col] * inv
            for j in range(col, n):
                A[r][j] = A[r][j] - f * A[col][j]
            b[r] = b[r] - f * b[col]
    out: list[LaurentSeries] = [None] * n  # type: ignore[list-item]
    for r in range(n - 1, -1, -1):
        acc = b[r]
        for j in range(r + 1, n):
            acc = acc - A[r][j] * out[j]
        out[r] = acc / A[r][r]
    return out


def _gamma_at(fields: IteratedFields, xs, order: int) -> list[LaurentSeries]:
    n = fields.n
    R = [[from_expr(fields.fields[j][i], xs, order) for j in range(n)] for i in range(n)]
    top = [from_expr(fields.fields[n][i], xs, order) for i in range(n)]
    return solve_series(R, top)


def extract_gamma(sys: ControlSystem, fields: IteratedFields | None = None, *,
                  order: int = DEFAULT_ORDER, method: str = "symbolic", samples: int = 3,
                  check: bool = True, tol: float = 1e-8) -> GammaSeries:
    """``gamma(t) = R^{-1}(t, x) R^n b(t, x)`` as Laurent series.

    ``method="symbolic"`` expands every entry exactly at rational state
    samples and solves over the series field; ``"numeric"`` solves pointwise
    and fits.  Raises ConditionFailure when gamma depends on x or breaks the
    pole bound.
    """
    fields = fields or model.iterated_fields(sys)
    n = sys.n
    if check:
        for verdict in (model.check_brackets(fields), model.check_rank(fields)):
            if not verdict.passed:
                raise ConditionFailure(f"precondition ({verdict.name})", verdict.detail, verdict.witness)
    if method == "symbolic":
        gamma = _extract_symbolic(sys, fields, order, samples)
    elif method == "numeric":
        gamma = _extract_numeric(sys, fields, order, samples, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    for i, g in enumerate(gamma.components, start=1):
        bound = -(n - i + 1)
        if not g.is_zero() and g.lead < bound:
            raise ConditionFailure("condition 4", f"gamma_{i} has a pole of order {-g.lead} > {-bound}",
                                   {"component": i, "lead": g.lead})
    return gamma


def _extract_symbolic(sys, fields, order, samples) -> GammaSeries:
    xs_list = _rational_samples(sys, max(samples, 3))
    working = order + 2 * sys.n + 2
    for _attempt in range(4):
        results = []
        for xs in xs_list:
            try:
                results.append(_gamma_at(fields, xs, working))
            except (SeriesError, SingularEvaluationError) as exc:
                log.debug("series solve failed at x=%s: %s", xs, exc)
        if not results:
            raise ConditionFailure("condition 2", "R(t, x) is singular as a series at every sample")
        if min(g.order for g in results[0]) >= order:
            break
        working += order
    reference = results[0]
    for xs, other in zip(xs_list[1:], results[1:]):
        for i, (g0, g1) in enumerate(zip(reference, other), start=1):
            top = min(g0.order, g1.order, order)
            for k in range(min(g0.lead, g1.lead, top), top):
                if g0.coefficient(k) != g1.coefficient(k):
                    raise ConditionFailure(
                        "condition 3", f"gamma_{i} depends on x (coefficient of t^{k})",
                        {"component": i, "power": k, "x_a": [str(v) for v in xs_list[0]],
                         "x_b": [str(v) for v in xs], "value_a": str(g0.coefficient(k)),
                         "value_b": str(g1.coefficient(k))})
    comps = tuple(g.truncate(order) for g in reference)
    exact = all(g.is_exact for g in comps)
    return GammaSeries(comps, exact, "symbolic", tuple(tuple(str(v) for v in xs) for xs in xs_list))


def _extract_numeric(sys, fields, order, samples, tol, degree: int = 20,
                     count: int = 48) -> GammaSeries:
    n = sys.n
    radius = 0.4 * min(sys.t_radius, 1.0)
    ts = symmetric_samples(radius, count)
    xs_list = [np.asarray([float(v) for v in xs]) for xs in _rational_samples(sys, max(samples, 3))]
    values = np.zeros((len(xs_list), len(ts), n))
    for a, xs in enumerate(xs_list):
        for b, t in enumerate(ts):
            values[a, b] = np.linalg.solve(fields.R(t, xs), fields.top(t, xs))
    spread = np.max(np.abs(values - values[0]), axis=(0, 1))
    scale = np.maximum(np.max(np.abs(values[0]), axis=0), 1.0)
    for i in range(n):
        if spread[i] > tol * scale[i]:
            a, b = np.unravel_index(np.argmax(np.abs(values[:, :, i] - values[0, :, i])), values.shape[:2])
            raise ConditionFailure("condition 3", f"gamma_{i + 1} depends on x",
                                   {"component": i + 1, "t": ts[b], "x": xs_list[a].tolist(),
                                    "spread": float(spread[i])})
    comps = []
    for i in range(n):
        p = n - i  # pole bound for gamma_{i+1}
        series, _ = fit_from_samples(list(zip(ts, values[0, :, i])), p, degree)
        comps.append(series.chop(1e-9))
    return GammaSeries(tuple(comps), False, "numeric", tuple(tuple(x.tolist()) for x in xs_list))


# -- indicial equation -------------------------------------------------------------------

@dataclass
class IndicialSolution:
    n: int
    roots: tuple[int, ...]
    polynomial: tuple  # coefficients of P(k) in the falling-factorial basis k^(n-s), s=0..n
    status: str  # pass | fail | undetermined
    message: str
    satisfied_cond4: bool
    satisfied_cond5: bool
    rank: int | None = None
    expected_rank: int | None = None
    V: dict = field(default_factory=dict)
    k_max: int = 0
    exact: bool = True

    def V_at(self, k: int, j: int):
        return self.V[(k, j)]


def _indicial_value(gamma: GammaSeries, n: int, k: int):
    val = falling_factorial(k, n)
    for s in range(1, n + 1):
        val = val - falling_factorial(k, n - s) * gamma.coefficient(n - s + 1, -s)
    return val


def V_entry(gamma: GammaSeries, n: int, k: int, j: int):
    """``V_{k,k}`` is the indicial value; ``V_{k,j} = -sum_s j^(n-s) gamma_{n-s+1, k-j-s}``."""
    if j == k:
        return _indicial_value(gamma, n, k)
    if j > k:
        return Fraction(0) if gamma.exact else 0.0
    total = Fraction(0) if gamma.exact else 0.0
    for s in range(1, n + 1):
        ff = falling_factorial(j, n - s)
        if ff:
            total = total - ff * gamma.coefficient(n - s + 1, k - j - s)
    return total


def _is_zero(v, tol: float) -> bool:
    return v == 0 if isinstance(v, Fraction) else abs(v) <= tol


def _rank(rows: list[list], tol: float) -> int:
    """Row rank by elimination; exact for Fractions, thresholded for floats."""
    m = [r[:] for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for c in range(ncols):
        piv = None
        best = 0
        for r in range(rank, len(m)):
            v = m[r][c]
            if not _is_zero(v, tol) and abs(v) > best:
                piv, best = r, abs(v)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and not _is_zero(m[r][c], tol):
                f = m[r][c] / m[rank][c]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def validity_order(gamma: GammaSeries) -> int:
    """Largest k such that every V_{k', j} with k' < k is computable."""
    n = gamma.n
    return min(gamma.components[n - s].order + s for s in range(1, n + 1))


def indicial(gamma: GammaSeries, n: int | None = None, *, k_max_search: int | None = None,
             tol: float = 1e-9) -> IndicialSolution:
    n = n or gamma.n
    k_max_search = k_max_search if k_max_search is not None else 10 * n
    exact = gamma.exact
    poly = tuple([Fraction(1) if exact else 1.0] +
                 [-gamma.coefficient(n - s + 1, -s) for s in range(1, n + 1)])
    roots = []
    for k in range(k_max_search + 1):
        v = _indicial_value(gamma, n, k)
        if _is_zero(v, tol * max(1.0, float(falling_factorial(k, n)))):
            roots.append(k)
    status, message = "pass", ""
    if len(roots) != n:
        # could more roots hide above the search cap?
        coeffs = np.zeros(n + 1)
        for s, c in enumerate(poly):
            ff = np.poly1d([1.0])
            for m in range(n - s):
                ff = ff * np.poly1d([1.0, -m])
            coeffs = np.polyadd(coeffs, float(c) * ff.coeffs)
        real = [r.real for r in np.roots(coeffs) if abs(r.imag) < 1e-9]
        if len(roots) < n and any(r > k_max_search + 0.5 for r in real):
            status = "undetermined"
            message = f"found {len(roots)} integer roots <= {k_max_search}; larger roots possible"
        else:
            status = "fail"
            message = f"indicial equation has {len(roots)} nonnegative integer roots, need {n}"
        return IndicialSolution(n, tuple(roots), poly, status, message, False, False, exact=exact)

    k_max = max(validity_order(gamma) - 1, roots[-1])
    V = {}
    for k in range(k_max + 1):
        for j in range(k + 1):
            V[(k, j)] = V_entry(gamma, n, k, j)
    k1, kn = roots[0], roots[-1]
    rows = [[V[(m, j)] if j <= m else 0 for j in range(k1, kn)] for m in range(k1 + 1, kn + 1)]
    expected = kn - k1 - n + 1
    rank = _rank(rows, tol) if rows else 0
    cond4 = rank == expected
    cond5 = all(_is_zero(V[(l, ki)], tol) for ki in roots[:-1] for l in range(ki + 1, kn + 1))
    if not cond4:
        status, message = "fail", f"rank of the V matrix is {rank}, expected {expected}"
    return IndicialSolution(n, tuple(roots), poly, status, message, cond4, cond5, rank, expected,
                            V, k_max, exact)


# -- driftless form ---------------------------------------------------------------------------

@dataclass
class DriftlessForm:
    g: tuple[LaurentSeries, ...]
    L: list[list]
    gamma: GammaSeries
    indicial: IndicialSolution
    order: int
    residual: float
    fields: IteratedFields | None = None

    @property
    def n(self) -> int:
        return len(self.g)

    @property
    def roots(self) -> tuple[int, ...]:
        return self.indicial.roots

    def L_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.L])

    def g_at(self, t: float) -> np.ndarray:
        return np.array([gi.evaluate(t) for gi in self.g])

    def G(self, t: float) -> np.ndarray:
        """``(g, g', ..., g^(n-1))`` evaluated at ``t``; column j is the j-th derivative."""
        n = self.n
        return np.array([[self._derivs[i][j].evaluate(t) for j in range(n)] for i in range(n)])

    @property
    def _derivs(self):
        cache = self.__dict__.get("_deriv_cache")
        if cache is None:
            cache = [[gi.derivative(j) for j in range(self.n)] for gi in self.g]
            self.__dict__["_deriv_cache"] = cache
        return cache

    def M(self, x, **kw) -> np.ndarray:
        """``G(t) R^{-1}(t, x)`` in the limit ``t -> 0``."""
        if self.fields is None:
            raise LinearizationError("driftless form was built without the iterated fields")
        return M_limit(self.fields, self, x, **kw)


def build_driftless(gamma: GammaSeries, ind: IndicialSolution, *, order: int | None = None,
                    fields: IteratedFields | None = None, tol: float = 1e-10) -> DriftlessForm:
    """Series solutions ``g_i = -t^{k_i} + o(t^{k_n})`` of the scalar ODE, hence ``L = I``."""
    if not ind.satisfied_cond4:
        raise ConditionFailure("condition 4", ind.message or "indicial conditions not satisfied")
    n = gamma.n
    K = min(order or DEFAULT_ORDER, ind.k_max + 1)
    roots = ind.roots
    zero = Fraction(0) if ind.exact else 0.0
    g = []
    for i, ki in enumerate(roots):
        w = []
        for k in range(K):
            acc = zero
            for j in range(k):
                if w[j] != 0:
                    acc = acc + ind.V[(k, j)] * w[j]
            if k in roots:
                if not _is_zero(acc, tol):
                    raise RecurrenceBreakdown(
                        f"recurrence inconsistent at root k={k} for g_{i + 1} (residual {acc})")
                w.append(Fraction(-1) if k == ki else zero)
                if not ind.exact:
                    w[-1] = float(w[-1])
                continue
            vkk = ind.V[(k, k)]
            if _is_zero(vkk, tol):
                raise RecurrenceBreakdown(f"V_{{{k},{k}}} = 0 at a non-root index")
            w.append(-acc / vkk)
        g.append(LaurentSeries(0, w, K))
    L = [[-g[m].coefficient(ki) for ki in roots] for m in range(n)]
    residual = ode_residual(gamma, g)
    return DriftlessForm(tuple(g), L, gamma, ind, K, residual, fields)


def ode_residual(gamma: GammaSeries, g: Sequence[LaurentSeries]) -> float:
    """Max coefficient of ``w^(n) - sum_k gamma_k w^(k-1)`` over the retained range."""
    n = gamma.n
    worst = 0.0
    for gi in g:
        r = gi.derivative(n)
        for k in range(1, n + 1):
            r = r - gamma.components[k - 1] * gi.derivative(k - 1)
        if not r.is_zero():
            worst = max(worst, max(abs(float(c)) for c in r.coeffs))
    return worst


# -- change of variables at t = 0 -----------------------------------------------------------------

def M_limit(fields: IteratedFields, df: DriftlessForm, x, *, eps: float | None = None,
            levels: int = 3, tol: float = 1e-9, max_levels: int = 10) -> np.ndarray:
    """Richardson-extrapolated ``lim_{t->0} G(t) R^{-1}(t, x)``.

    Starts from ``t = eps, eps/2, ..., eps/2^levels`` and keeps halving (up to
    ``max_levels``) until successive diagonal extrapolants agree to ``tol``.
    """
    x = np.asarray(x, dtype=float)
    eps = eps if eps is not None else 1e-2 * fields.system.t_radius

    def sample(t):
        return np.linalg.solve(fields.R(t, x).T, df.G(t).T).T

    table: list[list[np.ndarray]] = []
    for m in range(max_levels + 1):
        row = [sample(eps / 2 ** m)]
        for j in range(1, m + 1):
            row.append(row[j - 1] + (row[j - 1] - table[m - 1][j - 1]) / (2 ** j - 1))
        table.append(row)
        if m >= levels:
            diff = np.max(np.abs(row[-1] - table[m - 1][-1]))
            if diff < tol * max(1.0, np.max(np.abs(row[-1]))):
                return row[-1]
    raise ExtrapolationError(f"limit of G(t)R^-1(t,x) at x={x.tolist()} did not converge "
                             f"(last change {diff:.3g})")


def _simpson(f, a: float, b: float, tol: float, max_depth: int = 40):
    """Adaptive Simpson for vector-valued ``f``."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        err = np.max(np.abs(left + right - whole))
        if err <= 15 * tol:
            return left + right + (left + right - whole) / 15.0
        if depth >= max_depth:
            raise QuadratureError(f"adaptive Simpson did not reach {tol:g} on [{a}, {b}]")
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth + 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth + 1))

    return rec(a, b, fa, fm, fb, whole, tol, 0)


def F0_at(df: DriftlessForm, x0, *, axis_order: Sequence[int] | None = None,
          tol: float = 1e-10, **limit_kw) -> np.ndarray:
    """``F(0, x0)`` by sequential quadratures of ``dF/dx_s = M[:, s]`` along coordinate segments."""
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if not np.any(x0):
        return np.zeros(n)
    fields = df.fields
    if fields is None:
        raise LinearizationError("driftless form was built without the iterated fields")
    rho = fields.system.x_radius
    if np.max(np.abs(x0)) > rho:
        raise LinearizationError(f"x0 {x0.tolist()} is outside the declared neighborhood (radius {rho})")
    axes = list(axis_order) if axis_order is not None else list(range(n))
    F = np.zeros(n)
    point = np.zeros(n)
    for s in axes:
        if x0[s] == 0.0:
            continue

        def column(tau, s=s):
            p = point.copy()
            p[s] = tau
            return M_limit(fields, df, p, **limit_kw)[:, s]

        F = F + _simpson(column, 0.0, float(x0[s]), tol)
        point[s] = x0[s]
    return F


def F_at(df: DriftlessForm, t: float, x, *, tol: float = 1e-10) -> np.ndarray:
    """``F(t, x)`` for ``t != 0`` by quadrature of ``G(t) R^{-1}(t, .)`` along the segment from 0.

    Uses the normalization ``F(t, 0) = 0`` (the origin is an equilibrium).
    """
    if t == 0:
        return F0_at(df, x, tol=tol)
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return np.zeros(len(x))
    fields = df.fields
    if fields is None:
        raise LinearizationError("driftless form was built without the iterated fields")
    Gt = df.G(t)

    def integrand(s):
        M = np.linalg.solve(fields.R(t, s * x).T, Gt.T).T
        return M @ x

    return _simpson(integrand, 0.0, 1.0, tol)


# -- full check ------------------------------------------------------------------------------------

@dataclass
class LinearizationReport:
    system: ControlSystem
    verdicts: list[Verdict]
    fields: IteratedFields | None = None
    gamma: GammaSeries | None = None
    indicial: IndicialSolution | None = None
    driftless: DriftlessForm | None = None

    @property
    def linearizable(self) -> bool:
        names = {v.name: v for v in self.verdicts}
        need = ("brackets", "rank", "gamma", "indicial")
        return all(k in names and names[k].passed for k in need)

    @property
    def fixed_point_ready(self) -> bool:
        names = {v.name: v for v in self.verdicts}
        return self.linearizable and "cond14" in names and names["cond14"].passed

    @property
    def ok(self) -> bool:
        return all(v.passed for v in self.verdicts)


def check_system(sys: ControlSystem, *, order: int = DEFAULT_ORDER, method: str = "symbolic",
                 k_max_search: int | None = None) -> LinearizationReport:
    """Run every condition and collect verdicts instead of raising."""
    verdicts: list[Verdict] = []
    report = LinearizationReport(sys, verdicts)
    try:
        fields = model.iterated_fields(sys)
    except ExpressionOverflow as exc:
        verdicts.append(Verdict("fields", "undetermined", str(exc)))
        return report
    report.fields = fields
    verdicts.append(model.check_brackets(fields))
    verdicts.append(model.check_rank(fields))
    if not all(v.passed for v in verdicts):
        return report
    try:
        gamma = extract_gamma(sys, fields, order=order, method=method, check=False)
    except ConditionFailure as exc:
        name = "gamma" if "3" in exc.condition else "indicial"
        verdicts.append(Verdict(name, "fail", str(exc), witness=exc.witness))
        return report
    report.gamma = gamma
    kind = "pass_symbolic" if gamma.exact else "pass_numeric"
    verdicts.append(Verdict("gamma", kind, "R^-1 R^n b depends on t only",
                            data={"samples": [list(s) for s in gamma.x_samples]}))
    ind = indicial(gamma, sys.n, k_max_search=k_max_search)
    report.indicial = ind
    data = {"roots": list(ind.roots)}
    if ind.status != "pass":
        verdicts.append(Verdict("indicial", ind.status, ind.message, data=data))
        return report
    data.update(rank=ind.rank, expected_rank=ind.expected_rank)
    verdicts.append(Verdict("indicial", kind, f"roots {list(ind.roots)}", data=data))
    cond5_entries = {f"V[{l},{ki}]": str(ind.V[(l, ki)])
                     for ki in ind.roots[:-1] for l in range(ki + 1, ind.roots[-1] + 1)}
    if ind.satisfied_cond5:
        verdicts.append(Verdict("cond14", kind, "V_{l,k_i} = 0", data=cond5_entries))
    else:
        bad = {k: v for k, v in cond5_entries.items() if v not in ("0", "0.0")}
        verdicts.append(Verdict("cond14", "fail", "some V_{l,k_i} are nonzero", witness=bad))
    try:
        report.driftless = build_driftless(gamma, ind, order=order, fields=fields)
    except LinearizationError as exc:
        verdicts.append(Verdict("driftless", "fail", str(exc)))
    return report
