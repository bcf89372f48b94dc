"""Truncated Laurent series in ``t`` with a finite pole at the origin.

A series stores its lowest exponent ``lead``, the coefficients for
``lead, lead+1, ...`` and an absolute ``order``: every coefficient with
exponent below ``order`` is known, everything from ``order`` on is unknown
(``O(t**order)``).  Coefficients stay :class:`~fractions.Fraction` as long as
the inputs are rational.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import expr as ex

DEFAULT_ORDER = 40


class SeriesError(ArithmeticError):
    pass


class IllConditionedFit(SeriesError):
    def __init__(self, cond: float, threshold: float):
        self.cond = cond
        self.threshold = threshold
        super().__init__(f"fit refused: condition number {cond:.3g} exceeds {threshold:.3g}")


def _is_zero(c, tol: float = 0.0) -> bool:
    if isinstance(c, float):
        return abs(c) <= tol
    return c == 0


class LaurentSeries:
    __slots__ = ("lead", "coeffs", "order")

    def __init__(self, lead: int, coeffs: Iterable, order: int | None = None):
        coeffs = [Fraction(c) if isinstance(c, int) else c for c in coeffs]
        if order is None:
            order = lead + len(coeffs)
        coeffs = coeffs[: max(order - lead, 0)]
        # normalise: drop exact leading zeros
        k = 0
        while k < len(coeffs) and _is_zero(coeffs[k]):
            k += 1
        lead += k
        coeffs = coeffs[k:]
        while coeffs and _is_zero(coeffs[-1]):
            coeffs.pop()
        if not coeffs:
            lead = order
        self.lead = int(lead)
        self.coeffs = tuple(coeffs)
        self.order = int(order)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls, order: int = DEFAULT_ORDER) -> "LaurentSeries":
        return cls(order, (), order)

    @classmethod
    def constant(cls, c, order: int = DEFAULT_ORDER) -> "LaurentSeries":
        return cls(0, [c], order)

    @classmethod
    def monomial(cls, k: int, c=1, order: int = DEFAULT_ORDER) -> "LaurentSeries":
        return cls(k, [c], max(order, k + 1))

    @classmethod
    def from_dict(cls, terms: dict[int, object], order: int = DEFAULT_ORDER) -> "LaurentSeries":
        if not terms:
            return cls.zero(order)
        lo = min(terms)
        coeffs = [terms.get(k, 0) for k in range(lo, max(lo, order))]
        return cls(lo, coeffs, order)

    # -- access -----------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_exact(self) -> bool:
        return not any(isinstance(c, float) for c in self.coeffs)

    def coefficient(self, k: int):
        if k >= self.order:
            raise SeriesError(f"coefficient t^{k} beyond known order {self.order}")
        i = k - self.lead
        if i < 0 or i >= len(self.coeffs):
            return Fraction(0) if self.is_exact else 0.0
        return self.coeffs[i]

    def __getitem__(self, k: int):
        return self.coefficient(k)

    def terms(self) -> dict[int, object]:
        return {self.lead + i: c for i, c in enumerate(self.coeffs) if not _is_zero(c)}

    def truncate(self, order: int) -> "LaurentSeries":
        return LaurentSeries(self.lead, self.coeffs, min(order, self.order))

    def with_order(self, order: int) -> "LaurentSeries":
        """Declare a higher order for a series known to be exact (e.g. a polynomial)."""
        return LaurentSeries(self.lead, self.coeffs, order)

    def to_float(self) -> "LaurentSeries":
        return LaurentSeries(self.lead, [float(c) for c in self.coeffs], self.order)

    def chop(self, tol: float) -> "LaurentSeries":
        return LaurentSeries(self.lead, [0.0 if abs(c) <= tol else c for c in self.coeffs], self.order)

    def __str__(self):
        parts = []
        for k, c in self.terms().items():
            mono = "" if k == 0 else ("t" if k == 1 else f"t^{k}")
            coef = str(c)
            if mono and coef in ("1", "-1", "1.0", "-1.0"):
                text = ("-" if coef.startswith("-") else "") + mono
            elif mono:
                text = f"{coef}*{mono}" if "/" not in coef else f"({coef})*{mono}"
            else:
                text = coef
            parts.append(text)
        body = " + ".join(parts).replace("+ -", "- ") or "0"
        return f"{body} + O(t^{self.order})"

    def __repr__(self):
        body = " + ".join(f"({c})*t^{k}" for k, c in self.terms().items()) or "0"
        return f"LaurentSeries({body} + O(t^{self.order}))"

    def __eq__(self, other):
        if not isinstance(other, LaurentSeries):
            return NotImplemented
        return (self.lead, self.coeffs, self.order) == (other.lead, other.coeffs, other.order)

    def __hash__(self):
        return hash((self.lead, self.coeffs, self.order))

    # -- arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "LaurentSeries":
        if isinstance(other, LaurentSeries):
            return other
        return LaurentSeries.constant(other, max(self.order, 1))

    def __neg__(self):
        return LaurentSeries(self.lead, [-c for c in self.coeffs], self.order)

    def __add__(self, other):
        other = self._coerce(other)
        order = min(self.order, other.order)
        lo = min(self.lead, other.lead, order)
        coeffs = []
        for k in range(lo, order):
            coeffs.append(_get(self, k) + _get(other, k))
        return LaurentSeries(lo, coeffs, order)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        if self.is_zero() or other.is_zero():
            order = min(self.order + other.lead, other.order + self.lead)
            return LaurentSeries.zero(order)
        order = min(self.order + other.lead, other.order + self.lead)
        lead = self.lead + other.lead
        m = order - lead
        zero = 0 if self.is_exact and other.is_exact else 0.0
        out = [zero] * max(m, 0)
        bnz = [(j, c) for j, c in enumerate(other.coeffs) if c != 0]
        for i, a in enumerate(self.coeffs):
            if i >= m:
                break
            if a == 0:
                continue
            for j, b in bnz:
                if i + j >= m:
                    break
                out[i + j] = out[i + j] + a * b
        return LaurentSeries(lead, out, order)

    __rmul__ = __mul__

    def inverse(self) -> "LaurentSeries":
        if self.is_zero():
            raise SeriesError("division by zero series")
        rel = self.order - self.lead
        a = self.coeffs
        a0 = a[0]
        out = [1 / a0 if not isinstance(a0, Fraction) else Fraction(1) / a0]
        for k in range(1, rel):
            s = 0
            for i in range(1, min(k, len(a) - 1) + 1):
                s = s + a[i] * out[k - i]
            out.append(-s / a0)
        return LaurentSeries(-self.lead, out, -self.lead + rel)

    def __truediv__(self, other):
        other = self._coerce(other)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise SeriesError("only integer powers")
        if k < 0:
            return self.inverse() ** (-k)
        result = LaurentSeries.constant(1, max(self.order - self.lead, 1))
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # -- calculus -------------------------------------------------------------
    def derivative(self, order: int = 1) -> "LaurentSeries":
        """Term-by-term derivative; the known order drops by ``order``."""
        if order < 0:
            raise SeriesError("derivative order must be >= 0")
        if order == 0:
            return self
        out = {}
        for k, c in self.terms().items():
            f = falling_factorial(k, order)
            if f:
                out[k - order] = c * f
        return LaurentSeries.from_dict(out, self.order - order)

    def antiderivative(self) -> "LaurentSeries":
        """Antiderivative with zero constant term; a ``1/t`` term is an error."""
        out = {}
        for k, c in self.terms().items():
            if k == -1:
                raise SeriesError("antiderivative of t^-1 is not a Laurent series")
            out[k + 1] = c / (k + 1) if not isinstance(c, Fraction) else c / Fraction(k + 1)
        return LaurentSeries.from_dict(out, self.order + 1)

    def __call__(self, t: float) -> float:
        return self.evaluate(t)

    def evaluate(self, t: float) -> float:
        """Evaluate the retained part at ``t`` (Horner in float)."""
        if self.is_zero():
            return 0.0
        t = float(t)
        if t == 0.0 and self.lead < 0:
            raise ZeroDivisionError("series has a pole at t=0")
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * t + float(c)
        return acc * t ** self.lead

    def compose_entire(self, name: str) -> "LaurentSeries":
        """``sin``, ``cos`` or ``exp`` of a series with no pole."""
        if self.lead < 0 and not self.is_zero():
            raise SeriesError(f"{name} of a series with a pole")
        c0 = self.coefficient(0) if self.order > 0 else 0
        h = self - c0  # lead >= 1
        order = self.order
        if h.is_zero():
            v = getattr(math, name)(float(c0)) if c0 != 0 else (Fraction(0) if name == "sin" else Fraction(1))
            return LaurentSeries.constant(v, order)
        # power series of the entire function about 0 applied to h
        terms_needed = order  # h has lead >= 1
        hp = LaurentSeries.constant(1, order)
        exp_h = LaurentSeries.zero(order)
        sin_h = LaurentSeries.zero(order)
        cos_h = LaurentSeries.zero(order)
        fact = 1
        for m in range(terms_needed + 1):
            if m:
                hp = hp * h
                fact *= m
                if hp.is_zero() and hp.order >= order:
                    break
            term = hp * Fraction(1, fact)
            exp_h = exp_h + term
            if m % 2 == 1:
                sin_h = sin_h + (term if m % 4 == 1 else -term)
            else:
                cos_h = cos_h + (term if m % 4 == 0 else -term)
        if c0 == 0:
            return {"exp": exp_h, "sin": sin_h, "cos": cos_h}[name]
        c0f = float(c0)
        if name == "exp":
            return exp_h * math.exp(c0f)
        if name == "sin":
            return sin_h * math.cos(c0f) + cos_h * math.sin(c0f)
        return cos_h * math.cos(c0f) - sin_h * math.sin(c0f)


def _get(s: LaurentSeries, k: int):
    i = k - s.lead
    if 0 <= i < len(s.coeffs):
        return s.coeffs[i]
    return 0


def falling_factorial(k: int, j: int) -> int:
    """k(k-1)...(k-j+1), with the empty product 1 for j == 0."""
    out = 1
    for m in range(j):
        out *= k - m
    return out


# operation aliases used in the wider package
def add(a: LaurentSeries, b: LaurentSeries) -> LaurentSeries:
    return a + b


def mul(a: LaurentSeries, b: LaurentSeries) -> LaurentSeries:
    return a * b


def div(a: LaurentSeries, b: LaurentSeries) -> LaurentSeries:
    return a / b


def derivative(a: LaurentSeries, order: int = 1) -> LaurentSeries:
    return a.derivative(order)


def from_expr(e: ex.Expr, x: Sequence = (), order: int = DEFAULT_ORDER) -> LaurentSeries:
    """Expand ``e(t, x)`` about ``t = 0`` with the state frozen at ``x``.

    Rational ``x`` keeps coefficients exact.
    """
    x = tuple(Fraction(v) if isinstance(v, int) else v for v in x)
    cache: dict = {}
    nvars = len(x) + 1

    def go(node: ex.Expr, try_poly: bool = False) -> LaurentSeries:
        key = id(node)
        if key in cache:
            return cache[key][1]
        out = None
        if try_poly and not isinstance(node, (ex.Const, ex.Var)):
            poly = ex.to_poly(node, nvars) if node.variables() <= set(range(nvars)) else None
            if poly is not None:
                out = _from_poly(poly)
        if out is None:
            out = _expand(node)
        cache[key] = (node, out)
        return out

    def _from_poly(poly) -> LaurentSeries:
        terms: dict[int, object] = {}
        for mono, c in poly.items():
            v = c
            for i, k in enumerate(mono[1:]):
                if k:
                    v = v * x[i] ** k
            terms[mono[0]] = terms.get(mono[0], 0) + v
        return LaurentSeries.from_dict(terms, order)

    def _expand(node):
        if isinstance(node, ex.Const):
            return LaurentSeries.constant(node.value, order)
        if isinstance(node, ex.Var):
            if node.index == 0:
                return LaurentSeries.monomial(1, 1, order)
            if node.index > len(x):
                raise SeriesError(f"no value for x{node.index}")
            return LaurentSeries.constant(x[node.index - 1], order)
        if isinstance(node, ex.Neg):
            return -go(node.arg)
        if isinstance(node, ex.Add):
            return go(node.left) + go(node.right)
        if isinstance(node, ex.Sub):
            return go(node.left) - go(node.right)
        if isinstance(node, ex.Mul):
            return go(node.left) * go(node.right)
        if isinstance(node, ex.Div):
            den = go(node.right, True)
            if den.is_zero():
                raise ex.SingularEvaluationError(node.right, ("series", x))
            return go(node.left, True) / den
        if isinstance(node, ex.Pow):
            base = go(node.base, node.exponent < 0)
            if base.is_zero() and node.exponent < 0:
                raise ex.SingularEvaluationError(node.base, ("series", x))
            return base ** node.exponent
        if isinstance(node, ex.Func):
            return go(node.arg, True).compose_entire(node.name)
        raise TypeError(f"unknown node {node!r}")

    return go(e, True).truncate(order)


def fit_from_samples(values: Sequence[tuple[float, float]], pole_order: int, degree: int,
                     max_cond: float = 1e12) -> tuple[LaurentSeries, float]:
    """Least-squares Laurent fit ``t**p * f(t) ~ polynomial of degree d``.

    Returns the series (lead ``-p``, known through ``t**(d - p)``) and the
    residual RMS.  Samples should come in symmetric pairs ``+-t``.
    """
    if not values:
        return LaurentSeries.zero(degree + 1 - pole_order), 0.0
    ts = np.array([float(t) for t, _ in values])
    fs = np.array([float(v) for _, v in values])
    if np.any(ts == 0.0):
        raise SeriesError("sample points must avoid t = 0")
    if len(ts) < degree + 1:
        raise SeriesError(f"need at least {degree + 1} samples, got {len(ts)}")
    scale = float(np.max(np.abs(ts)))
    s = ts / scale
    A = np.vander(s, degree + 1, increasing=True)
    rhs = ts ** pole_order * fs
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedFit(cond, max_cond)
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - rhs) ** 2)))
    coef = coef / scale ** np.arange(degree + 1)
    return LaurentSeries(-pole_order, list(coef), degree + 1 - pole_order), resid


def symmetric_samples(radius: float, count: int) -> list[float]:
    """``count`` (even) Chebyshev-spaced points in ``[-radius, radius]`` avoiding 0, symmetric in sign."""
    half = count // 2
    k = np.arange(half)
    pos = radius * np.cos(np.pi * (k + 0.5) / (2 * half))
    pos = np.sort(pos)
    return sorted(list(-pos) + list(pos))
