"""Symbolic expressions over ``t, x1, ..., xn``.

A deliberately small expression language: rational/decimal constants, the
variables ``t`` and ``x1..xn``, ``+ - * /``, integer powers and the three
functions ``sin``, ``cos``, ``exp``.  The class is closed under partial
differentiation, which is all the operator machinery in :mod:`tocl.model`
needs.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ ("^" | "**") unary ] ;      (* exponent: integer constant *)
    atom    = number | "t" | "x" digits | func "(" expr ")" | "(" expr ")" ;
    func    = "sin" | "cos" | "exp" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;

Precedence is ``^`` > unary minus > ``* /`` > ``+ -``; ``^`` is
right-associative.  Numeric literals are stored as exact
:class:`fractions.Fraction` values, and a quotient of two constants is folded
at parse time, so ``1/3`` is the exact constant one third.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence, Union

import numpy as np

Number = Union[Fraction, float, int]

FUNCTIONS = ("sin", "cos", "exp")

# printing precedence
_ADD, _MUL, _UNARY, _POW, _ATOM = 1, 2, 3, 4, 5


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        pointer = f"\n  {text}\n  {' ' * position}^" if text else ""
        super().__init__(f"{message} at position {position}{pointer}")


class SingularEvaluationError(ExprError, ZeroDivisionError):
    """A quotient denominator (or negative power base) evaluated to zero."""

    def __init__(self, subexpr: "Expr", point=None):
        self.subexpr = subexpr
        self.point = point
        super().__init__(f"singular evaluation: {subexpr} is zero at {point}")


class ExpressionOverflow(ExprError):
    pass


def _as_number(value: Number) -> Number:
    if isinstance(value, bool):
        raise TypeError("booleans are not expression constants")
    if isinstance(value, int):
        return Fraction(value)
    return value


def _var_name(index: int) -> str:
    return "t" if index == 0 else f"x{index}"


class Expr:
    """Base node.  Nodes are frozen dataclasses, hashable and comparable."""

    __slots__ = ()

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, to_expr(other))

    def __radd__(self, other):
        return add(to_expr(other), self)

    def __sub__(self, other):
        return sub(self, to_expr(other))

    def __rsub__(self, other):
        return sub(to_expr(other), self)

    def __mul__(self, other):
        return mul(self, to_expr(other))

    def __rmul__(self, other):
        return mul(to_expr(other), self)

    def __truediv__(self, other):
        return div(self, to_expr(other))

    def __rtruediv__(self, other):
        return div(to_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k: int):
        return power(self, k)

    def __str__(self) -> str:
        return _fmt(self)[0]

    # -- queries ----------------------------------------------------------
    def children(self) -> tuple["Expr", ...]:
        return ()

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children())

    def variables(self) -> set[int]:
        out: set[int] = set()
        stack = [self]
        while stack:
            e = stack.pop()
            if isinstance(e, Var):
                out.add(e.index)
            stack.extend(e.children())
        return out

    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0

    def is_one(self) -> bool:
        return isinstance(self, Const) and self.value == 1

    # -- evaluation -------------------------------------------------------
    def evaluate(self, t: float, x: Sequence[float] = ()) -> float:
        """Evaluate in floating point.  Raises SingularEvaluationError."""
        point = (float(t), *map(float, x))
        return _eval(self, point, exact=False)

    def evaluate_exact(self, t: Number, x: Sequence[Number] = ()):
        """Evaluate with Fraction arithmetic (transcendental nodes fall back to float)."""
        point = tuple(Fraction(v) if not isinstance(v, float) else v for v in (t, *x))
        return _eval(self, point, exact=True)

    def compile(self, n: int) -> Callable[..., float]:
        """Return a fast float function ``f(t, x1, ..., xn)``."""
        return _compile([self], n, vector=False)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Number

    def __post_init__(self):
        object.__setattr__(self, "value", _as_number(self.value))


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int  # 0 is t, i >= 1 is x_i

    @property
    def name(self) -> str:
        return _var_name(self.index)


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def children(self):
        return (self.base,)


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ExprError(f"unsupported function {self.name!r}")

    def children(self):
        return (self.arg,)


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
T = Var(0)


def x(i: int) -> Var:
    return Var(i)


def to_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, Fraction)) and not isinstance(value, bool):
        return Const(value)
    raise TypeError(f"cannot convert {value!r} to Expr")


# -- smart constructors: local identities only -------------------------------

def add(a: Expr, b: Expr) -> Expr:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if b.is_zero():
        return a
    if a.is_zero():
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if a == b:
        return ZERO
    if isinstance(b, Neg):
        return add(a, b.arg)
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_zero() or b.is_zero():
        return ZERO
    if a.is_one():
        return b
    if b.is_one():
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Const) and a.value == -1:
        return neg(b)
    if isinstance(b, Const) and b.value == -1:
        return neg(a)
    if isinstance(b, Const):
        a, b = b, a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if b.is_zero():
        raise SingularEvaluationError(Div(a, b))
    if a.is_zero():
        return ZERO
    if b.is_one():
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    if isinstance(b, Const) and not isinstance(b.value, float):
        return mul(Const(1 / b.value), a)
    return Div(a, b)


def power(a: Expr, k: int) -> Expr:
    if not isinstance(k, int) or isinstance(k, bool):
        raise ExprError(f"only integer powers are supported, got {k!r}")
    if k == 0:
        return ONE
    if k == 1:
        return a
    if isinstance(a, Const):
        if a.value == 0 and k < 0:
            raise SingularEvaluationError(Pow(a, k))
        return Const(a.value ** k)
    if isinstance(a, Pow):
        return power(a.base, a.exponent * k)
    return Pow(a, k)


def func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const) and a.value == 0:
        return ZERO if name == "sin" else ONE
    return Func(name, a)


# -- evaluation ----------------------------------------------------------------

def _eval(e: Expr, point: tuple, exact: bool):
    if isinstance(e, Const):
        return e.value if exact else float(e.value)
    if isinstance(e, Var):
        if e.index >= len(point):
            raise ExprError(f"no value supplied for {e.name}")
        return point[e.index]
    if isinstance(e, Neg):
        return -_eval(e.arg, point, exact)
    if isinstance(e, Add):
        return _eval(e.left, point, exact) + _eval(e.right, point, exact)
    if isinstance(e, Sub):
        return _eval(e.left, point, exact) - _eval(e.right, point, exact)
    if isinstance(e, Mul):
        return _eval(e.left, point, exact) * _eval(e.right, point, exact)
    if isinstance(e, Div):
        den = _eval(e.right, point, exact)
        if den == 0:
            raise SingularEvaluationError(e.right, point)
        return _eval(e.left, point, exact) / den
    if isinstance(e, Pow):
        base = _eval(e.base, point, exact)
        if base == 0 and e.exponent < 0:
            raise SingularEvaluationError(e.base, point)
        return base ** e.exponent
    if isinstance(e, Func):
        v = float(_eval(e.arg, point, exact))
        return getattr(math, e.name)(v)
    raise TypeError(f"unknown node {e!r}")


def _pysrc(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return _var_name(e.index)
    if isinstance(e, Neg):
        return f"(-{_pysrc(e.arg)})"
    if isinstance(e, Add):
        return f"({_pysrc(e.left)} + {_pysrc(e.right)})"
    if isinstance(e, Sub):
        return f"({_pysrc(e.left)} - {_pysrc(e.right)})"
    if isinstance(e, Mul):
        return f"({_pysrc(e.left)} * {_pysrc(e.right)})"
    if isinstance(e, Div):
        return f"({_pysrc(e.left)} / {_pysrc(e.right)})"
    if isinstance(e, Pow):
        return f"({_pysrc(e.base)} ** {e.exponent})"
    if isinstance(e, Func):
        return f"_math.{e.name}({_pysrc(e.arg)})"
    raise TypeError(f"unknown node {e!r}")


def _compile(exprs: Sequence[Expr], n: int, vector: bool):
    args = ", ".join(_var_name(i) for i in range(n + 1))
    body = ", ".join(_pysrc(e) for e in exprs)
    if vector:
        body = f"({body},)"
    src = f"def _f({args}):\n    return {body}\n"
    namespace = {"_math": math}
    exec(compile(src, "<tocl.expr>", "exec"), namespace)  # generated from our own AST only
    fn = namespace["_f"]
    exprs = tuple(exprs)

    def guarded(*point):
        try:
            return fn(*point)
        except ZeroDivisionError:
            bad = next((e for e in exprs if _is_singular(e, point)), exprs[0])
            raise SingularEvaluationError(bad, point) from None

    guarded.__wrapped__ = fn
    return guarded


def _is_singular(e: Expr, point) -> bool:
    try:
        _eval(e, tuple(point), exact=False)
    except SingularEvaluationError:
        return True
    return False


# -- differentiation ---------------------------------------------------------------

def differentiate(e: Expr, var: Union[int, str, Var]) -> Expr:
    """Exact partial derivative with respect to ``t`` (0 / "t") or ``x_i`` (i / "xi")."""
    index = _var_index(var)
    return _diff(e, index)


def _var_index(var) -> int:
    if isinstance(var, Var):
        return var.index
    if isinstance(var, int):
        return var
    if var == "t":
        return 0
    m = re.fullmatch(r"x(\d+)", var)
    if not m or int(m.group(1)) < 1:
        raise ExprError(f"unknown variable {var!r}")
    return int(m.group(1))


def _diff(e: Expr, i: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if i not in e.variables():
        return ZERO
    if isinstance(e, Neg):
        return neg(_diff(e.arg, i))
    if isinstance(e, Add):
        return add(_diff(e.left, i), _diff(e.right, i))
    if isinstance(e, Sub):
        return sub(_diff(e.left, i), _diff(e.right, i))
    if isinstance(e, Mul):
        return add(mul(_diff(e.left, i), e.right), mul(e.left, _diff(e.right, i)))
    if isinstance(e, Div):
        u, v = e.left, e.right
        du, dv = _diff(u, i), _diff(v, i)
        if dv.is_zero():
            return div(du, v)
        return div(sub(mul(du, v), mul(u, dv)), power(v, 2))
    if isinstance(e, Pow):
        k = e.exponent
        return mul(mul(Const(k), power(e.base, k - 1)), _diff(e.base, i))
    if isinstance(e, Func):
        inner = _diff(e.arg, i)
        if e.name == "sin":
            outer = func("cos", e.arg)
        elif e.name == "cos":
            outer = neg(func("sin", e.arg))
        else:
            outer = e
        return mul(outer, inner)
    raise TypeError(f"unknown node {e!r}")


# -- printing ------------------------------------------------------------------------

def _fmt_const(v: Number) -> tuple[str, int]:
    if isinstance(v, float):
        s = repr(v)
        return s, (_UNARY if s.startswith("-") else _ATOM)
    if v.denominator == 1:
        return str(v.numerator), (_UNARY if v < 0 else _ATOM)
    return f"{v.numerator}/{v.denominator}", _MUL


def _wrap(part: tuple[str, int], minimum: int) -> str:
    text, prec = part
    return f"({text})" if prec < minimum else text


def _fmt(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name, _ATOM
    if isinstance(e, Neg):
        inner = _wrap(_fmt(e.arg), _UNARY)
        return ("- " + inner if inner.startswith("-") else "-" + inner), _UNARY
    if isinstance(e, (Add, Sub)):
        op = " + " if isinstance(e, Add) else " - "
        return _wrap(_fmt(e.left), _ADD) + op + _wrap(_fmt(e.right), _ADD + 1), _ADD
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        return _wrap(_fmt(e.left), _MUL) + op + _wrap(_fmt(e.right), _MUL + 1), _MUL
    if isinstance(e, Pow):
        k = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return _wrap(_fmt(e.base), _ATOM) + "^" + k, _POW
    if isinstance(e, Func):
        return f"{e.name}({_fmt(e.arg)[0]})", _ATOM
    raise TypeError(f"unknown node {e!r}")


# -- parsing ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
            kind = m.lastgroup
            start = m.start(kind)
            value = m.group(kind)
            if kind == "op" and value == "**":
                value = "^"
            self.tokens.append((kind, value, start))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, v, pos = self.take()
        if v != value or kind != "op":
            raise ExprSyntaxError(f"expected {value!r}", pos, self.text)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            raise ExprSyntaxError("empty expression", 0, self.text)
        e = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {v!r}", pos, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            if op == "*":
                e = Mul(e, rhs)
            elif isinstance(e, Const) and isinstance(rhs, Const):
                if rhs.value == 0:
                    raise ExprSyntaxError("division by constant zero", self.tokens[self.i - 1][2], self.text)
                e = Const(e.value / rhs.value)
            else:
                e = Div(e, rhs)
        return e

    def unary(self) -> Expr:
        kind, v, _ = self.peek()
        if kind == "op" and v in ("-", "+"):
            self.take()
            inner = self.unary()
            if v == "+":
                return inner
            return Const(-inner.value) if isinstance(inner, Const) else Neg(inner)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, v, pos = self.peek()
        if kind == "op" and v == "^":
            self.take()
            exp_pos = self.peek()[2]
            exponent = self.unary()
            if not isinstance(exponent, Const) or isinstance(exponent.value, float) \
                    or exponent.value.denominator != 1:
                raise ExprSyntaxError("exponent must be an integer constant", exp_pos, self.text)
            return Pow(base, int(exponent.value))
        return base

    def atom(self) -> Expr:
        kind, v, pos = self.take()
        if kind == "num":
            return Const(Fraction(v))
        if kind == "name":
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(v, arg)
            if v == "t":
                return T
            m = re.fullmatch(r"x(\d+)", v)
            if m:
                i = int(m.group(1))
                if i < 1:
                    raise ExprSyntaxError(f"unknown identifier {v!r}", pos, self.text)
                if i > self.n:
                    raise ExprSyntaxError(
                        f"variable {v} exceeds system dimension {self.n}", pos, self.text)
                return Var(i)
            raise ExprSyntaxError(f"unknown identifier {v!r}", pos, self.text)
        if kind == "op" and v == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos, self.text)
        raise ExprSyntaxError(f"unexpected token {v!r}", pos, self.text)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` into an expression over ``t, x1..xn``."""
    if not isinstance(text, str):
        return to_expr(text)
    return _Parser(text, n).parse()


# -- simplification ------------------------------------------------------------------

# A polynomial is a dict {exponent tuple over (t, x1..xn): coefficient}.
Poly = dict


def _poly_add(p: Poly, q: Poly, sign=1) -> Poly:
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, 0) + sign * c
        if v == 0:
            out.pop(m, None)
        else:
            out[m] = v
    return out


def _poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = tuple(a + b for a, b in zip(m1, m2))
            v = out.get(m, 0) + c1 * c2
            if v == 0:
                out.pop(m, None)
            else:
                out[m] = v
    return out


def to_poly(e: Expr, nvars: int) -> Poly | None:
    """Polynomial normal form of ``e`` or None when ``e`` is not polynomial."""
    if isinstance(e, Const):
        return {} if e.value == 0 else {(0,) * nvars: e.value}
    if isinstance(e, Var):
        if e.index >= nvars:
            return None
        m = [0] * nvars
        m[e.index] = 1
        return {tuple(m): Fraction(1)}
    if isinstance(e, Neg):
        p = to_poly(e.arg, nvars)
        return None if p is None else {m: -c for m, c in p.items()}
    if isinstance(e, (Add, Sub)):
        p = to_poly(e.left, nvars)
        q = to_poly(e.right, nvars) if p is not None else None
        if q is None:
            return None
        return _poly_add(p, q, 1 if isinstance(e, Add) else -1)
    if isinstance(e, Mul):
        p = to_poly(e.left, nvars)
        q = to_poly(e.right, nvars) if p is not None else None
        return None if q is None else _poly_mul(p, q)
    if isinstance(e, Div):
        q = to_poly(e.right, nvars)
        if q is None or len(q) != 1 or next(iter(q)) != (0,) * nvars:
            return None
        p = to_poly(e.left, nvars)
        c = next(iter(q.values()))
        return None if p is None else {m: v / c for m, v in p.items()}
    if isinstance(e, Pow):
        if e.exponent < 0:
            return None
        p = to_poly(e.base, nvars)
        if p is None:
            return None
        out: Poly = {(0,) * nvars: Fraction(1)}
        for _ in range(e.exponent):
            out = _poly_mul(out, p)
        return out
    return None


def from_poly(p: Poly) -> Expr:
    """Rebuild an expression from a polynomial dict (t-major, descending degree)."""
    if not p:
        return ZERO
    # constant first, then ascending total degree; within degree by t power then x
    order = sorted(p, key=lambda m: (sum(m), [-v for v in m]))
    result: Expr | None = None
    for m in order:
        c = p[m]
        negative = c < 0
        mag = -c if negative else c
        factors: list[Expr] = [] if mag == 1 else [Const(mag)]
        for idx, k in enumerate(m):
            if k:
                factors.append(Var(idx) if k == 1 else Pow(Var(idx), k))
        if not factors:
            factors = [Const(mag)]
        term = factors[0]
        for f in factors[1:]:
            term = Mul(term, f)
        if result is None:
            if negative and isinstance(factors[0], Const):
                term = Mul(Const(-mag), term.right) if isinstance(term, Mul) and len(factors) == 2 \
                    else _replace_lead(term, Const(-mag))
            elif negative:
                term = Neg(term)
            result = term
        else:
            result = Sub(result, term) if negative else Add(result, term)
    return result


def _replace_lead(term: Expr, lead: Const) -> Expr:
    if isinstance(term, Mul):
        return Mul(_replace_lead(term.left, lead), term.right)
    return lead


def _nvars(e: Expr) -> int:
    v = e.variables()
    return (max(v) if v else 0) + 1


def _terms(e: Expr, sign: int, out: list):
    if isinstance(e, Add):
        _terms(e.left, sign, out)
        _terms(e.right, sign, out)
    elif isinstance(e, Sub):
        _terms(e.left, sign, out)
        _terms(e.right, -sign, out)
    elif isinstance(e, Neg):
        _terms(e.arg, -sign, out)
    else:
        out.append((sign, e))


def simplify(e: Expr) -> Expr:
    """Best-effort simplification preserving value.

    Polynomial subtrees are brought to a collected normal form; elsewhere
    constants are folded and the 0/1 identities applied.
    """
    nv = _nvars(e)
    p = to_poly(e, nv)
    if p is not None:
        return from_poly(p)
    if isinstance(e, (Add, Sub, Neg)):
        parts: list = []
        _terms(e, 1, parts)
        poly: Poly = {}
        others: dict[Expr, Number] = {}
        for sign, term in parts:
            s = simplify(term)
            q = to_poly(s, nv)
            if q is not None:
                poly = _poly_add(poly, q, sign)
                continue
            coeff, core = _split_coeff(s)
            others[core] = others.get(core, 0) + sign * coeff
        result = from_poly(poly)
        for core, coeff in others.items():
            if coeff == 0:
                continue
            result = add(result, mul(Const(coeff), core))
        return result
    if isinstance(e, Mul):
        return mul(simplify(e.left), simplify(e.right))
    if isinstance(e, Div):
        num, den = simplify(e.left), simplify(e.right)
        if num == den:
            return ONE
        return div(num, den)
    if isinstance(e, Pow):
        return power(simplify(e.base), e.exponent)
    if isinstance(e, Func):
        return func(e.name, simplify(e.arg))
    return e


def _split_coeff(e: Expr) -> tuple[Number, Expr]:
    if isinstance(e, Mul) and isinstance(e.left, Const):
        return e.left.value, e.right
    if isinstance(e, Neg):
        c, core = _split_coeff(e.arg)
        return -c, core
    return Fraction(1), e


# -- vectors ------------------------------------------------------------------------------

@dataclass(frozen=True)
class VecExpr:
    components: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(to_expr(c) for c in self.components))

    @classmethod
    def parse(cls, texts: Iterable[str], n: int) -> "VecExpr":
        comps = tuple(parse(s, n) for s in texts)
        if len(comps) != n:
            raise ExprError(f"expected {n} components, got {len(comps)}")
        return cls(comps)

    @classmethod
    def zeros(cls, n: int) -> "VecExpr":
        return cls((ZERO,) * n)

    @property
    def n(self) -> int:
        return len(self.components)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.components) + ")"

    def simplify(self) -> "VecExpr":
        return VecExpr(tuple(simplify(c) for c in self.components))

    def diff(self, var) -> "VecExpr":
        return VecExpr(tuple(differentiate(c, var) for c in self.components))

    def size(self) -> int:
        return sum(c.size() for c in self.components)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def evaluate(self, t: float, x: Sequence[float]) -> np.ndarray:
        return np.array([c.evaluate(t, x) for c in self.components], dtype=float)

    def compile(self) -> Callable[[float, Sequence[float]], np.ndarray]:
        """Fast evaluator ``f(t, x) -> ndarray`` for a state vector ``x``."""
        fn = _compile(self.components, self.n, vector=True)

        def evaluate(t, x):
            return np.array(fn(t, *x), dtype=float)

        return evaluate
