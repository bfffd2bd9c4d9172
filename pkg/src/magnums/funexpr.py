"""ASTs for nondecreasing arithmetic functions of n and their extension to w.

The node grammar covers constants (rational or exact symbolic), the variable,
field operations, rational powers, floors, logarithms and integer-base
exponentials, plus opaque tabulated functions carrying an asymptotic
annotation (the prime counter and the totient summatory function).

Substituting w (or any surnatural argument) for the variable runs a small
truncated-series engine: radicals and logarithms are expanded to two
sub-leading terms, the discarded tail keeps only its sign, and floors route
through the omnific floor with that sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Union

from .constants import Coeff, NotRepresentable, factorize, log_symbol, phi_power_pair
from .surnat import (
    EXACT,
    Exactness,
    GrowthKey,
    KEY_UNIT,
    OMEGA,
    SurnatValue,
    TailSign,
    UndeterminedFloor,
    key_add,
    key_scale,
    floor_surreal,
)

__all__ = [
    "FnForm",
    "Const",
    "SymConst",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Floor",
    "Log",
    "Exp",
    "Tabulated",
    "VAR",
    "C",
    "ExtendedValue",
    "DomainError",
    "NotInvertible",
    "UndeterminedExtension",
    "eval_at",
    "is_monotone",
    "substitute",
    "invert",
    "extend_to_omega",
    "compose_extend",
    "render_fn",
    "parse_fn",
    "FnParseError",
]


class DomainError(ArithmeticError):
    """Evaluation hit a zero denominator or an empty domain."""


class NotInvertible(ValueError):
    """The function shape has no symbolic inverse in this grammar."""


class UndeterminedExtension(ArithmeticError):
    """No finite leading-term expansion exists for the substitution."""


class _Irrational(Exception):
    """Internal: exact rational evaluation left the rationals."""


Base = Union[Fraction, str]  # a rational base, or "phi" for the golden ratio


class FnForm:
    __slots__ = ()

    def __add__(self, other):
        return Add(self, _as_fn(other))

    def __radd__(self, other):
        return Add(_as_fn(other), self)

    def __sub__(self, other):
        return Sub(self, _as_fn(other))

    def __rsub__(self, other):
        return Sub(_as_fn(other), self)

    def __mul__(self, other):
        return Mul(self, _as_fn(other))

    def __rmul__(self, other):
        return Mul(_as_fn(other), self)

    def __truediv__(self, other):
        return Div(self, _as_fn(other))


def _as_fn(x) -> "FnForm":
    if isinstance(x, FnForm):
        return x
    return Const(Fraction(x))


@dataclass(frozen=True)
class Const(FnForm):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class SymConst(FnForm):
    value: Coeff


@dataclass(frozen=True)
class Var(FnForm):
    pass


@dataclass(frozen=True)
class Add(FnForm):
    left: FnForm
    right: FnForm


@dataclass(frozen=True)
class Sub(FnForm):
    left: FnForm
    right: FnForm


@dataclass(frozen=True)
class Mul(FnForm):
    left: FnForm
    right: FnForm


@dataclass(frozen=True)
class Div(FnForm):
    left: FnForm
    right: FnForm


@dataclass(frozen=True)
class Pow(FnForm):
    child: FnForm
    exponent: Fraction

    def __post_init__(self):
        object.__setattr__(self, "exponent", Fraction(self.exponent))


@dataclass(frozen=True)
class Floor(FnForm):
    child: FnForm


@dataclass(frozen=True)
class Log(FnForm):
    base: Base
    child: FnForm


@dataclass(frozen=True)
class Exp(FnForm):
    base: Base
    child: FnForm


@dataclass(frozen=True, eq=False)
class Tabulated(FnForm):
    """Opaque integer function with a registered leading asymptotic.

    values(n) must return the exact integer value; the extension to w is
    asym_coeff * w^a * log(w)^b with the declared error tag.
    """

    name: str
    values: Callable[[int], int]
    asym_coeff: Coeff
    asym_key: GrowthKey
    err_kind: str  # 'o' | 'O'
    err_key: GrowthKey


VAR = Var()


def C(q) -> Const:
    return Const(Fraction(q))


# ---------------------------------------------------------------------------
# Exact evaluation
# ---------------------------------------------------------------------------


def _iroot(n: int, k: int) -> int:
    """Floor of the k-th root of n >= 0."""
    if n < 0:
        raise ValueError("negative radicand")
    if n == 0:
        return 0
    if k == 1:
        return n
    if k == 2:
        return math.isqrt(n)
    x = int(round(n ** (1.0 / k))) + 1
    while x ** k > n:
        x -= 1
    while (x + 1) ** k <= n:
        x += 1
    return x


def _exact_pow(v: Fraction, e: Fraction) -> Fraction:
    if e.denominator == 1:
        k = e.numerator
        if v == 0 and k < 0:
            raise DomainError("0 raised to a negative power")
        return v ** k
    if v < 0:
        raise DomainError("rational power of a negative value")
    q = e.denominator
    rn = _iroot(v.numerator, q)
    rd = _iroot(v.denominator, q)
    if rn ** q != v.numerator or rd ** q != v.denominator:
        raise _Irrational
    return Fraction(rn, rd) ** e.numerator


def _ilog_floor(base: Fraction, v: Fraction) -> int:
    """Largest j with base^j <= v, for rational base > 1, v > 0."""
    if v <= 0:
        raise DomainError("log of a non-positive value")
    j = 0
    if v >= 1:
        p = Fraction(1)
        while p * base <= v:
            p *= base
            j += 1
        return j
    p = Fraction(1)
    while p > v:
        p /= base
        j -= 1
    return j


def _exact_log(base: Fraction, v: Fraction) -> int:
    j = _ilog_floor(base, v)
    if base ** j == v:
        return j
    raise _Irrational


def eval_at(f: FnForm, n: int) -> Fraction:
    """Exact rational value of f at the positive integer n."""
    if n < 1:
        raise DomainError("functions are defined for n >= 1")
    try:
        return _eval(f, Fraction(n))
    except _Irrational:
        raise ValueError(
            f"{render_fn(f)} is irrational at n={n}; wrap the expression in floor()"
        ) from None


def _eval(f: FnForm, x: Fraction) -> Fraction:
    if isinstance(f, Const):
        return f.value
    if isinstance(f, SymConst):
        q = f.value.as_fraction()
        if q is None:
            raise _Irrational
        return q
    if isinstance(f, Var):
        return x
    if isinstance(f, Add):
        return _eval(f.left, x) + _eval(f.right, x)
    if isinstance(f, Sub):
        return _eval(f.left, x) - _eval(f.right, x)
    if isinstance(f, Mul):
        return _eval(f.left, x) * _eval(f.right, x)
    if isinstance(f, Div):
        d = _eval(f.right, x)
        if d == 0:
            raise DomainError("division by zero")
        return _eval(f.left, x) / d
    if isinstance(f, Pow):
        return _exact_pow(_eval(f.child, x), f.exponent)
    if isinstance(f, Exp):
        v = _eval(f.child, x)
        if f.base == "phi" or v.denominator != 1:
            raise _Irrational
        return Fraction(f.base) ** v.numerator
    if isinstance(f, Log):
        if f.base == "phi":
            raise _Irrational
        return Fraction(_exact_log(Fraction(f.base), _eval(f.child, x)))
    if isinstance(f, Floor):
        return Fraction(_floor_eval(f.child, x))
    if isinstance(f, Tabulated):
        if x.denominator != 1:
            raise _Irrational
        return Fraction(f.values(x.numerator))
    raise TypeError(f"unknown node {f!r}")


def _floor_eval(child: FnForm, x: Fraction) -> int:
    try:
        v = _eval(child, x)
        return v.numerator // v.denominator
    except _Irrational:
        pass
    # floor(f + c) = floor(f) + c for integer c: peel integer shifts so the
    # exact log ladders below stay reachable.
    if isinstance(child, Add):
        for f, c in ((child.left, child.right), (child.right, child.left)):
            q = _const_value(c)
            if q is not None and q.denominator == 1:
                return _floor_eval(f, x) + q.numerator
    if isinstance(child, Sub):
        q = _const_value(child.right)
        if q is not None and q.denominator == 1:
            return _floor_eval(child.left, x) - q.numerator
    if isinstance(child, Log):
        if child.base == "phi":
            a, b = _eval_qsqrt5(child.child, x)
            return _phi_log_floor(a, b)
        return _ilog_floor(Fraction(child.base), _eval(child.child, x))
    prec = 16
    while prec <= 4096:
        lo, hi = _ival(child, x, prec)
        flo = lo.numerator // lo.denominator
        fhi = hi.numerator // hi.denominator
        if flo == fhi:
            return flo
        prec *= 2
    raise ArithmeticError(f"floor evaluation did not converge for {render_fn(child)}")


# exact arithmetic in Q(sqrt5), for base-phi logarithms ------------------------


def _eval_qsqrt5(f: FnForm, x: Fraction) -> tuple[Fraction, Fraction]:
    """Value of f as a + b*sqrt(5); supports the fib counting shapes."""
    if isinstance(f, Const):
        return f.value, Fraction(0)
    if isinstance(f, Var):
        return x, Fraction(0)
    if isinstance(f, SymConst):
        q = f.value.as_fraction()
        if q is not None:
            return q, Fraction(0)
        if len(f.value.terms) == 1:
            qq, mono = f.value.terms[0]
            if mono.radicals == ((5, Fraction(1, 2)),) and not mono.symbols:
                return Fraction(0), qq
        raise _Irrational
    if isinstance(f, Add):
        a1, b1 = _eval_qsqrt5(f.left, x)
        a2, b2 = _eval_qsqrt5(f.right, x)
        return a1 + a2, b1 + b2
    if isinstance(f, Sub):
        a1, b1 = _eval_qsqrt5(f.left, x)
        a2, b2 = _eval_qsqrt5(f.right, x)
        return a1 - a2, b1 - b2
    if isinstance(f, Mul):
        a1, b1 = _eval_qsqrt5(f.left, x)
        a2, b2 = _eval_qsqrt5(f.right, x)
        return a1 * a2 + 5 * b1 * b2, a1 * b2 + a2 * b1
    raise _Irrational


def _sqrt5_sign(a: Fraction, b: Fraction) -> int:
    """Sign of a + b*sqrt(5)."""
    if a >= 0 and b >= 0:
        return 1 if (a or b) else 0
    if a <= 0 and b <= 0:
        return -1 if (a or b) else 0
    lhs = a * a
    rhs = 5 * b * b
    if a > 0:  # b < 0
        return 1 if lhs > rhs else -1
    return 1 if rhs > lhs else -1


def _phi_log_floor(a: Fraction, b: Fraction) -> int:
    """Largest j with phi^j <= a + b*sqrt5 (value must be positive)."""
    if _sqrt5_sign(a, b) <= 0:
        raise DomainError("log of a non-positive value")
    val = float(a) + float(b) * math.sqrt(5.0)
    j = int(math.floor(math.log(val) / math.log((1 + math.sqrt(5.0)) / 2)))
    j -= 2

    def le_phi_j(j: int) -> bool:
        # phi^j = (L + F*sqrt5)/2 for j >= 0
        if j >= 0:
            L, Fj = phi_power_pair(j)
            return _sqrt5_sign(a - Fraction(L, 2), b - Fraction(Fj, 2)) >= 0
        L, Fj = phi_power_pair(-j)
        # phi^-j = 2/(L + F*sqrt5) = (L - F*sqrt5) * (-1)^j / ... use conjugate:
        # phi^(-m) = (L_m - F_m*sqrt5)/2 * (-1)^m ... simpler: compare x*phi^m >= 1
        am, bm = a * Fraction(L, 2) + b * Fraction(5 * Fj, 2), a * Fraction(Fj, 2) + b * Fraction(L, 2)
        return _sqrt5_sign(am - 1, bm) >= 0

    while not le_phi_j(j):
        j -= 1
    while le_phi_j(j + 1):
        j += 1
    return j


# interval evaluation over Fractions ------------------------------------------


def _root_bounds(v: Fraction, e: Fraction, prec: int) -> tuple[Fraction, Fraction]:
    """Enclosure of v^e for v > 0."""
    p, q = e.numerator, e.denominator
    if p < 0:
        lo, hi = _root_bounds(v, -e, prec)
        return 1 / hi, 1 / lo
    y = v ** p
    if q == 1:
        return y, y
    scale = 1 << prec
    t = (y.numerator * scale ** q) // y.denominator
    r = _iroot(t, q)
    return Fraction(r, scale), Fraction(r + 2, scale)


def _ival(f: FnForm, x: Fraction, prec: int) -> tuple[Fraction, Fraction]:
    if isinstance(f, (Const, Var, SymConst)):
        try:
            v = _eval(f, x)
        except _Irrational:
            if isinstance(f, SymConst) and len(f.value.terms) == 1:
                q, mono = f.value.terms[0]
                if not mono.symbols and len(mono.radicals) == 1:
                    (p, e), = mono.radicals
                    lo, hi = _root_bounds(Fraction(p), e, prec)
                    return (q * lo, q * hi) if q >= 0 else (q * hi, q * lo)
            raise ArithmeticError("interval evaluation unsupported for this constant")
        return v, v
    if isinstance(f, Add):
        a1, b1 = _ival(f.left, x, prec)
        a2, b2 = _ival(f.right, x, prec)
        return a1 + a2, b1 + b2
    if isinstance(f, Sub):
        a1, b1 = _ival(f.left, x, prec)
        a2, b2 = _ival(f.right, x, prec)
        return a1 - b2, b1 - a2
    if isinstance(f, Mul):
        a1, b1 = _ival(f.left, x, prec)
        a2, b2 = _ival(f.right, x, prec)
        cands = (a1 * a2, a1 * b2, b1 * a2, b1 * b2)
        return min(cands), max(cands)
    if isinstance(f, Div):
        a2, b2 = _ival(f.right, x, prec)
        if a2 <= 0 <= b2:
            raise DomainError("division by an interval containing zero")
        a1, b1 = _ival(f.left, x, prec)
        cands = (a1 / a2, a1 / b2, b1 / a2, b1 / b2)
        return min(cands), max(cands)
    if isinstance(f, Pow):
        lo, hi = _ival(f.child, x, prec)
        if lo < 0:
            raise DomainError("rational power of a possibly negative value")
        if f.exponent >= 0:
            llo = _root_bounds(lo, f.exponent, prec)[0] if lo else Fraction(0)
            return llo, _root_bounds(hi, f.exponent, prec)[1]
        if lo == 0:
            raise DomainError("negative power of an interval touching zero")
        return _root_bounds(hi, f.exponent, prec)[0], _root_bounds(lo, f.exponent, prec)[1]
    if isinstance(f, Floor):
        v = Fraction(_floor_eval(f.child, x))
        return v, v
    raise ArithmeticError(f"interval evaluation unsupported for {type(f).__name__}")


# ---------------------------------------------------------------------------
# Monotonicity (sampled certification)
# ---------------------------------------------------------------------------

_MONOTONE_DEPTH = 10_000
_monotone_cache: dict[tuple, bool] = {}


def is_monotone(f: FnForm, depth: int = _MONOTONE_DEPTH) -> bool:
    """Sampled nondecreasing check on 1..depth (cached)."""
    key = (id(f) if isinstance(f, Tabulated) else f, depth)
    hit = _monotone_cache.get(key)
    if hit is not None:
        return hit
    ok = True
    prev = None
    step_points = list(range(1, min(depth, 512) + 1)) + list(
        range(min(depth, 512) + 7, depth + 1, 29)
    )
    for n in step_points:
        v = eval_at(f, n)
        if prev is not None and v < prev:
            ok = False
            break
        prev = v
    _monotone_cache[key] = ok
    return ok


# ---------------------------------------------------------------------------
# Substitution and symbolic inversion
# ---------------------------------------------------------------------------


def substitute(f: FnForm, replacement: FnForm) -> FnForm:
    """f with every Var replaced by `replacement` (composition)."""
    if isinstance(f, Var):
        return replacement
    if isinstance(f, (Const, SymConst, Tabulated)):
        return f
    if isinstance(f, Add):
        return Add(substitute(f.left, replacement), substitute(f.right, replacement))
    if isinstance(f, Sub):
        return Sub(substitute(f.left, replacement), substitute(f.right, replacement))
    if isinstance(f, Mul):
        return Mul(substitute(f.left, replacement), substitute(f.right, replacement))
    if isinstance(f, Div):
        return Div(substitute(f.left, replacement), substitute(f.right, replacement))
    if isinstance(f, Pow):
        return Pow(substitute(f.child, replacement), f.exponent)
    if isinstance(f, Floor):
        return Floor(substitute(f.child, replacement))
    if isinstance(f, Log):
        return Log(f.base, substitute(f.child, replacement))
    if isinstance(f, Exp):
        return Exp(f.base, substitute(f.child, replacement))
    raise TypeError(f"unknown node {f!r}")


def _poly_coeffs(f: FnForm) -> Optional[list[Fraction]]:
    """Coefficient list (ascending) when f is a polynomial over Q, else None."""
    if isinstance(f, Const):
        return [f.value]
    if isinstance(f, SymConst):
        q = f.value.as_fraction()
        return None if q is None else [q]
    if isinstance(f, Var):
        return [Fraction(0), Fraction(1)]
    if isinstance(f, (Add, Sub)):
        a = _poly_coeffs(f.left)
        b = _poly_coeffs(f.right)
        if a is None or b is None:
            return None
        m = max(len(a), len(b))
        a += [Fraction(0)] * (m - len(a))
        b += [Fraction(0)] * (m - len(b))
        if isinstance(f, Add):
            return [x + y for x, y in zip(a, b)]
        return [x - y for x, y in zip(a, b)]
    if isinstance(f, Mul):
        a = _poly_coeffs(f.left)
        b = _poly_coeffs(f.right)
        if a is None or b is None:
            return None
        out = [Fraction(0)] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            for j, y in enumerate(b):
                out[i + j] += x * y
        return out
    if isinstance(f, Div):
        b = _poly_coeffs(f.right)
        if b is None or len(b) != 1 or b[0] == 0:
            return None
        a = _poly_coeffs(f.left)
        if a is None:
            return None
        return [x / b[0] for x in a]
    if isinstance(f, Pow):
        if f.exponent.denominator != 1 or f.exponent < 0:
            return None
        a = _poly_coeffs(f.child)
        if a is None:
            return None
        out = [Fraction(1)]
        for _ in range(f.exponent.numerator):
            new = [Fraction(0)] * (len(out) + len(a) - 1)
            for i, x in enumerate(out):
                for j, y in enumerate(a):
                    new[i + j] += x * y
            out = new
        return out
    return None


def _trim(coeffs: list[Fraction]) -> list[Fraction]:
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    return coeffs


def invert(f: FnForm) -> FnForm:
    """Symbolic inverse g with g(f(n)) = n on the invertible grammar."""
    coeffs = _poly_coeffs(f)
    if coeffs is not None:
        coeffs = _trim(list(coeffs))
        if len(coeffs) == 2:  # a + b n
            a, b = coeffs
            if b <= 0:
                raise NotInvertible("non-increasing affine function")
            return _simplify_affine(Fraction(1) / b, -a / b)
        if len(coeffs) == 3:  # a + b n + c n^2
            a, b, c = coeffs
            if c <= 0 or 3 * c + b <= 0:
                raise NotInvertible("quadratic is not increasing on N")
            # n = sqrt(x/c + (b^2-4ac)/(4c^2)) - b/(2c)
            disc = (b * b - 4 * a * c) / (4 * c * c)
            inner: FnForm = Mul(C(Fraction(1) / c), VAR) if c != 1 else VAR
            if disc:
                inner = Add(inner, C(disc))
            root = Pow(inner, Fraction(1, 2))
            if b:
                return Sub(root, C(b / (2 * c)))
            return root
        if len(coeffs) >= 4:
            lead = coeffs[-1]
            k = len(coeffs) - 1
            if all(q == 0 for q in coeffs[:-1]) and lead > 0:
                inner = Div(VAR, C(lead)) if lead != 1 else VAR
                return Pow(inner, Fraction(1, k))
            raise NotInvertible("general cubic-or-higher polynomials are unsupported")
    if isinstance(f, Var):
        return VAR
    if isinstance(f, Add):
        for g, c in ((f.left, f.right), (f.right, f.left)):
            q = _const_value(c)
            if q is not None:
                return substitute(invert(g), Sub(VAR, C(q)))
    if isinstance(f, Sub):
        q = _const_value(f.right)
        if q is not None:
            return substitute(invert(f.left), Add(VAR, C(q)))
        raise NotInvertible("decreasing shape")
    if isinstance(f, Mul):
        for g, c in ((f.left, f.right), (f.right, f.left)):
            q = _const_value(c)
            if q is not None:
                if q <= 0:
                    raise NotInvertible("non-increasing scaling")
                return substitute(invert(g), Div(VAR, C(q)))
    if isinstance(f, Div):
        q = _const_value(f.right)
        if q is not None:
            if q <= 0:
                raise NotInvertible("non-increasing scaling")
            return substitute(invert(f.left), Mul(C(q), VAR))
    if isinstance(f, Pow):
        if f.exponent <= 0:
            raise NotInvertible("non-increasing power")
        return substitute(invert(f.child), Pow(VAR, 1 / f.exponent))
    if isinstance(f, Exp):
        if f.base != "phi" and Fraction(f.base) <= 1:
            raise NotInvertible("exponential base must exceed 1")
        return substitute(invert(f.child), Log(f.base, VAR))
    if isinstance(f, Log):
        if f.base != "phi" and Fraction(f.base) <= 1:
            raise NotInvertible("log base must exceed 1")
        return substitute(invert(f.child), Exp(f.base, VAR))
    raise NotInvertible(f"no symbolic inverse for {render_fn(f)}")


def _const_value(f: FnForm) -> Optional[Fraction]:
    if isinstance(f, Const):
        return f.value
    if isinstance(f, SymConst):
        return f.value.as_fraction()
    return None


def _simplify_affine(a: Fraction, b: Fraction) -> FnForm:
    """a*x + b with tidy rendering (single Div where possible)."""
    if b == 0:
        if a == 1:
            return VAR
        if a.numerator == 1:
            return Div(VAR, C(a.denominator))
        return Mul(C(a), VAR)
    den = Fraction(a.denominator).numerator
    an = a * den
    bn = b * den
    if an.denominator == 1 and bn.denominator == 1 and den != 1:
        num: FnForm = Mul(C(an), VAR) if an != 1 else VAR
        num = Add(num, C(bn)) if bn > 0 else Sub(num, C(-bn))
        return Div(num, C(den))
    body: FnForm = Mul(C(a), VAR) if a != 1 else VAR
    return Add(body, C(b)) if b > 0 else Sub(body, C(-b))


# ---------------------------------------------------------------------------
# Extension to the surnaturals (truncated-series engine)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtendedValue:
    """Result of a substitution: stored value plus discarded-tail sign."""

    value: SurnatValue
    inf_sign: TailSign = TailSign.ZERO


_SERIES_TERMS = 2  # sub-leading terms kept for radicals and logs


def _jet_pow(x: SurnatValue, e: Fraction) -> SurnatValue:
    e = Fraction(e)
    if x.is_zero():
        if e > 0:
            return SurnatValue.of(0)
        raise UndeterminedExtension("zero raised to a non-positive power")
    if e == 0:
        return SurnatValue.of(1)
    if e.denominator == 1 and e > 0:
        out = x
        for _ in range(e.numerator - 1):
            out = out.mul(x)
        return out
    lead = x.leading()
    if lead is None:
        raise UndeterminedExtension("power of a pure remainder")
    lead_key, lead_c = lead
    try:
        powered = SurnatValue.from_coeff(lead_c.pow(e), key_scale(lead_key, e))
    except (NotRepresentable, ValueError) as ex:
        raise UndeterminedExtension(str(ex)) from ex
    rest = SurnatValue.make(x.terms[1:], x.exactness)
    u = rest.try_div(SurnatValue.from_coeff(lead_c, lead_key))
    if u is None:
        raise UndeterminedExtension("series pivot is not a monomial")
    if u.is_zero():
        return powered
    series = SurnatValue.of(1)
    coef = Fraction(1)
    upow = SurnatValue.of(1)
    for j in range(1, _SERIES_TERMS + 1):
        coef = coef * (e - (j - 1)) / j
        upow = upow.mul(u)
        series = series.add(upow.scale(coef))
    series = _with_truncation(series, u)
    return powered.mul(series)


def _with_truncation(series: SurnatValue, u: SurnatValue) -> SurnatValue:
    """Attach the o(u^k) tag for the dropped part of a binomial/log series."""
    if not u.terms:
        return series  # uncertainty already carried by u's remainder tag
    u_key = u.leading_key()
    trunc = Exactness.little_o(key_scale(u_key, Fraction(_SERIES_TERMS)))
    tags = [trunc]
    if not series.exactness.is_exact():
        tags.append(series.exactness)
    best = tags[0]
    for t in tags[1:]:
        if t.order > best.order or (t.order == best.order and t.kind == "O"):
            best = t
    return SurnatValue.make(series.terms, best)


def _ln_coeff(c: Coeff) -> Coeff:
    """ln of a positive single-monomial coefficient, exactly."""
    if len(c.terms) != 1:
        raise NotRepresentable("log of a non-monomial coefficient")
    q, mono = c.terms[0]
    if q <= 0:
        raise NotRepresentable("log of a non-positive coefficient")
    if mono.symbols:
        raise NotRepresentable("log of a registry symbol")
    total = Coeff.log_of_fraction(q)
    for p, e in mono.radicals:
        total = total.add(Coeff.log_of_int(p).scale(e))
    return total


def _inv_ln_base(base: Base) -> Coeff:
    if base == "phi":
        return Coeff.symbol("logphi").inv()
    b = Fraction(base)
    if b <= 1:
        raise NotRepresentable("log base must exceed 1")
    if b.denominator != 1:
        raise NotRepresentable("non-integer log bases are unsupported")
    mult, name = log_symbol(b.numerator)
    return Coeff.symbol(name, mult).inv()


def _jet_ln(x: SurnatValue) -> SurnatValue:
    lead = x.leading()
    if lead is None:
        raise UndeterminedExtension("log of a pure remainder")
    lead_key, lead_c = lead
    if lead_key[1] != 0:
        raise UndeterminedExtension("iterated logarithms are outside the basis")
    sign = lead_c.sign()
    if sign is None or sign <= 0:
        raise UndeterminedExtension("log of a non-positive value")
    try:
        const = _ln_coeff(lead_c)
    except NotRepresentable as ex:
        raise UndeterminedExtension(str(ex)) from ex
    items: list[tuple[GrowthKey, Coeff]] = []
    if lead_key[0]:
        items.append(((Fraction(0), 1), Coeff.of(lead_key[0])))
    if not const.is_zero():
        items.append((KEY_UNIT, const))
    head = SurnatValue.make(items, EXACT)
    rest = SurnatValue.make(x.terms[1:], x.exactness)
    u = rest.try_div(SurnatValue.from_coeff(lead_c, lead_key))
    if u is None:
        raise UndeterminedExtension("series pivot is not a monomial")
    if u.is_zero():
        return head
    series = SurnatValue.of(0)
    upow = SurnatValue.of(1)
    for j in range(1, _SERIES_TERMS + 1):
        upow = upow.mul(u)
        series = series.add(upow.scale(Fraction((-1) ** (j - 1), j)))
    series = _with_truncation(series, u)
    return head.add(series)


def _jet_log(x: SurnatValue, base: Base) -> SurnatValue:
    try:
        inv = _inv_ln_base(base)
    except NotRepresentable as ex:
        raise UndeterminedExtension(str(ex)) from ex
    return _jet_ln(x).scale(inv)


def split_tail(jet: SurnatValue) -> ExtendedValue:
    """Split a jet into its stored part (keys >= 1) and a tail sign."""
    stored = [(k, c) for k, c in jet.terms if k >= KEY_UNIT]
    small = [(k, c) for k, c in jet.terms if k < KEY_UNIT]
    tag = jet.exactness
    if tag.is_exact():
        value_tag = EXACT
    elif tag.order >= KEY_UNIT:
        value_tag = tag
    else:
        value_tag = EXACT  # the remainder lives entirely in the tail
    value = SurnatValue.make(stored, value_tag)
    if not small:
        if tag.is_exact() or tag.order >= KEY_UNIT:
            sign = TailSign.ZERO
        else:
            sign = TailSign.UNKNOWN
        return ExtendedValue(value, sign)
    lead_key, lead_c = small[0]
    decidable = tag.is_exact() or lead_key > tag.order or (
        lead_key == tag.order and tag.kind == "o"
    )
    if not decidable:
        return ExtendedValue(value, TailSign.UNKNOWN)
    s = lead_c.sign()
    if s is None or s == 0:
        return ExtendedValue(value, TailSign.UNKNOWN)
    return ExtendedValue(value, TailSign.POSITIVE if s > 0 else TailSign.NEGATIVE)


def _jet_floor(x: SurnatValue) -> SurnatValue:
    ev = split_tail(x)
    return floor_surreal(ev.value, ev.inf_sign)


def _extend(f: FnForm, arg: SurnatValue) -> SurnatValue:
    if isinstance(f, Const):
        return SurnatValue.of(f.value)
    if isinstance(f, SymConst):
        return SurnatValue.from_coeff(f.value)
    if isinstance(f, Var):
        return arg
    if isinstance(f, Add):
        return _extend(f.left, arg).add(_extend(f.right, arg))
    if isinstance(f, Sub):
        return _extend(f.left, arg).sub(_extend(f.right, arg))
    if isinstance(f, Mul):
        return _extend(f.left, arg).mul(_extend(f.right, arg))
    if isinstance(f, Div):
        return _extend(f.left, arg).mul(_jet_pow(_extend(f.right, arg), Fraction(-1)))
    if isinstance(f, Pow):
        return _jet_pow(_extend(f.child, arg), f.exponent)
    if isinstance(f, Floor):
        return _jet_floor(_extend(f.child, arg))
    if isinstance(f, Log):
        return _jet_log(_extend(f.child, arg), f.base)
    if isinstance(f, Exp):
        raise UndeterminedExtension("exponentials of infinite arguments are outside the basis")
    if isinstance(f, Tabulated):
        a, b = f.asym_key
        val = SurnatValue.of(1)
        if a:
            val = val.mul(_jet_pow(arg, a))
        if b:
            val = val.mul(_jet_pow(_jet_ln(arg), Fraction(b)))
        val = val.scale(f.asym_coeff)
        ea, eb = f.err_key
        arg_key = arg.leading_key()
        if arg_key is None:
            raise UndeterminedExtension("tabulated form applied to a pure remainder")
        err_order = key_scale(arg_key, ea)
        if eb:
            err_order = key_add(err_order, (Fraction(0), eb))
        tag = Exactness.little_o(err_order) if f.err_kind == "o" else Exactness.big_o(err_order)
        return SurnatValue.make(val.terms, _merge_tag(val.exactness, tag))
    raise TypeError(f"unknown node {f!r}")


def _merge_tag(a: Exactness, b: Exactness) -> Exactness:
    if a.is_exact():
        return b
    if b.is_exact():
        return a
    if a.order > b.order or (a.order == b.order and a.kind == "O"):
        return a
    return b


def extend_to_omega(f: FnForm) -> ExtendedValue:
    """Substitute w for the variable and normalize."""
    return compose_extend(f, OMEGA)


def compose_extend(f: FnForm, arg: SurnatValue) -> ExtendedValue:
    jet = _extend(f, arg)
    return split_tail(jet)


# ---------------------------------------------------------------------------
# Text form: render and parse (CLI `--lambda` grammar)
# ---------------------------------------------------------------------------


def render_fn(f: FnForm) -> str:
    return _render(f, 0)


def _render(f: FnForm, prec: int) -> str:
    if isinstance(f, Const):
        q = f.value
        body = str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"
        return f"({body})" if q < 0 and prec > 0 else body
    if isinstance(f, SymConst):
        return f.value.render()
    if isinstance(f, Var):
        return "n"
    if isinstance(f, Add):
        body = f"{_render(f.left, 1)} + {_render(f.right, 1)}"
        return f"({body})" if prec > 1 else body
    if isinstance(f, Sub):
        body = f"{_render(f.left, 1)} - {_render(f.right, 2)}"
        return f"({body})" if prec > 1 else body
    if isinstance(f, Mul):
        body = f"{_render(f.left, 2)}*{_render(f.right, 2)}"
        return f"({body})" if prec > 2 else body
    if isinstance(f, Div):
        body = f"{_render(f.left, 2)}/{_render(f.right, 3)}"
        return f"({body})" if prec > 2 else body
    if isinstance(f, Pow):
        if f.exponent == Fraction(1, 2):
            return f"sqrt({_render(f.child, 0)})"
        e = f.exponent
        etxt = str(e.numerator) if e.denominator == 1 else f"({e.numerator}/{e.denominator})"
        return f"{_render(f.child, 4)}^{etxt}"
    if isinstance(f, Floor):
        return f"floor({_render(f.child, 0)})"
    if isinstance(f, Log):
        return f"log({_base_txt(f.base)},{_render(f.child, 0)})"
    if isinstance(f, Exp):
        return f"{_base_txt(f.base)}^{_render(f.child, 4)}"
    if isinstance(f, Tabulated):
        return f"{f.name}(n)"
    raise TypeError(f"unknown node {f!r}")


def _base_txt(base: Base) -> str:
    if base == "phi":
        return "phi"
    b = Fraction(base)
    return str(b.numerator) if b.denominator == 1 else f"({b.numerator}/{b.denominator})"


class FnParseError(ValueError):
    def __init__(self, pos: int, message: str):
        super().__init__(f"at {pos}: {message}")
        self.pos = pos


class _FnTok:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_name(self) -> str:
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isalpha():
            self.pos += 1
        return self.text[start:self.pos]

    def take_int(self) -> int:
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            raise FnParseError(self.pos, "expected a number")
        return int(self.text[start:self.pos])

    def expect(self, ch: str):
        self.skip()
        if self.peek() != ch:
            raise FnParseError(self.pos, f"expected {ch!r}")
        self.pos += 1


def parse_fn(text: str) -> FnForm:
    tok = _FnTok(text)
    f = _parse_fn_sum(tok)
    tok.skip()
    if tok.pos != len(text):
        raise FnParseError(tok.pos, "trailing input")
    return f


def _parse_fn_sum(tok: _FnTok) -> FnForm:
    if tok.peek() == "-":
        tok.pos += 1
        acc: FnForm = Sub(C(0), _parse_fn_product(tok))
    else:
        acc = _parse_fn_product(tok)
    while tok.peek() and tok.peek() in "+-":
        op = tok.peek()
        tok.pos += 1
        rhs = _parse_fn_product(tok)
        acc = Add(acc, rhs) if op == "+" else Sub(acc, rhs)
    return acc


def _parse_fn_product(tok: _FnTok) -> FnForm:
    acc = _parse_fn_power(tok)
    while tok.peek() and tok.peek() in "*/":
        op = tok.peek()
        tok.pos += 1
        rhs = _parse_fn_power(tok)
        acc = Mul(acc, rhs) if op == "*" else Div(acc, rhs)
    return acc


def _parse_fn_power(tok: _FnTok) -> FnForm:
    base = _parse_fn_atom(tok)
    if tok.peek() != "^":
        return base
    tok.pos += 1
    if tok.peek() == "(":
        tok.pos += 1
        num = _parse_signed_int(tok)
        den = 1
        if tok.peek() == "/":
            tok.pos += 1
            den = tok.take_int()
        tok.expect(")")
        exp = Fraction(num, den)
    elif tok.peek() == "n":
        tok.pos += 1
        q = _const_value(base)
        if q is None:
            raise FnParseError(tok.pos, "exponential base must be constant")
        return Exp(q, VAR)
    else:
        exp = Fraction(_parse_signed_int(tok))
    q = _const_value(base)
    if isinstance(base, Var) or q is None:
        return Pow(base, exp)
    return C(q ** exp) if exp.denominator == 1 else Pow(base, exp)


def _parse_signed_int(tok: _FnTok) -> int:
    neg = False
    if tok.peek() == "-":
        tok.pos += 1
        neg = True
    v = tok.take_int()
    return -v if neg else v


def _parse_fn_atom(tok: _FnTok) -> FnForm:
    ch = tok.peek()
    if ch == "(":
        tok.pos += 1
        f = _parse_fn_sum(tok)
        tok.expect(")")
        return f
    if ch.isdigit():
        num = tok.take_int()
        return C(num)
    name = tok.take_name()
    if not name:
        raise FnParseError(tok.pos, "expected an expression")
    if name == "n":
        return VAR
    if name == "sqrt":
        tok.expect("(")
        inner = _parse_fn_sum(tok)
        tok.expect(")")
        return Pow(inner, Fraction(1, 2))
    if name == "floor":
        tok.expect("(")
        inner = _parse_fn_sum(tok)
        tok.expect(")")
        return Floor(inner)
    if name == "log":
        tok.expect("(")
        if tok.peek().isdigit():
            base: Base = Fraction(tok.take_int())
        else:
            base_name = tok.take_name()
            if base_name != "phi":
                raise FnParseError(tok.pos, "log base must be a number or phi")
            base = "phi"
        tok.expect(",")
        inner = _parse_fn_sum(tok)
        tok.expect(")")
        return Log(base, inner)
    if name == "phi":
        if tok.peek() == "^":
            tok.pos += 1
            if tok.peek() == "n":
                tok.pos += 1
                return Exp("phi", VAR)
            raise FnParseError(tok.pos, "phi^ takes n")
        raise FnParseError(tok.pos, "phi is only usable as an exponential base")
    raise FnParseError(tok.pos, f"unknown name {name!r}")
