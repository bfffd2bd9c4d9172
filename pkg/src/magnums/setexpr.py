"""Set-description DSL: atoms, combinators, parser, canonical forms, enumeration.

The concrete grammar (ASCII, with UTF-8 aliases) is:

    atoms      N  Z  Q+  QB  halfN  primes  fib  tri  od2
               kN+m  kN-m          arithmetic progressions
               N^(k)               perfect k-th powers
               geom(a,r)           a*r^(n-1)
               poly(c0,c1,...)     integer polynomial values
               {a,b,c}             finite sets
    operators  u (union)  i (intersection)  \\ (difference)  |+| (disjoint
               union)  x (cartesian product)  prefix -  postfix +r / *r
               parentheses; aliases for the UTF-8 forms are accepted.

Enumeration of subsets of N is exact and strictly increasing; it is the
oracle substrate every symbolic result is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union as TUnion

from .constants import factorize
from . import funexpr as fn
from .funexpr import C, FnForm, VAR

__all__ = [
    "SetExpr",
    "AtomN",
    "AtomArith",
    "AtomPower",
    "AtomPoly",
    "AtomGeom",
    "AtomFib",
    "AtomTri",
    "AtomPrimes",
    "AtomOd2",
    "AtomFinite",
    "AtomZ",
    "AtomQplus",
    "AtomHalfN",
    "Union",
    "Inter",
    "Diff",
    "Complement",
    "DisjUnion",
    "CartProd",
    "Negate",
    "Shift",
    "Scale",
    "EMPTY",
    "N",
    "ParseError",
    "ConstraintError",
    "UnsupportedEnumeration",
    "parse",
    "render",
    "canonicalize",
    "universe",
    "members_upto",
    "contains",
    "defining_form",
    "Enumerator",
    "prime_sieve",
    "primes_upto",
    "fib_upto",
]

Number = TUnion[int, Fraction]


class ParseError(ValueError):
    def __init__(self, pos: int, message: str):
        super().__init__(f"at {pos}: {message}")
        self.pos = pos


class ConstraintError(ValueError):
    pass


class UnsupportedEnumeration(ValueError):
    pass


class SetExpr:
    __slots__ = ()


@dataclass(frozen=True)
class AtomN(SetExpr):
    pass


@dataclass(frozen=True)
class AtomArith(SetExpr):
    """{k*n + m : n in N}; requires m > -k so all elements are >= 1."""

    k: int
    m: int

    def __post_init__(self):
        if self.k < 1:
            raise ConstraintError("arithmetic progression needs k >= 1")
        if self.m <= -self.k:
            raise ConstraintError(f"offset {self.m} <= -{self.k} leaves N")


@dataclass(frozen=True)
class AtomPower(SetExpr):
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ConstraintError("power atom needs k >= 2")


@dataclass(frozen=True)
class AtomPoly(SetExpr):
    """Values of an integer polynomial (ascending coefficients)."""

    coeffs: tuple[int, ...]

    def __post_init__(self):
        cs = tuple(int(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", cs)
        if len(cs) < 2 or cs[-1] <= 0:
            raise ConstraintError("polynomial must be non-constant with positive lead")
        prev = None
        for n in range(1, 64):
            v = _poly_value(cs, n)
            if prev is not None and v <= prev:
                raise ConstraintError("polynomial is not strictly increasing on N")
            prev = v
        if _poly_value(cs, 1) < 1:
            raise ConstraintError("polynomial values must lie in N")


@dataclass(frozen=True)
class AtomGeom(SetExpr):
    a: int
    r: int

    def __post_init__(self):
        if self.a < 1 or self.r < 2:
            raise ConstraintError("geometric atom needs a >= 1 and r >= 2")


@dataclass(frozen=True)
class AtomFib(SetExpr):
    pass


@dataclass(frozen=True)
class AtomTri(SetExpr):
    pass


@dataclass(frozen=True)
class AtomPrimes(SetExpr):
    pass


@dataclass(frozen=True)
class AtomOd2(SetExpr):
    pass


@dataclass(frozen=True)
class AtomFinite(SetExpr):
    elements: tuple[int, ...]

    def __post_init__(self):
        els = tuple(int(e) for e in self.elements)
        if list(els) != sorted(set(els)):
            raise ConstraintError("finite atom must be strictly sorted, no duplicates")
        object.__setattr__(self, "elements", els)


@dataclass(frozen=True)
class AtomZ(SetExpr):
    pass


@dataclass(frozen=True)
class AtomQplus(SetExpr):
    pass


@dataclass(frozen=True)
class AtomHalfN(SetExpr):
    """{1/2, 1, 3/2, 2, ...}"""


@dataclass(frozen=True)
class Union(SetExpr):
    children: tuple[SetExpr, ...]


@dataclass(frozen=True)
class Inter(SetExpr):
    children: tuple[SetExpr, ...]


@dataclass(frozen=True)
class Diff(SetExpr):
    left: SetExpr
    right: SetExpr


@dataclass(frozen=True)
class Complement(SetExpr):
    child: SetExpr
    reference: SetExpr


@dataclass(frozen=True)
class DisjUnion(SetExpr):
    left: SetExpr
    right: SetExpr


@dataclass(frozen=True)
class CartProd(SetExpr):
    left: SetExpr
    right: SetExpr
    ordering: Optional[str] = None  # only "square" is built in


@dataclass(frozen=True)
class Negate(SetExpr):
    child: SetExpr


@dataclass(frozen=True)
class Shift(SetExpr):
    child: SetExpr
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "offset", Fraction(self.offset))


@dataclass(frozen=True)
class Scale(SetExpr):
    child: SetExpr
    factor: Fraction

    def __post_init__(self):
        f = Fraction(self.factor)
        if f == 0:
            raise ConstraintError("scale factor must be nonzero")
        object.__setattr__(self, "factor", f)


EMPTY = AtomFinite(())
N = AtomN()


def _poly_value(coeffs: tuple[int, ...], n: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = acc * n + c
    return acc


# ---------------------------------------------------------------------------
# Prime / Fibonacci helpers
# ---------------------------------------------------------------------------

_SIEVE_LIMIT = 0
_SIEVE = bytearray()
_PRIMES: list[int] = []


def prime_sieve(limit: int) -> bytearray:
    """Shared segmentless sieve; grows on demand and is cached."""
    global _SIEVE_LIMIT, _SIEVE, _PRIMES
    if limit <= _SIEVE_LIMIT:
        return _SIEVE
    limit = max(limit, 2 * _SIEVE_LIMIT, 1 << 12)
    sieve = bytearray(b"\x01") * (limit + 1)
    sieve[0:2] = b"\x00\x00"
    for p in range(2, math.isqrt(limit) + 1):
        if sieve[p]:
            start = p * p
            sieve[start : limit + 1 : p] = b"\x00" * ((limit - start) // p + 1)
    _SIEVE = sieve
    _SIEVE_LIMIT = limit
    _PRIMES = [i for i in range(2, limit + 1) if sieve[i]]
    return _SIEVE


def primes_upto(limit: int) -> list[int]:
    prime_sieve(limit)
    import bisect

    idx = bisect.bisect_right(_PRIMES, limit)
    return _PRIMES[:idx]


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    sieve = prime_sieve(max(n, 4096))
    return bool(sieve[n])


def fib_upto(limit: int) -> list[int]:
    """Distinct Fibonacci numbers 1,2,3,5,... up to limit."""
    out = []
    a, b = 1, 2
    while a <= limit:
        out.append(a)
        a, b = b, a + b
    return out


# ---------------------------------------------------------------------------
# Universe inference
# ---------------------------------------------------------------------------


def universe(e: SetExpr) -> str:
    """Smallest built-in reference world containing the set.

    One of 'N', 'Z', 'halfN', 'Q', 'N2'.
    """
    order = {"N": 0, "halfN": 1, "Z": 2, "Q": 3, "N2": 4}

    def join(a: str, b: str) -> str:
        if a == b:
            return a
        pair = {a, b}
        if pair <= {"N", "halfN"}:
            return "halfN"
        if pair <= {"N", "Z"}:
            return "Z"
        if "N2" in pair:
            return "N2"
        return "Q"

    if isinstance(e, (AtomN, AtomArith, AtomPower, AtomPoly, AtomGeom, AtomFib,
                      AtomTri, AtomPrimes, AtomOd2)):
        return "N"
    if isinstance(e, AtomFinite):
        if all(x >= 1 for x in e.elements):
            return "N"
        return "Z"
    if isinstance(e, AtomZ):
        return "Z"
    if isinstance(e, AtomQplus):
        return "Q"
    if isinstance(e, AtomHalfN):
        return "halfN"
    if isinstance(e, (Union, Inter)):
        u = "N"
        for c in e.children:
            u = join(u, universe(c))
        return u
    if isinstance(e, Diff):
        return universe(e.left)
    if isinstance(e, Complement):
        return universe(e.reference)
    if isinstance(e, DisjUnion):
        return join(universe(e.left), universe(e.right))
    if isinstance(e, CartProd):
        return "N2"
    if isinstance(e, Negate):
        u = universe(e.child)
        return "Z" if u in ("N", "Z") else "Q"
    if isinstance(e, Shift):
        u = universe(e.child)
        if e.offset.denominator == 1:
            return u if u != "N" else ("N" if e.offset >= 0 else "Z")
        if e.offset.denominator == 2 and u == "N":
            return "halfN"
        return "Q"
    if isinstance(e, Scale):
        u = universe(e.child)
        if e.factor.denominator == 1 and e.factor > 0:
            return u
        if e.factor == Fraction(1, 2) and u == "N":
            return "halfN"
        return "Q"
    raise TypeError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Canonicalization
# ---------------------------------------------------------------------------


def _sort_key(e: SetExpr):
    return render(e)


def canonicalize(e: SetExpr) -> SetExpr:
    if isinstance(e, Union):
        kids = []
        for c in e.children:
            c = canonicalize(c)
            if isinstance(c, Union):
                kids.extend(c.children)
            elif c == EMPTY:
                continue
            else:
                kids.append(c)
        if any(isinstance(k, AtomN) for k in kids) and all(
            universe(k) == "N" for k in kids
        ):
            return N
        uniq = sorted(set(kids), key=_sort_key)
        if not uniq:
            return EMPTY
        if len(uniq) == 1:
            return uniq[0]
        return Union(tuple(uniq))
    if isinstance(e, Inter):
        kids = []
        for c in e.children:
            c = canonicalize(c)
            if isinstance(c, Inter):
                kids.extend(c.children)
            elif isinstance(c, AtomN):
                continue
            else:
                kids.append(c)
        if not kids:
            return N
        if any(k == EMPTY for k in kids):
            return EMPTY
        kids = _fuse_intersections(kids)
        uniq = sorted(set(kids), key=_sort_key)
        if len(uniq) == 1:
            return uniq[0]
        return Inter(tuple(uniq))
    if isinstance(e, Diff):
        left = canonicalize(e.left)
        right = canonicalize(e.right)
        if right == EMPTY:
            return left
        if left == EMPTY:
            return EMPTY
        return Diff(left, right)
    if isinstance(e, Complement):
        return canonicalize(Diff(e.reference, e.child))
    if isinstance(e, DisjUnion):
        return DisjUnion(canonicalize(e.left), canonicalize(e.right))
    if isinstance(e, CartProd):
        return CartProd(canonicalize(e.left), canonicalize(e.right), e.ordering)
    if isinstance(e, Negate):
        c = canonicalize(e.child)
        if isinstance(c, Negate):
            return c.child
        return Negate(c)
    if isinstance(e, Shift):
        c = canonicalize(e.child)
        r = e.offset
        if r == 0:
            return c
        if isinstance(c, Shift):
            return canonicalize(Shift(c.child, c.offset + r))
        if r.denominator == 1:
            m = r.numerator
            if isinstance(c, AtomN):
                return AtomN() if m == 0 else AtomArith(1, m)
            if isinstance(c, AtomArith):
                return AtomArith(c.k, c.m + m)
            if isinstance(c, AtomFinite):
                return AtomFinite(tuple(x + m for x in c.elements))
        return Shift(c, r)
    if isinstance(e, Scale):
        c = canonicalize(e.child)
        r = e.factor
        if r == 1:
            return c
        if isinstance(c, Scale):
            return canonicalize(Scale(c.child, c.factor * r))
        if r.denominator == 1 and r > 0:
            k = r.numerator
            if isinstance(c, AtomN):
                return AtomArith(k, 0) if k > 1 else AtomN()
            if isinstance(c, AtomArith):
                return AtomArith(c.k * k, c.m * k)
            if isinstance(c, AtomFinite):
                return AtomFinite(tuple(x * k for x in c.elements))
        if r == Fraction(1, 2) and isinstance(c, AtomN):
            return AtomHalfN()
        return Scale(c, r)
    return e


def _fuse_intersections(kids: list[SetExpr]) -> list[SetExpr]:
    """Pairwise closure rules: CRT for progressions, lcm for powers, etc."""
    out = list(kids)
    changed = True
    while changed and len(out) > 1:
        changed = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                fused = _fuse_pair(out[i], out[j])
                if fused is not None:
                    rest = [out[t] for t in range(len(out)) if t not in (i, j)]
                    out = rest + [fused]
                    changed = True
                    break
            if changed:
                break
    return out


def _fuse_pair(a: SetExpr, b: SetExpr) -> Optional[SetExpr]:
    if isinstance(a, AtomArith) and isinstance(b, AtomArith):
        return _crt_arith(a, b)
    if isinstance(a, AtomPower) and isinstance(b, AtomPower):
        return AtomPower(a.k * b.k // math.gcd(a.k, b.k))
    for x, y in ((a, b), (b, a)):
        if isinstance(x, AtomPower) and isinstance(y, AtomArith) and y.m == 0:
            s = 1
            for p, e in factorize(y.k).items():
                s *= p ** -(-e // x.k)  # ceil division
            coeffs = [0] * x.k + [s ** x.k]
            return AtomPoly(tuple(coeffs))
        if isinstance(x, AtomArith) and isinstance(y, AtomFinite):
            kept = tuple(v for v in y.elements if contains(x, v))
            return AtomFinite(kept)
    if isinstance(a, AtomFinite) and isinstance(b, AtomFinite):
        return AtomFinite(tuple(sorted(set(a.elements) & set(b.elements))))
    return None


def _crt_arith(a: AtomArith, b: AtomArith) -> SetExpr:
    k1, m1, k2, m2 = a.k, a.m, b.k, b.m
    g = math.gcd(k1, k2)
    if (m1 - m2) % g != 0:
        return EMPTY
    L = k1 * k2 // g
    # solve x = m1 (mod k1), x = m2 (mod k2)
    t = ((m2 - m1) // g * pow(k1 // g, -1, k2 // g)) % (k2 // g)
    m = (m1 + k1 * t) % L
    first = max(k1 + m1, k2 + m2)
    s = first + ((m - first) % L)
    return AtomArith(L, s - L)


# ---------------------------------------------------------------------------
# Membership and enumeration (subsets of N and its transforms)
# ---------------------------------------------------------------------------


def contains(e: SetExpr, x: Number) -> bool:
    if isinstance(e, AtomN):
        return _is_int(x) and x >= 1
    if isinstance(e, AtomArith):
        if not _is_int(x):
            return False
        n, r = divmod(int(x) - e.m, e.k)
        return r == 0 and n >= 1
    if isinstance(e, AtomPower):
        if not _is_int(x) or x < 1:
            return False
        r = fn._iroot(int(x), e.k)
        return r ** e.k == x
    if isinstance(e, AtomPoly):
        if not _is_int(x) or x < _poly_value(e.coeffs, 1):
            return False
        lo, hi = 1, 2
        while _poly_value(e.coeffs, hi) < x:
            hi *= 2
        while lo < hi:
            mid = (lo + hi) // 2
            if _poly_value(e.coeffs, mid) < x:
                lo = mid + 1
            else:
                hi = mid
        return _poly_value(e.coeffs, lo) == x
    if isinstance(e, AtomGeom):
        if not _is_int(x) or x < e.a:
            return False
        v = int(x)
        if v % e.a:
            return False
        v //= e.a
        while v % e.r == 0:
            v //= e.r
        return v == 1
    if isinstance(e, AtomFib):
        return _is_int(x) and x >= 1 and int(x) in set(fib_upto(int(x)))
    if isinstance(e, AtomTri):
        if not _is_int(x) or x < 1:
            return False
        d = 8 * int(x) + 1
        r = math.isqrt(d)
        return r * r == d
    if isinstance(e, AtomPrimes):
        return _is_int(x) and is_prime(int(x))
    if isinstance(e, AtomOd2):
        return _is_int(x) and x >= 1 and int(x).bit_length() % 2 == 1
    if isinstance(e, AtomFinite):
        return _is_int(x) and int(x) in e.elements
    if isinstance(e, AtomZ):
        return _is_int(x)
    if isinstance(e, AtomQplus):
        return Fraction(x) > 0
    if isinstance(e, AtomHalfN):
        q = Fraction(x)
        return q > 0 and (2 * q).denominator == 1
    if isinstance(e, Union):
        return any(contains(c, x) for c in e.children)
    if isinstance(e, Inter):
        return all(contains(c, x) for c in e.children)
    if isinstance(e, Diff):
        return contains(e.left, x) and not contains(e.right, x)
    if isinstance(e, Complement):
        return contains(e.reference, x) and not contains(e.child, x)
    if isinstance(e, Negate):
        return contains(e.child, -Fraction(x))
    if isinstance(e, Shift):
        return contains(e.child, Fraction(x) - e.offset)
    if isinstance(e, Scale):
        return contains(e.child, Fraction(x) / e.factor)
    if isinstance(e, (DisjUnion, CartProd)):
        raise UnsupportedEnumeration(f"{type(e).__name__} has no scalar membership")
    raise TypeError(f"unknown node {e!r}")


def _is_int(x: Number) -> bool:
    return isinstance(x, int) or (isinstance(x, Fraction) and x.denominator == 1)


def members_upto(e: SetExpr, up_to: int) -> list[int]:
    """Sorted elements of a subset of N not exceeding up_to."""
    if up_to < 1:
        return []
    if isinstance(e, AtomN):
        return list(range(1, up_to + 1))
    if isinstance(e, AtomArith):
        first = e.k + e.m
        return list(range(first, up_to + 1, e.k)) if first <= up_to else []
    if isinstance(e, AtomPower):
        out = []
        n = 1
        while n ** e.k <= up_to:
            out.append(n ** e.k)
            n += 1
        return out
    if isinstance(e, AtomPoly):
        out = []
        n = 1
        while True:
            v = _poly_value(e.coeffs, n)
            if v > up_to:
                return out
            if v >= 1:
                out.append(v)
            n += 1
    if isinstance(e, AtomGeom):
        out = []
        v = e.a
        while v <= up_to:
            out.append(v)
            v *= e.r
        return out
    if isinstance(e, AtomFib):
        return fib_upto(up_to)
    if isinstance(e, AtomTri):
        out = []
        n = 1
        while n * (n + 1) // 2 <= up_to:
            out.append(n * (n + 1) // 2)
            n += 1
        return out
    if isinstance(e, AtomPrimes):
        return primes_upto(up_to)
    if isinstance(e, AtomOd2):
        out = []
        d = 1
        while (1 << (d - 1)) <= up_to:
            if d % 2 == 1:
                out.extend(range(1 << (d - 1), min((1 << d) - 1, up_to) + 1))
            d += 1
        return out
    if isinstance(e, AtomFinite):
        return [x for x in e.elements if 1 <= x <= up_to]
    if isinstance(e, Union):
        acc: set[int] = set()
        for c in e.children:
            acc.update(members_upto(c, up_to))
        return sorted(acc)
    if isinstance(e, Inter):
        sets = [set(members_upto(c, up_to)) for c in e.children]
        acc = set.intersection(*sets) if sets else set()
        return sorted(acc)
    if isinstance(e, Diff):
        left = members_upto(e.left, up_to)
        right = set(members_upto(e.right, up_to))
        return [x for x in left if x not in right]
    if isinstance(e, Complement):
        return members_upto(canonicalize(e), up_to)
    if isinstance(e, Shift):
        if e.offset.denominator != 1:
            raise UnsupportedEnumeration("non-integer shift leaves N")
        m = e.offset.numerator
        return [x + m for x in members_upto(e.child, up_to - m) if x + m >= 1]
    if isinstance(e, Scale):
        if e.factor.denominator != 1 or e.factor < 1:
            raise UnsupportedEnumeration("fractional scaling leaves N")
        k = e.factor.numerator
        return [x * k for x in members_upto(e.child, up_to // k)]
    if isinstance(e, (AtomZ, AtomQplus, AtomHalfN, Negate)):
        raise UnsupportedEnumeration(f"{render(e)} is not a subset of N")
    if isinstance(e, CartProd):
        raise UnsupportedEnumeration(
            "cartesian products need a declared ordering; use a reference context"
        )
    if isinstance(e, DisjUnion):
        raise UnsupportedEnumeration(
            "disjoint unions enumerate per component; use counting forms"
        )
    raise TypeError(f"unknown node {e!r}")


class Enumerator:
    """Single-consumer block enumerator in the set's inherited order."""

    def __init__(self, expr: SetExpr):
        self.expr = expr
        self._bound = 64
        self._buffer: list[int] = []
        self._emitted = 0

    def next_batch(self, size: int) -> list[int]:
        while len(self._buffer) - self._emitted < size:
            self._bound *= 4
            fresh = members_upto(self.expr, self._bound)
            if len(fresh) == len(self._buffer) and self._bound > 1 << 40:
                break  # finite set exhausted
            self._buffer = fresh
            if isinstance(self.expr, AtomFinite) and len(fresh) == len(self.expr.elements):
                break
        out = self._buffer[self._emitted : self._emitted + size]
        self._emitted += len(out)
        return out


# ---------------------------------------------------------------------------
# Defining sequences
# ---------------------------------------------------------------------------


def defining_form(e: SetExpr) -> Optional[FnForm]:
    """The strictly increasing enumeration a(n) as a FnForm, when available."""
    if isinstance(e, AtomN):
        return VAR
    if isinstance(e, AtomArith):
        body = fn.Mul(C(e.k), VAR) if e.k != 1 else VAR
        if e.m > 0:
            return fn.Add(body, C(e.m))
        if e.m < 0:
            return fn.Sub(body, C(-e.m))
        return body
    if isinstance(e, AtomPower):
        return fn.Pow(VAR, Fraction(e.k))
    if isinstance(e, AtomPoly):
        acc: Optional[FnForm] = None
        for i, c in enumerate(e.coeffs):
            if c == 0:
                continue
            term: FnForm
            if i == 0:
                term = C(c)
            else:
                base = VAR if i == 1 else fn.Pow(VAR, Fraction(i))
                term = base if c == 1 else fn.Mul(C(c), base)
            acc = term if acc is None else fn.Add(acc, term)
        assert acc is not None
        return acc
    if isinstance(e, AtomGeom):
        body: FnForm = fn.Exp(Fraction(e.r), fn.Sub(VAR, C(1)))
        return fn.Mul(C(e.a), body) if e.a != 1 else body
    if isinstance(e, AtomTri):
        return fn.Div(fn.Add(fn.Pow(VAR, Fraction(2)), VAR), C(2))
    if isinstance(e, AtomHalfN):
        return fn.Div(VAR, C(2))
    if isinstance(e, Shift):
        inner = defining_form(e.child)
        if inner is None:
            return None
        off = e.offset
        if off > 0:
            return fn.Add(inner, C(off))
        return fn.Sub(inner, C(-off))
    if isinstance(e, Scale):
        inner = defining_form(e.child)
        if inner is None:
            return None
        if e.factor < 0:
            return None
        return fn.Mul(C(e.factor), inner)
    return None


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_PREC_UNION = 1
_PREC_INTER = 2
_PREC_PROD = 3
_PREC_POSTFIX = 4


def render(e: SetExpr, unicode_out: bool = False) -> str:
    return _render(e, 0, unicode_out)


def _paren(body: str, mine: int, outer: int) -> str:
    return f"({body})" if mine < outer else body


def _render(e: SetExpr, outer: int, uni: bool) -> str:
    if isinstance(e, AtomN):
        return "N"
    if isinstance(e, AtomArith):
        head = "N" if e.k == 1 else f"{e.k}N"
        if e.m > 0:
            return f"{head}+{e.m}"
        if e.m < 0:
            return f"{head}-{-e.m}"
        return head
    if isinstance(e, AtomPower):
        return f"N^({e.k})"
    if isinstance(e, AtomPoly):
        return "poly(" + ",".join(str(c) for c in e.coeffs) + ")"
    if isinstance(e, AtomGeom):
        return f"geom({e.a},{e.r})"
    if isinstance(e, AtomFib):
        return "fib"
    if isinstance(e, AtomTri):
        return "tri"
    if isinstance(e, AtomPrimes):
        return "primes"
    if isinstance(e, AtomOd2):
        return "od2"
    if isinstance(e, AtomFinite):
        return "{" + ",".join(str(x) for x in e.elements) + "}"
    if isinstance(e, AtomZ):
        return "Z"
    if isinstance(e, AtomQplus):
        return "Q+"
    if isinstance(e, AtomHalfN):
        return "halfN"
    if isinstance(e, Union):
        op = " ∪ " if uni else " u "
        body = op.join(_render(c, _PREC_UNION + 1, uni) for c in e.children)
        return _paren(body, _PREC_UNION, outer)
    if isinstance(e, Inter):
        op = " ∩ " if uni else " i "
        body = op.join(_render(c, _PREC_INTER + 1, uni) for c in e.children)
        return _paren(body, _PREC_INTER, outer)
    if isinstance(e, Diff):
        body = f"{_render(e.left, _PREC_UNION + 1, uni)} \\ {_render(e.right, _PREC_UNION + 1, uni)}"
        return _paren(body, _PREC_UNION, outer)
    if isinstance(e, Complement):
        return _render(canonicalize(e), outer, uni)
    if isinstance(e, DisjUnion):
        op = " ⊔ " if uni else " |+| "
        body = f"{_render(e.left, _PREC_UNION + 1, uni)}{op}{_render(e.right, _PREC_UNION + 1, uni)}"
        return _paren(body, _PREC_UNION, outer)
    if isinstance(e, CartProd):
        op = " × " if uni else " x "
        body = f"{_render(e.left, _PREC_PROD + 1, uni)}{op}{_render(e.right, _PREC_PROD + 1, uni)}"
        return _paren(body, _PREC_PROD, outer)
    if isinstance(e, Negate):
        return f"-{_render(e.child, _PREC_POSTFIX + 1, uni)}"
    if isinstance(e, Shift):
        q = e.offset
        sign = "+" if q > 0 else "-"
        qa = abs(q)
        qtxt = str(qa.numerator) if qa.denominator == 1 else f"{qa.numerator}/{qa.denominator}"
        body = f"{_render(e.child, _PREC_POSTFIX, uni)} {sign} {qtxt}"
        return _paren(body, _PREC_POSTFIX - 1, outer)
    if isinstance(e, Scale):
        q = e.factor
        qtxt = str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"
        body = f"{_render(e.child, _PREC_POSTFIX, uni)} * {qtxt}"
        return _paren(body, _PREC_POSTFIX - 1, outer)
    raise TypeError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _STok:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def startswith(self, s: str) -> bool:
        self.skip()
        return self.text.startswith(s, self.pos)

    def take(self, s: str):
        if not self.startswith(s):
            raise ParseError(self.pos, f"expected {s!r}")
        self.pos += len(s)

    def take_int(self) -> int:
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            raise ParseError(self.pos, "expected a number")
        return int(self.text[start : self.pos])

    def take_signed_int(self) -> int:
        self.skip()
        neg = False
        if self.peek() == "-":
            self.pos += 1
            neg = True
        v = self.take_int()
        return -v if neg else v

    def take_rational(self) -> Fraction:
        num = self.take_signed_int()
        self.skip()
        if self.peek() == "/":
            self.pos += 1
            den = self.take_int()
            return Fraction(num, den)
        return Fraction(num)

    def take_name(self) -> str:
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "+"
        ):
            if self.text[self.pos] == "+" and self.text[start : self.pos] not in ("Q",):
                break
            self.pos += 1
        return self.text[start : self.pos]


def parse(text: str) -> SetExpr:
    """Parse and canonicalize a set expression."""
    tok = _STok(text)
    e = _parse_union(tok)
    tok.skip()
    if tok.pos != len(text):
        raise ParseError(tok.pos, "trailing input")
    return canonicalize(e)


def _parse_union(tok: _STok) -> SetExpr:
    acc = _parse_inter(tok)
    while True:
        tok.skip()
        if tok.startswith("u ") or tok.startswith("u(") or _is_word_at(tok, "u") or tok.startswith("∪"):
            _consume_op(tok, "u", "∪")
            acc = Union((acc, _parse_inter(tok)))
        elif tok.peek() == "\\":
            tok.pos += 1
            acc = Diff(acc, _parse_inter(tok))
        elif tok.startswith("|+|") or tok.startswith("⊔"):
            _consume_op(tok, "|+|", "⊔")
            acc = DisjUnion(acc, _parse_inter(tok))
        else:
            return acc


def _parse_inter(tok: _STok) -> SetExpr:
    acc = _parse_prod(tok)
    while True:
        tok.skip()
        if _is_word_at(tok, "i") or tok.startswith("∩"):
            _consume_op(tok, "i", "∩")
            acc = Inter((acc, _parse_prod(tok)))
        else:
            return acc


def _parse_prod(tok: _STok) -> SetExpr:
    acc = _parse_postfix(tok)
    while True:
        tok.skip()
        if _is_word_at(tok, "x") or tok.startswith("×"):
            _consume_op(tok, "x", "×")
            acc = CartProd(acc, _parse_postfix(tok))
        else:
            return acc


def _is_word_at(tok: _STok, word: str) -> bool:
    tok.skip()
    if not tok.text.startswith(word, tok.pos):
        return False
    end = tok.pos + len(word)
    if end < len(tok.text) and (tok.text[end].isalnum() or tok.text[end] in "+^"):
        return False
    return True


def _consume_op(tok: _STok, ascii_op: str, uni_op: str):
    tok.skip()
    if tok.text.startswith(uni_op, tok.pos):
        tok.pos += len(uni_op)
    else:
        tok.pos += len(ascii_op)


def _parse_postfix(tok: _STok) -> SetExpr:
    e = _parse_atom(tok)
    while True:
        tok.skip()
        ch = tok.peek()
        if ch == "+" and not tok.startswith("|+|"):
            save = tok.pos
            tok.pos += 1
            try:
                q = tok.take_rational()
            except ParseError:
                tok.pos = save
                return e
            e = Shift(e, q)
        elif ch == "-":
            save = tok.pos
            tok.pos += 1
            try:
                q = tok.take_rational()
            except ParseError:
                tok.pos = save
                return e
            e = Shift(e, -q)
        elif ch == "*":
            tok.pos += 1
            e = Scale(e, tok.take_rational())
        else:
            return e


def _parse_atom(tok: _STok) -> SetExpr:
    tok.skip()
    pos = tok.pos
    ch = tok.peek()
    if ch == "(":
        tok.pos += 1
        e = _parse_union(tok)
        tok.skip()
        tok.take(")")
        return e
    if ch == "-":
        tok.pos += 1
        return Negate(_parse_atom(tok))
    if ch == "{":
        tok.pos += 1
        els = []
        tok.skip()
        if tok.peek() != "}":
            els.append(tok.take_signed_int())
            while tok.peek() == ",":
                tok.pos += 1
                els.append(tok.take_signed_int())
        tok.take("}")
        try:
            return AtomFinite(tuple(sorted(set(els))))
        except ConstraintError as ex:
            raise ParseError(pos, str(ex)) from ex
    if ch.isdigit():
        k = tok.take_int()
        tok.skip()
        if tok.peek() == "N":
            tok.pos += 1
            try:
                return _with_arith_offset(tok, k, pos)
            except ConstraintError as ex:
                raise ParseError(pos, str(ex)) from ex
        raise ParseError(tok.pos, "expected N after the multiplier")
    name = tok.take_name()
    if name == "N":
        tok.skip()
        if tok.peek() == "^":
            tok.pos += 1
            tok.take("(")
            k = tok.take_int()
            tok.take(")")
            try:
                return AtomPower(k)
            except ConstraintError as ex:
                raise ParseError(pos, str(ex)) from ex
        return AtomN()
    if name == "Z":
        return AtomZ()
    if name == "Q+":
        return AtomQplus()
    if name == "QB":
        return AtomQplus()
    if name == "halfN":
        return AtomHalfN()
    if name == "primes":
        return AtomPrimes()
    if name == "fib":
        return AtomFib()
    if name == "tri":
        return AtomTri()
    if name == "od2":
        return AtomOd2()
    if name == "geom":
        tok.take("(")
        a = tok.take_int()
        tok.take(",")
        r = tok.take_int()
        tok.take(")")
        try:
            return AtomGeom(a, r)
        except ConstraintError as ex:
            raise ParseError(pos, str(ex)) from ex
    if name == "poly":
        tok.take("(")
        cs = [tok.take_signed_int()]
        while tok.peek() == ",":
            tok.pos += 1
            cs.append(tok.take_signed_int())
        tok.take(")")
        try:
            return AtomPoly(tuple(cs))
        except ConstraintError as ex:
            raise ParseError(pos, str(ex)) from ex
    raise ParseError(pos, f"unknown set atom {name!r}" if name else "expected a set expression")


def _with_arith_offset(tok: _STok, k: int, pos: int) -> SetExpr:
    """kN with an optional immediate +m / -m offset."""
    tok.skip()
    ch = tok.peek()
    if ch in "+-" and not tok.startswith("|+|"):
        save = tok.pos
        sign = 1 if ch == "+" else -1
        tok.pos += 1
        try:
            m = tok.take_int()
        except ParseError:
            tok.pos = save
            return AtomArith(k, 0) if k > 1 else AtomN()
        tok.skip()
        if tok.peek() == "/":
            tok.pos += 1
            den = tok.take_int()
            base = AtomArith(k, 0) if k > 1 else AtomN()
            return Shift(base, Fraction(sign * m, den))
        return AtomArith(k, sign * m)
    return AtomArith(k, 0) if k > 1 else AtomN()
