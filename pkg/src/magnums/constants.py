"""Exact coefficient arithmetic for surnatural normal forms.

A coefficient is a finite sum of *monomials*

    q * (p1^e1 * p2^e2 * ...) * (s1^k1 * s2^k2 * ...)

where q is a rational, the p_i are primes raised to rational exponents in
(0, 1) (algebraic radicals such as 2^(1/2) or 2^(2/3)), and the s_j are named
positive constants from a fixed registry (chi = 3/pi^2, log2, logphi, ...)
raised to integer powers.  Equality of sums is decided syntactically on the
canonical form; sign and floor questions that the syntax does not settle are
answered with certified interval enclosures, refined from 64 up to 1024
fractional bits before giving up.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional

import mpmath

__all__ = [
    "Coeff",
    "Monomial",
    "NotRepresentable",
    "PrecisionExhausted",
    "MIN_PREC",
    "MAX_PREC",
]

MIN_PREC = 64
MAX_PREC = 1024


class NotRepresentable(ValueError):
    """An operation left the coefficient field (e.g. sqrt of chi)."""


class PrecisionExhausted(ArithmeticError):
    """Interval refinement hit MAX_PREC without settling the question."""


def factorize(n: int) -> dict[int, int]:
    """Prime factorization by trial division; inputs here are small."""
    if n <= 0:
        raise ValueError("factorize expects a positive integer")
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _perfect_power_root(n: int) -> tuple[int, int]:
    """Return (b, k) with n = b^k and k maximal (n >= 2)."""
    fac = factorize(n)
    from math import gcd

    k = 0
    for e in fac.values():
        k = gcd(k, e)
    if k <= 1:
        return n, 1
    b = 1
    for p, e in fac.items():
        b *= p ** (e // k)
    return b, k


# ---------------------------------------------------------------------------
# Registry of named constants
# ---------------------------------------------------------------------------

# Symbol names: 'chi' (= 3/pi^2), 'logphi' (= ln((1+sqrt5)/2)), and 'logN'
# (= ln N) for an integer N >= 2 that is not a perfect power.  Perfect-power
# bases are normalized away: ln 8 = 3 ln 2.


def _symbol_interval(name: str):
    iv = mpmath.iv
    if name == "chi":
        return 3 / iv.pi ** 2
    if name == "logphi":
        return iv.log((1 + iv.sqrt(5)) / 2)
    if name.startswith("log"):
        base = int(name[3:])
        return iv.log(base)
    raise KeyError(f"unknown registry constant {name!r}")


def log_symbol(base: int) -> tuple[Fraction, str]:
    """ln(base) as multiple * registry symbol, normalizing perfect powers."""
    if base < 2:
        raise ValueError("log base must be an integer >= 2")
    b, k = _perfect_power_root(base)
    return Fraction(k), f"log{b}"


# ---------------------------------------------------------------------------
# Monomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Monomial:
    """Product of prime radicals and registry symbols (no rational part)."""

    radicals: tuple[tuple[int, Fraction], ...] = ()
    symbols: tuple[tuple[str, int], ...] = ()

    def is_one(self) -> bool:
        return not self.radicals and not self.symbols

    def sort_key(self):
        return (self.radicals, self.symbols)

    def interval(self):
        iv = mpmath.iv
        acc = iv.mpf(1)
        for p, e in self.radicals:
            acc *= iv.exp(iv.log(p) * iv.mpf(e.numerator) / iv.mpf(e.denominator))
        for name, k in self.symbols:
            acc *= _symbol_interval(name) ** k
        return acc

    def render(self) -> str:
        parts = []
        for p, e in self.radicals:
            parts.append(f"{p}^({e.numerator}/{e.denominator})")
        for name, k in self.symbols:
            if name == "chi":
                txt = "chi"
            elif name == "logphi":
                txt = "log(phi)"
            else:
                txt = f"log({name[3:]})"
            if k != 1:
                txt += f"^{k}" if k >= 0 else f"^({k})"
            parts.append(txt)
        return "*".join(parts) if parts else "1"


MONO_ONE = Monomial()


def _norm_radicals(items: Iterable[tuple[int, Fraction]]) -> tuple[Fraction, tuple]:
    """Merge prime radical exponents; carry integer parts into a rational."""
    acc: dict[int, Fraction] = {}
    for p, e in items:
        acc[p] = acc.get(p, Fraction(0)) + e
    carry = Fraction(1)
    out = []
    for p in sorted(acc):
        e = acc[p]
        whole = e.numerator // e.denominator
        frac = e - whole
        if whole:
            carry *= Fraction(p) ** whole
        if frac:
            out.append((p, frac))
    return carry, tuple(out)


def _norm_symbols(items: Iterable[tuple[str, int]]) -> tuple:
    acc: dict[str, int] = {}
    for name, k in items:
        acc[name] = acc.get(name, 0) + k
    return tuple((n, acc[n]) for n in sorted(acc) if acc[n] != 0)


def mono_mul(a: Monomial, b: Monomial) -> tuple[Fraction, Monomial]:
    carry, rad = _norm_radicals(list(a.radicals) + list(b.radicals))
    sym = _norm_symbols(list(a.symbols) + list(b.symbols))
    return carry, Monomial(rad, sym)


def mono_pow(a: Monomial, e: Fraction) -> tuple[Fraction, Monomial]:
    for name, k in a.symbols:
        if (k * e).denominator != 1:
            raise NotRepresentable(f"{name}^{k * e} is outside the coefficient field")
    carry, rad = _norm_radicals((p, r * e) for p, r in a.radicals)
    sym = _norm_symbols((name, int(k * e)) for name, k in a.symbols)
    return carry, Monomial(rad, sym)


def rational_pow(q: Fraction, e: Fraction) -> tuple[Fraction, Monomial]:
    """q^e for positive rational q as rational * radical monomial."""
    if q <= 0:
        raise NotRepresentable("rational_pow needs a positive base")
    items = []
    for p, k in factorize(q.numerator).items():
        items.append((p, Fraction(k) * e))
    for p, k in factorize(q.denominator).items():
        items.append((p, Fraction(-k) * e))
    carry, rad = _norm_radicals(items)
    return carry, Monomial(rad, ())


# ---------------------------------------------------------------------------
# Coefficient sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coeff:
    """Canonical sum of rational multiples of monomials."""

    terms: tuple[tuple[Fraction, Monomial], ...] = ()

    # -- constructors -------------------------------------------------------

    @staticmethod
    def of(q) -> "Coeff":
        q = Fraction(q)
        if q == 0:
            return COEFF_ZERO
        return Coeff(((q, MONO_ONE),))

    @staticmethod
    def symbol(name: str, q=1) -> "Coeff":
        q = Fraction(q)
        if q == 0:
            return COEFF_ZERO
        return Coeff(((q, Monomial((), ((name, 1),))),))

    @staticmethod
    def log_of_int(n: int) -> "Coeff":
        """ln(n) for integer n >= 1 as an exact coefficient.

        Perfect powers are normalized (ln 8 = 3 ln 2); other composites stay
        atomic so that reciprocals 1/ln(n) remain single monomials.
        """
        if n == 1:
            return COEFF_ZERO
        mult, name = log_symbol(n)
        return Coeff.symbol(name, mult)

    @staticmethod
    def log_of_fraction(q: Fraction) -> "Coeff":
        if q <= 0:
            raise NotRepresentable("log of a non-positive rational")
        return Coeff.log_of_int(q.numerator).sub(Coeff.log_of_int(q.denominator))

    @staticmethod
    def radical(q, e) -> "Coeff":
        carry, mono = rational_pow(Fraction(q), Fraction(e))
        return Coeff(((carry, mono),)) if carry else COEFF_ZERO

    @staticmethod
    def from_terms(items: Iterable[tuple[Fraction, Monomial]]) -> "Coeff":
        acc: dict[Monomial, Fraction] = {}
        for q, m in items:
            acc[m] = acc.get(m, Fraction(0)) + q
        terms = tuple(
            (acc[m], m) for m in sorted(acc, key=Monomial.sort_key) if acc[m] != 0
        )
        return Coeff(terms)

    # -- queries -------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def as_fraction(self) -> Optional[Fraction]:
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and self.terms[0][1].is_one():
            return self.terms[0][0]
        return None

    def is_one(self) -> bool:
        return self.as_fraction() == 1

    # -- ring operations ------------------------------------------------------

    def add(self, other: "Coeff") -> "Coeff":
        return Coeff.from_terms(list(self.terms) + list(other.terms))

    def neg(self) -> "Coeff":
        return Coeff(tuple((-q, m) for q, m in self.terms))

    def sub(self, other: "Coeff") -> "Coeff":
        return self.add(other.neg())

    def mul(self, other: "Coeff") -> "Coeff":
        items = []
        for q1, m1 in self.terms:
            for q2, m2 in other.terms:
                carry, m = mono_mul(m1, m2)
                items.append((q1 * q2 * carry, m))
        return Coeff.from_terms(items)

    def scale(self, q) -> "Coeff":
        q = Fraction(q)
        if q == 0:
            return COEFF_ZERO
        return Coeff(tuple((qq * q, m) for qq, m in self.terms))

    def pow(self, e: Fraction) -> "Coeff":
        """Raise to a rational power; only single-monomial sums qualify."""
        e = Fraction(e)
        if e.denominator == 1 and e >= 0:
            out = COEFF_ONE
            for _ in range(e.numerator):
                out = out.mul(self)
            return out
        if len(self.terms) != 1:
            raise NotRepresentable("rational power of a non-monomial coefficient")
        q, m = self.terms[0]
        if q < 0:
            raise NotRepresentable("rational power of a negative coefficient")
        qc, qm = rational_pow(q, e)
        mc, mm = mono_pow(m, e)
        carry, mono = mono_mul(qm, mm)
        return Coeff(((qc * mc * carry, mono),))

    def inv(self) -> "Coeff":
        return self.pow(Fraction(-1))

    # -- analytic queries ------------------------------------------------------

    def interval(self, prec: int):
        iv = mpmath.iv
        old = iv.prec
        try:
            iv.prec = prec
            acc = iv.mpf(0)
            for q, m in self.terms:
                t = iv.mpf(q.numerator) / iv.mpf(q.denominator)
                if not m.is_one():
                    t *= m.interval()
                acc += t
            return acc
        finally:
            iv.prec = old

    def sign(self) -> Optional[int]:
        """-1, 0, or +1; None if interval refinement cannot separate."""
        if not self.terms:
            return 0
        q = self.as_fraction()
        if q is not None:
            return -1 if q < 0 else (1 if q > 0 else 0)
        prec = MIN_PREC
        while prec <= MAX_PREC:
            x = self.interval(prec)
            if x > 0:
                return 1
            if x < 0:
                return -1
            prec *= 2
        return None

    def floor(self) -> Optional[int]:
        """Exact floor; None when refinement cannot pin it down."""
        q = self.as_fraction()
        if q is not None:
            return q.numerator // q.denominator
        prec = MIN_PREC
        while prec <= MAX_PREC:
            x = self.interval(prec)
            lo = mpmath.floor(x.a.a)
            hi = mpmath.floor(x.b.b)
            if lo == hi:
                k = int(lo)
                # guard against an endpoint sitting exactly on an integer
                if (x > k) and (x < k + 1):
                    return k
            prec *= 2
        return None

    def float_value(self) -> float:
        x = self.interval(MIN_PREC)
        return float((x.a + x.b) / 2)

    def compare_fraction(self, q: Fraction) -> Optional[int]:
        return self.sub(Coeff.of(q)).sign()

    # -- rendering --------------------------------------------------------------

    def render(self) -> str:
        if not self.terms:
            return "0"
        chunks = []
        for i, (q, m) in enumerate(self.terms):
            body = _render_term(q, m)
            if i == 0:
                chunks.append(body)
            else:
                chunks.append(f" + {body}" if not body.startswith("-") else f" - {body[1:]}")
        return "".join(chunks)


def _render_term(q: Fraction, m: Monomial) -> str:
    if m.is_one():
        return _render_fraction(q)
    mono = m.render()
    if q == 1:
        return mono
    if q == -1:
        return f"-{mono}"
    if q.denominator == 1:
        return f"{q.numerator}*{mono}"
    return f"{q.numerator}*{mono}/{q.denominator}"


def _render_fraction(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


COEFF_ZERO = Coeff(())
COEFF_ONE = Coeff(((Fraction(1), MONO_ONE),))

CHI = Coeff.symbol("chi")
LOG2 = Coeff.symbol("log2")
LOGPHI = Coeff.symbol("logphi")
SQRT5 = Coeff.radical(5, Fraction(1, 2))
CBRT2 = Coeff.radical(2, Fraction(1, 3))
CBRT4 = Coeff.radical(2, Fraction(2, 3))


@lru_cache(maxsize=None)
def phi_power_pair(j: int) -> tuple[int, int]:
    """phi^j = (L_j + F_j*sqrt5)/2 via Lucas/Fibonacci pairs (j >= 0)."""
    L, F = 2, 0
    for _ in range(j):
        L, F = (L + 5 * F) // 2, (L + F) // 2
    return L, F
