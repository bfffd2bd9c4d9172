"""Surnatural numbers in normal form.

A value is a finite descending sum of terms  c * w^a * log(w)^b  where c is an
exact coefficient (see constants.Coeff), a is a non-negative rational and b an
integer, together with an exactness tag: Exact, o(order) or O(order).  The
log(w) axis extends the classical power basis so that logarithmic set sizes
are first-class.  Negative values and negative growth keys are permitted in
intermediate arithmetic; only final set sizes are checked for surnaturality.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .constants import (
    COEFF_ONE,
    COEFF_ZERO,
    Coeff,
    MONO_ONE,
    Monomial,
    log_symbol,
)

__all__ = [
    "GrowthKey",
    "KEY_UNIT",
    "Exactness",
    "SurnatValue",
    "Ordering",
    "TailSign",
    "Birthday",
    "UndeterminedFloor",
    "UnknownPattern",
    "ZERO",
    "ONE",
    "OMEGA",
    "compare",
    "sign_of",
    "floor_surreal",
    "is_divisible",
    "birthday",
    "render",
    "parse_value",
]

GrowthKey = tuple[Fraction, int]
KEY_UNIT: GrowthKey = (Fraction(0), 0)


def key_add(a: GrowthKey, b: GrowthKey) -> GrowthKey:
    return (a[0] + b[0], a[1] + b[1])


def key_scale(a: GrowthKey, e: Fraction) -> GrowthKey:
    le = a[1] * e
    if le.denominator != 1:
        raise ValueError("fractional log(w) exponents are not representable")
    return (a[0] * e, int(le))


def key_neg(a: GrowthKey) -> GrowthKey:
    return (-a[0], -a[1])


class UndeterminedFloor(ArithmeticError):
    """Floor cannot be decided (integer constant with unknown tail sign)."""


class UnknownPattern(ValueError):
    """Value does not match the birthday calendar grammar."""


class Ordering(enum.Enum):
    LESS = "Less"
    EQUAL = "Equal"
    GREATER = "Greater"
    UNDETERMINED = "Undetermined"


class TailSign(enum.Enum):
    ZERO = "Zero"
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Exactness:
    kind: str  # 'exact' | 'o' | 'O'
    order: Optional[GrowthKey] = None

    @staticmethod
    def exact() -> "Exactness":
        return EXACT

    @staticmethod
    def little_o(order: GrowthKey) -> "Exactness":
        return Exactness("o", order)

    @staticmethod
    def big_o(order: GrowthKey) -> "Exactness":
        return Exactness("O", order)

    def is_exact(self) -> bool:
        return self.kind == "exact"

    def render(self, unicode_out: bool = False) -> str:
        if self.kind == "exact":
            return ""
        w = "ω" if unicode_out else "w"
        return f"{'o' if self.kind == 'o' else 'O'}({_render_key(self.order, w)})"


EXACT = Exactness("exact", None)


def _combine_remainders(tags: Iterable[Exactness]) -> Exactness:
    best: Optional[Exactness] = None
    for t in tags:
        if t.is_exact():
            continue
        if best is None or t.order > best.order or (
            t.order == best.order and t.kind == "O"
        ):
            best = t
    return best if best is not None else EXACT


@dataclass(frozen=True)
class SurnatValue:
    """Normal-form value; construct through make() so invariants hold."""

    terms: tuple[tuple[GrowthKey, Coeff], ...] = ()
    exactness: Exactness = EXACT

    # -- construction --------------------------------------------------------

    @staticmethod
    def make(items: Iterable[tuple[GrowthKey, Coeff]], exactness: Exactness = EXACT) -> "SurnatValue":
        acc: dict[GrowthKey, Coeff] = {}
        for key, c in items:
            acc[key] = acc[key].add(c) if key in acc else c
        terms = []
        for key in sorted(acc, reverse=True):
            c = acc[key]
            if c.is_zero():
                continue
            if not exactness.is_exact():
                if key < exactness.order:
                    continue  # absorbed into the remainder
                if key == exactness.order and exactness.kind == "O":
                    continue  # c*g + O(g) = O(g)
            terms.append((key, c))
        return SurnatValue(tuple(terms), exactness)

    @staticmethod
    def of(q) -> "SurnatValue":
        q = Fraction(q)
        if q == 0:
            return SurnatValue((), EXACT)
        return SurnatValue(((KEY_UNIT, Coeff.of(q)),), EXACT)

    @staticmethod
    def from_coeff(c: Coeff, key: GrowthKey = KEY_UNIT) -> "SurnatValue":
        if c.is_zero():
            return ZERO
        return SurnatValue(((key, c),), EXACT)

    @staticmethod
    def omega_power(a, coeff=1, log_exp: int = 0) -> "SurnatValue":
        c = coeff if isinstance(coeff, Coeff) else Coeff.of(coeff)
        if c.is_zero():
            return ZERO
        return SurnatValue((((Fraction(a), log_exp), c),), EXACT)

    # -- inspection -----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms and self.exactness.is_exact()

    def leading(self) -> Optional[tuple[GrowthKey, Coeff]]:
        return self.terms[0] if self.terms else None

    def leading_key(self) -> Optional[GrowthKey]:
        return self.terms[0][0] if self.terms else None

    def coeff_at(self, key: GrowthKey) -> Coeff:
        for k, c in self.terms:
            if k == key:
                return c
        return COEFF_ZERO

    def constant_part(self) -> Coeff:
        return self.coeff_at(KEY_UNIT)

    def infinite_part(self) -> "SurnatValue":
        return SurnatValue(tuple((k, c) for k, c in self.terms if k > KEY_UNIT), EXACT)

    def as_fraction(self) -> Optional[Fraction]:
        """The value as an exact rational, when it is one."""
        if not self.exactness.is_exact():
            return None
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and self.terms[0][0] == KEY_UNIT:
            return self.terms[0][1].as_fraction()
        return None

    def as_int(self) -> Optional[int]:
        q = self.as_fraction()
        if q is not None and q.denominator == 1:
            return q.numerator
        return None

    def is_surnatural(self) -> Optional[bool]:
        """Non-negative omnific integer?  None when undecidable.

        Omnific: no negative growth keys stored and an integer standard part
        (infinite coefficients may be arbitrary reals).  Surnatural adds
        non-negativity, i.e. a positive leading coefficient.  Remainder tags
        leave an unknown tail and make the question undecidable.
        """
        for key, _ in self.terms:
            if key < KEY_UNIT:
                return False
        if not self.exactness.is_exact():
            return None
        if not self.terms:
            return True
        q = self.constant_part().as_fraction()
        if q is None or q.denominator != 1:
            return False  # non-integer (or syntactically irrational) standard part
        inf = self.infinite_part()
        if not inf.terms:
            return q >= 0
        lead_sign = inf.terms[0][1].sign()
        if lead_sign is None:
            return None
        return lead_sign > 0

    # -- arithmetic -----------------------------------------------------------

    def add(self, other: "SurnatValue") -> "SurnatValue":
        tag = _combine_remainders((self.exactness, other.exactness))
        return SurnatValue.make(list(self.terms) + list(other.terms), tag)

    def neg(self) -> "SurnatValue":
        return SurnatValue(tuple((k, c.neg()) for k, c in self.terms), self.exactness)

    def sub(self, other: "SurnatValue") -> "SurnatValue":
        return self.add(other.neg())

    def mul(self, other: "SurnatValue") -> "SurnatValue":
        items = []
        for k1, c1 in self.terms:
            for k2, c2 in other.terms:
                items.append((key_add(k1, k2), c1.mul(c2)))
        tags = []
        for a, b in ((self, other), (other, self)):
            if not a.exactness.is_exact():
                if b.terms:
                    tags.append(Exactness(a.exactness.kind, key_add(a.exactness.order, b.leading_key())))
                if not b.exactness.is_exact():
                    kind = "o" if "o" in (a.exactness.kind, b.exactness.kind) else "O"
                    tags.append(Exactness(kind, key_add(a.exactness.order, b.exactness.order)))
        return SurnatValue.make(items, _combine_remainders(tags))

    def scale(self, c) -> "SurnatValue":
        c = c if isinstance(c, Coeff) else Coeff.of(c)
        if c.is_zero():
            return SurnatValue((), self.exactness)
        return SurnatValue.make(((k, cc.mul(c)) for k, cc in self.terms), self.exactness)

    def shift(self, q) -> "SurnatValue":
        return self.add(SurnatValue.of(q))

    def try_div(self, other: "SurnatValue") -> Optional["SurnatValue"]:
        """Exact quotient when the divisor is a single exact monomial term."""
        if not other.exactness.is_exact() or len(other.terms) != 1:
            return None
        key, c = other.terms[0]
        try:
            cinv = c.inv()
        except Exception:
            return None
        items = [(key_add(k, key_neg(key)), cc.mul(cinv)) for k, cc in self.terms]
        tag = self.exactness
        if not tag.is_exact():
            tag = Exactness(tag.kind, key_add(tag.order, key_neg(key)))
        return SurnatValue.make(items, tag)

    # -- rendering -------------------------------------------------------------

    def render(self, unicode_out: bool = False) -> str:
        return render(self, unicode_out)

    def __str__(self) -> str:  # pragma: no cover - debugging convenience
        return render(self)


ZERO = SurnatValue.of(0)
ONE = SurnatValue.of(1)
OMEGA = SurnatValue.omega_power(1)


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------


def compare(x: SurnatValue, y: SurnatValue) -> Ordering:
    """Lexicographic comparison by growth order.

    Structurally identical values (terms and tag) compare Equal even when
    tagged; otherwise a remainder tag that could flip the sign of the
    difference yields Undetermined.
    """
    if x == y:
        return Ordering.EQUAL
    diff = x.sub(y)
    tag = diff.exactness
    for key, c in diff.terms:
        if not tag.is_exact():
            if key < tag.order or (key == tag.order and tag.kind == "O"):
                return Ordering.UNDETERMINED
        s = c.sign()
        if s is None:
            return Ordering.UNDETERMINED
        if s > 0:
            return Ordering.GREATER
        if s < 0:
            return Ordering.LESS
    if tag.is_exact():
        return Ordering.EQUAL
    return Ordering.UNDETERMINED


def sign_of(x: SurnatValue) -> Optional[int]:
    v = compare(x, ZERO)
    if v is Ordering.GREATER:
        return 1
    if v is Ordering.LESS:
        return -1
    if v is Ordering.EQUAL:
        return 0
    return None


# ---------------------------------------------------------------------------
# Floor, divisibility
# ---------------------------------------------------------------------------


def floor_surreal(x: SurnatValue, tail: TailSign = TailSign.ZERO) -> SurnatValue:
    """Omnific integer part of x + (infinitesimal of the given sign).

    Stored infinitesimal terms are not accepted here; callers summarize any
    discarded series tail in the sign argument.
    """
    for key, _ in x.terms:
        if key < KEY_UNIT:
            raise ValueError("floor_surreal: infinitesimal terms must be folded into the tail sign")
    tag = x.exactness
    if not tag.is_exact() and tag.order >= KEY_UNIT:
        # The +/-1 of flooring is absorbed by a remainder at or above O(1).
        if tag.order == KEY_UNIT and tag.kind == "o":
            tag = Exactness.big_o(KEY_UNIT)
        return SurnatValue.make(x.terms, tag)
    if not tag.is_exact():
        # A remainder below O(1) is an infinitesimal of unknown sign; it
        # pollutes whatever tail sign the caller declared.
        tail = TailSign.UNKNOWN
    std = x.constant_part()
    q = std.as_fraction()
    if q is not None:
        if q.denominator == 1:
            if tail in (TailSign.ZERO, TailSign.POSITIVE):
                f = q.numerator
            elif tail is TailSign.NEGATIVE:
                f = q.numerator - 1
            else:
                raise UndeterminedFloor(
                    f"floor of integer constant {q} with unknown infinitesimal sign"
                )
        else:
            f = q.numerator // q.denominator
    else:
        f = std.floor()
        if f is None:
            raise UndeterminedFloor(f"floor of constant {std.render()} undetermined")
    items = [(k, c) for k, c in x.terms if k > KEY_UNIT]
    if f:
        items.append((KEY_UNIT, Coeff.of(f)))
    return SurnatValue.make(items, EXACT)


def is_divisible(x: SurnatValue, k: int) -> bool:
    """True iff x/k is again surnatural (x exact)."""
    if k <= 0:
        raise ValueError("divisor must be a positive integer")
    if not x.exactness.is_exact():
        raise ValueError("divisibility is defined for exact values only")
    std = x.constant_part().as_fraction()
    if std is None or std.denominator != 1:
        return False
    return std % k == 0


# ---------------------------------------------------------------------------
# Birthday calendar
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Birthday:
    """Ordinal day a*w^2 + b*w + c with small non-negative integers."""

    a: int = 0
    b: int = 0
    c: int = 0

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.c < 0:
            raise ValueError("birthday components must be non-negative")
        if self.a > 1 or (self.a == 1 and (self.b or self.c)):
            raise ValueError("calendar stops at day w^2")

    def sort_key(self):
        return (self.a, self.b, self.c)

    def render(self, unicode_out: bool = False) -> str:
        w = "ω" if unicode_out else "w"
        parts = []
        if self.a:
            parts.append(f"{w}^2")
        if self.b:
            parts.append(w if self.b == 1 else f"{self.b}*{w}")
        if self.c or not parts:
            parts.append(str(self.c))
        return " + ".join(parts)


def birthday(x: SurnatValue) -> Birthday:
    """Day on which the calendar first assigns x as a set size."""
    if not x.exactness.is_exact():
        raise UnknownPattern("tagged values are outside the calendar")
    n = x.as_fraction()
    if n is not None:
        if n.denominator != 1 or n < 0:
            raise UnknownPattern(f"{render(x)} is not a calendar value")
        return Birthday(0, 0, n.numerator)
    if len(x.terms) > 2:
        raise UnknownPattern(f"{render(x)} is not a calendar value")
    lead_key, lead_c = x.terms[0]
    rest = x.terms[1:]
    offset = 0
    if rest:
        if rest[0][0] != KEY_UNIT:
            raise UnknownPattern(f"{render(x)} is not a calendar value")
        q = rest[0][1].as_fraction()
        if q is None or q.denominator != 1:
            raise UnknownPattern(f"{render(x)} is not a calendar value")
        offset = abs(q.numerator)
    if lead_key == (Fraction(2), 0):
        if lead_c.as_fraction() == 1 and not rest:
            return Birthday(1, 0, 0)
        raise UnknownPattern(f"{render(x)} is not a calendar value")
    if lead_key == (Fraction(1, 2), 0):
        if lead_c.as_fraction() == 1 and not rest:
            return Birthday(1, 0, 0)  # sqrt(w) appears on day w^2
        raise UnknownPattern(f"{render(x)} is not a calendar value")
    if lead_key != (Fraction(1), 0):
        raise UnknownPattern(f"{render(x)} is not a calendar value")
    q = lead_c.as_fraction()
    if q is None or q <= 0:
        raise UnknownPattern(f"{render(x)} is not a calendar value")
    if q.denominator == 1:
        if q.numerator > 4:
            raise UnknownPattern(f"{render(x)} is not a calendar value")
        return Birthday(0, q.numerator, offset)
    den = q.denominator
    if den & (den - 1) == 0:  # dyadic: j/2^k * w (+/- n) appears on day (k+1)w + n
        k = den.bit_length() - 1
        return Birthday(0, k + 1, offset)
    # non-dyadic rational multiples of w arrive on day w^2
    if offset:
        raise UnknownPattern(f"{render(x)} is not a calendar value")
    return Birthday(1, 0, 0)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _render_key(key: GrowthKey, w: str) -> str:
    a, b = key
    parts = []
    if a == 1:
        parts.append(w)
    elif a != 0:
        parts.append(f"{w}^({a.numerator}/{a.denominator})" if a.denominator != 1 else f"{w}^{a.numerator}")
    if b:
        base = f"log({w})"
        parts.append(base if b == 1 else f"{base}^{b}" if b > 0 else f"{base}^({b})")
    if not parts:
        return "1"
    return "*".join(parts)


def _inv_log_base(mono: Monomial) -> Optional[tuple[str, Monomial]]:
    """If mono = logX^-1 * rest, return (base text, rest)."""
    for i, (name, k) in enumerate(mono.symbols):
        if name.startswith("log") and k == -1:
            rest = Monomial(mono.radicals, mono.symbols[:i] + mono.symbols[i + 1:])
            return (name[3:] if name != "logphi" else "phi"), rest
    return None


def _render_value_term(key: GrowthKey, c: Coeff, w: str) -> str:
    a, b = key
    if key == KEY_UNIT:
        return c.render()
    # pretty form q*logB(w) for (1/log B) * log(w)
    if b == 1 and a == 0 and len(c.terms) == 1:
        q, mono = c.terms[0]
        hit = _inv_log_base(mono)
        if hit is not None:
            base, rest = hit
            body = f"log{base}({w})"
            if not rest.is_one():
                body = f"{rest.render()}*{body}"
            if q == 1:
                return body
            if q == -1:
                return f"-{body}"
            if q.denominator == 1:
                return f"{q.numerator}*{body}"
            return f"{q.numerator}*{body}/{q.denominator}"
    wpart = _render_key_for_term(key, w)
    if len(c.terms) == 1:
        q, mono = c.terms[0]
        num = ""
        if mono.is_one():
            if q < 0:
                return "-" + _join_frac(wpart, -q)
            return _join_frac(wpart, q)
        num = mono.render()
        if q == 1:
            return f"{num}*{wpart}"
        if q == -1:
            return f"-{num}*{wpart}"
        if q.denominator == 1:
            return f"{q.numerator}*{num}*{wpart}"
        return f"{q.numerator}*{num}*{wpart}/{q.denominator}"
    return f"({c.render()})*{wpart}"


def _render_key_for_term(key: GrowthKey, w: str) -> str:
    a, b = key
    if b < 0 and a != 0:
        up = _render_key((a, 0), w)
        down = _render_key((Fraction(0), -b), w)
        return f"{up}/{down}"
    return _render_key(key, w)


def _join_frac(wpart: str, q: Fraction) -> str:
    if q.denominator == 1:
        return wpart if q.numerator == 1 else f"{q.numerator}*{wpart}"
    if q.numerator == 1:
        return f"{wpart}/{q.denominator}"
    return f"{q.numerator}*{wpart}/{q.denominator}"


def render(x: SurnatValue, unicode_out: bool = False) -> str:
    w = "ω" if unicode_out else "w"
    if not x.terms:
        body = "0" if x.exactness.is_exact() else ""
    else:
        chunks = []
        for i, (key, c) in enumerate(x.terms):
            t = _render_value_term(key, c, w)
            if i == 0:
                chunks.append(t)
            elif t.startswith("-"):
                chunks.append(f" - {t[1:]}")
            else:
                chunks.append(f" + {t}")
        body = "".join(chunks)
    tagtxt = x.exactness.render(unicode_out)
    if tagtxt:
        body = f"{body} + {tagtxt}" if body else tagtxt
    return body


# ---------------------------------------------------------------------------
# Value parser (round-trips render output; used by the CLI)
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z][A-Za-z0-9]*)|(?P<op>[-+*/^()])|(?P<uni>ω))"
)


class ValueParseError(ValueError):
    pass


class _Tok:
    def __init__(self, text: str):
        self.items = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                if text[pos:].strip() == "":
                    break
                raise ValueParseError(f"bad value token at {pos}: {text[pos:pos+8]!r}")
            pos = m.end()
            if m.group("num"):
                self.items.append(("num", int(m.group("num"))))
            elif m.group("name"):
                self.items.append(("name", m.group("name")))
            elif m.group("uni"):
                self.items.append(("name", "w"))
            else:
                self.items.append(("op", m.group("op")))
        self.i = 0

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else (None, None)

    def next(self):
        t = self.peek()
        self.i += 1
        return t

    def expect(self, op: str):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise ValueParseError(f"expected {op!r}, got {val!r}")


def _parse_frac(tok: _Tok) -> Fraction:
    neg = False
    kind, val = tok.peek()
    if kind == "op" and val == "-":
        tok.next()
        neg = True
    kind, val = tok.next()
    if kind != "num":
        raise ValueParseError("expected a number")
    q = Fraction(val)
    kind, nxt = tok.peek()
    if kind == "op" and nxt == "/":
        tok.next()
        kind, den = tok.next()
        if kind != "num":
            raise ValueParseError("expected a denominator")
        q /= den
    return -q if neg else q


def _parse_factor(tok: _Tok) -> SurnatValue:
    kind, val = tok.peek()
    if kind == "op" and val == "(":
        tok.next()
        v = _parse_sum(tok)
        tok.expect(")")
        return v
    if kind == "num":
        tok.next()
        q = Fraction(val)
        kind2, nxt = tok.peek()
        if kind2 == "op" and nxt == "^":
            tok.next()
            tok.expect("(")
            e = _parse_frac(tok)
            tok.expect(")")
            return SurnatValue.from_coeff(Coeff.radical(q, e))
        return SurnatValue.of(q)
    if kind == "name":
        tok.next()
        return _parse_named(tok, val)
    raise ValueParseError(f"unexpected token {val!r}")


def _parse_named(tok: _Tok, name: str) -> SurnatValue:
    if name == "w":
        exp = Fraction(1)
        kind, nxt = tok.peek()
        if kind == "op" and nxt == "^":
            tok.next()
            kind2, v2 = tok.peek()
            if kind2 == "op" and v2 == "(":
                tok.next()
                exp = _parse_frac(tok)
                tok.expect(")")
            else:
                kind2, v2 = tok.next()
                if kind2 != "num":
                    raise ValueParseError("expected an exponent")
                exp = Fraction(v2)
        return SurnatValue.omega_power(exp)
    if name == "sqrt":
        tok.expect("(")
        inner = _parse_sum(tok)
        tok.expect(")")
        return _sqrt_value(inner)
    if name == "chi":
        return SurnatValue.from_coeff(Coeff.symbol("chi"))
    if name in ("o", "O"):
        tok.expect("(")
        inner = _parse_sum(tok)
        tok.expect(")")
        if len(inner.terms) != 1 or not inner.exactness.is_exact():
            raise ValueParseError("remainder order must be a single term")
        key = inner.terms[0][0]
        tag = Exactness.little_o(key) if name == "o" else Exactness.big_o(key)
        return SurnatValue((), tag)
    if name == "log":
        tok.expect("(")
        kind, nxt = tok.peek()
        if kind == "name" and nxt == "w":
            tok.next()
            tok.expect(")")
            power = 1
            kind2, v2 = tok.peek()
            if kind2 == "op" and v2 == "^":
                tok.next()
                kind3, v3 = tok.peek()
                if kind3 == "op" and v3 == "(":
                    tok.next()
                    power = int(_parse_frac(tok))
                    tok.expect(")")
                else:
                    kind3, v3 = tok.next()
                    if kind3 != "num":
                        raise ValueParseError("expected a log power")
                    power = v3
            return SurnatValue.omega_power(0, log_exp=power)
        if kind == "name" and nxt == "phi":
            tok.next()
            tok.expect(")")
            return SurnatValue.from_coeff(Coeff.symbol("logphi"))
        q = _parse_frac(tok)
        tok.expect(")")
        return SurnatValue.from_coeff(Coeff.log_of_fraction(q))
    m = re.fullmatch(r"log(\d+|phi)", name)
    if m:
        base = m.group(1)
        tok.expect("(")
        kind, nxt = tok.next()
        if kind != "name" or nxt != "w":
            raise ValueParseError(f"{name}(...) takes w")
        tok.expect(")")
        if base == "phi":
            inv = Coeff.symbol("logphi").inv()
        else:
            mult, sym = log_symbol(int(base))
            inv = Coeff.symbol(sym, mult).inv()
        return SurnatValue.omega_power(0, coeff=inv, log_exp=1)
    raise ValueParseError(f"unknown name {name!r}")


def _sqrt_value(v: SurnatValue) -> SurnatValue:
    if len(v.terms) != 1 or not v.exactness.is_exact():
        raise ValueParseError("sqrt of a non-monomial value")
    key, c = v.terms[0]
    return SurnatValue.from_coeff(c.pow(Fraction(1, 2)), key_scale(key, Fraction(1, 2)))


def _parse_product(tok: _Tok) -> SurnatValue:
    acc = _parse_factor(tok)
    while True:
        kind, val = tok.peek()
        if kind == "op" and val == "*":
            tok.next()
            acc = acc.mul(_parse_factor(tok))
        elif kind == "op" and val == "/":
            tok.next()
            div = _parse_factor(tok)
            out = acc.try_div(div)
            if out is None:
                raise ValueParseError("division by a non-monomial value")
            acc = out
        else:
            return acc


def _parse_sum(tok: _Tok) -> SurnatValue:
    kind, val = tok.peek()
    negate = False
    if kind == "op" and val == "-":
        tok.next()
        negate = True
    acc = _parse_product(tok)
    if negate:
        acc = acc.neg()
    while True:
        kind, val = tok.peek()
        if kind == "op" and val in "+-":
            tok.next()
            term = _parse_product(tok)
            acc = acc.add(term.neg() if val == "-" else term)
        else:
            return acc


def parse_value(text: str) -> SurnatValue:
    tok = _Tok(text)
    v = _parse_sum(tok)
    if tok.peek() != (None, None):
        raise ValueParseError(f"trailing input at token {tok.i}")
    return v
