"""Counting sequences: symbolic derivation where possible, enumeration always.

Every set expression gets an exact enumeration-backed counter; invertible
atoms additionally get a closed-form kappa(n) = floor(inverse of the defining
sequence), and unions/differences combine closed forms by inclusion-exclusion.
A closed form may carry a validity threshold: below it the early terms differ
from the true counter (finitely many), which leaves the extension value
unchanged.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .constants import CHI, Coeff, SQRT5
from . import funexpr as fn
from .funexpr import C, FnForm, Floor, Tabulated, VAR, eval_at
from . import setexpr as sx
from .setexpr import SetExpr, UnsupportedEnumeration

__all__ = [
    "CountingForm",
    "DensitySeq",
    "derive_counting",
    "relative_counting",
    "density_sequence",
    "totient_phi",
    "totient_sum",
    "prime_pi",
    "prime_pi_form",
    "totient_sum_form",
    "detect_floor_affine",
    "window_counts",
]


# ---------------------------------------------------------------------------
# Arithmetic tables: totients and prime counts
# ---------------------------------------------------------------------------

_PHI: list[int] = [0, 1]
_PHI_SUM: list[int] = [0, 1]


def _grow_phi(limit: int):
    global _PHI, _PHI_SUM
    if limit < len(_PHI):
        return
    limit = max(limit, 2 * (len(_PHI) - 1), 1 << 10)
    phi = list(range(limit + 1))
    for p in range(2, limit + 1):
        if phi[p] == p:  # p prime
            for k in range(p, limit + 1, p):
                phi[k] -= phi[k] // p
    acc = [0] * (limit + 1)
    run = 0
    for k in range(1, limit + 1):
        run += phi[k]
        acc[k] = run
    _PHI = phi
    _PHI_SUM = acc


def totient_phi(n: int) -> int:
    """Euler's phi(n) from a sieve."""
    if n < 1:
        raise ValueError("totient needs n >= 1")
    _grow_phi(n)
    return _PHI[n]


def totient_sum(n: int) -> int:
    """Phi(n) = sum of phi(k) for k <= n (count of Farey positives)."""
    if n < 1:
        raise ValueError("totient sum needs n >= 1")
    _grow_phi(n)
    return _PHI_SUM[n]


_PI_COUNTS: list[int] = []


def prime_pi(n: int) -> int:
    """pi(n) by sieve lookup (the ground-truth table, no approximation)."""
    global _PI_COUNTS
    if n < 2:
        return 0
    if n >= len(_PI_COUNTS):
        sieve = sx.prime_sieve(max(n, 1 << 12))
        counts = [0] * len(sieve)
        run = 0
        for i in range(len(sieve)):
            if sieve[i]:
                run += 1
            counts[i] = run
        _PI_COUNTS = counts
    return _PI_COUNTS[n]


def prime_pi_form() -> Tabulated:
    """pi(n) as an opaque tabulated form with its n/log(n) annotation."""
    return Tabulated(
        name="pi",
        values=prime_pi,
        asym_coeff=Coeff.of(1),
        asym_key=(Fraction(1), -1),
        err_kind="O",
        err_key=(Fraction(1), -2),
    )


def totient_sum_form() -> Tabulated:
    """Phi(n) as an opaque tabulated form, Phi(n) = chi*n^2 + O(n log n)."""
    return Tabulated(
        name="Phi",
        values=totient_sum,
        asym_coeff=CHI,
        asym_key=(Fraction(2), 0),
        err_kind="O",
        err_key=(Fraction(1), 1),
    )


# ---------------------------------------------------------------------------
# Counting forms
# ---------------------------------------------------------------------------


@dataclass
class OracleCounter:
    """Exact |A inter I_n| by enumeration, with a growing cache."""

    expr: SetExpr
    _members: list[int] = field(default_factory=list)
    _bound: int = 0

    def _ensure(self, n: int):
        if n <= self._bound:
            return
        bound = max(2 * self._bound, n, 64)
        self._members = sx.members_upto(self.expr, bound)
        self._bound = bound

    def count(self, n: int) -> int:
        self._ensure(n)
        return bisect.bisect_right(self._members, n)

    def counts_upto(self, depth: int) -> list[int]:
        """counts[i] = kappa(i) for 0 <= i <= depth."""
        self._ensure(depth)
        out = [0] * (depth + 1)
        j = 0
        members = self._members
        total = len(members)
        for i in range(1, depth + 1):
            while j < total and members[j] <= i:
                j += 1
            out[i] = j
        return out

    def element(self, n: int) -> int:
        """The n-th element (1-based) of the defining sequence."""
        bound = max(64, self._bound)
        while len(self._members) < n:
            bound *= 4
            self._ensure(bound)
            if self._bound >= (1 << 44):
                raise UnsupportedEnumeration("set appears to be finite")
        return self._members[n - 1]


@dataclass
class CountingForm:
    """Pair of symbolic counter (optional) and enumeration oracle (always)."""

    expr: SetExpr
    symbolic: Optional[FnForm]
    oracle: Optional[OracleCounter]
    provenance: str
    valid_from: int = 1

    def kappa(self, n: int) -> int:
        if self.symbolic is not None and n >= self.valid_from:
            v = eval_at(self.symbolic, n)
            return v.numerator // v.denominator
        if self.oracle is None:
            raise UnsupportedEnumeration(f"no oracle for {sx.render(self.expr)}")
        return self.oracle.count(n)

    def verify(self, depth: int) -> Optional[int]:
        """First n <= depth where symbolic and oracle disagree, else None."""
        if self.symbolic is None or self.oracle is None:
            return None
        counts = self.oracle.counts_upto(depth)
        for n in range(self.valid_from, depth + 1):
            v = eval_at(self.symbolic, n)
            if v.numerator // v.denominator != counts[n]:
                return n
        return None


def _atom_valid_from(e: SetExpr) -> int:
    if isinstance(e, sx.AtomArith):
        return max(1, e.m)
    if isinstance(e, sx.AtomPoly):
        return max(1, sx._poly_value(e.coeffs, 1))
    if isinstance(e, sx.AtomGeom):
        return max(1, e.a)
    return 1


def derive_counting(e: SetExpr) -> CountingForm:
    """Counting form for a subset of N (canonicalizes first)."""
    e = sx.canonicalize(e)
    uni = sx.universe(e)
    if isinstance(e, (sx.DisjUnion, sx.CartProd)):
        return _derive_compound(e)
    if uni != "N":
        raise ValueError(f"{sx.render(e)} is not a subset of N; use a reference context")
    oracle = OracleCounter(e)

    if isinstance(e, sx.AtomN):
        return CountingForm(e, VAR, oracle, "identity")
    if isinstance(e, sx.AtomFinite):
        if not e.elements:
            return CountingForm(e, C(0), oracle, "finite", 1)
        return CountingForm(e, C(len(e.elements)), oracle, "finite", max(e.elements))
    if isinstance(e, sx.AtomFib):
        # kappa(n) = floor(log_phi(sqrt5*(n + 1/2))) - 1, exact for n >= 1
        inner = fn.Mul(fn.SymConst(SQRT5), fn.Add(VAR, C(Fraction(1, 2))))
        form = fn.Sub(Floor(fn.Log("phi", inner)), C(1))
        return CountingForm(e, form, oracle, "inversion", 1)
    if isinstance(e, sx.AtomPrimes):
        return CountingForm(e, prime_pi_form(), oracle, "tabulated", 1)
    if isinstance(e, sx.AtomOd2):
        return CountingForm(e, None, oracle, "oracle-only", 1)

    a_form = sx.defining_form(e)
    if a_form is not None:
        try:
            inv = fn.invert(a_form)
        except fn.NotInvertible:
            inv = None
        if inv is not None:
            return CountingForm(e, Floor(inv), oracle, "inversion", _atom_valid_from(e))

    if isinstance(e, sx.Union):
        return _derive_union(e, oracle)
    if isinstance(e, sx.Diff):
        left = derive_counting(e.left)
        both = derive_counting(sx.canonicalize(sx.Inter((e.left, e.right))))
        if left.symbolic is not None and both.symbolic is not None:
            return CountingForm(
                e,
                fn.Sub(left.symbolic, both.symbolic),
                oracle,
                "complement",
                max(left.valid_from, both.valid_from),
            )
        return CountingForm(e, None, oracle, "oracle-only", 1)

    return CountingForm(e, None, oracle, "oracle-only", 1)


def _derive_union(e: sx.Union, oracle: OracleCounter) -> CountingForm:
    kids = list(e.children)
    head = kids[0]
    rest = kids[1] if len(kids) == 2 else sx.Union(tuple(kids[1:]))
    a = derive_counting(head)
    b = derive_counting(rest)
    meet = sx.canonicalize(sx.Inter((head, rest)))
    c = derive_counting(meet)
    if all(f.symbolic is not None for f in (a, b, c)):
        form: FnForm = fn.Add(a.symbolic, b.symbolic)
        if not (isinstance(meet, sx.AtomFinite) and not meet.elements):
            form = fn.Sub(form, c.symbolic)
        return CountingForm(
            e, form, oracle, "inclusion-exclusion",
            max(a.valid_from, b.valid_from, c.valid_from),
        )
    return CountingForm(e, None, oracle, "oracle-only", 1)


def _derive_compound(e: SetExpr) -> CountingForm:
    """Disjoint unions add counters; square products multiply window counts."""
    if isinstance(e, sx.DisjUnion):
        a = derive_counting(e.left)
        b = derive_counting(e.right)
        symbolic = None
        if a.symbolic is not None and b.symbolic is not None:
            symbolic = fn.Add(a.symbolic, b.symbolic)
        counter = None
        if a.oracle is not None and b.oracle is not None:
            ac, bc = a, b
            counter = _SumCounter(e, ac, bc)
        return CountingForm(e, symbolic, counter, "disjoint-union",
                            max(a.valid_from, b.valid_from))
    if isinstance(e, sx.CartProd):
        a = derive_counting(e.left)
        b = derive_counting(e.right)
        symbolic = None
        if a.symbolic is not None and b.symbolic is not None:
            symbolic = fn.Mul(a.symbolic, b.symbolic)
        return CountingForm(e, symbolic, None, "product-windows",
                            max(a.valid_from, b.valid_from))
    raise TypeError(e)


class _SumCounter(OracleCounter):
    """Counter of a disjoint union: componentwise sum."""

    def __init__(self, expr, a: CountingForm, b: CountingForm):
        self.expr = expr
        self._a = a
        self._b = b

    def count(self, n: int) -> int:
        return self._a.oracle.count(n) + self._b.oracle.count(n)

    def counts_upto(self, depth: int) -> list[int]:
        xs = self._a.oracle.counts_upto(depth)
        ys = self._b.oracle.counts_upto(depth)
        return [x + y for x, y in zip(xs, ys)]

    def element(self, n: int) -> int:
        raise UnsupportedEnumeration("disjoint unions have no scalar elements")


# ---------------------------------------------------------------------------
# Relative counting: kappa_{B|A}(n) = |{a_1..a_n} inter B|
# ---------------------------------------------------------------------------


def relative_counting(b: SetExpr, a: SetExpr, probe_depth: int = 256) -> CountingForm:
    a = sx.canonicalize(a)
    b = sx.canonicalize(b)
    meet = sx.canonicalize(sx.Inter((a, b)))
    marker = sx.Complement(meet, a)  # carrier for provenance only
    a_oracle = OracleCounter(a)

    class _RelCounter(OracleCounter):
        def __init__(self):
            self.expr = marker

        def count(self, n: int) -> int:
            prefix = [a_oracle.element(i) for i in range(1, n + 1)]
            return sum(1 for x in prefix if sx.contains(b, x))

        def counts_upto(self, depth: int) -> list[int]:
            out = [0] * (depth + 1)
            run = 0
            for i in range(1, depth + 1):
                if sx.contains(b, a_oracle.element(i)):
                    run += 1
                out[i] = run
            return out

        def element(self, n: int) -> int:
            raise UnsupportedEnumeration("relative counters have no elements")

    counter = _RelCounter()
    if isinstance(meet, sx.AtomFinite):
        form: Optional[FnForm] = C(len(meet.elements))
        valid = 1 if not meet.elements else None  # threshold found below
    else:
        form = None
        valid = None
        f_meet = sx.defining_form(meet)
        f_a = sx.defining_form(a)
        if f_meet is not None and f_a is not None:
            try:
                form = Floor(fn.substitute(fn.invert(f_meet), f_a))
            except fn.NotInvertible:
                form = None
    if form is not None and valid is None:
        valid = _first_agreement(form, counter, probe_depth)
        if valid is None:
            form = None
    rel = CountingForm(marker, form, counter, "relative", valid or 1)
    return rel


def _first_agreement(form: FnForm, counter: OracleCounter, depth: int) -> Optional[int]:
    """Smallest N0 such that the form matches the oracle on [N0, depth]."""
    counts = counter.counts_upto(depth)
    good_from = None
    for n in range(1, depth + 1):
        try:
            v = eval_at(form, n)
            ok = v.numerator // v.denominator == counts[n]
        except (fn.DomainError, ValueError):
            ok = False
        if ok:
            if good_from is None:
                good_from = n
        else:
            good_from = None
    return good_from


# ---------------------------------------------------------------------------
# Density sequences
# ---------------------------------------------------------------------------


@dataclass
class DensitySeq:
    """rho(n) = kappa(n)/n with dyadic-window extrema for oscillation checks."""

    expr: SetExpr
    counts: list[int]

    def rho(self, n: int) -> Fraction:
        return Fraction(self.counts[n], n)

    def sparsity(self, n: int) -> Fraction:
        """n / a(n) (denominators confined to elements of the set)."""
        counter = OracleCounter(self.expr)
        return Fraction(n, counter.element(n))

    def window_extrema(self) -> list[tuple[int, Fraction, Fraction]]:
        """(window start, min rho, max rho) over dyadic windows [2^j, 2^(j+1))."""
        out = []
        depth = len(self.counts) - 1
        j = 0
        while (1 << j) <= depth:
            lo = 1 << j
            hi = min(depth, (1 << (j + 1)) - 1)
            rhos = [self.rho(n) for n in range(lo, hi + 1)]
            out.append((lo, min(rhos), max(rhos)))
            j += 1
        return out

    def limit_estimate(self, tol: Fraction = Fraction(1, 100)) -> Optional[Fraction]:
        """Detected density limit (small-denominator rational), else None."""
        if len(self.counts) - 1 < 64:
            return None
        extrema = self.window_extrema()[-3:]
        spread = max(hi for _, _, hi in extrema) - min(lo_ for _, lo_, _ in extrema)
        if spread > tol:
            return None
        depth = len(self.counts) - 1
        est = Fraction(self.counts[depth], depth).limit_denominator(64)
        if abs(est - Fraction(self.counts[depth], depth)) <= tol:
            return est
        return None


def density_sequence(e: SetExpr, up_to: int) -> DensitySeq:
    if up_to < 1:
        raise ValueError("density depth must be >= 1")
    counts = OracleCounter(sx.canonicalize(e)).counts_upto(up_to)
    return DensitySeq(e, counts)


# ---------------------------------------------------------------------------
# Quasi-affine detection (eventually floor((p*n + q)/g) counters)
# ---------------------------------------------------------------------------


def detect_floor_affine(values: list[int], max_den: int = 24) -> Optional[tuple[FnForm, int]]:
    """Fit K(n) = floor((p*n + q)/g) on a 1-based value list.

    Returns (form, valid_from) when a fit matches a tail of the data;
    the tail must cover at least the last half of the samples.
    """
    depth = len(values) - 1
    if depth < 16:
        return None
    n1, n2 = depth // 2, depth
    slope = Fraction(values[n2] - values[n1], n2 - n1).limit_denominator(max_den)
    for g_mult in (1, 2, 3, 4):
        g = slope.denominator * g_mult
        p = slope.numerator * g_mult
        # feasible q interval per n, intersected over suffixes
        best = None
        lo_run = None
        hi_run = None
        start = None
        for n in range(depth, 0, -1):
            lo = values[n] * g - p * n
            hi = (values[n] + 1) * g - p * n - 1
            nlo = lo if lo_run is None else max(lo_run, lo)
            nhi = hi if hi_run is None else min(hi_run, hi)
            if nlo > nhi:
                break
            lo_run, hi_run, start = nlo, nhi, n
        if start is not None and start <= depth // 2:
            q = lo_run
            num: FnForm = fn.Mul(C(p), VAR) if p != 1 else VAR
            if q > 0:
                num = fn.Add(num, C(q))
            elif q < 0:
                num = fn.Sub(num, C(-q))
            form = Floor(fn.Div(num, C(g))) if g != 1 else _poly_affine(p, q)
            return form, start
    return None


def _poly_affine(p: int, q: int) -> FnForm:
    body: FnForm = fn.Mul(C(p), VAR) if p != 1 else VAR
    if q > 0:
        return fn.Add(body, C(q))
    if q < 0:
        return fn.Sub(body, C(-q))
    return body


def window_counts(a: SetExpr, ref) -> tuple[list[int], list[int]]:
    """X and K sequences of a set against a reference context's windows."""
    from .references import window_counts as _wc

    return _wc(a, ref)
