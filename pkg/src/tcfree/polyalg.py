"""Sparse multivariate polynomial and rational-function arithmetic.

Indeterminates are referred to by name (e.g. ``"s0"``, ``"x1"``, ``"mu_a2"``).
Coefficients are 64-bit floats kept exact through symbolic products; small
coefficients are only dropped explicitly (see :meth:`Polynomial.drop_small`),
never during arithmetic.
"""

from __future__ import annotations

import itertools
import re
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "Monomial",
    "Polynomial",
    "RationalFn",
    "BasisSizeError",
    "var_sort_key",
    "coordinate_degree_basis",
    "product_basis",
    "newton_basis_check",
]

_VAR_RE = re.compile(r"^(.*?)(\d*)$")


def var_sort_key(name: str):
    """Sort key that orders 's2' before 's10' (natural numeric suffix order)."""
    m = _VAR_RE.match(name)
    suffix = m.group(2)
    return (m.group(1), int(suffix) if suffix else -1)


class BasisSizeError(ValueError):
    """Raised when a requested monomial basis exceeds the configured cap."""


class Monomial:
    """An exponent map over named indeterminates; immutable and hashable.

    Zero exponents are never stored, so the empty monomial is the constant 1.
    """

    __slots__ = ("_exps", "_hash")

    def __init__(self, exponents: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = exponents.items() if isinstance(exponents, Mapping) else exponents
        kept = []
        for var, e in items:
            e = int(e)
            if e < 0:
                raise ValueError(f"negative exponent for {var!r}")
            if e > 0:
                kept.append((var, e))
        kept.sort(key=lambda ve: var_sort_key(ve[0]))
        self._exps = tuple(kept)
        self._hash = hash(self._exps)

    @property
    def exponents(self) -> dict[str, int]:
        return dict(self._exps)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self._exps)

    def degree(self) -> int:
        return sum(e for _, e in self._exps)

    def degree_in(self, var: str) -> int:
        for v, e in self._exps:
            if v == var:
                return e
        return 0

    def is_constant(self) -> bool:
        return not self._exps

    def __mul__(self, other: "Monomial") -> "Monomial":
        exps = dict(self._exps)
        for v, e in other._exps:
            exps[v] = exps.get(v, 0) + e
        return Monomial(exps)

    def evaluate(self, point: Mapping[str, float]) -> float:
        out = 1.0
        for v, e in self._exps:
            out *= point[v] ** e
        return out

    def grlex_key(self, var_order: Sequence[str]):
        """Graded-lex key: total degree first, then higher powers of earlier
        variables first within a degree."""
        vec = tuple(-self.degree_in(v) for v in var_order)
        return (self.degree(), vec)

    def __eq__(self, other):
        return isinstance(other, Monomial) and self._exps == other._exps

    def __hash__(self):
        return self._hash

    def __repr__(self):
        if not self._exps:
            return "1"
        return "*".join(v if e == 1 else f"{v}^{e}" for v, e in self._exps)


ONE = Monomial()


def sort_monomials(monos: Iterable[Monomial]) -> list[Monomial]:
    """Deterministic graded-lex ordering over the union variable set."""
    monos = list(monos)
    var_order = sorted({v for m in monos for v in m.variables}, key=var_sort_key)
    return sorted(monos, key=lambda m: m.grlex_key(var_order))


class Polynomial:
    """Sparse polynomial as a map from :class:`Monomial` to float coefficient."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        self._terms: dict[Monomial, float] = {}
        if terms:
            for m, c in terms.items():
                c = float(c)
                if c != 0.0:
                    self._terms[m] = c

    @classmethod
    def constant(cls, c: float) -> "Polynomial":
        return cls({ONE: c})

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        return cls({Monomial({name: 1}): 1.0})

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls()

    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    @property
    def variables(self) -> set[str]:
        return {v for m in self._terms for v in m.variables}

    def coefficient(self, m: Monomial) -> float:
        return self._terms.get(m, 0.0)

    def degree(self) -> int:
        return max((m.degree() for m in self._terms), default=0)

    def coordinate_degree(self, var: str) -> int:
        return max((m.degree_in(var) for m in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def constant_value(self) -> float:
        """Value of the constant term (whole value if the polynomial is constant)."""
        return self._terms.get(ONE, 0.0)

    def __add__(self, other):
        other = _lift(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            v = out.get(m, 0.0) + c
            if v == 0.0:
                out.pop(m, None)
            else:
                out[m] = v
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        if isinstance(other, RationalFn):
            return NotImplemented
        other = _lift(other)
        out: dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = m1 * m2
                v = out.get(m, 0.0) + c1 * c2
                if v == 0.0:
                    out.pop(m, None)
                else:
                    out[m] = v
        return Polynomial(out)

    __rmul__ = __mul__

    def scale(self, c: float) -> "Polynomial":
        c = float(c)
        return Polynomial({m: c * v for m, v in self._terms.items()})

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(1.0)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def evaluate(self, point: Mapping[str, float]) -> float:
        return sum(c * m.evaluate(point) for m, c in self._terms.items())

    def substitute(self, var: str, replacement: Union["Polynomial", "RationalFn"]):
        """Replace ``var`` by a polynomial (returns Polynomial) or a rational
        function (returns RationalFn with denominator ``rep.den**max_degree``)."""
        if isinstance(replacement, RationalFn):
            e_max = self.coordinate_degree(var)
            num = Polynomial.zero()
            for m, c in self._terms.items():
                e = m.degree_in(var)
                rest = Monomial({v: k for v, k in m.exponents.items() if v != var})
                term = Polynomial({rest: c}) * replacement.num ** e
                term = term * replacement.den ** (e_max - e)
                num = num + term
            return RationalFn(num, replacement.den**e_max)
        out = Polynomial.zero()
        for m, c in self._terms.items():
            e = m.degree_in(var)
            rest = Monomial({v: k for v, k in m.exponents.items() if v != var})
            out = out + Polynomial({rest: c}) * replacement**e
        return out

    def drop_small(self, tol: float = 1e-12) -> "Polynomial":
        """Drop terms with |coefficient| <= tol; used at constraint assembly only."""
        return Polynomial({m: c for m, c in self._terms.items() if abs(c) > tol})

    def allclose(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(m) - other.coefficient(m)) <= tol for m in keys)

    def monomials(self) -> list[Monomial]:
        return sort_monomials(self._terms)

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __repr__(self):
        if not self._terms:
            return "0"
        return " + ".join(f"{c:g}*{m!r}" for m, c in sorted(
            self._terms.items(), key=lambda mc: mc[0].grlex_key(sorted(self.variables, key=var_sort_key))))


def _lift(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    if isinstance(p, (int, float)):
        return Polynomial.constant(p)
    raise TypeError(f"cannot interpret {type(p)} as Polynomial")


class RationalFn:
    """num/den with a denominator that stays positive on the joint-limit box.

    No GCD cancellation is performed; denominators grow as products of the
    inputs' denominators.
    """

    __slots__ = ("num", "den")

    def __init__(self, num: Polynomial, den: Polynomial | None = None):
        self.num = _lift(num)
        self.den = _lift(den) if den is not None else Polynomial.constant(1.0)
        if self.den.is_zero():
            raise ZeroDivisionError("zero denominator")

    @classmethod
    def from_polynomial(cls, p: Polynomial) -> "RationalFn":
        return cls(p)

    def __add__(self, other: "RationalFn") -> "RationalFn":
        other = self._lift(other)
        return RationalFn(self.num * other.den + other.num * self.den,
                          self.den * other.den)

    def __neg__(self):
        return RationalFn(-self.num, self.den)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __mul__(self, other) -> "RationalFn":
        if isinstance(other, (int, float)):
            return RationalFn(self.num.scale(other), self.den)
        other = self._lift(other)
        return RationalFn(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def evaluate(self, point: Mapping[str, float]) -> float:
        return self.num.evaluate(point) / self.den.evaluate(point)

    @staticmethod
    def _lift(x) -> "RationalFn":
        if isinstance(x, RationalFn):
            return x
        return RationalFn(_lift(x))

    def __repr__(self):
        return f"({self.num!r}) / ({self.den!r})"


def coordinate_degree_basis(variables: Iterable[str], max_coord_deg: int,
                            cap: int = 200_000) -> list[Monomial]:
    """All monomials with per-variable degree <= max_coord_deg, graded-lex ordered.

    There are (max_coord_deg+1)^n of them; raises :class:`BasisSizeError` past ``cap``.
    """
    if max_coord_deg < 0:
        raise ValueError("max_coord_deg must be >= 0")
    vars_sorted = sorted(set(variables), key=var_sort_key)
    n = len(vars_sorted)
    size = (max_coord_deg + 1) ** n
    if size > cap:
        raise BasisSizeError(f"basis of size {size} exceeds cap {cap}")
    monos = [Monomial(dict(zip(vars_sorted, exps)))
             for exps in itertools.product(range(max_coord_deg + 1), repeat=n)]
    return sort_monomials(monos)


def total_degree_basis(variables: Iterable[str], max_deg: int,
                       cap: int = 200_000) -> list[Monomial]:
    """All monomials of total degree <= max_deg, graded-lex ordered."""
    vars_sorted = sorted(set(variables), key=var_sort_key)
    monos = []
    for exps in itertools.product(range(max_deg + 1), repeat=len(vars_sorted)):
        if sum(exps) <= max_deg:
            monos.append(Monomial(dict(zip(vars_sorted, exps))))
            if len(monos) > cap:
                raise BasisSizeError(f"basis exceeds cap {cap}")
    return sort_monomials(monos)


def product_basis(eta: Sequence[Monomial], nu: Sequence[Monomial]) -> list[Monomial]:
    """Deduplicated set of pairwise products of two bases, graded-lex ordered."""
    prods = {m1 * m2 for m1 in eta for m2 in nu}
    return sort_monomials(prods)


def newton_basis_check(gamma: Sequence[Monomial], rho: Sequence[Monomial],
                       linear: Sequence[Monomial]) -> bool:
    """True iff every exponent vector of gamma is a sum of one from rho and one
    from linear.

    This is the structured containment New(gamma) within New(rho) + New(linear)
    on exponent vectors directly, which is exact for the downward-closed bases
    used throughout (no convex-hull computation needed).
    """
    sums = {(r * e) for r in rho for e in linear}
    return all(g in sums for g in gamma)
