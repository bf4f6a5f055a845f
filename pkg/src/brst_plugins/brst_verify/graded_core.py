"""Free super-commutative polynomial algebra over the rationals.

Elements are bigraded by (form degree, ghost degree). Generators carry optional
coordinate jets, and derivations are defined by rules on generators and extended by
the graded Leibniz rule.
"""
from __future__ import annotations

import logging
import os
from enum import IntEnum
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import (
    Callable,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

logger = logging.getLogger(__name__)

Rational = Union[int, Fraction]


class BrstError(ValueError):
    """Base class of every domain error raised by the verifier."""


class TruncationError(BrstError):
    pass


class UndefinedActionError(BrstError):
    pass


class ParityError(BrstError):
    pass


def default_jet_order() -> int:
    """Jet truncation order, overridable through BRST_JET_ORDER."""
    return int(os.getenv("BRST_JET_ORDER", "4"))


class Kind(IntEnum):
    DX = 0
    FIELD = 1
    GHOST = 2
    DIFFEO = 3


class Bidegree(NamedTuple):
    form: int
    ghost: int

    @property
    def total(self) -> int:
        return self.form + self.ghost

    @property
    def parity(self) -> int:
        return (self.form + self.ghost) & 1

    def shifted(self, other: "Bidegree") -> "Bidegree":
        return Bidegree(self.form + other.form, self.ghost + other.ghost)

    def __str__(self) -> str:
        return f"({self.form},{self.ghost})"


class Generator(NamedTuple):
    """One component symbol of the algebra.

    Tuple order (kind, name, indices, jet) is the canonical term order.
    """

    kind: Kind
    name: str
    indices: Tuple[int, ...] = ()
    jet: Tuple[int, ...] = ()
    form: int = 0
    ghost: int = 0

    @property
    def bidegree(self) -> Bidegree:
        return Bidegree(self.form, self.ghost)

    @property
    def parity(self) -> int:
        return (self.form + self.ghost) & 1

    @property
    def base(self) -> "Generator":
        return self._replace(jet=()) if self.jet else self

    def prolong(self, mu: int) -> "Generator":
        return self._replace(jet=tuple(sorted(self.jet + (mu,))))

    def __str__(self) -> str:
        text = self.name
        if self.indices or self.jet:
            inner = ",".join(str(i) for i in self.indices)
            if self.jet:
                inner += ";" + ",".join(str(j) for j in self.jet)
            text += f"[{inner}]"
        return text


def dx(mu: int) -> Generator:
    return Generator(Kind.DX, "dx", (mu,), (), 1, 0)


def field(name: str, *indices: int, form: int = 0) -> Generator:
    return Generator(Kind.FIELD, name, tuple(indices), (), form, 0)


def ghost(name: str, *indices: int, number: int = 1) -> Generator:
    return Generator(Kind.GHOST, name, tuple(indices), (), 0, number)


def xi(mu: int) -> Generator:
    return Generator(Kind.DIFFEO, "xi", (mu,), (), 0, 1)


Monomial = Tuple[Generator, ...]


def monomial_bidegree(mono: Monomial) -> Bidegree:
    return Bidegree(sum(g.form for g in mono), sum(g.ghost for g in mono))


def monomial_parity(mono: Monomial) -> int:
    return sum(g.parity for g in mono) & 1


@lru_cache(maxsize=1 << 18)
def _merge(left: Monomial, right: Monomial) -> Optional[Tuple[int, Monomial]]:
    """Merge two canonical monomials; None when an odd generator repeats."""
    if not left:
        return 1, right
    if not right:
        return 1, left
    merged: List[Generator] = []
    sign = 1
    odd_left = sum(g.parity for g in left)
    i = j = 0
    while i < len(left) and j < len(right):
        x, y = left[i], right[j]
        if x == y and x.parity:
            return None
        if x <= y:
            merged.append(x)
            odd_left -= x.parity
            i += 1
        else:
            if y.parity and odd_left & 1:
                sign = -sign
            merged.append(y)
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return sign, tuple(merged)


def _check_jets(mono: Iterable[Generator], order: int) -> None:
    for g in mono:
        if len(g.jet) > order:
            raise TruncationError(
                f"jet order {len(g.jet)} of generator {g} "
                f"exceeds truncation order {order}"
            )


class Expr:
    """Normal-form element: canonical monomial -> nonzero rational coefficient."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Optional[Mapping[Monomial, Rational]] = None):
        self._terms: Dict[Monomial, Fraction] = {}
        if terms:
            for mono, coeff in terms.items():
                if coeff:
                    self._terms[mono] = Fraction(coeff)
        self._hash: Optional[int] = None

    @classmethod
    def _wrap(cls, terms: Dict[Monomial, Fraction]) -> "Expr":
        expr = cls.__new__(cls)
        expr._terms = terms
        expr._hash = None
        return expr

    @classmethod
    def zero(cls) -> "Expr":
        return cls._wrap({})

    @classmethod
    def one(cls) -> "Expr":
        return cls._wrap({(): Fraction(1)})

    @classmethod
    def const(cls, value: Rational) -> "Expr":
        return cls._wrap({(): Fraction(value)} if value else {})

    @classmethod
    def gen(cls, g: Generator, coeff: Rational = 1) -> "Expr":
        return cls._wrap({(g,): Fraction(coeff)} if coeff else {})

    @classmethod
    def monomial(cls, mono: Monomial, coeff: Rational = 1) -> "Expr":
        """Wrap an already canonical monomial."""
        return cls._wrap({tuple(mono): Fraction(coeff)} if coeff else {})

    @classmethod
    def coerce(cls, value: Union["Expr", Rational]) -> "Expr":
        if isinstance(value, Expr):
            return value
        if isinstance(value, (int, Fraction)):
            return cls.const(value)
        raise TypeError(f"cannot use {type(value).__name__} as an expression")

    # Inspection

    def items(self) -> Iterator[Tuple[Monomial, Fraction]]:
        return iter(self._terms.items())

    def coefficient(self, mono: Monomial) -> Fraction:
        return self._terms.get(tuple(mono), Fraction(0))

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    @property
    def is_constant(self) -> bool:
        return all(mono == () for mono in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant:
            raise BrstError(f"expression {self} is not a rational constant")
        return self._terms.get((), Fraction(0))

    def generators(self) -> set:
        return {g for mono in self._terms for g in mono}

    @property
    def is_homogeneous(self) -> bool:
        return len({monomial_bidegree(m) for m in self._terms}) <= 1

    @property
    def bidegree(self) -> Optional[Bidegree]:
        degrees = {monomial_bidegree(m) for m in self._terms}
        if not degrees:
            return None
        if len(degrees) > 1:
            raise BrstError(f"expression {self} is not homogeneous")
        return degrees.pop()

    # Arithmetic

    def _accumulate(self, other: "Expr", scale: Fraction = Fraction(1)) -> "Expr":
        terms = dict(self._terms)
        for mono, coeff in other._terms.items():
            value = terms.get(mono, 0) + scale * coeff
            if value:
                terms[mono] = value
            else:
                terms.pop(mono, None)
        return Expr._wrap(terms)

    def __add__(self, other: Union["Expr", Rational]) -> "Expr":
        return self._accumulate(Expr.coerce(other))

    __radd__ = __add__

    def __sub__(self, other: Union["Expr", Rational]) -> "Expr":
        return self._accumulate(Expr.coerce(other), Fraction(-1))

    def __rsub__(self, other: Rational) -> "Expr":
        return Expr.coerce(other)._accumulate(self, Fraction(-1))

    def __neg__(self) -> "Expr":
        return Expr._wrap({m: -c for m, c in self._terms.items()})

    def scale(self, factor: Rational) -> "Expr":
        factor = Fraction(factor)
        if not factor:
            return Expr.zero()
        return Expr._wrap({m: c * factor for m, c in self._terms.items()})

    def __mul__(self, other: Union["Expr", Rational]) -> "Expr":
        if not isinstance(other, Expr):
            return self.scale(other)
        return multiply(self, other)

    def __rmul__(self, other: Rational) -> "Expr":
        return self.scale(other)

    def __truediv__(self, other: Rational) -> "Expr":
        return self.scale(Fraction(1) / Fraction(other))

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __str__(self) -> str:
        return render(self)

    def __repr__(self) -> str:
        return f"Expr({render(self)})"


def render(expr: Expr) -> str:
    """Canonical text rendering used by every report."""
    if not expr:
        return "0"
    pieces = []
    for mono, coeff in sorted(expr.items()):
        sign = "-" if coeff < 0 else "+"
        magnitude = abs(coeff)
        factors = [str(g) for g in mono]
        if magnitude != 1 or not factors:
            factors.insert(0, str(magnitude))
        pieces.append((sign, "*".join(factors)))
    text = ("-" if pieces[0][0] == "-" else "") + pieces[0][1]
    for sign, body in pieces[1:]:
        text += f" {sign} {body}"
    return text


def normalize(
    raw: Iterable[Tuple[Rational, Sequence[Generator]]],
    jet_order: Optional[int] = None,
) -> Expr:
    """Bring an unordered list of (coefficient, generator sequence) to normal form."""
    order = default_jet_order() if jet_order is None else jet_order
    terms: Dict[Monomial, Fraction] = {}
    for coeff, sequence in raw:
        sequence = tuple(sequence)
        _check_jets(sequence, order)
        sign, mono = 1, ()
        for g in sequence:
            merged = _merge(mono, (g,))
            if merged is None:
                break
            step, mono = merged
            sign *= step
        else:
            value = terms.get(mono, 0) + sign * Fraction(coeff)
            if value:
                terms[mono] = value
            else:
                terms.pop(mono, None)
    return Expr._wrap(terms)


def multiply(a: Expr, b: Expr) -> Expr:
    terms: Dict[Monomial, Fraction] = {}
    for m1, c1 in a._terms.items():
        for m2, c2 in b._terms.items():
            merged = _merge(m1, m2)
            if merged is None:
                continue
            sign, mono = merged
            value = terms.get(mono, 0) + (c1 * c2 if sign > 0 else -c1 * c2)
            if value:
                terms[mono] = value
            else:
                terms.pop(mono, None)
    return Expr._wrap(terms)


def product(*factors: Union[Expr, Generator, Rational]) -> Expr:
    """Ordered product of expressions, generators and rationals."""
    result = Expr.one()
    for factor in factors:
        if isinstance(factor, Generator):
            factor = Expr.gen(factor)
        result = result * factor
    return result


def expr_sum(parts: Iterable[Expr]) -> Expr:
    terms: Dict[Monomial, Fraction] = {}
    for part in parts:
        for mono, coeff in part._terms.items():
            value = terms.get(mono, 0) + coeff
            if value:
                terms[mono] = value
            else:
                terms.pop(mono, None)
    return Expr._wrap(terms)


def bidegree_split(expr: Expr) -> Dict[Bidegree, Expr]:
    parts: Dict[Bidegree, Dict[Monomial, Fraction]] = {}
    for mono, coeff in expr.items():
        parts.setdefault(monomial_bidegree(mono), {})[mono] = coeff
    return {degree: Expr._wrap(terms) for degree, terms in sorted(parts.items())}


def substitute_with(
    expr: Expr, lookup: Callable[[Generator], Optional[Union[Expr, Rational]]]
) -> Expr:
    """Homomorphic substitution; generators the lookup leaves as None are kept."""
    images: Dict[Generator, Expr] = {}

    def image(g: Generator) -> Expr:
        if g not in images:
            value = lookup(g)
            if value is None:
                images[g] = Expr.gen(g)
            else:
                value = Expr.coerce(value)
                if value and (
                    not value.is_homogeneous or value.bidegree.parity != g.parity
                ):
                    raise ParityError(
                        f"substitution for {g} must have parity {g.parity}, got {value}"
                    )
                images[g] = value
        return images[g]

    parts = []
    for mono, coeff in expr.items():
        term = Expr.const(coeff)
        for g in mono:
            term = term * image(g)
            if not term:
                break
        parts.append(term)
    return expr_sum(parts)


def substitute(
    expr: Expr, assignment: Mapping[Generator, Union[Expr, Rational]]
) -> Expr:
    return substitute_with(expr, assignment.get)


class InversePair(NamedTuple):
    """Square matrix X_{ij} = base[i,j]; its inverse entries are separate generators."""

    base: str
    inverse: str
    size: int

    def base_entry(self, i: int, j: int) -> Generator:
        return field(self.base, i, j)

    def inverse_entry(self, i: int, j: int) -> Generator:
        return field(self.inverse, i, j)


InverseRegistry = Mapping[str, InversePair]


def _inverse_rule(
    pair: InversePair, g: Generator, act: Callable[[Generator], Expr]
) -> Expr:
    """delta(X^-1)_ij = -sum_kl (X^-1)_ik delta(X_kl) (X^-1)_lj for any derivation."""
    i, j = g.indices
    parts = []
    for k in range(pair.size):
        left = Expr.gen(pair.inverse_entry(i, k))
        for l in range(pair.size):
            moved = act(pair.base_entry(k, l))
            if moved:
                parts.append(-(left * moved * Expr.gen(pair.inverse_entry(l, j))))
    return expr_sum(parts)


class Derivation:
    """Graded derivation given by its action on generators.

    Leibniz sign is (-1)^(parity * |left factor|). Generator images are cached
    on the instance, so the cache is bounded by the generators of one scene.
    """

    def __init__(
        self,
        name: str,
        shift: Tuple[int, int],
        odd: bool,
        rule: Callable[[Generator], Optional[Expr]],
    ):
        self.name = name
        self.shift = Bidegree(*shift)
        self.odd = odd
        self._rule = rule
        self._cache: Dict[Generator, Expr] = {}

    def on_generator(self, g: Generator) -> Expr:
        cached = self._cache.get(g)
        if cached is None:
            cached = self._rule(g)
            if cached is None:
                raise UndefinedActionError(
                    f"derivation {self.name} has no rule for generator {g}"
                )
            cached = self._cache.setdefault(g, cached)
        return cached

    def __call__(self, expr: Expr) -> Expr:
        parts = []
        for mono, coeff in expr.items():
            parity = 0
            for i, g in enumerate(mono):
                moved = self.on_generator(g)
                if moved:
                    sign = -1 if self.odd and parity else 1
                    term = Expr.monomial(mono[:i], sign * coeff) * moved
                    if term and i + 1 < len(mono):
                        term = term * Expr.monomial(mono[i + 1:])
                    parts.append(term)
                parity ^= g.parity
        return expr_sum(parts)

    def __repr__(self) -> str:
        return f"Derivation({self.name})"


def total_derivative(
    mu: int,
    jet_order: Optional[int] = None,
    inverses: Optional[InverseRegistry] = None,
) -> Derivation:
    """Even derivation D_mu prolonging jets; dx and constants are inert."""
    order = default_jet_order() if jet_order is None else jet_order
    inverses = inverses or {}
    derivation: Derivation

    def rule(g: Generator) -> Expr:
        if g.kind == Kind.DX:
            return Expr.zero()
        if g.name in inverses:
            return _inverse_rule(inverses[g.name], g, derivation.on_generator)
        raised = g.prolong(mu)
        if len(raised.jet) > order:
            raise TruncationError(
                f"jet order {len(raised.jet)} of generator {raised} "
                f"exceeds truncation order {order}"
            )
        return Expr.gen(raised)

    derivation = Derivation(f"D{mu}", (0, 0), False, rule)
    return derivation


class JetCalculus:
    """Total derivatives, d and interior products over one coordinate patch."""

    def __init__(
        self,
        dim: int,
        jet_order: Optional[int] = None,
        inverses: Optional[InverseRegistry] = None,
    ):
        self.dim = dim
        self.jet_order = default_jet_order() if jet_order is None else jet_order
        self.inverses: Dict[str, InversePair] = dict(inverses or {})
        self.partials = [
            total_derivative(mu, self.jet_order, self.inverses) for mu in range(dim)
        ]
        self.d = Derivation("d", (1, 0), True, self._d_rule)
        self.i_xi = interior_product(dim)

    def _d_rule(self, g: Generator) -> Expr:
        if g.kind == Kind.DX:
            return Expr.zero()
        return expr_sum(
            Expr.gen(dx(mu)) * self.partials[mu].on_generator(g)
            for mu in range(self.dim)
        )

    def partial(self, expr: Expr, jet: Sequence[int]) -> Expr:
        for mu in jet:
            expr = self.partials[mu](expr)
        return expr

    def lie(self, expr: Expr) -> Expr:
        """L_xi = i_xi d - d i_xi."""
        return self.i_xi(self.d(expr)) - self.d(self.i_xi(expr))

    def exp_interior(self, expr: Expr) -> Expr:
        return exp_interior(expr, self.i_xi)

    def xi_bracket(self) -> List[Expr]:
        """Components of [xi, xi]^rho = 2 xi^mu d_mu xi^rho."""
        return [
            expr_sum(
                Expr.gen(xi(mu)) * Expr.gen(xi(rho).prolong(mu)) * 2
                for mu in range(self.dim)
            )
            for rho in range(self.dim)
        ]

    def rule_derivation(
        self,
        name: str,
        shift: Tuple[int, int],
        odd: bool,
        base_rules: Mapping[Generator, Expr],
    ) -> Derivation:
        """Derivation fixed on jet-free generators and prolonged by D_J.

        dx is sent to zero and inverse generators follow the closed-form rule.
        """
        derivation: Derivation

        def rule(g: Generator) -> Optional[Expr]:
            if g.kind == Kind.DX:
                return Expr.zero()
            if g.name in self.inverses:
                return _inverse_rule(self.inverses[g.name], g, derivation.on_generator)
            base_image = base_rules.get(g.base)
            if base_image is None:
                return None
            return self.partial(base_image, g.jet)

        derivation = Derivation(name, shift, odd, rule)
        return derivation


def interior_product(
    dim: int, vector: Optional[Sequence[Expr]] = None, ghost_number: int = 1
) -> Derivation:
    """i_v sends dx^mu to v^mu and every other generator to zero."""
    if vector is None:
        vector = [Expr.gen(xi(mu)) for mu in range(dim)]
        name = "i_xi"
    else:
        name = "i_v"
    images = list(vector)

    def rule(g: Generator) -> Expr:
        if g.kind == Kind.DX:
            return images[g.indices[0]]
        return Expr.zero()

    return Derivation(name, (-1, ghost_number), bool((ghost_number - 1) & 1), rule)


def exp_interior(expr: Expr, i_xi: Derivation) -> Expr:
    """Sum over k of i_xi^k(expr) / k!; finite since i_xi lowers form degree."""
    total = expr
    term = expr
    k = 0
    while term:
        k += 1
        term = i_xi(term)
        total = total + term.scale(Fraction(1, factorial(k)))
    return total


def split_differentials(mono: Monomial) -> Tuple[Tuple[int, ...], Monomial]:
    """dx generators sort first, so a monomial is (dx part, remainder)."""
    k = 0
    while k < len(mono) and mono[k].kind == Kind.DX:
        k += 1
    return tuple(g.indices[0] for g in mono[:k]), mono[k:]


def right_components(expr: Expr, degree: int) -> Dict[Tuple[int, ...], Expr]:
    """Coefficients C_I with expr = sum_I dx^I C_I (I increasing)."""
    parts: Dict[Tuple[int, ...], Dict[Monomial, Fraction]] = {}
    for mono, coeff in expr.items():
        indices, rest = split_differentials(mono)
        if len(indices) != degree:
            raise BrstError(f"expression {expr} is not a {degree}-form")
        parts.setdefault(indices, {})[rest] = coeff
    return {key: Expr._wrap(terms) for key, terms in sorted(parts.items())}


def left_components(expr: Expr, degree: int) -> Dict[Tuple[int, ...], Expr]:
    """Coefficients C_I with expr = sum_I C_I dx^I (I increasing)."""
    parts: Dict[Tuple[int, ...], Dict[Monomial, Fraction]] = {}
    for mono, coeff in expr.items():
        indices, rest = split_differentials(mono)
        if len(indices) != degree:
            raise BrstError(f"expression {expr} is not a {degree}-form")
        if degree & 1 and monomial_parity(rest):
            coeff = -coeff
        parts.setdefault(indices, {})[rest] = coeff
    return {key: Expr._wrap(terms) for key, terms in sorted(parts.items())}


def antisymmetric_component(
    components: Mapping[Tuple[int, int], Expr], mu: int, sigma: int
) -> Expr:
    """C_{mu sigma} of a 2-form from its increasing-index components."""
    if mu == sigma:
        return Expr.zero()
    if mu < sigma:
        return components.get((mu, sigma), Expr.zero())
    return -components.get((sigma, mu), Expr.zero())


def one_form(coefficients: Sequence[Expr]) -> Expr:
    """sum_mu C_mu dx^mu from left coefficients."""
    return expr_sum(
        Expr.coerce(c) * Expr.gen(dx(mu)) for mu, c in enumerate(coefficients)
    )
