"""Lazy matrix formulas.

A formula is a small DAG over matrix leaves. Derivations act structurally (entrywise
on leaves, graded Leibniz on products, -X^-1 dX X^-1 on inverses) and a realizer
turns the result into a concrete MatrixExpr only when an identity is checked.
"""
from __future__ import annotations

import logging
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from sympy import Matrix, Rational as SympyRational

try:
    from .graded_core import Bidegree, BrstError, Derivation, Expr, Generator, Rational
    from .graded_core import substitute_with
    from .matrix_forms import EtaMetric, MatrixExpr, ShapeError, eta_transpose
except ImportError:
    from graded_core import Bidegree, BrstError, Derivation, Expr, Generator, Rational
    from graded_core import substitute_with
    from matrix_forms import EtaMetric, MatrixExpr, ShapeError, eta_transpose

logger = logging.getLogger(__name__)


class Formula:
    """Homogeneous matrix-valued formula of fixed shape and bidegree."""

    rows: int
    cols: int
    bidegree: Optional[Bidegree]

    def __init__(self, rows: int, cols: int, bidegree: Optional[Bidegree]):
        self.rows = rows
        self.cols = cols
        self.bidegree = bidegree
        self._derived: Dict[Derivation, "Formula"] = {}
        self._has_inverse: Optional[bool] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    @property
    def parity(self) -> int:
        return self.bidegree.parity if self.bidegree is not None else 0

    @property
    def is_zero(self) -> bool:
        return False

    def derive(self, derivation: Derivation) -> "Formula":
        """Memoized per derivation; concurrent callers all get the first result."""
        cached = self._derived.get(derivation)
        if cached is None:
            cached = self._derive(derivation)
            cached = self._derived.setdefault(derivation, cached)
        return cached

    def _derive(self, derivation: Derivation) -> "Formula":
        raise NotImplementedError

    def children(self) -> Sequence["Formula"]:
        return ()

    def generators(self) -> set:
        found: set = set()
        for child in self.children():
            found |= child.generators()
        return found

    def has_inverse(self) -> bool:
        if self._has_inverse is None:
            self._has_inverse = any(child.has_inverse() for child in self.children())
        return self._has_inverse

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        raise NotImplementedError

    def __add__(self, other: "Formula") -> "Formula":
        return combine([(1, self), (1, other)])

    def __sub__(self, other: "Formula") -> "Formula":
        return combine([(1, self), (-1, other)])

    def __neg__(self) -> "Formula":
        return combine([(-1, self)])

    def scale(self, factor: Rational) -> "Formula":
        return combine([(factor, self)])

    def __matmul__(self, other: "Formula") -> "Formula":
        return multiply(self, other)


class Zero(Formula):
    def __init__(self, rows: int, cols: int):
        super().__init__(rows, cols, None)

    @property
    def is_zero(self) -> bool:
        return True

    def _derive(self, derivation: Derivation) -> Formula:
        return self

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        return MatrixExpr.zeros(self.rows, self.cols)

    def __repr__(self) -> str:
        return f"Zero({self.rows}x{self.cols})"


class Leaf(Formula):
    def __init__(self, matrix: MatrixExpr, label: str = ""):
        degree = matrix.bidegree
        super().__init__(matrix.rows, matrix.cols, degree)
        self.matrix = matrix
        self.label = label

    def _derive(self, derivation: Derivation) -> Formula:
        return leaf(self.matrix.apply(derivation), f"{derivation.name}({self.label})")

    def generators(self) -> set:
        return self.matrix.generators()

    def has_inverse(self) -> bool:
        return False

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        return realizer.leaf(self.matrix)

    def __repr__(self) -> str:
        return f"Leaf({self.label or self.shape})"


def leaf(matrix: MatrixExpr, label: str = "") -> Formula:
    if matrix.is_zero:
        return Zero(matrix.rows, matrix.cols)
    return Leaf(matrix, label)


def identity(n: int) -> Formula:
    return Leaf(MatrixExpr.identity(n), "1")


class Combination(Formula):
    """Rational linear combination of formulas of one shape and bidegree."""

    def __init__(self, terms: Sequence[Tuple[Fraction, Formula]]):
        first = terms[0][1]
        super().__init__(first.rows, first.cols, first.bidegree)
        self.terms = tuple(terms)

    def children(self) -> Sequence[Formula]:
        return [f for _, f in self.terms]

    def _derive(self, derivation: Derivation) -> Formula:
        return combine([(c, f.derive(derivation)) for c, f in self.terms])

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        total = MatrixExpr.zeros(self.rows, self.cols)
        for coeff, f in self.terms:
            part = realizer.realize(f)
            total = total + (part if coeff == 1 else part.scale(coeff))
        return total


def combine(terms: Sequence[Tuple[Rational, Formula]]) -> Formula:
    kept: List[Tuple[Fraction, Formula]] = []
    shape = terms[0][1].shape
    degree: Optional[Bidegree] = None
    for coeff, f in terms:
        if f.shape != shape:
            raise ShapeError(
                f"cannot add {shape[0]}x{shape[1]} and {f.rows}x{f.cols} formulas"
            )
        if f.is_zero or not coeff:
            continue
        if degree is not None and f.bidegree != degree:
            raise BrstError(
                f"cannot add formulas of bidegree {degree} and {f.bidegree}"
            )
        degree = f.bidegree
        kept.append((Fraction(coeff), f))
    if not kept:
        return Zero(*shape)
    return Combination(kept)


class Product(Formula):
    def __init__(self, left: Formula, right: Formula):
        super().__init__(left.rows, right.cols, left.bidegree.shifted(right.bidegree))
        self.left = left
        self.right = right

    def children(self) -> Sequence[Formula]:
        return (self.left, self.right)

    def _derive(self, derivation: Derivation) -> Formula:
        sign = -1 if derivation.odd and self.left.parity else 1
        return combine(
            [
                (1, multiply(self.left.derive(derivation), self.right)),
                (sign, multiply(self.left, self.right.derive(derivation))),
            ]
        )

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        return realizer.realize(self.left) @ realizer.realize(self.right)


def multiply(left: Formula, right: Formula) -> Formula:
    if left.cols != right.rows:
        raise ShapeError(
            f"cannot multiply {left.rows}x{left.cols} by {right.rows}x{right.cols}"
        )
    if left.is_zero or right.is_zero:
        return Zero(left.rows, right.cols)
    return Product(left, right)


def chain(*factors: Formula) -> Formula:
    result = factors[0]
    for factor in factors[1:]:
        result = multiply(result, factor)
    return result


class Inverse(Formula):
    """Matrix inverse of a bidegree (0,0) square formula.

    `known` is the matrix of registered inverse generators used by symbolic
    realization.
    """

    def __init__(self, operand: Formula, known: Optional[MatrixExpr] = None):
        if operand.rows != operand.cols:
            raise ShapeError(f"cannot invert a {operand.rows}x{operand.cols} formula")
        if operand.bidegree != Bidegree(0, 0):
            raise BrstError(
                "only bidegree (0,0) formulas are invertible, "
                f"got {operand.bidegree}"
            )
        super().__init__(operand.rows, operand.cols, operand.bidegree)
        self.operand = operand
        self.known = known

    def children(self) -> Sequence[Formula]:
        return (self.operand,)

    def has_inverse(self) -> bool:
        return True

    def _derive(self, derivation: Derivation) -> Formula:
        return -chain(self, self.operand.derive(derivation), self)

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        return realizer.inverse(self)


class Block(Formula):
    """Grid of formulas glued into one matrix."""

    def __init__(self, grid: Sequence[Sequence[Formula]]):
        heights = [band[0].rows for band in grid]
        widths = [f.cols for f in grid[0]]
        degree: Optional[Bidegree] = None
        for band, height in zip(grid, heights):
            if len(band) != len(widths):
                raise ShapeError("block grid rows have different lengths")
            for f, width in zip(band, widths):
                if f.shape != (height, width):
                    raise ShapeError("block sizes do not line up")
                if f.is_zero:
                    continue
                if degree is not None and f.bidegree != degree:
                    raise BrstError(
                        f"blocks of bidegree {degree} and {f.bidegree} cannot be glued"
                    )
                degree = f.bidegree
        super().__init__(sum(heights), sum(widths), degree)
        self.grid = tuple(tuple(band) for band in grid)

    def children(self) -> Sequence[Formula]:
        return [f for band in self.grid for f in band]

    @property
    def is_zero(self) -> bool:
        return self.bidegree is None

    def _derive(self, derivation: Derivation) -> Formula:
        if self.is_zero:
            return self
        return Block([[f.derive(derivation) for f in band] for band in self.grid])

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        return MatrixExpr.assemble(
            [[realizer.realize(f) for f in band] for band in self.grid]
        )


class EtaTranspose(Formula):
    def __init__(self, operand: Formula, eta: EtaMetric):
        if 1 not in operand.shape:
            raise ShapeError(
                "eta_transpose expects a vector formula, "
                f"got {operand.rows}x{operand.cols}"
            )
        super().__init__(operand.cols, operand.rows, operand.bidegree)
        self.operand = operand
        self.eta = eta

    def children(self) -> Sequence[Formula]:
        return (self.operand,)

    @property
    def is_zero(self) -> bool:
        return self.operand.is_zero

    def _derive(self, derivation: Derivation) -> Formula:
        moved = self.operand.derive(derivation)
        if moved.is_zero:
            return Zero(self.rows, self.cols)
        return EtaTranspose(moved, self.eta)

    def realize_with(self, realizer: "Realizer") -> MatrixExpr:
        return eta_transpose(realizer.realize(self.operand), self.eta)


def commutator(a: Formula, b: Formula) -> Formula:
    """Graded bracket of homogeneous formulas."""
    sign = 1 if a.parity and b.parity else -1
    return combine([(1, multiply(a, b)), (sign, multiply(b, a))])


def lie(f: Formula, d: Derivation, i_xi: Derivation) -> Formula:
    """L_xi = i_xi d - d i_xi."""
    return f.derive(d).derive(i_xi) - f.derive(i_xi).derive(d)


class Realizer:
    """Turns formulas into MatrixExprs, memoized per formula node."""

    def __init__(self):
        self._memo: Dict[int, Tuple[Formula, MatrixExpr]] = {}

    def realize(self, formula: Formula) -> MatrixExpr:
        hit = self._memo.get(id(formula))
        if hit is None:
            hit = (formula, formula.realize_with(self))
            self._memo[id(formula)] = hit
        return hit[1]

    def leaf(self, matrix: MatrixExpr) -> MatrixExpr:
        raise NotImplementedError

    def inverse(self, formula: Inverse) -> MatrixExpr:
        raise NotImplementedError


class SymbolicRealizer(Realizer):
    """Keeps every generator; inverses resolve to registered inverse generators."""

    def leaf(self, matrix: MatrixExpr) -> MatrixExpr:
        return matrix

    def inverse(self, formula: Inverse) -> MatrixExpr:
        if formula.known is None:
            raise BrstError(
                "inverse of a composite formula has no symbolic realization"
            )
        return formula.known


class PointRealizer(Realizer):
    """Evaluates even generators at a point and keeps odd ones symbolic."""

    def __init__(self, lookup: Callable[[Generator], Fraction], context: object = None):
        super().__init__()
        self._lookup = lookup
        self.context = context
        self._values: Dict[Generator, Optional[Expr]] = {}

    def value(self, g: Generator) -> Optional[Expr]:
        if g.parity:
            return None
        if g not in self._values:
            self._values[g] = Expr.const(self._lookup(g))
        return self._values[g]

    def evaluate(self, expr: Expr) -> Expr:
        return substitute_with(expr, self.value)

    def leaf(self, matrix: MatrixExpr) -> MatrixExpr:
        return matrix.map(self.evaluate)

    def inverse(self, formula: Inverse) -> MatrixExpr:
        return exact_inverse(self.realize(formula.operand))


def to_sympy(matrix: MatrixExpr) -> Matrix:
    def value(x: Expr) -> SympyRational:
        c = x.constant_value()
        return SympyRational(c.numerator, c.denominator)

    return Matrix(matrix.rows, matrix.cols, lambda i, j: value(matrix[i, j]))


def from_sympy(matrix: Matrix) -> MatrixExpr:
    return MatrixExpr.from_function(
        matrix.rows,
        matrix.cols,
        lambda i, j: Fraction(int(matrix[i, j].p), int(matrix[i, j].q)),
    )


def exact_inverse(matrix: MatrixExpr) -> MatrixExpr:
    if any(not x.is_constant for row in matrix.entries for x in row):
        raise BrstError("only constant matrices can be inverted at a point")
    square = to_sympy(matrix)
    if square.det() == 0:
        raise BrstError("singular matrix at evaluation point")
    return from_sympy(square.inv())
