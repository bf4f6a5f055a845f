"""Matrices over graded expressions and the Lie algebra templates they live in."""
from __future__ import annotations

import logging
import random
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

try:
    from .graded_core import (
        Bidegree,
        BrstError,
        Derivation,
        Expr,
        Rational,
        expr_sum,
        monomial_parity,
    )
except ImportError:
    from graded_core import (
        Bidegree,
        BrstError,
        Derivation,
        Expr,
        Rational,
        expr_sum,
        monomial_parity,
    )

logger = logging.getLogger(__name__)

Entry = Union[Expr, Rational]


class ShapeError(BrstError):
    pass


class TemplateError(BrstError):
    pass


def split_parity(expr: Expr) -> Dict[int, Expr]:
    parts: Dict[int, Dict] = {}
    for mono, coeff in expr.items():
        parts.setdefault(monomial_parity(mono), {})[mono] = coeff
    return {parity: Expr._wrap(terms) for parity, terms in sorted(parts.items())}


class MatrixExpr:
    """Dense immutable matrix of Exprs."""

    __slots__ = ("rows", "cols", "entries", "template_tag")

    def __init__(
        self, entries: Sequence[Sequence[Entry]], template_tag: Optional[str] = None
    ):
        grid = tuple(tuple(Expr.coerce(x) for x in row) for row in entries)
        if not grid or not grid[0]:
            raise ShapeError("a matrix needs at least one row and one column")
        if any(len(row) != len(grid[0]) for row in grid):
            raise ShapeError("ragged matrix rows")
        self.rows = len(grid)
        self.cols = len(grid[0])
        self.entries = grid
        self.template_tag = template_tag

    @classmethod
    def from_function(
        cls,
        rows: int,
        cols: int,
        fn: Callable[[int, int], Entry],
        tag: Optional[str] = None,
    ) -> "MatrixExpr":
        return cls([[fn(i, j) for j in range(cols)] for i in range(rows)], tag)

    @classmethod
    def zeros(cls, rows: int, cols: Optional[int] = None) -> "MatrixExpr":
        return cls.from_function(rows, rows if cols is None else cols, lambda i, j: 0)

    @classmethod
    def identity(cls, n: int) -> "MatrixExpr":
        return cls.from_function(n, n, lambda i, j: 1 if i == j else 0)

    @classmethod
    def diagonal(cls, values: Sequence[Entry]) -> "MatrixExpr":
        values = list(values)
        return cls.from_function(
            len(values), len(values), lambda i, j: values[i] if i == j else 0
        )

    @classmethod
    def column(cls, values: Sequence[Entry]) -> "MatrixExpr":
        return cls([[v] for v in values])

    @classmethod
    def row(cls, values: Sequence[Entry]) -> "MatrixExpr":
        return cls([list(values)])

    @classmethod
    def assemble(cls, grid: Sequence[Sequence["MatrixExpr"]]) -> "MatrixExpr":
        """Glue a grid of blocks; heights agree along rows, widths along columns."""
        rows: List[List[Expr]] = []
        for band in grid:
            height = band[0].rows
            if any(block.rows != height for block in band):
                raise ShapeError("blocks in one band must share their height")
            for i in range(height):
                rows.append([x for block in band for x in block.entries[i]])
        return cls(rows)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def __getitem__(self, index: Tuple[int, int]) -> Expr:
        i, j = index
        return self.entries[i][j]

    def submatrix(self, rows: Iterable[int], cols: Iterable[int]) -> "MatrixExpr":
        cols = list(cols)
        return MatrixExpr([[self.entries[i][j] for j in cols] for i in rows])

    def map(self, fn: Callable[[Expr], Expr]) -> "MatrixExpr":
        return MatrixExpr(
            [[fn(x) for x in row] for row in self.entries], self.template_tag
        )

    def apply(self, derivation: Derivation) -> "MatrixExpr":
        return self.map(derivation)

    def transpose(self) -> "MatrixExpr":
        return MatrixExpr.from_function(
            self.cols, self.rows, lambda i, j: self.entries[j][i]
        )

    def _zip(
        self, other: "MatrixExpr", op: Callable[[Expr, Expr], Expr]
    ) -> "MatrixExpr":
        if self.shape != other.shape:
            raise ShapeError(
                f"shape mismatch {self.rows}x{self.cols} vs {other.rows}x{other.cols}"
            )
        return MatrixExpr(
            [
                [op(x, y) for x, y in zip(r1, r2)]
                for r1, r2 in zip(self.entries, other.entries)
            ]
        )

    def __add__(self, other: "MatrixExpr") -> "MatrixExpr":
        return self._zip(other, lambda x, y: x + y)

    def __sub__(self, other: "MatrixExpr") -> "MatrixExpr":
        return self._zip(other, lambda x, y: x - y)

    def __neg__(self) -> "MatrixExpr":
        return self.map(lambda x: -x)

    def scale(self, factor: Rational) -> "MatrixExpr":
        return self.map(lambda x: x.scale(factor))

    def left_mul(self, expr: Expr) -> "MatrixExpr":
        return self.map(lambda x: expr * x)

    def right_mul(self, expr: Expr) -> "MatrixExpr":
        return self.map(lambda x: x * expr)

    def __matmul__(self, other: "MatrixExpr") -> "MatrixExpr":
        return mat_product_graded(self, other)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MatrixExpr):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    @property
    def is_zero(self) -> bool:
        return not any(x for row in self.entries for x in row)

    def term_count(self) -> int:
        return sum(len(x) for row in self.entries for x in row)

    def generators(self) -> set:
        found: set = set()
        for row in self.entries:
            for x in row:
                found |= x.generators()
        return found

    @property
    def bidegree(self) -> Optional[Bidegree]:
        degrees = {x.bidegree for row in self.entries for x in row if x}
        if len(degrees) > 1:
            raise BrstError("matrix entries have different bidegrees")
        return degrees.pop() if degrees else None

    def parity_parts(self) -> Dict[int, "MatrixExpr"]:
        parts: Dict[int, List[List[Expr]]] = {}
        for i, row in enumerate(self.entries):
            for j, x in enumerate(row):
                for parity, piece in split_parity(x).items():
                    grid = parts.setdefault(
                        parity, [[Expr.zero()] * self.cols for _ in range(self.rows)]
                    )
                    grid[i][j] = piece
        return {parity: MatrixExpr(grid) for parity, grid in sorted(parts.items())}

    def __str__(self) -> str:
        return pretty_block(self)

    def __repr__(self) -> str:
        return f"MatrixExpr({self.rows}x{self.cols})"


def mat_product_graded(a: MatrixExpr, b: MatrixExpr) -> MatrixExpr:
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return MatrixExpr.from_function(
        a.rows,
        b.cols,
        lambda i, j: expr_sum(a.entries[i][k] * b.entries[k][j] for k in range(a.cols)),
    )


def graded_commutator(a: MatrixExpr, b: MatrixExpr) -> MatrixExpr:
    """[a, b] = ab - (-1)^(|a||b|) ba, split by parity for inhomogeneous input."""
    if a.rows != a.cols or a.shape != b.shape:
        raise ShapeError(
            f"commutator needs equal square matrices, got {a.rows}x{a.cols} "
            f"and {b.rows}x{b.cols}"
        )
    result = MatrixExpr.zeros(a.rows)
    for pa, x in a.parity_parts().items():
        for pb, y in b.parity_parts().items():
            swapped = y @ x
            result = result + (x @ y) + (swapped if pa and pb else -swapped)
    return result


def pretty_block(matrix: MatrixExpr) -> str:
    """Column-aligned rendering used in Markdown reports."""
    cells = [[str(x) for x in row] for row in matrix.entries]
    widths = [
        max(len(cells[i][j]) for i in range(matrix.rows)) for j in range(matrix.cols)
    ]
    lines = []
    for row in cells:
        body = "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
        lines.append(f"[ {body} ]")
    return "\n".join(lines)


class EtaMetric:
    """Constant diagonal metric eta, Minkowski diag(-1, 1, ..., 1) by default."""

    def __init__(self, signs: Sequence[Rational]):
        self.signs = tuple(Fraction(s) for s in signs)
        if not self.signs or not all(self.signs):
            raise ShapeError("eta must be a nonempty invertible diagonal")

    @classmethod
    def minkowski(cls, m: int) -> "EtaMetric":
        return cls([-1] + [1] * (m - 1))

    @classmethod
    def euclidean(cls, m: int) -> "EtaMetric":
        return cls([1] * m)

    @property
    def dim(self) -> int:
        return len(self.signs)

    def entry(self, a: int) -> Fraction:
        return self.signs[a]

    def inverse_entry(self, a: int) -> Fraction:
        return 1 / self.signs[a]

    def matrix(self) -> MatrixExpr:
        return MatrixExpr.diagonal(self.signs)

    def inverse_matrix(self) -> MatrixExpr:
        return MatrixExpr.diagonal([1 / s for s in self.signs])

    def describe(self) -> str:
        return "diag(" + ",".join(str(s) for s in self.signs) + ")"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EtaMetric) and self.signs == other.signs

    def __hash__(self) -> int:
        return hash(self.signs)


def eta_transpose(vector: MatrixExpr, eta: EtaMetric) -> MatrixExpr:
    """Row r -> (r eta^-1)^T, column t -> (eta t)^T."""
    m = eta.dim
    if vector.shape == (1, m):
        return MatrixExpr.column(
            [vector.entries[0][a].scale(eta.inverse_entry(a)) for a in range(m)]
        )
    if vector.shape == (m, 1):
        return MatrixExpr.row(
            [vector.entries[a][0].scale(eta.entry(a)) for a in range(m)]
        )
    raise ShapeError(
        f"eta_transpose expects a row or column vector of length {m}, "
        f"got {vector.rows}x{vector.cols}"
    )


Position = Tuple[int, int]


class LieTemplate:
    """Matrix realization of a Lie algebra: membership conditions and sectors."""

    NAMES = ("poincare", "mobius", "lorentz", "co")

    def __init__(
        self,
        name: str,
        m: int,
        size: int,
        eta: EtaMetric,
        basis: Sequence[MatrixExpr],
        conditions: Callable[[MatrixExpr], List[Expr]],
        sectors: Dict[str, Tuple[Position, ...]],
        grading: Dict[str, int],
        aliases: Iterable[str] = (),
    ):
        self.name = name
        self.m = m
        self.size = size
        self.eta = eta
        self.basis = tuple(basis)
        self._conditions = conditions
        self.sectors = sectors
        self.grading = grading
        self.aliases = frozenset(aliases)

    @property
    def tag(self) -> str:
        return f"{self.name}({self.m})"

    @property
    def partition(self) -> Tuple[str, ...]:
        """Sector names without aliases; their projections sum back to M."""
        return tuple(name for name in self.sectors if name not in self.aliases)

    def conditions(self, matrix: MatrixExpr) -> List[Expr]:
        """Every membership condition, zero or not, in a fixed order."""
        if matrix.shape != (self.size, self.size):
            raise ShapeError(
                f"{self.tag} expects {self.size}x{self.size}, "
                f"got {matrix.rows}x{matrix.cols}"
            )
        return list(self._conditions(matrix))

    def violations(self, matrix: MatrixExpr) -> List[Expr]:
        return [x for x in self.conditions(matrix) if x]

    def contains(self, matrix: MatrixExpr) -> bool:
        return not self.violations(matrix)

    def random_member(self, rng: random.Random, bound: int = 3) -> MatrixExpr:
        member = MatrixExpr.zeros(self.size)
        for element in self.basis:
            coeff = Fraction(rng.randint(-bound, bound), rng.randint(1, bound))
            member = member + element.scale(coeff)
        return MatrixExpr(member.entries, self.tag)

    def __repr__(self) -> str:
        return f"LieTemplate({self.tag})"


def _unit(size: int, cells: Dict[Position, Rational]) -> MatrixExpr:
    return MatrixExpr.from_function(size, size, lambda i, j: cells.get((i, j), 0))


def _lorentz_basis(eta: EtaMetric, size: int, offset: int) -> List[MatrixExpr]:
    basis = []
    for a in range(eta.dim):
        for b in range(a + 1, eta.dim):
            basis.append(
                _unit(
                    size,
                    {
                        (offset + a, offset + b): 1,
                        (offset + b, offset + a): -eta.entry(a) / eta.entry(b),
                    },
                )
            )
    return basis


def _lorentz_conditions(eta: EtaMetric, x: MatrixExpr, offset: int) -> List[Expr]:
    m = eta.dim
    return [
        x[offset + a, offset + b].scale(eta.entry(a))
        + x[offset + b, offset + a].scale(eta.entry(b))
        for a in range(m)
        for b in range(a, m)
    ]


def _block_positions(rows: Iterable[int], cols: Iterable[int]) -> Tuple[Position, ...]:
    cols = list(cols)
    return tuple((i, j) for i in rows for j in cols)


def build_lie_template(
    name: str, m: int, eta: Optional[EtaMetric] = None
) -> LieTemplate:
    if name not in LieTemplate.NAMES:
        raise TemplateError(f"unknown template {name!r}")
    minimum = 3 if name == "mobius" else 2
    if m < minimum:
        raise TemplateError(f"unsupported dimension m={m} for template {name}")
    eta = eta or EtaMetric.minkowski(m)
    if eta.dim != m:
        raise TemplateError(f"eta has dimension {eta.dim}, template needs {m}")

    if name == "lorentz":
        return LieTemplate(
            name, m, m, eta,
            _lorentz_basis(eta, m, 0),
            lambda x: _lorentz_conditions(eta, x, 0),
            {"g0": _block_positions(range(m), range(m))},
            {"g0": 0},
        )

    if name == "co":
        def co_conditions(x: MatrixExpr) -> List[Expr]:
            off = [
                x[a, b].scale(eta.entry(a)) + x[b, a].scale(eta.entry(b))
                for a in range(m)
                for b in range(a + 1, m)
            ]
            return off + [x[a, a] - x[0, 0] for a in range(1, m)]

        return LieTemplate(
            name, m, m, eta,
            _lorentz_basis(eta, m, 0) + [MatrixExpr.identity(m)],
            co_conditions,
            {"g0": _block_positions(range(m), range(m))},
            {"g0": 0},
        )

    if name == "poincare":
        n = m + 1

        def poincare_conditions(x: MatrixExpr) -> List[Expr]:
            return _lorentz_conditions(eta, x, 0) + [x[m, j] for j in range(n)]

        basis = _lorentz_basis(eta, n, 0) + [_unit(n, {(a, m): 1}) for a in range(m)]
        return LieTemplate(
            name, m, n, eta, basis, poincare_conditions,
            {
                "lorentz": _block_positions(range(m), range(m)),
                "translation": _block_positions(range(m), [m]),
                "zero": _block_positions([m], range(n)),
            },
            {"lorentz": 0, "translation": -1, "zero": 0},
        )

    n = m + 2
    last = n - 1
    jay = {(0, last): Fraction(-1), (last, 0): Fraction(-1)}
    jay.update({(1 + a, 1 + a): eta.entry(a) for a in range(m)})
    jay_matrix = _unit(n, jay)

    def mobius_conditions(x: MatrixExpr) -> List[Expr]:
        y = jay_matrix @ x
        return [y[i, j] + y[j, i] for i in range(n) for j in range(i, n)]

    basis = [_unit(n, {(0, 0): 1, (last, last): -1})]
    basis += [
        _unit(n, {(0, 1 + b): 1, (1 + b, last): eta.inverse_entry(b)})
        for b in range(m)
    ]
    basis += [_unit(n, {(1 + b, 0): 1, (last, 1 + b): eta.entry(b)}) for b in range(m)]
    basis += _lorentz_basis(eta, n, 1)
    middle = range(1, 1 + m)
    sectors = {
        "g-1": tuple((1 + a, 0) for a in range(m))
        + tuple((last, 1 + b) for b in range(m)),
        "g0.scale": ((0, 0), (last, last)),
        "g0.lorentz": _block_positions(middle, middle),
        "g1": tuple((0, 1 + b) for b in range(m))
        + tuple((1 + a, last) for a in range(m)),
        "corner": ((0, last), (last, 0)),
    }
    sectors["g0"] = sectors["g0.scale"] + sectors["g0.lorentz"]
    sectors["trace"] = sectors["g0.scale"]
    grading = {"g-1": -1, "g0": 0, "g1": 1, "g0.scale": 0, "g0.lorentz": 0, "trace": 0}
    return LieTemplate(
        name, m, n, eta, basis, mobius_conditions, sectors, grading, ("g0", "trace")
    )


def sector_project(
    matrix: MatrixExpr, template: LieTemplate, sector: str
) -> MatrixExpr:
    """Keep the entries of one sector and zero the rest."""
    if sector not in template.sectors:
        raise TemplateError(f"unknown sector {sector!r} for template {template.tag}")
    if matrix.shape != (template.size, template.size):
        raise ShapeError(
            f"{template.tag} expects {template.size}x{template.size}, "
            f"got {matrix.rows}x{matrix.cols}"
        )
    keep = set(template.sectors[sector])
    return MatrixExpr.from_function(
        matrix.rows, matrix.cols, lambda i, j: matrix[i, j] if (i, j) in keep else 0
    )


def grade_sectors(template: LieTemplate) -> Dict[int, str]:
    """Degree -> sector name for the gradings that partition the algebra."""
    return {
        degree: name
        for name, degree in template.grading.items()
        if name in ("g-1", "g0", "g1")
    }
