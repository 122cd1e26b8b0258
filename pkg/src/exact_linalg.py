# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Exact integer matrix algebra and spectral classification of toral automorphisms."""

import dataclasses
import logging
import typing

import numpy as np
import sympy

from errors import DimensionError, InternalError, InvalidInputError, NotAnAutomorphismError

logger = logging.getLogger(__name__)

_X = sympy.Symbol("x")
_Y = sympy.Symbol("y")


@dataclasses.dataclass(frozen=True)
class IntegerMatrix:
    """Arbitrary-precision integer matrix, stored row-major.

    Attributes:
        rows: number of rows.
        cols: number of columns.
        entries: the rows*cols entries in row-major order.
    """

    rows: int
    cols: int
    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        """Validate the entry count and coerce entries to Python integers.

        Raises:
            DimensionError: if the entry count does not match the shape.
        """
        if self.rows < 0 or self.cols < 0:
            raise DimensionError(f"negative shape {self.rows}x{self.cols}")
        if len(self.entries) != self.rows * self.cols:
            raise DimensionError(
                f"{len(self.entries)} entries for a {self.rows}x{self.cols} matrix"
            )
        object.__setattr__(self, "entries", tuple(int(value) for value in self.entries))

    @classmethod
    def from_rows(cls, rows: typing.Sequence[typing.Sequence[int]]) -> "IntegerMatrix":
        """Build a matrix from a list of rows.

        Args:
            rows: the matrix rows; all rows must have the same length.

        Returns:
            the matrix.

        Raises:
            DimensionError: if the rows are ragged.
        """
        rows = [list(row) for row in rows]
        width = len(rows[0]) if rows else 0
        if any(len(row) != width for row in rows):
            raise DimensionError("ragged rows")
        return cls(len(rows), width, tuple(value for row in rows for value in row))

    @classmethod
    def identity(cls, n: int) -> "IntegerMatrix":
        """Return the n×n identity matrix."""
        return cls(n, n, tuple(int(i == j) for i in range(n) for j in range(n)))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "IntegerMatrix":
        """Return the zero matrix of the given shape."""
        return cls(rows, cols, (0,) * (rows * cols))

    @classmethod
    def diagonal(cls, values: typing.Sequence[int]) -> "IntegerMatrix":
        """Return the diagonal matrix with the given diagonal."""
        n = len(values)
        return cls(n, n, tuple(values[i] if i == j else 0 for i in range(n) for j in range(n)))

    @classmethod
    def elementary(cls, n: int, i: int, j: int, value: int = 1) -> "IntegerMatrix":
        """Return the transvection E_ij(value): identity plus value at (i, j), i != j."""
        if i == j:
            raise InvalidInputError("transvection needs distinct indices")
        entries = list(cls.identity(n).entries)
        entries[i * n + j] = value
        return cls(n, n, tuple(entries))

    @classmethod
    def from_sympy(cls, matrix: sympy.Matrix) -> "IntegerMatrix":
        """Convert an integral sympy matrix."""
        return cls(matrix.rows, matrix.cols, tuple(int(value) for value in matrix))

    @property
    def is_square(self) -> bool:
        """Whether the matrix is square."""
        return self.rows == self.cols

    def at(self, i: int, j: int) -> int:
        """Return the entry in row i, column j."""
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> tuple[int, ...]:
        """Return row i."""
        return self.entries[i * self.cols : (i + 1) * self.cols]

    def column(self, j: int) -> tuple[int, ...]:
        """Return column j."""
        return self.entries[j :: self.cols]

    def to_rows(self) -> list[list[int]]:
        """Return the matrix as a list of rows."""
        return [list(self.row(i)) for i in range(self.rows)]

    def to_sympy(self) -> sympy.Matrix:
        """Return an immutable sympy copy."""
        return sympy.ImmutableMatrix(self.rows, self.cols, list(self.entries))

    def to_numpy(self) -> np.ndarray:
        """Return an object-dtype numpy array holding the exact integers."""
        return np.array(self.to_rows(), dtype=object).reshape(self.rows, self.cols)

    def __matmul__(self, other: "IntegerMatrix") -> "IntegerMatrix":
        """Multiply exactly.

        Args:
            other: right factor.

        Returns:
            the product.

        Raises:
            DimensionError: if the inner dimensions disagree.
        """
        if self.cols != other.rows:
            raise DimensionError(
                f"cannot multiply {self.rows}x{self.cols} by {other.rows}x{other.cols}"
            )
        columns = [other.column(j) for j in range(other.cols)]
        return IntegerMatrix(
            self.rows,
            other.cols,
            tuple(
                sum(a * b for a, b in zip(self.row(i), column))
                for i in range(self.rows)
                for column in columns
            ),
        )

    def transpose(self) -> "IntegerMatrix":
        """Return the transpose."""
        return IntegerMatrix(
            self.cols,
            self.rows,
            tuple(self.at(i, j) for j in range(self.cols) for i in range(self.rows)),
        )

    def scale(self, factor: int) -> "IntegerMatrix":
        """Multiply every entry by an integer."""
        return IntegerMatrix(self.rows, self.cols, tuple(factor * v for v in self.entries))

    def mod(self, modulus: int) -> "IntegerMatrix":
        """Reduce every entry into [0, modulus)."""
        return IntegerMatrix(self.rows, self.cols, tuple(v % modulus for v in self.entries))

    def det(self) -> int:
        """Return the exact determinant (fraction-free Bareiss elimination).

        Raises:
            DimensionError: if the matrix is not square.
        """
        _require_square(self, "det")
        if self.rows == 0:
            return 1
        return int(self.to_sympy().det(method="bareiss"))

    def inverse(self) -> "IntegerMatrix":
        """Return the inverse of a unimodular matrix.

        Returns:
            the integer inverse.

        Raises:
            NotAnAutomorphismError: if |det| != 1.
        """
        det = self.det()
        if abs(det) != 1:
            raise NotAnAutomorphismError(f"matrix with determinant {det} is not unimodular")
        return IntegerMatrix.from_sympy(self.to_sympy().adjugate() * det)

    def power(self, exponent: int) -> "IntegerMatrix":
        """Raise a square matrix to an integer power by repeated squaring."""
        _require_square(self, "power")
        base = self if exponent >= 0 else self.inverse()
        exponent = abs(exponent)
        result = IntegerMatrix.identity(self.rows)
        while exponent:
            if exponent & 1:
                result = result @ base
            base = base @ base
            exponent >>= 1
        return result

    def __str__(self) -> str:
        """Render in bracketed row syntax."""
        return "[" + ",".join("[" + ",".join(map(str, row)) + "]" for row in self.to_rows()) + "]"


class IntPolynomial(typing.NamedTuple):
    """Integer polynomial with coefficients in ascending degree.

    Attributes:
        coefficients: coefficients c_0, c_1, ..., c_n with c_n != 0 (empty for zero).
    """

    coefficients: tuple[int, ...]

    @classmethod
    def of(cls, coefficients: typing.Iterable[int]) -> "IntPolynomial":
        """Build a polynomial, trimming zero leading coefficients."""
        values = [int(c) for c in coefficients]
        while values and values[-1] == 0:
            values.pop()
        return cls(tuple(values))

    @classmethod
    def from_poly(cls, poly: sympy.Poly) -> "IntPolynomial":
        """Convert from a univariate sympy polynomial over the integers."""
        return cls.of(reversed([int(c) for c in poly.all_coeffs()]))

    @property
    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return len(self.coefficients) - 1

    def to_poly(self) -> sympy.Poly:
        """Return the sympy polynomial in x over ZZ."""
        return sympy.Poly(list(reversed(self.coefficients)) or [0], _X, domain="ZZ")

    def reversed(self) -> "IntPolynomial":
        """Return x^deg · p(1/x)."""
        return IntPolynomial.of(reversed(self.coefficients))

    def __str__(self) -> str:
        """Render as an expression in x."""
        return str(self.to_poly().as_expr())


class RootOfUnityWitness(typing.NamedTuple):
    """Outcome of the cyclotomic search.

    Attributes:
        found: whether some eigenvalue is a root of unity.
        index: the smallest d with Φ_d dividing the characteristic polynomial.
    """

    found: bool
    index: int | None


class SpectralClass(typing.NamedTuple):
    """Exact spectral classification of an automorphism of Z^r.

    Attributes:
        has_root_of_unity_eigenvalue: some eigenvalue is a root of unity.
        has_unit_modulus_eigenvalue: some eigenvalue lies on the unit circle.
        hyperbolic: no eigenvalue lies on the unit circle.
        witness: human readable witness (cyclotomic index or unit-circle factor).
        cyclotomic_index: smallest d with a primitive d-th root of unity as eigenvalue.
        unit_circle_eigenvalues: number of distinct eigenvalues on the unit circle.
    """

    has_root_of_unity_eigenvalue: bool
    has_unit_modulus_eigenvalue: bool
    hyperbolic: bool
    witness: str | None
    cyclotomic_index: int | None
    unit_circle_eigenvalues: int


def _require_square(matrix: IntegerMatrix, operation: str) -> None:
    if not matrix.is_square:
        raise DimensionError(f"{operation} needs a square matrix, got {matrix.rows}x{matrix.cols}")


def char_poly(matrix: IntegerMatrix) -> IntPolynomial:
    """Compute det(xI - M) exactly.

    Args:
        matrix: a square integer matrix.

    Returns:
        the characteristic polynomial.

    Raises:
        DimensionError: if the matrix is not square.
    """
    _require_square(matrix, "char_poly")
    if matrix.rows == 0:
        return IntPolynomial((1,))
    # berkowitz is division free, so every intermediate stays integral
    return IntPolynomial.from_poly(
        sympy.Poly(matrix.to_sympy().charpoly(_X).as_expr(), _X, domain="ZZ")
    )


def cyclotomic(index: int) -> IntPolynomial:
    """Return the cyclotomic polynomial Φ_index."""
    return IntPolynomial.from_poly(sympy.cyclotomic_poly(index, _X, polys=True))


def resultant(first: IntPolynomial, second: IntPolynomial) -> int:
    """Return the exact resultant of two integer polynomials."""
    return int(
        sympy.resultant(first.to_poly().as_expr(), second.to_poly().as_expr(), _X)
    )


def cyclotomic_search_bound(dimension: int) -> int:
    """Largest index d checked for an r×r matrix.

    phi(d) >= sqrt(d/2) for d > 6, so every d with phi(d) <= r lies below max(6, 2r²).
    """
    return max(6, 2 * dimension * dimension)


def _cyclotomic_witness(chi: IntPolynomial, dimension: int) -> RootOfUnityWitness:
    for index in range(1, cyclotomic_search_bound(dimension) + 1):
        if sympy.totient(index) > dimension:
            continue
        if resultant(chi, cyclotomic(index)) == 0:
            logger.debug("Φ_%d divides %s", index, chi)
            return RootOfUnityWitness(True, index)
    return RootOfUnityWitness(False, None)


def has_root_of_unity_eigenvalue(matrix: IntegerMatrix) -> RootOfUnityWitness:
    """Decide whether some eigenvalue of M is a root of unity.

    Args:
        matrix: a square integer matrix.

    Returns:
        the witness, holding the smallest cyclotomic index d found.

    Raises:
        DimensionError: if the matrix is not square.
    """
    chi = char_poly(matrix)
    return _cyclotomic_witness(chi, matrix.rows)


def _chebyshev_like(degree: int) -> list[sympy.Poly]:
    """Polynomials D_k with D_k(x + 1/x) = x^k + x^-k."""
    polys = [sympy.Poly(2, _Y, domain="ZZ"), sympy.Poly(_Y, _Y, domain="ZZ")]
    while len(polys) <= degree:
        polys.append(polys[1] * polys[-1] - polys[-2])
    return polys


def reciprocal_transform(poly: sympy.Poly) -> sympy.Poly:
    """Rewrite a palindromic polynomial g of degree 2m as h with g(x) = x^m h(x + 1/x).

    Args:
        poly: palindromic polynomial in x of even degree.

    Returns:
        the polynomial h in y.

    Raises:
        InternalError: if the input is not palindromic of even degree.
    """
    coefficients = [int(c) for c in reversed(poly.all_coeffs())]
    if len(coefficients) % 2 == 0 or coefficients != coefficients[::-1]:
        raise InternalError(f"{poly.as_expr()} is not palindromic of even degree")
    half = len(coefficients) // 2
    basis = _chebyshev_like(half)
    result = sympy.Poly(coefficients[half], _Y, domain="ZZ")
    for k in range(1, half + 1):
        result += basis[k] * coefficients[half + k]
    return result


def count_real_roots(poly: sympy.Poly, low: int, high: int) -> int:
    """Count distinct real roots in (low, high] with a Sturm sequence.

    Args:
        poly: univariate polynomial with rational coefficients.
        low: left end point.
        high: right end point.

    Returns:
        the number of distinct real roots in (low, high].
    """
    squarefree = poly.sqf_part()
    if squarefree.degree() <= 0:
        return 0
    sequence = sympy.sturm(squarefree)

    def sign_changes(point: int) -> int:
        values = [value for value in (p.eval(point) for p in sequence) if value != 0]
        return sum(1 for a, b in zip(values, values[1:]) if (a < 0) != (b < 0))

    return sign_changes(low) - sign_changes(high)


def spectral_classify(matrix: IntegerMatrix) -> SpectralClass:
    """Classify an automorphism of Z^r by the position of its eigenvalues.

    Unit-modulus eigenvalues come in pairs λ, 1/λ, so they are roots of
    g = gcd(χ, reversed χ). After removing the factors x ∓ 1, g is palindromic and
    its unit-circle roots correspond to real roots of h(y) in (-2, 2), y = x + 1/x.

    Args:
        matrix: a square integer matrix with |det| = 1.

    Returns:
        the spectral class.

    Raises:
        DimensionError: if the matrix is not square.
        NotAnAutomorphismError: if |det| != 1.
    """
    _require_square(matrix, "spectral_classify")
    det = matrix.det()
    if abs(det) != 1:
        raise NotAnAutomorphismError(f"determinant {det} is not ±1")
    chi = char_poly(matrix)
    shared = chi.to_poly().gcd(chi.reversed().to_poly())
    linear_factors = {}
    for sign in (1, -1):
        factor = sympy.Poly(_X - sign, _X, domain="ZZ")
        multiplicity = 0
        while shared.degree() > 0 and shared.rem(factor).is_zero:
            shared = shared.exquo(factor)
            multiplicity += 1
        linear_factors[sign] = multiplicity
    transformed = reciprocal_transform(shared)
    circle_pairs = count_real_roots(transformed, -2, 2)
    unit_count = sum(1 for m in linear_factors.values() if m) + 2 * circle_pairs
    roots_of_unity = _cyclotomic_witness(chi, matrix.rows)
    if roots_of_unity.found:
        witness = f"cyclotomic index d={roots_of_unity.index}"
    elif circle_pairs:
        witness = f"unit-circle factor {transformed.as_expr()} (y = x + 1/x)"
    else:
        witness = None
    if roots_of_unity.found and not unit_count:
        raise InternalError(f"root of unity outside the unit-circle screen for {matrix}")
    return SpectralClass(
        has_root_of_unity_eigenvalue=roots_of_unity.found,
        has_unit_modulus_eigenvalue=bool(unit_count),
        hyperbolic=not unit_count,
        witness=witness,
        cyclotomic_index=roots_of_unity.index,
        unit_circle_eigenvalues=unit_count,
    )


def standard_symplectic_form(n: int) -> IntegerMatrix:
    """Return J = [[0, I], [-I, 0]] of size 2n, the matrix of a1·b2 - a2·b1."""
    size = 2 * n
    entries = [0] * (size * size)
    for i in range(n):
        entries[i * size + n + i] = 1
        entries[(n + i) * size + i] = -1
    return IntegerMatrix(size, size, tuple(entries))


def is_symplectic(matrix: IntegerMatrix) -> bool:
    """Check M^† J M = J for the standard symplectic form.

    Args:
        matrix: a square integer matrix of even size.

    Returns:
        whether M preserves the Heisenberg pairing.

    Raises:
        DimensionError: if the matrix is not square or has odd size.
    """
    _require_square(matrix, "is_symplectic")
    if matrix.rows % 2:
        raise DimensionError(f"symplectic test needs even size, got {matrix.rows}")
    form = standard_symplectic_form(matrix.rows // 2)
    return matrix.transpose() @ form @ matrix == form


def companion(polynomial: IntPolynomial) -> IntegerMatrix:
    """Return the companion matrix of a monic integer polynomial.

    Raises:
        InvalidInputError: if the polynomial is not monic of positive degree.
    """
    coefficients = polynomial.coefficients
    if polynomial.degree < 1 or coefficients[-1] != 1:
        raise InvalidInputError(f"{polynomial} is not monic of positive degree")
    n = polynomial.degree
    entries = [0] * (n * n)
    for i in range(1, n):
        entries[i * n + i - 1] = 1
    for i in range(n):
        entries[i * n + n - 1] = -coefficients[i]
    return IntegerMatrix(n, n, tuple(entries))


def random_unimodular(dimension: int, rng: np.random.Generator, length: int) -> IntegerMatrix:
    """Return a random product of elementary matrices and sign changes.

    Args:
        dimension: matrix size, at least 1.
        rng: source of randomness.
        length: number of factors.

    Returns:
        a matrix with determinant ±1.
    """
    result = IntegerMatrix.identity(dimension)
    for _ in range(length):
        if dimension == 1 or rng.random() < 0.15:
            signs = [1] * dimension
            signs[int(rng.integers(dimension))] = -1
            factor = IntegerMatrix.diagonal(signs)
        else:
            i, j = (int(v) for v in rng.choice(dimension, size=2, replace=False))
            factor = IntegerMatrix.elementary(dimension, i, j, int(rng.choice([-1, 1])))
        result = result @ factor
    return result


def random_symplectic(n: int, rng: np.random.Generator, length: int) -> IntegerMatrix:
    """Return a random product of generators of Sp(2n, Z).

    Generators are the block transvections [[I, S], [0, I]] and [[I, 0], [S, I]] with
    S an elementary symmetric matrix, and J itself.

    Args:
        n: half the dimension.
        rng: source of randomness.
        length: number of factors.

    Returns:
        a symplectic integer matrix.
    """
    size = 2 * n
    result = IntegerMatrix.identity(size)
    for _ in range(length):
        choice = rng.random()
        if choice < 0.1:
            result = result @ standard_symplectic_form(n)
            continue
        i, j = int(rng.integers(n)), int(rng.integers(n))
        sign = int(rng.choice([-1, 1]))
        entries = list(IntegerMatrix.identity(size).entries)
        row_offset, col_offset = (0, n) if choice < 0.55 else (n, 0)
        entries[(row_offset + i) * size + col_offset + j] += sign
        if i != j:
            entries[(row_offset + j) * size + col_offset + i] += sign
        result = result @ IntegerMatrix(size, size, tuple(entries))
    return result
