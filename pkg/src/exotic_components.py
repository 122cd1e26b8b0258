# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Commutator matrices of almost commuting tuples and the action of GL(r, Z) on them.

Exotic components of X(Z^r, G_{m,p}) with m = 1 correspond to nonzero skew-symmetric
forms of rank at most two over Z_p; an automorphism M acts by Z ↦ M·Z·M^† mod p, and the
image of GL(r, Z) in GL(r, Z_p) is the subgroup with determinant ±1.
"""

import collections
import dataclasses
import itertools
import logging
import typing

import sympy
from sympy.polys.matrices import DomainMatrix

from errors import (
    CapExceededError,
    DimensionError,
    InternalError,
    InvalidInputError,
    NotAnAutomorphismError,
)
from exact_linalg import IntegerMatrix

logger = logging.getLogger(__name__)

ENUMERATION_CAP = 10**6


def _require_prime(p: int) -> None:
    if not sympy.isprime(p):
        raise InvalidInputError(f"p must be prime, got {p}")


@dataclasses.dataclass(frozen=True)
class SkewFormFp:
    """Skew-symmetric r×r matrix over Z_p with zero diagonal.

    Attributes:
        r: dimension.
        p: prime modulus.
        entries: row-major residues in [0, p).
    """

    r: int
    p: int
    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        """Reduce entries mod p and check skewness.

        Raises:
            DimensionError: if the entry count is not r².
            InvalidInputError: if the matrix is not skew with zero diagonal.
        """
        if len(self.entries) != self.r * self.r:
            raise DimensionError(f"{len(self.entries)} entries for an {self.r}x{self.r} form")
        entries = tuple(int(v) % self.p for v in self.entries)
        object.__setattr__(self, "entries", entries)
        for i in range(self.r):
            if entries[i * self.r + i]:
                raise InvalidInputError(f"diagonal entry {i} is nonzero")
            for j in range(i + 1, self.r):
                if (entries[i * self.r + j] + entries[j * self.r + i]) % self.p:
                    raise InvalidInputError(f"entries ({i}, {j}) and ({j}, {i}) are not opposite")

    @classmethod
    def from_matrix(cls, matrix: IntegerMatrix, p: int) -> "SkewFormFp":
        """Reduce an integer matrix mod p."""
        if not matrix.is_square:
            raise DimensionError("a skew form needs a square matrix")
        return cls(matrix.rows, p, matrix.entries)

    @classmethod
    def zero(cls, r: int, p: int) -> "SkewFormFp":
        """Return the zero form."""
        return cls(r, p, (0,) * (r * r))

    @classmethod
    def standard(cls, r: int, p: int, values: typing.Sequence[int] = (1,)) -> "SkewFormFp":
        """Return the block form with [[0, a_i], [-a_i, 0]] blocks followed by zeros."""
        entries = [0] * (r * r)
        for block, value in enumerate(values):
            k = 2 * block
            entries[k * r + k + 1] = value
            entries[(k + 1) * r + k] = -value
        return cls(r, p, tuple(entries))

    def at(self, i: int, j: int) -> int:
        """Return Z_ij."""
        return self.entries[i * self.r + j]

    def row(self, i: int) -> tuple[int, ...]:
        """Return row i."""
        return self.entries[i * self.r : (i + 1) * self.r]

    def to_matrix(self) -> IntegerMatrix:
        """Return the residues as an integer matrix."""
        return IntegerMatrix(self.r, self.r, self.entries)

    def is_zero(self) -> bool:
        """Whether every entry vanishes."""
        return not any(self.entries)

    def __str__(self) -> str:
        """Render as a matrix of residues."""
        return str(self.to_matrix())


class ComponentCount(typing.NamedTuple):
    """Number of exotic components of X(Z^r, G_{m,p}).

    Attributes:
        r: free rank.
        m: number of SU(p) factors.
        p: the prime.
        count: p^((m-1)(r-2))·(p^r - 1)(p^(r-1) - 1)/(p² - 1).
    """

    r: int
    m: int
    p: int
    count: int


def _check_row(row: typing.Sequence[int], r: int, label: str) -> None:
    if len(row) != r:
        raise DimensionError(f"{label} has {len(row)} entries, expected {r}")


def fill_in_from_pivot_rows(
    r: int,
    p: int,
    i: int,
    j: int,
    row_i: typing.Sequence[int],
    row_j: typing.Sequence[int],
) -> SkewFormFp:
    """Complete rows i and j to the unique skew form of rank two, pivoting on Z_ij != 0.

    Every other entry is Z_kl = (Z_ik·Z_jl - Z_il·Z_jk)·Z_ij⁻¹.

    Args:
        r: dimension.
        p: prime modulus.
        i: first pivot row (0-based).
        j: second pivot row, distinct from i.
        row_i: row i of the form.
        row_j: row j of the form.

    Returns:
        the completed form.

    Raises:
        InvalidInputError: if the rows violate skewness or Z_ij vanishes.
    """
    _check_row(row_i, r, "row_i")
    _check_row(row_j, r, "row_j")
    row_i = [int(v) % p for v in row_i]
    row_j = [int(v) % p for v in row_j]
    if i == j or row_i[i] or row_j[j] or (row_i[j] + row_j[i]) % p:
        raise InvalidInputError(f"rows {i} and {j} are not rows of a skew form")
    pivot = row_i[j]
    if not pivot:
        raise InvalidInputError(f"pivot entry ({i}, {j}) vanishes")
    inverse = pow(pivot, -1, p)
    entries = [
        (row_i[k] * row_j[l] - row_i[l] * row_j[k]) * inverse % p
        for k in range(r)
        for l in range(r)  # noqa: E741
    ]
    return SkewFormFp(r, p, tuple(entries))


def fill_in_from_rows(
    r: int, p: int, row1: typing.Sequence[int], row2: typing.Sequence[int]
) -> SkewFormFp:
    """Complete the first two rows to a skew form of rank at most two.

    With c = Z_12 != 0 the completion is unique. With c = 0 the two rows must be
    proportional, w and μ·w; the form (e_a + μ·e_b) ∧ w is returned, computed with the
    pivot rule on the first nonzero entry Z_aj.

    Args:
        r: dimension, at least 2.
        p: prime modulus.
        row1: first row, with row1[0] = 0.
        row2: second row, with row2[1] = 0 and row2[0] = -row1[1].

    Returns:
        the completed form.

    Raises:
        InvalidInputError: if the rows violate the skew constraints or admit no completion.
    """
    _require_prime(p)
    if r < 2:
        raise InvalidInputError(f"r must be at least 2, got {r}")
    _check_row(row1, r, "row1")
    _check_row(row2, r, "row2")
    first = [int(v) % p for v in row1]
    second = [int(v) % p for v in row2]
    if first[0] or second[1] or (second[0] + first[1]) % p:
        raise InvalidInputError("rows violate Z_11 = Z_22 = 0 and Z_21 = -Z_12")
    if first[1]:
        return fill_in_from_pivot_rows(r, p, 0, 1, first, second)
    if not any(first) and not any(second):
        return SkewFormFp.zero(r, p)
    a, b = (0, 1) if any(first) else (1, 0)
    rows = (first, second)
    w, other = rows[a], rows[b]
    j = next(index for index, value in enumerate(w) if value)
    scale = other[j] * pow(w[j], -1, p) % p
    if any((o - scale * v) % p for o, v in zip(other, w)):
        raise InvalidInputError("rows are independent with Z_12 = 0: no rank-two completion")
    row_j = [0] * r
    row_j[a] = -w[j] % p
    row_j[b] = -w[j] * scale % p
    return fill_in_from_pivot_rows(r, p, a, j, w, row_j)


def _reduce_square(matrix: IntegerMatrix, r: int, p: int) -> IntegerMatrix:
    if (matrix.rows, matrix.cols) != (r, r):
        raise DimensionError(f"expected an {r}x{r} matrix, got {matrix.rows}x{matrix.cols}")
    return matrix.mod(p)


def gl_action(matrix: IntegerMatrix, form: SkewFormFp) -> SkewFormFp:
    """Return M·Z·M^† mod p.

    Args:
        matrix: an r×r integer matrix, unimodular or given mod p.
        form: the skew form Z.

    Returns:
        the transformed form.

    Raises:
        DimensionError: if M is not r×r.
        NotAnAutomorphismError: if det M mod p is not ±1.
    """
    reduced = _reduce_square(matrix, form.r, form.p)
    det = reduced.det() % form.p
    if det not in (1, form.p - 1):
        raise NotAnAutomorphismError(f"det {det} mod {form.p} is not ±1")
    return _congruence(reduced, form)


def _congruence(matrix: IntegerMatrix, form: SkewFormFp) -> SkewFormFp:
    product = (matrix @ form.to_matrix() @ matrix.transpose()).mod(form.p)
    return SkewFormFp(form.r, form.p, product.entries)


def _swap(r: int, i: int, j: int) -> IntegerMatrix:
    entries = list(IntegerMatrix.identity(r).entries)
    entries[i * r + i] = entries[j * r + j] = 0
    entries[i * r + j] = entries[j * r + i] = 1
    return IntegerMatrix(r, r, tuple(entries))


def skew_normal_form(form: SkewFormFp) -> tuple[SkewFormFp, IntegerMatrix]:
    """Bring Z to block-diagonal standard form by symplectic Gaussian elimination.

    Args:
        form: the skew form Z.

    Returns:
        (N, M) with N = M·Z·M^† mod p standard, det M ≡ ±1 mod p, entries of M in [0, p).
    """
    r, p = form.r, form.p
    current = form
    transform = IntegerMatrix.identity(r)

    def apply(step: IntegerMatrix) -> None:
        nonlocal current, transform
        current = _congruence(step, current)
        transform = (step @ transform).mod(p)

    k = 0
    while k + 1 < r:
        pivot = next(
            ((i, j) for i in range(k, r) for j in range(k, r) if current.at(i, j)), None
        )
        if pivot is None:
            break
        i, j = pivot
        if i != k:
            apply(_swap(r, k, i))
            if j == k:
                j = i
        if j != k + 1:
            apply(_swap(r, k + 1, j))
        inverse = pow(current.at(k, k + 1), -1, p)
        for l in range(k + 2, r):  # noqa: E741
            beta = current.at(l, k) * inverse % p
            alpha = -current.at(l, k + 1) * inverse % p
            if not alpha and not beta:
                continue
            entries = list(IntegerMatrix.identity(r).entries)
            entries[l * r + k] = alpha
            entries[l * r + k + 1] = beta
            apply(IntegerMatrix(r, r, tuple(entries)))
        k += 2
    logger.debug("normal form of %s is %s", form, current)
    return current, transform


def rank_mod_p(form: SkewFormFp) -> int:
    """Return the rank of Z over the field Z_p."""
    field = sympy.GF(form.p)
    rows = [[field(v) for v in form.row(i)] for i in range(form.r)]
    return DomainMatrix(rows, (form.r, form.r), field).rank()


def standardizing_matrix(form: SkewFormFp) -> IntegerMatrix:
    """Return S with det ≡ ±1 mod p carrying a rank-two Z to the standard form with a_1 = 1.

    The normal form block value a is absorbed by diag(a⁻¹, 1, ..., 1, a), which needs r >= 3.

    Raises:
        InvalidInputError: if r < 3 or Z does not have rank two.
    """
    if form.r < 3:
        raise InvalidInputError("the block value can only be normalized when r >= 3")
    if rank_mod_p(form) != 2:
        raise InvalidInputError(f"{form} does not have rank two")
    normal, transform = skew_normal_form(form)
    value = normal.at(0, 1)
    diagonal = [1] * form.r
    diagonal[0] = pow(value, -1, form.p)
    diagonal[-1] = value
    result = (IntegerMatrix.diagonal(diagonal) @ transform).mod(form.p)
    if _congruence(result, form) != SkewFormFp.standard(form.r, form.p):
        raise InternalError(f"standardizing matrix failed for {form}")
    return result


def lift_to_integer(matrix: IntegerMatrix, p: int) -> IntegerMatrix:
    """Lift a matrix with det ≡ ±1 mod p to GL(r, Z).

    The matrix is reduced to diag(1, ..., 1, ±1) by transvections over Z_p; the same
    transvections read as integer matrices give the lift.

    Args:
        matrix: an r×r matrix, read mod p.
        p: prime modulus.

    Returns:
        an integer matrix with det ±1 congruent to M mod p.

    Raises:
        NotAnAutomorphismError: if det M mod p is not ±1.
        InternalError: if the lift does not reduce to M.
    """
    _require_prime(p)
    if not matrix.is_square:
        raise DimensionError("lift_to_integer needs a square matrix")
    r = matrix.rows
    work = [list(row) for row in matrix.mod(p).to_rows()]
    det = matrix.mod(p).det() % p
    if det not in (1, p - 1):
        raise NotAnAutomorphismError(f"det {det} mod {p} is not ±1")
    operations: list[tuple[int, int, int]] = []

    def add_row(target: int, source: int, factor: int) -> None:
        factor %= p
        if not factor:
            return
        work[target] = [(t + factor * s) % p for t, s in zip(work[target], work[source])]
        operations.append((target, source, factor))

    for column in range(r - 1):
        if not work[column][column]:
            source = next(i for i in range(column + 1, r) if work[i][column])
            add_row(column, source, 1)
        unit = work[column][column]
        if unit != 1:
            helper = column + 1
            value = work[helper][column]
            add_row(helper, column, (1 - unit - value) * pow(unit, -1, p))
            add_row(column, helper, 1)
        for i in range(r):
            if i != column:
                add_row(i, column, -work[i][column])
    last = r - 1
    inverse = pow(work[last][last], -1, p)
    for i in range(last):
        add_row(i, last, -work[i][last] * inverse)
    signs = [1] * r
    signs[last] = 1 if work[last][last] == 1 else -1
    lift = IntegerMatrix.diagonal(signs)
    for target, source, factor in reversed(operations):
        lift = IntegerMatrix.elementary(r, target, source, -factor) @ lift
    if lift.mod(p) != matrix.mod(p) or abs(lift.det()) != 1:
        raise InternalError(f"integer lift of {matrix} mod {p} is wrong")
    return lift


def transitivity_certificate(source: SkewFormFp, target: SkewFormFp) -> IntegerMatrix:
    """Return an integer M with det ±1 and gl_action(M, source) = target.

    Raises:
        InvalidInputError: if r < 3, the forms differ in shape or either is not of rank two.
    """
    if (source.r, source.p) != (target.r, target.p):
        raise InvalidInputError("forms live in different spaces")
    p = source.p
    first = standardizing_matrix(source)
    second = standardizing_matrix(target)
    inverse = IntegerMatrix.from_sympy(second.to_sympy().inv_mod(p))
    certificate = lift_to_integer((inverse @ first).mod(p), p)
    if gl_action(certificate, source) != target:
        raise InternalError(f"certificate does not carry {source} to {target}")
    return certificate


class Pairing(typing.NamedTuple):
    """The r = 2 picture: components are the values c != 0 and M sends c to det(M)·c.

    Attributes:
        value: c = Z_12.
        partner: -c mod p, the other element of its orbit.
        fixed: whether the orbit is a single point (p = 2).
    """

    value: int
    partner: int
    fixed: bool


def pairing(form: SkewFormFp) -> Pairing:
    """Return the orbit {c, -c} of a nonzero 2×2 form.

    Raises:
        InvalidInputError: if the form is not a nonzero 2×2 form.
    """
    if form.r != 2 or form.is_zero():
        raise InvalidInputError("pairing needs a nonzero 2x2 form")
    value = form.at(0, 1)
    partner = -value % form.p
    return Pairing(value, partner, partner == value)


def _check_cap(r: int, p: int) -> None:
    if p ** (2 * r - 3) > ENUMERATION_CAP:
        raise CapExceededError(f"p^(2r-3) = {p}^{2 * r - 3} exceeds {ENUMERATION_CAP}")


def enumerate_components(r: int, p: int) -> list[SkewFormFp]:
    """Enumerate the nonzero skew forms of rank at most two over Z_p.

    Each pivot pair (i, j) with Z_ij != 0 is combined with every choice of the remaining
    entries of rows i and j, and the completions are deduplicated.

    Args:
        r: dimension, at least 2.
        p: prime modulus.

    Returns:
        the forms sorted by their entries.

    Raises:
        InvalidInputError: if r < 2 or p is not prime.
        CapExceededError: if p^(2r-3) exceeds the cap.
    """
    _require_prime(p)
    if r < 2:
        raise InvalidInputError(f"r must be at least 2, got {r}")
    _check_cap(r, p)
    forms = set()
    for i, j in itertools.combinations(range(r), 2):
        others = [index for index in range(r) if index not in (i, j)]
        for pivot in range(1, p):
            for free in itertools.product(range(p), repeat=2 * len(others)):
                row_i = [0] * r
                row_j = [0] * r
                row_i[j], row_j[i] = pivot, -pivot % p
                for position, index in enumerate(others):
                    row_i[index] = free[position]
                    row_j[index] = free[len(others) + position]
                forms.add(fill_in_from_pivot_rows(r, p, i, j, row_i, row_j))
    logger.info("enumerated %d exotic components for r=%d p=%d", len(forms), r, p)
    return sorted(forms, key=lambda form: form.entries)


def default_generators(r: int) -> list[IntegerMatrix]:
    """Transvections E_ij(1) for i != j and diag(-1, 1, ..., 1)."""
    generators = [
        IntegerMatrix.elementary(r, i, j) for i in range(r) for j in range(r) if i != j
    ]
    generators.append(IntegerMatrix.diagonal([-1] + [1] * (r - 1)))
    return generators


def orbit_partition(
    r: int, p: int, generators: typing.Sequence[IntegerMatrix] | None = None
) -> list[tuple[SkewFormFp, ...]]:
    """Split the components into orbits of the det ±1 subgroup of GL(r, Z_p).

    Args:
        r: dimension.
        p: prime modulus.
        generators: generating matrices; the transvections and a sign change by default.

    Returns:
        orbits sorted by size, then by their least element; each orbit sorted by entries.

    Raises:
        CapExceededError: if the enumeration is too large.
        NotAnAutomorphismError: if a generator has det ≢ ±1 mod p.
    """
    components = enumerate_components(r, p)
    generators = list(generators) if generators is not None else default_generators(r)
    remaining = set(components)
    orbits = []
    for start in components:
        if start not in remaining:
            continue
        orbit = {start}
        queue = collections.deque([start])
        while queue:
            form = queue.popleft()
            for generator in generators:
                image = gl_action(generator, form)
                if image not in orbit:
                    orbit.add(image)
                    queue.append(image)
        remaining -= orbit
        orbits.append(tuple(sorted(orbit, key=lambda form: form.entries)))
    orbits.sort(key=lambda orbit: (len(orbit), orbit[0].entries))
    logger.info("r=%d p=%d: %d orbits of sizes %s", r, p, len(orbits), [len(o) for o in orbits])
    return orbits


def component_count(r: int, m: int, p: int) -> ComponentCount:
    """Evaluate p^((m-1)(r-2))·(p^r - 1)(p^(r-1) - 1)/(p² - 1) exactly.

    Raises:
        InvalidInputError: if r < 2, m < 1 or p is not prime.
        InternalError: if the division is not exact.
    """
    _require_prime(p)
    if r < 2 or m < 1:
        raise InvalidInputError(f"need r >= 2 and m >= 1, got r={r}, m={m}")
    numerator = p ** ((m - 1) * (r - 2)) * (p**r - 1) * (p ** (r - 1) - 1)
    count, remainder = divmod(numerator, p * p - 1)
    if remainder:
        raise InternalError(f"component count for r={r} m={m} p={p} is not an integer")
    return ComponentCount(r, m, p, count)
