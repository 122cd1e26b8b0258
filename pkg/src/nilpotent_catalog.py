# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Finitely generated nilpotent groups, as far as their abelianization and automorphisms go."""

import dataclasses
import enum
import logging
import math
import re
import typing

import numpy as np

from errors import DimensionError, InternalError, InvalidInputError, NotAnAutomorphismError
from exact_linalg import (
    IntegerMatrix,
    SpectralClass,
    char_poly,
    is_symplectic,
    spectral_classify,
)
from group_models import GroupModel, identity_component_dims

logger = logging.getLogger(__name__)

HOMOMORPHISM_CHECKS = 100


class GroupKind(str, enum.Enum):
    """Families of nilpotent groups in the catalog."""

    ABELIAN = "abelian"
    FREE_NILPOTENT = "free_nilpotent"
    HEISENBERG = "heisenberg"


class NilpotentGroupDescriptor(typing.NamedTuple):
    """A nilpotent group described by its family and parameters.

    Attributes:
        kind: the family.
        rank: free abelian rank (abelian), generator count r (free nilpotent) or n (Heisenberg).
        step: nilpotency step s of a free nilpotent group.
        torsion: torsion invariants of an abelian group.
    """

    kind: GroupKind
    rank: int
    step: int = 1
    torsion: tuple[int, ...] = ()

    @classmethod
    def abelian(cls, rank: int, torsion: typing.Iterable[int] = ()) -> "NilpotentGroupDescriptor":
        """Z^rank ⊕ ⊕ Z/t.

        Raises:
            InvalidInputError: on a negative rank or a torsion entry below 2.
        """
        torsion = tuple(int(t) for t in torsion)
        if rank < 0 or any(t < 2 for t in torsion):
            raise InvalidInputError(f"invalid abelian group Z^{rank} + {torsion}")
        return cls(GroupKind.ABELIAN, rank, torsion=torsion)

    @classmethod
    def free_nilpotent(cls, step: int, rank: int) -> "NilpotentGroupDescriptor":
        """N_{s,r} = F_r / γ_{s+1}(F_r).

        Raises:
            InvalidInputError: if step or rank is not positive.
        """
        if step < 1 or rank < 1:
            raise InvalidInputError(f"free nilpotent group needs s, r >= 1, got {step}, {rank}")
        return cls(GroupKind.FREE_NILPOTENT, rank, step=step)

    @classmethod
    def heisenberg(cls, n: int) -> "NilpotentGroupDescriptor":
        """H_{2n+1}(Z).

        Raises:
            InvalidInputError: if n is not positive.
        """
        if n < 1:
            raise InvalidInputError(f"Heisenberg group needs n >= 1, got {n}")
        return cls(GroupKind.HEISENBERG, n, step=2)

    def __str__(self) -> str:
        """Render in descriptor syntax."""
        if self.kind == GroupKind.HEISENBERG:
            return f"H{2 * self.rank + 1}"
        if self.kind == GroupKind.FREE_NILPOTENT:
            return f"N:{self.step},{self.rank}"
        suffix = f"+T:{','.join(map(str, self.torsion))}" if self.torsion else ""
        return f"Z^{self.rank}{suffix}"


_HEISENBERG = re.compile(r"^H(\d+)$")
_FREE_NILPOTENT = re.compile(r"^N:(\d+),(\d+)$")
_ABELIAN = re.compile(r"^Z\^(\d+)(?:\+T:(\d+(?:,\d+)*))?$")


def parse_descriptor(text: str) -> NilpotentGroupDescriptor:
    """Parse "H3", "H5", "N:s,r", "Z^r" or "Z^r+T:2,4".

    Raises:
        InvalidInputError: on malformed text.
    """
    text = text.strip()
    if match := _HEISENBERG.match(text):
        order = int(match.group(1))
        if order < 3 or order % 2 == 0:
            raise InvalidInputError(f"Heisenberg descriptor needs an odd index >= 3, got {text!r}")
        return NilpotentGroupDescriptor.heisenberg((order - 1) // 2)
    if match := _FREE_NILPOTENT.match(text):
        return NilpotentGroupDescriptor.free_nilpotent(int(match.group(1)), int(match.group(2)))
    if match := _ABELIAN.match(text):
        torsion = match.group(2).split(",") if match.group(2) else ()
        return NilpotentGroupDescriptor.abelian(int(match.group(1)), (int(t) for t in torsion))
    raise InvalidInputError(f"unknown group descriptor {text!r}")


def abelianization_rank(group: NilpotentGroupDescriptor) -> tuple[int, tuple[int, ...]]:
    """Return (free rank r, torsion) of Γ/[Γ, Γ]."""
    if group.kind == GroupKind.HEISENBERG:
        return 2 * group.rank, ()
    if group.kind == GroupKind.FREE_NILPOTENT:
        return group.rank, ()
    return group.rank, group.torsion


class IdentityComponent(typing.NamedTuple):
    """X⁰(Γ, K) as the quotient of a k×r torus.

    Attributes:
        r: free rank of the abelianization.
        model: the compact group.
        torus_dimension: dimension of (U(1)^k)^r after constraints.
        weyl_order: |W|.
    """

    r: int
    model: GroupModel
    torus_dimension: int
    weyl_order: int


def identity_component_model(
    group: NilpotentGroupDescriptor, model: GroupModel
) -> IdentityComponent:
    """Reduce X⁰(Γ, K) to X⁰(Z^r, K); torsion of the abelianization maps to the identity."""
    r, _ = abelianization_rank(group)
    if r == 0:
        return IdentityComponent(0, model, 0, 1)
    dimension, order = identity_component_dims(model, r)
    return IdentityComponent(r, model, dimension, order)


@dataclasses.dataclass(frozen=True)
class HeisenbergElement:
    """(a, b, c) in H_{2n+1}(Z).

    Attributes:
        a: integer n-vector.
        b: integer n-vector.
        c: central coordinate.
    """

    a: tuple[int, ...]
    b: tuple[int, ...]
    c: int

    def __post_init__(self) -> None:
        """Coerce the coordinates to Python integers.

        Raises:
            DimensionError: if a and b differ in length.
        """
        if len(self.a) != len(self.b):
            raise DimensionError("a and b must have the same length")
        object.__setattr__(self, "a", tuple(int(v) for v in self.a))
        object.__setattr__(self, "b", tuple(int(v) for v in self.b))
        object.__setattr__(self, "c", int(self.c))

    @property
    def n(self) -> int:
        """Half the abelianization rank."""
        return len(self.a)

    def __mul__(self, other: "HeisenbergElement") -> "HeisenbergElement":
        """Apply the group law (a1 + a2, b1 + b2, c1 + c2 + a1·b2 - a2·b1)."""
        return heisenberg_multiply(self, other)


def heisenberg_identity(n: int) -> HeisenbergElement:
    """Return (0, 0, 0)."""
    return HeisenbergElement((0,) * n, (0,) * n, 0)


def heisenberg_multiply(x: HeisenbergElement, y: HeisenbergElement) -> HeisenbergElement:
    """Multiply two elements.

    Raises:
        DimensionError: if the elements belong to different groups.
    """
    if x.n != y.n:
        raise DimensionError(f"cannot multiply elements of H_{2 * x.n + 1} and H_{2 * y.n + 1}")
    twist = sum(p * q for p, q in zip(x.a, y.b)) - sum(p * q for p, q in zip(y.a, x.b))
    return HeisenbergElement(
        tuple(p + q for p, q in zip(x.a, y.a)),
        tuple(p + q for p, q in zip(x.b, y.b)),
        x.c + y.c + twist,
    )


def heisenberg_inverse(x: HeisenbergElement) -> HeisenbergElement:
    """Return (-a, -b, -c); the twist term vanishes against the inverse."""
    return HeisenbergElement(tuple(-v for v in x.a), tuple(-v for v in x.b), -x.c)


def random_heisenberg_element(
    n: int, rng: np.random.Generator, bound: int = 1000
) -> HeisenbergElement:
    """Draw an element with coordinates in [-bound, bound]."""
    values = rng.integers(-bound, bound, size=2 * n + 1, endpoint=True)
    return HeisenbergElement(tuple(values[:n]), tuple(values[n : 2 * n]), int(values[-1]))


@dataclasses.dataclass(frozen=True)
class HeisenbergAutomorphism:
    """The automorphism (a, b, c) ↦ (M(a, b), c) induced by M in Sp(2n, Z).

    Attributes:
        matrix: the symplectic matrix acting on the column vector (a, b).
    """

    matrix: IntegerMatrix

    @property
    def n(self) -> int:
        """Half the matrix size."""
        return self.matrix.rows // 2

    def __call__(self, x: HeisenbergElement) -> HeisenbergElement:
        """Apply the automorphism."""
        if x.n != self.n:
            raise DimensionError(f"automorphism of H_{2 * self.n + 1} applied to H_{2 * x.n + 1}")
        image = self.matrix @ IntegerMatrix.from_rows([[v] for v in x.a + x.b])
        values = image.entries
        return HeisenbergElement(values[: self.n], values[self.n :], x.c)

    def compose(self, other: "HeisenbergAutomorphism") -> "HeisenbergAutomorphism":
        """Return self ∘ other."""
        return HeisenbergAutomorphism(self.matrix @ other.matrix)


def heisenberg_auto_from_symplectic(
    matrix: IntegerMatrix, rng: np.random.Generator | None = None
) -> HeisenbergAutomorphism:
    """Lift M in Sp(2n, Z) to an automorphism of H_{2n+1}(Z).

    The homomorphism property is checked on random pairs before the map is returned.

    Args:
        matrix: a 2n×2n integer matrix.
        rng: source of the check pairs; a fixed seed by default.

    Returns:
        the automorphism.

    Raises:
        DimensionError: if M is not square of even size.
        NotAnAutomorphismError: if M is not symplectic.
        InternalError: if the homomorphism check fails.
    """
    if not is_symplectic(matrix):
        raise NotAnAutomorphismError(f"{matrix} does not preserve the symplectic form")
    automorphism = HeisenbergAutomorphism(matrix)
    rng = rng if rng is not None else np.random.default_rng(0)
    for _ in range(HOMOMORPHISM_CHECKS):
        x = random_heisenberg_element(automorphism.n, rng)
        y = random_heisenberg_element(automorphism.n, rng)
        if automorphism(x * y) != automorphism(x) * automorphism(y):
            raise InternalError(f"lift of {matrix} is not a homomorphism at {x}, {y}")
    return automorphism


class InducedAction(typing.NamedTuple):
    """Classification of an automorphism acting on the abelianization.

    Attributes:
        admissible: M comes from an automorphism of the group in the catalog.
        spectral: spectral class of M, or None if |det M| != 1.
        mixing_guaranteed: admissible and no eigenvalue is a root of unity.
        reason: one-line explanation.
    """

    admissible: bool
    spectral: SpectralClass | None
    mixing_guaranteed: bool
    reason: str


def classify_induced_action(
    group: NilpotentGroupDescriptor, matrix: IntegerMatrix
) -> InducedAction:
    """Decide admissibility of M and whether Fourier escape guarantees mixing.

    Heisenberg groups admit the symplectic lifts; free nilpotent and abelian groups admit any
    matrix of GL(r, Z).

    Raises:
        DimensionError: if M does not match the abelianization rank.
    """
    r, _ = abelianization_rank(group)
    if (matrix.rows, matrix.cols) != (r, r):
        raise DimensionError(f"{group} needs a {r}x{r} matrix, got {matrix.rows}x{matrix.cols}")
    unimodular = r == 0 or abs(matrix.det()) == 1
    if group.kind == GroupKind.HEISENBERG:
        admissible = is_symplectic(matrix)
    else:
        admissible = unimodular
    spectral = spectral_classify(matrix) if unimodular and r else None
    if not admissible:
        reason = "matrix is not induced by an automorphism of the group"
        mixing = False
    elif spectral is None:
        reason = "X⁰ is a point"
        mixing = False
    elif spectral.has_root_of_unity_eigenvalue:
        reason = f"root-of-unity eigenvalue ({spectral.witness}); Fourier escape fails"
        mixing = False
    else:
        reason = "mixing guaranteed: no eigenvalue is a root of unity"
        mixing = True
    logger.debug("classified %s on %s: %s", matrix, group, reason)
    return InducedAction(admissible, spectral, mixing, reason)


class WitnessOutcome(str, enum.Enum):
    """Result of scanning candidate automorphisms."""

    FOUND = "found"
    UNIPOTENT_OBSTRUCTION = "unipotent obstruction"
    NO_WITNESS = "no witness"


class WitnessSearch(typing.NamedTuple):
    """Outcome of a search for a mixing automorphism.

    Attributes:
        outcome: found, unipotent obstruction or no witness.
        witness: the first admissible candidate without root-of-unity eigenvalues.
        examined: number of candidates examined.
    """

    outcome: WitnessOutcome
    witness: IntegerMatrix | None
    examined: int


def _is_unipotent(matrix: IntegerMatrix) -> bool:
    """Whether the characteristic polynomial is (x - 1)^r."""
    r = matrix.rows
    expected = tuple(math.comb(r, i) * (-1) ** (r - i) for i in range(r + 1))
    return char_poly(matrix).coefficients == expected


def search_mixing_witness(
    group: NilpotentGroupDescriptor, candidates: typing.Iterable[IntegerMatrix]
) -> WitnessSearch:
    """Scan candidates for an admissible automorphism with no root-of-unity eigenvalue.

    When every admissible candidate is unipotent the result records the unipotent
    obstruction: such an action fixes a nonzero frequency and cannot be ergodic.
    """
    examined = 0
    admissible_seen = 0
    all_unipotent = True
    for candidate in candidates:
        examined += 1
        result = classify_induced_action(group, candidate)
        if not result.admissible:
            continue
        admissible_seen += 1
        if result.mixing_guaranteed:
            return WitnessSearch(WitnessOutcome.FOUND, candidate, examined)
        all_unipotent = all_unipotent and _is_unipotent(candidate)
    if admissible_seen and all_unipotent:
        return WitnessSearch(WitnessOutcome.UNIPOTENT_OBSTRUCTION, None, examined)
    return WitnessSearch(WitnessOutcome.NO_WITNESS, None, examined)
