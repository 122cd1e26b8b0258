# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Compact connected groups reduced to their maximal torus and Weyl group.

The identity component X⁰(Z^r, K) is (U(1)^k)^r/W with W acting diagonally on the r
columns; points of the quotient are represented by a canonical k×r angle matrix.
"""

import dataclasses
import json
import logging
import os
import pathlib
import re
import threading
import typing

import numpy as np
import sympy

from errors import CapExceededError, DimensionError, InvalidInputError
from exact_linalg import IntegerMatrix
from torus_dynamics import TorusPoint, act

logger = logging.getLogger(__name__)

WEYL_CAP = 10**7
CONSTRAINT_TOLERANCE = 1e-9
QUANTUM = 10**12
CACHE_DIR_ENV = "CHARVAR_CACHE_DIR"


@dataclasses.dataclass(frozen=True, eq=False)
class GroupModel:
    """A compact connected group described by its torus rank and Weyl group.

    Attributes:
        name: descriptor label, e.g. "SU3".
        rank: torus rank k.
        weyl_generators: k×k integer matrices generating W.
        constraints: disjoint row subsets whose angle sums vanish mod 1.
        cap: maximal size of the enumerated Weyl group.
    """

    name: str
    rank: int
    weyl_generators: tuple[IntegerMatrix, ...] = ()
    constraints: tuple[tuple[int, ...], ...] = ()
    cap: int = WEYL_CAP
    _lock: threading.Lock = dataclasses.field(
        default_factory=threading.Lock, init=False, repr=False
    )
    _elements: list = dataclasses.field(default_factory=list, init=False, repr=False)

    def __post_init__(self) -> None:
        """Check that the generators are integral automorphisms preserving the constraints.

        Raises:
            InvalidInputError: if the rank is not positive or a constraint is not preserved.
            DimensionError: if a generator is not k×k.
            NotAnAutomorphismError: if a generator is not unimodular.
        """
        if self.rank < 1:
            raise InvalidInputError(f"rank must be positive, got {self.rank}")
        indicators = []
        for subset in self.constraints:
            if not subset or any(not 0 <= i < self.rank for i in subset):
                raise InvalidInputError(f"bad constraint subset {subset} for rank {self.rank}")
            indicators.append(
                IntegerMatrix.from_rows([[int(i in subset) for i in range(self.rank)]])
            )
        for generator in self.weyl_generators:
            if (generator.rows, generator.cols) != (self.rank, self.rank):
                raise DimensionError(
                    f"Weyl generator of {self.name} must be {self.rank}x{self.rank}"
                )
            generator.inverse()
            for indicator in indicators:
                image = indicator @ generator
                if image not in (indicator, indicator.scale(-1)):
                    raise InvalidInputError(
                        f"a Weyl generator of {self.name} breaks its constraint"
                    )

    @property
    def weyl_elements(self) -> tuple[IntegerMatrix, ...]:
        """The full Weyl group, enumerated once on first use."""
        with self._lock:
            if not self._elements:
                self._elements.extend(self._load_or_enumerate())
            return tuple(self._elements)

    @property
    def weyl_order(self) -> int:
        """|W|."""
        return len(self.weyl_elements)

    def _cache_path(self) -> pathlib.Path | None:
        directory = os.environ.get(CACHE_DIR_ENV)
        if not directory:
            return None
        return pathlib.Path(directory) / f"weyl-{re.sub(r'[^A-Za-z0-9]+', '_', self.name)}.json"

    def _load_or_enumerate(self) -> list[IntegerMatrix]:
        path = self._cache_path()
        if path is not None and path.exists():
            try:
                stored = json.loads(path.read_text(encoding="utf-8"))
                elements = [IntegerMatrix.from_rows(rows) for rows in stored["elements"]]
                if stored.get("rank") == self.rank:
                    logger.debug(
                        "loaded %d Weyl elements of %s from %s", len(elements), self.name, path
                    )
                    return elements
            except (OSError, ValueError, KeyError) as exc:
                logger.warning("ignoring unreadable Weyl cache %s: %s", path, exc)
        elements = self._enumerate()
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                payload = {"rank": self.rank, "elements": [w.to_rows() for w in elements]}
                path.write_text(json.dumps(payload), encoding="utf-8")
            except OSError as exc:
                logger.warning("could not write Weyl cache %s: %s", path, exc)
        return elements

    def _enumerate(self) -> list[IntegerMatrix]:
        """Breadth-first closure of the generators.

        Raises:
            CapExceededError: if the group has more than cap elements.
        """
        identity = IntegerMatrix.identity(self.rank)
        seen = {identity}
        frontier = [identity]
        while frontier:
            following = []
            for element in frontier:
                for generator in self.weyl_generators:
                    product = generator @ element
                    if product in seen:
                        continue
                    if len(seen) >= self.cap:
                        raise CapExceededError(
                            f"Weyl group of {self.name} exceeds the cap of {self.cap} elements"
                        )
                    seen.add(product)
                    following.append(product)
            frontier = following
        logger.info("enumerated Weyl group of %s: %d elements", self.name, len(seen))
        return sorted(seen, key=lambda w: w.entries)


class QuotientPoint(typing.NamedTuple):
    """A point of (U(1)^k)^r/W held by its canonical representative.

    Attributes:
        model: the group model.
        theta: the canonical angle matrix.
    """

    model: GroupModel
    theta: TorusPoint


def _transposition(k: int, i: int, j: int) -> IntegerMatrix:
    entries = list(IntegerMatrix.identity(k).entries)
    entries[i * k + i] = entries[j * k + j] = 0
    entries[i * k + j] = entries[j * k + i] = 1
    return IntegerMatrix(k, k, tuple(entries))


def _sign_flip(k: int, i: int) -> IntegerMatrix:
    return IntegerMatrix.diagonal([-1 if index == i else 1 for index in range(k)])


def _adjacent_transpositions(
    k: int, offset: int = 0, size: int | None = None
) -> list[IntegerMatrix]:
    size = k if size is None else size
    return [_transposition(k, offset + i, offset + i + 1) for i in range(size - 1)]


def _free_block_generators(k: int, offset: int, p: int) -> list[IntegerMatrix]:
    """Σ_p on the p-1 free coordinates of an SU(p) block, θ_p = -Σθ_i."""
    generators = _adjacent_transpositions(k, offset, p - 1)
    entries = list(IntegerMatrix.identity(k).entries)
    last = offset + p - 2
    for column in range(offset, offset + p - 1):
        entries[last * k + column] = -1
    generators.append(IntegerMatrix(k, k, tuple(entries)))
    return generators


def _require_positive(**values: int) -> None:
    for label, value in values.items():
        if value < 1:
            raise InvalidInputError(f"{label} must be at least 1, got {value}")


def builtin_model(family: str, n: int, p: int | None = None) -> GroupModel:
    """Construct one of the built-in group models.

    Args:
        family: torus, unitary, special_unitary, symplectic, odd_orthogonal,
            even_orthogonal or g_mp.
        n: the family parameter (rank k, matrix size n, or m for g_mp).
        p: the prime of g_mp.

    Returns:
        the group model.

    Raises:
        InvalidInputError: on unknown families, non-positive parameters or p not prime.
    """
    _require_positive(n=n)
    if family == "torus":
        return GroupModel(f"T{n}", n)
    if family == "unitary":
        return GroupModel(f"U{n}", n, tuple(_adjacent_transpositions(n)))
    if family == "special_unitary":
        return GroupModel(
            f"SU{n}", n, tuple(_adjacent_transpositions(n)), constraints=(tuple(range(n)),)
        )
    if family in ("symplectic", "odd_orthogonal"):
        label = f"Sp{n}" if family == "symplectic" else f"SO{2 * n + 1}"
        generators = _adjacent_transpositions(n) + [_sign_flip(n, n - 1)]
        return GroupModel(label, n, tuple(generators))
    if family == "even_orthogonal":
        generators = _adjacent_transpositions(n)
        if n >= 2:
            entries = list(IntegerMatrix.identity(n).entries)
            a, b = n - 2, n - 1
            entries[a * n + a] = entries[b * n + b] = 0
            entries[a * n + b] = entries[b * n + a] = -1
            generators.append(IntegerMatrix(n, n, tuple(entries)))
        return GroupModel(f"SO{2 * n}", n, tuple(generators))
    if family == "g_mp":
        if p is None or not sympy.isprime(p):
            raise InvalidInputError(f"g_mp needs a prime p, got {p}")
        k = (p - 1) * n
        generators = []
        for block in range(n):
            generators.extend(_free_block_generators(k, block * (p - 1), p))
        return GroupModel(f"Gmp:{n},{p}", k, tuple(generators))
    raise InvalidInputError(f"unknown group family {family!r}")


_DESCRIPTOR = re.compile(r"^(T|U|SU|Sp|SO)(\d+)$|^Gmp:(\d+),(\d+)$")


def parse_model(descriptor: str) -> GroupModel:
    """Parse "T4", "U2", "SU3", "Sp2", "SO5", "SO4" or "Gmp:2,3".

    Raises:
        InvalidInputError: on malformed descriptors.
    """
    match = _DESCRIPTOR.match(descriptor.strip())
    if not match:
        raise InvalidInputError(f"unknown group descriptor {descriptor!r}")
    if match.group(3):
        return builtin_model("g_mp", int(match.group(3)), int(match.group(4)))
    prefix, size = match.group(1), int(match.group(2))
    if prefix == "SO":
        if size < 2:
            raise InvalidInputError(f"SO needs N >= 2, got {size}")
        if size % 2:
            return builtin_model("odd_orthogonal", size // 2)
        return builtin_model("even_orthogonal", size // 2)
    family = {"T": "torus", "U": "unitary", "SU": "special_unitary", "Sp": "symplectic"}[prefix]
    return builtin_model(family, size)


def weyl_elements(model: GroupModel) -> tuple[IntegerMatrix, ...]:
    """Return every element of W (memoized on the model)."""
    return model.weyl_elements


def check_constraint(model: GroupModel, theta: TorusPoint) -> None:
    """Verify that Θ lies on the model's constrained torus.

    Raises:
        DimensionError: if Θ does not have k rows.
        InvalidInputError: if a constrained sum is farther than 1e-9 from an integer.
    """
    if theta.k != model.rank:
        raise DimensionError(f"{model.name} needs {model.rank} rows, got {theta.k}")
    for subset in model.constraints:
        for column in range(theta.r):
            total = sum(theta.angles[i][column] for i in subset) % 1.0
            if min(total, 1.0 - total) > CONSTRAINT_TOLERANCE:
                raise InvalidInputError(
                    f"rows {subset} of column {column} sum to {total} mod 1, not 0"
                )


def quantize(theta: TorusPoint) -> tuple[int, ...]:
    """Comparison key of Θ on the 1e-12 grid, row-major."""
    return tuple(int(round(v * QUANTUM)) % QUANTUM for row in theta.angles for v in row)


def canonicalize(model: GroupModel, theta: TorusPoint) -> TorusPoint:
    """Return the lexicographically least W-translate of Θ.

    Args:
        model: the group model.
        theta: a k×r point satisfying the constraints.

    Returns:
        the representative with the smallest quantized key; its angles are not quantized.

    Raises:
        DimensionError: if Θ does not have k rows.
        InvalidInputError: on a constraint violation.
    """
    check_constraint(model, theta)
    elements = model.weyl_elements
    if len(elements) == 1:
        return theta
    stack = np.array([w.to_rows() for w in elements], dtype=np.float64)
    translates = np.einsum("wij,jc->wic", stack, theta.as_array()) % 1.0
    translates[translates >= 1.0] = 0.0
    keys = np.rint(translates * QUANTUM).astype(np.int64) % QUANTUM
    flat = keys.reshape(len(elements), -1)
    best = int(np.lexsort(flat.T[::-1])[0])
    return TorusPoint(tuple(tuple(float(v) for v in row) for row in translates[best]))


def to_quotient(model: GroupModel, theta: TorusPoint) -> QuotientPoint:
    """Wrap Θ as a quotient point."""
    return QuotientPoint(model, canonicalize(model, theta))


def act_on_quotient(
    model: GroupModel, point: QuotientPoint, matrix: IntegerMatrix
) -> QuotientPoint:
    """Return the class of (Θ·M) mod 1.

    Raises:
        DimensionError: if M does not match the column count.
    """
    return QuotientPoint(model, canonicalize(model, act(point.theta, matrix)))


def identity_component_dims(model: GroupModel, r: int) -> tuple[int, int]:
    """Return (dim of the torus (U(1)^k)^r after constraints, |W|).

    Raises:
        InvalidInputError: if r is not positive.
    """
    _require_positive(r=r)
    return (model.rank - len(model.constraints)) * r, model.weyl_order
