# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Linear actions on the k×r angle torus, Fourier orbits and mixing estimators.

Sampled points live on the dyadic grid 2^-64 and are pushed forward with unsigned 64-bit
arithmetic, whose wraparound is exactly reduction mod 1 on that grid; the orbit of a
sampled point is therefore exact for any number of steps.
"""

import cmath
import csv
import dataclasses
import enum
import fractions
import io
import itertools
import logging
import math
import multiprocessing
import typing

import numpy as np
import sympy

from errors import DimensionError, InvalidInputError, NotAnAutomorphismError
from exact_linalg import IntegerMatrix, has_root_of_unity_eigenvalue

if typing.TYPE_CHECKING:  # pragma: nocover
    from group_models import GroupModel

logger = logging.getLogger(__name__)

DYADIC_BITS = 64
_MODULUS = 1 << DYADIC_BITS
_CHUNK = 1 << 16

FrequencyMatrix = IntegerMatrix


def _wrap_unit(value: float) -> float:
    """Map a float in [0, 1] into [0, 1); rounding can produce exactly 1.0."""
    return 0.0 if value >= 1.0 else value


@dataclasses.dataclass(frozen=True)
class TorusPoint:
    """A point of (U(1)^k)^r written as a k×r matrix of angles in [0, 1).

    Attributes:
        angles: the rows of the angle matrix.
    """

    angles: tuple[tuple[float, ...], ...]

    @classmethod
    def from_rows(cls, rows: typing.Iterable[typing.Iterable[float]]) -> "TorusPoint":
        """Build a point, reducing every angle mod 1.

        Raises:
            DimensionError: if the rows are ragged or empty.
        """
        angles = tuple(tuple(_wrap_unit(float(v) % 1.0) for v in row) for row in rows)
        if not angles or len({len(row) for row in angles}) != 1:
            raise DimensionError("a torus point needs a non-empty rectangular angle matrix")
        return cls(angles)

    @property
    def k(self) -> int:
        """Number of rows (torus rank)."""
        return len(self.angles)

    @property
    def r(self) -> int:
        """Number of columns (free rank of the group)."""
        return len(self.angles[0])

    def as_array(self) -> np.ndarray:
        """Return the angles as a float array."""
        return np.array(self.angles, dtype=np.float64)


class RationalTorusPoint(typing.NamedTuple):
    """A torsion point of the torus with a common denominator.

    Attributes:
        numerators: k×r integer numerators in [0, denominator).
        denominator: common denominator q >= 1.
    """

    numerators: tuple[tuple[int, ...], ...]
    denominator: int

    @classmethod
    def of(
        cls, numerators: typing.Iterable[typing.Iterable[int]], denominator: int
    ) -> "RationalTorusPoint":
        """Build a point, reducing the numerators mod the denominator.

        Raises:
            InvalidInputError: if the denominator is not positive.
        """
        if denominator < 1:
            raise InvalidInputError(f"denominator must be positive, got {denominator}")
        rows = tuple(tuple(int(v) % denominator for v in row) for row in numerators)
        return cls(rows, denominator)

    def to_torus_point(self) -> TorusPoint:
        """Return the floating point approximation."""
        return TorusPoint.from_rows(
            [[v / self.denominator for v in row] for row in self.numerators]
        )


def _check_columns(columns: int, matrix: IntegerMatrix) -> None:
    if not matrix.is_square or matrix.rows != columns:
        raise DimensionError(
            f"expected an {columns}x{columns} matrix, got {matrix.rows}x{matrix.cols}"
        )


@typing.overload
def act(theta: TorusPoint, matrix: IntegerMatrix) -> TorusPoint: ...  # noqa: E704


@typing.overload
def act(theta: RationalTorusPoint, matrix: IntegerMatrix) -> RationalTorusPoint: ...  # noqa: E704


def act(theta, matrix):
    """Apply Θ ↦ Θ·M mod 1.

    Float angles are converted to the exact dyadic rationals they represent, so the result is
    the correctly rounded image however large the entries of M are.

    Args:
        theta: a floating or rational torus point with r columns.
        matrix: an r×r integer matrix.

    Returns:
        the image point, of the same kind as theta.

    Raises:
        DimensionError: if the shapes disagree.
    """
    if isinstance(theta, RationalTorusPoint):
        columns = len(theta.numerators[0])
        _check_columns(columns, matrix)
        product = IntegerMatrix.from_rows(theta.numerators) @ matrix
        return RationalTorusPoint.of(product.to_rows(), theta.denominator)
    _check_columns(theta.r, matrix)
    exact = [[fractions.Fraction(v) for v in row] for row in theta.angles]
    rows = []
    for row in exact:
        images = []
        for j in range(matrix.cols):
            value = sum(a * matrix.at(l, j) for l, a in enumerate(row))
            images.append(_wrap_unit(float(value - math.floor(value))))
        rows.append(tuple(images))
    return TorusPoint(tuple(rows))


def apply_rows(weyl_element: IntegerMatrix, theta: TorusPoint) -> TorusPoint:
    """Return (w·Θ) mod 1 for a k×k integer matrix w acting on the rows."""
    if not weyl_element.is_square or weyl_element.rows != theta.k:
        raise DimensionError(f"cannot apply a {weyl_element.rows}-row matrix to {theta.k} rows")
    transposed = act(TorusPoint(tuple(zip(*theta.angles))), weyl_element.transpose())
    return TorusPoint(tuple(zip(*transposed.angles)))


def character(frequency: FrequencyMatrix, theta: TorusPoint) -> complex:
    """Evaluate e_N(Θ) = exp(2πi Σ N_ij θ_ij)."""
    if (frequency.rows, frequency.cols) != (theta.k, theta.r):
        raise DimensionError("frequency and point shapes differ")
    phase = sum(
        fractions.Fraction(theta.angles[i][j]) * frequency.at(i, j)
        for i in range(theta.k)
        for j in range(theta.r)
    )
    return cmath.exp(2j * math.pi * float(phase - math.floor(phase)))


def frequency_pushforward(frequency: FrequencyMatrix, matrix: IntegerMatrix) -> FrequencyMatrix:
    """Return N·M^†, so that e_N(act(Θ, M)) = e_{N·M^†}(Θ).

    Args:
        frequency: a k×r integer frequency matrix.
        matrix: an r×r integer matrix.

    Returns:
        the pushed-forward frequency.

    Raises:
        DimensionError: if the shapes disagree.
    """
    _check_columns(frequency.cols, matrix)
    return frequency @ matrix.transpose()


class Outcome(str, enum.Enum):
    """How the orbit of a frequency behaved."""

    ESCAPED = "escaped"
    PERIODIC = "periodic"
    UNDECIDED = "undecided"


class EscapeRecord(typing.NamedTuple):
    """Fate of a single frequency.

    Attributes:
        frequency: the initial frequency, row-major.
        outcome: escaped, periodic or undecided.
        steps: escape time, recurrence time or t_max.
        period: orbit period when periodic.
    """

    frequency: tuple[int, ...]
    outcome: Outcome
    steps: int
    period: int | None


class EscapeReport(typing.NamedTuple):
    """Fates of every nonzero frequency in a box.

    Attributes:
        records: one record per frequency.
        escaped: number of escaping orbits.
        periodic: number of periodic orbits.
        undecided: number of orbits still bounded at t_max.
        max_escape_steps: the slowest escape time observed.
    """

    records: tuple[EscapeRecord, ...]
    escaped: int
    periodic: int
    undecided: int
    max_escape_steps: int


def escape_report(
    matrix: IntegerMatrix, box_radius: int, escape_radius: int, t_max: int, k: int = 1
) -> EscapeReport:
    """Iterate every nonzero frequency with ‖N‖∞ <= box_radius under N ↦ N·M^†.

    A recurring value certifies a periodic orbit and hence a root-of-unity eigenvalue; an
    orbit leaving the escape radius is unbounded evidence for mixing.

    Args:
        matrix: an r×r unimodular integer matrix.
        box_radius: sup-norm radius of the initial frequency box.
        escape_radius: sup-norm threshold counted as escape.
        t_max: iteration budget per frequency.
        k: number of rows of each frequency matrix.

    Returns:
        the report.

    Raises:
        NotAnAutomorphismError: if |det M| != 1.
        InvalidInputError: if a radius or budget is negative.
    """
    if matrix.is_square and abs(matrix.det()) != 1:
        raise NotAnAutomorphismError("escape_report needs a unimodular matrix")
    if min(box_radius, escape_radius, t_max) < 0 or k < 1:
        raise InvalidInputError("radii, budget and k must be non-negative")
    _check_columns(matrix.cols, matrix)
    r = matrix.rows
    columns = [matrix.row(j) for j in range(r)]
    records = []
    span = range(-box_radius, box_radius + 1)
    for start in itertools.product(span, repeat=k * r):
        if not any(start):
            continue
        rows = [start[i * r : (i + 1) * r] for i in range(k)]
        seen = {start: 0}
        outcome, steps, period = Outcome.UNDECIDED, t_max, None
        for t in range(1, t_max + 1):
            rows = [tuple(sum(a * b for a, b in zip(row, col)) for col in columns) for row in rows]
            flat = tuple(v for row in rows for v in row)
            if max(abs(v) for v in flat) > escape_radius:
                outcome, steps = Outcome.ESCAPED, t
                break
            if flat in seen:
                outcome, steps, period = Outcome.PERIODIC, t, t - seen[flat]
                break
            seen[flat] = t
        records.append(EscapeRecord(start, outcome, steps, period))
    counts = {outcome: 0 for outcome in Outcome}
    for record in records:
        counts[record.outcome] += 1
    logger.info(
        "escape report over %d frequencies: %s",
        len(records),
        {outcome.value: count for outcome, count in counts.items()},
    )
    return EscapeReport(
        records=tuple(records),
        escaped=counts[Outcome.ESCAPED],
        periodic=counts[Outcome.PERIODIC],
        undecided=counts[Outcome.UNDECIDED],
        max_escape_steps=max(
            (rec.steps for rec in records if rec.outcome == Outcome.ESCAPED), default=0
        ),
    )


def invariant_frequencies(
    matrix: IntegerMatrix, k: int = 1
) -> tuple[FrequencyMatrix, ...] | None:
    """Find a finite pushforward orbit of nonzero frequencies.

    When some eigenvalue is a primitive d-th root of unity, M^d - I has a nonzero integer
    kernel vector v; the sum of the characters along the orbit of v is a non-constant
    M-invariant function, so the action is not ergodic.

    Args:
        matrix: a square integer matrix.
        k: number of rows of the frequency matrices.

    Returns:
        the orbit (starting at a primitive kernel vector placed in the first row) or None
        when no eigenvalue is a root of unity.
    """
    witness = has_root_of_unity_eigenvalue(matrix)
    if not witness.found:
        return None
    r = matrix.rows
    kernel = (matrix.power(witness.index).to_sympy() - sympy.eye(r)).nullspace()
    vector = kernel[0]
    scale = math.lcm(*(int(sympy.fraction(v)[1]) for v in vector))
    integral = [int(v * scale) for v in vector]
    divisor = math.gcd(*integral)
    first_row = [v // divisor for v in integral]
    start = IntegerMatrix.from_rows([first_row] + [[0] * r for _ in range(k - 1)])
    orbit = [start]
    current = frequency_pushforward(start, matrix)
    while current != start:
        orbit.append(current)
        current = frequency_pushforward(current, matrix)
    return tuple(orbit)


class Box(typing.NamedTuple):
    """Axis-aligned box of half-open intervals, one per coordinate in row-major order.

    Attributes:
        intervals: (low, high) pairs with 0 <= low <= high <= 1.
    """

    intervals: tuple[tuple[fractions.Fraction, fractions.Fraction], ...]


class SetDescriptor(typing.NamedTuple):
    """Finite union of boxes on the angle torus.

    Attributes:
        text: the descriptor text it was parsed from.
        boxes: the boxes of the union.
        full: whether the set is the whole torus.
    """

    text: str
    boxes: tuple[Box, ...]
    full: bool = False


def parse_set_descriptor(text: str) -> SetDescriptor:
    """Parse "empty", "full" or "box:a,b;c,d|box:...".

    Args:
        text: descriptor text.

    Returns:
        the descriptor.

    Raises:
        InvalidInputError: on malformed text or intervals outside [0, 1].
    """
    stripped = text.strip()
    if stripped == "empty":
        return SetDescriptor(stripped, ())
    if stripped == "full":
        return SetDescriptor(stripped, (), full=True)
    boxes = []
    for part in stripped.split("|"):
        part = part.strip()
        if not part.startswith("box:"):
            raise InvalidInputError(f"expected 'box:' in set descriptor {text!r}")
        intervals = []
        for interval in part[len("box:") :].split(";"):
            try:
                low, high = (fractions.Fraction(v.strip()) for v in interval.split(","))
            except ValueError as exc:
                raise InvalidInputError(f"malformed interval {interval!r}") from exc
            if not 0 <= low <= high <= 1:
                raise InvalidInputError(f"interval {interval!r} is not inside [0, 1]")
            intervals.append((low, high))
        boxes.append(Box(tuple(intervals)))
    return SetDescriptor(stripped, tuple(boxes))


def contains(
    descriptor: SetDescriptor,
    theta: TorusPoint,
    weyl_elements: typing.Sequence[IntegerMatrix] = (),
) -> bool:
    """Whether some W-translate of Θ lies in the set.

    Args:
        descriptor: the box union.
        theta: the point.
        weyl_elements: the group acting on rows; empty means the trivial group.

    Returns:
        the membership.
    """
    if descriptor.full:
        return True
    translates = [apply_rows(w, theta) for w in weyl_elements] if weyl_elements else [theta]
    for point in translates:
        flat = [v for row in point.angles for v in row]
        for box in descriptor.boxes:
            if len(box.intervals) != len(flat):
                raise DimensionError(
                    f"box has {len(box.intervals)} intervals for {len(flat)} coordinates"
                )
            if all(low <= v < high for v, (low, high) in zip(flat, box.intervals)):
                return True
    return False


class _BoxBounds(typing.NamedTuple):
    low: np.ndarray
    high: np.ndarray
    bounded: np.ndarray


class SamplingPlan(typing.NamedTuple):
    """Plain-data description of a sampling experiment, shipped to worker processes.

    Attributes:
        k: torus rank.
        r: number of columns.
        constraints: coordinate subsets whose sums vanish mod 1.
        weyl: Weyl elements as uint64 arrays of shape (|W|, k, k).
        powers: the matrices M^t reduced mod 2^64, shape (len(t), r, r).
        set_a: bounds of A, or None for the full torus.
        set_b: bounds of B, or None for the full torus.
    """

    k: int
    r: int
    constraints: tuple[tuple[int, ...], ...]
    weyl: np.ndarray
    powers: np.ndarray
    set_a: tuple[_BoxBounds, ...] | None
    set_b: tuple[_BoxBounds, ...] | None


def _to_uint64(matrix: IntegerMatrix) -> np.ndarray:
    return np.array(
        [[v % _MODULUS for v in row] for row in matrix.to_rows()], dtype=np.uint64
    ).reshape(matrix.rows, matrix.cols)


def _box_bounds(descriptor: SetDescriptor, coordinates: int) -> tuple[_BoxBounds, ...] | None:
    if descriptor.full:
        return None
    bounds = []
    for box in descriptor.boxes:
        if len(box.intervals) != coordinates:
            raise DimensionError(
                f"box has {len(box.intervals)} intervals for {coordinates} coordinates"
            )
        lows = [math.ceil(low * _MODULUS) for low, _ in box.intervals]
        highs = [math.ceil(high * _MODULUS) for _, high in box.intervals]
        if any(low >= high for low, high in zip(lows, highs)):
            continue
        bounds.append(
            _BoxBounds(
                low=np.array(lows, dtype=np.uint64),
                high=np.array([min(h, _MODULUS - 1) for h in highs], dtype=np.uint64),
                bounded=np.array([h < _MODULUS for h in highs], dtype=bool),
            )
        )
    return tuple(bounds)


def _apply_rows_uint64(weyl: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    k = weyl.shape[0]
    for i in range(k):
        for l in range(k):  # noqa: E741
            if weyl[i, l]:
                out[:, i, :] += values[:, l, :] * weyl[i, l]
    return out


def _apply_columns_uint64(values: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    r = matrix.shape[0]
    for j in range(r):
        for l in range(r):  # noqa: E741
            if matrix[l, j]:
                out[:, :, j] += values[:, :, l] * matrix[l, j]
    return out


def _membership(
    values: np.ndarray, bounds: tuple[_BoxBounds, ...] | None, weyl: np.ndarray
) -> np.ndarray:
    count = values.shape[0]
    if bounds is None:
        return np.ones(count, dtype=bool)
    inside = np.zeros(count, dtype=bool)
    for element in weyl:
        flat = _apply_rows_uint64(element, values).reshape(count, -1)
        for box in bounds:
            hit = np.all(flat >= box.low, axis=1)
            hit &= np.all((flat < box.high) | ~box.bounded, axis=1)
            inside |= hit
    return inside


def _draw(plan: SamplingPlan, rng: np.random.Generator, count: int) -> np.ndarray:
    values = rng.integers(
        0, np.iinfo(np.uint64).max, size=(count, plan.k, plan.r), dtype=np.uint64, endpoint=True
    )
    for subset in plan.constraints:
        total = np.zeros((count, plan.r), dtype=np.uint64)
        for index in subset[:-1]:
            total += values[:, index, :]
        values[:, subset[-1], :] = np.zeros_like(total) - total
    return values


def _count_samples(
    plan: SamplingPlan, seed: np.random.SeedSequence, samples: int
) -> tuple[int, int, list[int]]:
    """Count hits of A, B and A ∩ T^-t B over one worker's share of samples."""
    rng = np.random.default_rng(seed)
    in_a = in_b = 0
    joint = [0] * len(plan.powers)
    remaining = samples
    while remaining:
        count = min(_CHUNK, remaining)
        remaining -= count
        values = _draw(plan, rng, count)
        member_a = _membership(values, plan.set_a, plan.weyl)
        in_a += int(member_a.sum())
        in_b += int(_membership(values, plan.set_b, plan.weyl).sum())
        if not member_a.any():
            continue
        selected = values[member_a]
        for index, power in enumerate(plan.powers):
            image = _apply_columns_uint64(selected, power)
            joint[index] += int(_membership(image, plan.set_b, plan.weyl).sum())
    return in_a, in_b, joint


def _split(samples: int, workers: int) -> list[int]:
    share, extra = divmod(samples, workers)
    return [share + (1 if index < extra else 0) for index in range(workers)]


def _run_workers(
    plan: SamplingPlan, seed: int, samples: int, workers: int
) -> tuple[int, int, list[int]]:
    children = np.random.SeedSequence(seed).spawn(workers)
    tasks = [(plan, child, share) for child, share in zip(children, _split(samples, workers))]
    if workers == 1:
        results = [_count_samples(*tasks[0])]
    else:
        logger.info("distributing %d samples over %d workers", samples, workers)
        with multiprocessing.Pool(workers) as pool:
            results = pool.starmap(_count_samples, tasks)
    in_a = sum(result[0] for result in results)
    in_b = sum(result[1] for result in results)
    joint = [sum(result[2][index] for result in results) for index in range(len(plan.powers))]
    return in_a, in_b, joint


def build_plan(
    model: "GroupModel",
    matrix: IntegerMatrix,
    r: int,
    set_a: SetDescriptor,
    set_b: SetDescriptor,
    steps: typing.Sequence[int],
) -> SamplingPlan:
    """Precompute the exact matrix powers and box bounds of an experiment.

    Raises:
        DimensionError: if the matrix or boxes do not match the model.
    """
    _check_columns(r, matrix)
    coordinates = model.rank * r
    return SamplingPlan(
        k=model.rank,
        r=r,
        constraints=model.constraints,
        weyl=np.stack([_to_uint64(w) for w in model.weyl_elements]),
        powers=np.stack([_to_uint64(matrix.power(t)) for t in steps])
        if steps
        else np.zeros((0, r, r), dtype=np.uint64),
        set_a=_box_bounds(set_a, coordinates),
        set_b=_box_bounds(set_b, coordinates),
    )


class MixingPoint(typing.NamedTuple):
    """Estimate of μ(A ∩ T^-t B).

    Attributes:
        t: number of steps.
        estimate: fraction of samples with Θ in A and Θ·M^t in B.
        stderr: binomial standard error of the estimate.
    """

    t: float
    estimate: float
    stderr: float


class MixingSeries(typing.NamedTuple):
    """Correlation estimates over a list of times.

    Attributes:
        set_a: descriptor text of A.
        set_b: descriptor text of B.
        points: one estimate per time.
        baseline: empirical μ(A)·μ(B) from the same sample.
        samples: sample count.
        seed: base seed.
        workers: worker count used to split the sample range.
    """

    set_a: str
    set_b: str
    points: tuple[MixingPoint, ...]
    baseline: float
    samples: int
    seed: int
    workers: int = 1

    def to_csv(self) -> str:
        """Render the series with a header row t,estimate,stderr,baseline."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["t", "estimate", "stderr", "baseline"])
        for point in self.points:
            writer.writerow(
                [point.t, repr(point.estimate), repr(point.stderr), repr(self.baseline)]
            )
        return buffer.getvalue()

    def to_dict(self) -> dict[str, typing.Any]:
        """Return a JSON-ready mapping."""
        return {
            "set_a": self.set_a,
            "set_b": self.set_b,
            "points": [point._asdict() for point in self.points],
            "baseline": self.baseline,
            "samples": self.samples,
            "seed": self.seed,
            "workers": self.workers,
        }


def binomial_stderr(hits: int, samples: int) -> float:
    """Return √(p̂(1 - p̂)/n) for p̂ = hits/samples."""
    estimate = hits / samples
    return math.sqrt(estimate * (1.0 - estimate) / samples)


def estimate_mixing(
    model: "GroupModel",
    matrix: IntegerMatrix,
    r: int,
    set_a: SetDescriptor,
    set_b: SetDescriptor,
    steps: typing.Sequence[int],
    samples: int,
    seed: int,
    workers: int = 1,
) -> MixingSeries:
    """Estimate μ(A ∩ T^-t B) on X⁰(Z^r, K) for every t by Monte Carlo.

    Sets are interpreted W-invariantly: a point belongs to A when some Weyl translate of it
    lies in the box union.

    Args:
        model: the compact group model K.
        matrix: the r×r integer matrix of the automorphism.
        r: free rank.
        set_a: the set A.
        set_b: the set B.
        steps: the times t.
        samples: number of uniform samples.
        seed: base seed.
        workers: number of worker processes; part of the determinism contract.

    Returns:
        the mixing series.

    Raises:
        InvalidInputError: on an empty time list or no samples.
    """
    if not steps:
        raise InvalidInputError("estimate_mixing needs at least one time")
    if samples <= 0 or workers < 1:
        raise InvalidInputError("samples and workers must be positive")
    plan = build_plan(model, matrix, r, set_a, set_b, steps)
    in_a, in_b, joint = _run_workers(plan, seed, samples, workers)
    points = tuple(
        MixingPoint(t=t, estimate=hits / samples, stderr=binomial_stderr(hits, samples))
        for t, hits in zip(steps, joint)
    )
    logger.info(
        "mixing estimate for %s: μ(A)=%d/%d μ(B)=%d/%d", model.name, in_a, samples, in_b, samples
    )
    return MixingSeries(
        set_a=set_a.text,
        set_b=set_b.text,
        points=points,
        baseline=(in_a / samples) * (in_b / samples),
        samples=samples,
        seed=seed,
        workers=workers,
    )


class MeasureCheck(typing.NamedTuple):
    """Empirical masses of A and T^-1 A.

    Attributes:
        mass: fraction of samples in A.
        preimage_mass: fraction of samples whose image lies in A.
        stderr: binomial standard error of mass.
    """

    mass: float
    preimage_mass: float
    stderr: float


def estimate_measure_preservation(
    model: "GroupModel",
    matrix: IntegerMatrix,
    r: int,
    set_a: SetDescriptor,
    samples: int,
    seed: int,
) -> MeasureCheck:
    """Compare μ(A) with μ(T^-1 A) on a common sample.

    Raises:
        InvalidInputError: if samples is not positive.
    """
    if samples <= 0:
        raise InvalidInputError("samples must be positive")
    plan = build_plan(model, matrix, r, set_a, set_a, [1])
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    mass = preimage = 0
    remaining = samples
    while remaining:
        count = min(_CHUNK, remaining)
        remaining -= count
        values = _draw(plan, rng, count)
        mass += int(_membership(values, plan.set_a, plan.weyl).sum())
        image = _apply_columns_uint64(values, plan.powers[0])
        preimage += int(_membership(image, plan.set_a, plan.weyl).sum())
    return MeasureCheck(mass / samples, preimage / samples, binomial_stderr(mass, samples))


def sample_torus_point(model: "GroupModel", r: int, rng: np.random.Generator) -> TorusPoint:
    """Draw a uniform point of the (constrained) k×r torus.

    Free coordinates are sampled and the last coordinate of each constraint is solved for;
    the constraint sets are subtori, so this pushes Lebesgue measure to Lebesgue measure.
    """
    plan = SamplingPlan(
        k=model.rank,
        r=r,
        constraints=model.constraints,
        weyl=np.zeros((0, model.rank, model.rank), dtype=np.uint64),
        powers=np.zeros((0, r, r), dtype=np.uint64),
        set_a=None,
        set_b=None,
    )
    values = _draw(plan, rng, 1)[0]
    return TorusPoint(
        tuple(tuple(_wrap_unit(int(v) / _MODULUS) for v in row) for row in values)
    )


def birkhoff_character_average(
    matrix: IntegerMatrix, frequency: FrequencyMatrix, start: TorusPoint, steps: int
) -> float:
    """Return |(1/T) Σ_{t<T} e_N(Θ_t)| along Θ_{t+1} = act(Θ_t, M).

    The orbit is followed exactly on the dyadic grid 2^-64 nearest below Θ_0.

    Args:
        matrix: r×r integer matrix.
        frequency: k×r frequency.
        start: initial point Θ_0.
        steps: number of terms T.

    Returns:
        the magnitude of the ergodic average.

    Raises:
        InvalidInputError: if steps is zero.
        DimensionError: if the shapes disagree.
    """
    if steps <= 0:
        raise InvalidInputError("birkhoff average needs at least one step")
    _check_columns(start.r, matrix)
    if (frequency.rows, frequency.cols) != (start.k, start.r):
        raise DimensionError("frequency and point shapes differ")
    reduced = [[v % _MODULUS for v in row] for row in matrix.to_rows()]
    weights = [[frequency.at(i, j) % _MODULUS for j in range(start.r)] for i in range(start.k)]
    state = [
        [int(fractions.Fraction(v) * _MODULUS) % _MODULUS for v in row] for row in start.angles
    ]
    phases = np.empty(steps, dtype=np.float64)
    columns = list(zip(*reduced))
    for t in range(steps):
        phase = sum(w * v for wrow, srow in zip(weights, state) for w, v in zip(wrow, srow))
        phases[t] = (phase % _MODULUS) / _MODULUS
        state = [
            [sum(a * b for a, b in zip(row, col)) % _MODULUS for col in columns] for row in state
        ]
    return float(abs(np.exp(2j * np.pi * phases).mean()))
