# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""A one-parameter flow on SL(n, R)/SL(n, Z) lifted to the bundle F_K.

F_K = (SL(n, R) × X⁰(Z^n, K))/SL(n, Z) where γ acts by (g, x) ↦ (g·γ, x·γ). The basis is
pushed by exp(t·X) from the left; whenever it leaves the LLL-reduced region it is brought
back by a unimodular U on the right, and the same U acts on the fiber.
"""

import csv
import dataclasses
import io
import logging
import math
import multiprocessing
import typing

import fpylll
import numpy as np
from scipy import linalg

from errors import DimensionError, InternalError, InvalidInputError
from exact_linalg import IntegerMatrix
from group_models import (
    GroupModel,
    QuotientPoint,
    act_on_quotient,
    parse_model,
    to_quotient,
)
from torus_dynamics import (
    MixingPoint,
    MixingSeries,
    SetDescriptor,
    contains,
    sample_torus_point,
)

logger = logging.getLogger(__name__)

LLL_DELTA = 0.75
LLL_ETA = 0.51
LLL_SCALE_BITS = 40
SIZE_REDUCTION_SLACK = 1e-9
DET_TOLERANCE = 1e-9
TRACE_TOLERANCE = 1e-12
NONCOMPACT_HORIZON = 50.0
NONCOMPACT_THRESHOLD = 10.0


def _gram_schmidt(basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the Gram-Schmidt vectors (as columns) and the coefficients μ_ij."""
    n = basis.shape[1]
    ortho = np.zeros_like(basis, dtype=np.float64)
    mu = np.eye(n)
    for i in range(n):
        vector = basis[:, i].astype(np.float64)
        for j in range(i):
            mu[i, j] = basis[:, i] @ ortho[:, j] / (ortho[:, j] @ ortho[:, j])
            vector = vector - mu[i, j] * ortho[:, j]
        ortho[:, i] = vector
    return ortho, mu


def is_reduced(basis: np.ndarray, delta: float = LLL_DELTA, eta: float = LLL_ETA) -> bool:
    """Whether the columns satisfy |μ_ij| <= η and the Lovász condition for δ."""
    ortho, mu = _gram_schmidt(np.asarray(basis, dtype=np.float64))
    n = ortho.shape[1]
    for i in range(1, n):
        if np.any(np.abs(mu[i, :i]) > eta + SIZE_REDUCTION_SLACK):
            return False
        lhs = ortho[:, i] @ ortho[:, i]
        rhs = (delta - mu[i, i - 1] ** 2) * (ortho[:, i - 1] @ ortho[:, i - 1])
        if lhs < rhs * (1 - SIZE_REDUCTION_SLACK):
            return False
    return True


def _swap_columns(rows: list[list[int]], i: int, j: int) -> None:
    for row in rows:
        row[i], row[j] = row[j], row[i]


def lll_reduce(basis: np.ndarray, delta: float = LLL_DELTA) -> tuple[np.ndarray, IntegerMatrix]:
    """LLL-reduce the columns of a real basis with fplll.

    The columns are scaled to LLL_SCALE_BITS-bit integers and reduced as the rows of an
    fpylll matrix; the transformation matrix comes back in exact integers.

    Args:
        basis: n×n real matrix whose columns span the lattice.
        delta: Lovász parameter in (η², 1).

    Returns:
        (basis·U, U) with U unimodular.

    Raises:
        InvalidInputError: if delta is out of range or the basis vanishes.
        DimensionError: if the basis is not square.
    """
    if not LLL_ETA**2 < delta < 1:
        raise InvalidInputError(f"delta must lie in ({LLL_ETA**2}, 1), got {delta}")
    work = np.asarray(basis, dtype=np.float64)
    if work.ndim != 2 or work.shape[0] != work.shape[1]:
        raise DimensionError(f"lll_reduce needs a square basis, got shape {work.shape}")
    largest = float(np.max(np.abs(work)))
    if not largest:
        raise InvalidInputError("cannot reduce the zero basis")
    scaled = np.rint(work.T * (2.0**LLL_SCALE_BITS / largest))
    lattice = fpylll.IntegerMatrix.from_matrix([[int(v) for v in row] for row in scaled])
    transform = fpylll.IntegerMatrix.identity(lattice.nrows)
    fpylll.LLL.reduction(lattice, transform, delta=delta, eta=LLL_ETA)
    rows = [[0] * transform.ncols for _ in range(transform.nrows)]
    transform.to_matrix(rows)
    # fpylll reduces rows: U·Bᵀ is reduced, so the column transform is Uᵀ.
    unimodular = IntegerMatrix.from_rows(rows).transpose()
    return work @ _as_float(unimodular), unimodular


def gauss_reduce(basis: np.ndarray) -> tuple[np.ndarray, IntegerMatrix]:
    """Lagrange reduction of a rank-two lattice; the first column is a shortest vector.

    Raises:
        DimensionError: if the basis is not 2×2.
    """
    work = np.array(basis, dtype=np.float64)
    if work.shape != (2, 2):
        raise DimensionError("gauss_reduce needs a 2x2 basis")
    transform = [[1, 0], [0, 1]]
    while True:
        if work[:, 1] @ work[:, 1] < work[:, 0] @ work[:, 0]:
            work[:, [0, 1]] = work[:, [1, 0]]
            _swap_columns(transform, 0, 1)
        q = int(round(float(work[:, 0] @ work[:, 1]) / float(work[:, 0] @ work[:, 0])))
        if not q:
            break
        work[:, 1] -= q * work[:, 0]
        for row in transform:
            row[1] -= q * row[0]
    unimodular = IntegerMatrix.from_rows(transform)
    return np.asarray(basis, dtype=np.float64) @ _as_float(unimodular), unimodular


def _as_float(matrix: IntegerMatrix) -> np.ndarray:
    return np.array(matrix.to_rows(), dtype=np.float64).reshape(matrix.rows, matrix.cols)


@dataclasses.dataclass(frozen=True, eq=False)
class FlowGenerator:
    """A traceless generator X of a one-parameter subgroup of SL(n, R).

    Attributes:
        matrix: the n×n real matrix X.
        noncompact: whether ‖exp(±50·X)‖ exceeds 10.
    """

    matrix: np.ndarray
    noncompact: bool

    @property
    def n(self) -> int:
        """Matrix size."""
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        """Spectral norm ‖X‖₂."""
        return float(np.linalg.norm(self.matrix, 2))


def make_generator(matrix: typing.Any) -> FlowGenerator:
    """Validate X and certify noncompactness numerically.

    Raises:
        DimensionError: if X is not square.
        InvalidInputError: if trace(X) is not zero.
    """
    array = np.array(matrix, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise DimensionError(f"flow generator must be square, got shape {array.shape}")
    if abs(np.trace(array)) > TRACE_TOLERANCE:
        raise InvalidInputError(f"flow generator has trace {np.trace(array)}, expected 0")
    growth = max(
        np.linalg.norm(linalg.expm(sign * NONCOMPACT_HORIZON * array), 2) for sign in (1, -1)
    )
    return FlowGenerator(array, bool(growth > NONCOMPACT_THRESHOLD))


@dataclasses.dataclass(frozen=True, eq=False)
class FlowState:
    """A point of F_K.

    Attributes:
        basis: n×n real matrix of determinant 1.
        fiber: class of the fiber point in X⁰(Z^n, K).
        holonomy_log: unimodular renormalizations applied so far, oldest first.
        time: flow time.
    """

    basis: np.ndarray
    fiber: QuotientPoint
    holonomy_log: tuple[IntegerMatrix, ...] = ()
    time: float = 0.0

    def __post_init__(self) -> None:
        """Check the shapes and the determinant.

        Raises:
            DimensionError: if the basis does not match the fiber's column count.
            InvalidInputError: if det(basis) is not 1.
        """
        if self.basis.shape != (self.fiber.theta.r, self.fiber.theta.r):
            raise DimensionError(
                f"basis of shape {self.basis.shape} for a fiber with {self.fiber.theta.r} columns"
            )
        det = np.linalg.det(self.basis)
        if abs(det - 1.0) > 1e-6:
            raise InvalidInputError(f"basis determinant {det} is not 1")

    @property
    def model(self) -> GroupModel:
        """The compact group of the fiber."""
        return self.fiber.model

    def holonomy(self) -> IntegerMatrix:
        """Product of the logged renormalizations, in the order they were applied."""
        product = IntegerMatrix.identity(self.basis.shape[0])
        for unimodular in self.holonomy_log:
            product = product @ unimodular
        return product


def _project_det(basis: np.ndarray) -> np.ndarray:
    det = np.linalg.det(basis)
    if det <= 0:
        raise InternalError(f"basis lost orientation (det {det})")
    if abs(det - 1.0) < DET_TOLERANCE / 10:
        return basis
    return basis / det ** (1.0 / basis.shape[0])


def _renormalize(
    state: FlowState, basis: np.ndarray, force: bool = False
) -> tuple[FlowState, bool]:
    if not force and is_reduced(basis):
        return dataclasses.replace(state, basis=basis), False
    _, unimodular = lll_reduce(basis)
    if unimodular.det() < 0:
        n = unimodular.rows
        unimodular = unimodular @ IntegerMatrix.diagonal([1] * (n - 1) + [-1])
    if unimodular == IntegerMatrix.identity(unimodular.rows):
        return dataclasses.replace(state, basis=basis), False
    logger.debug("renormalizing at t=%s with %s", state.time, unimodular)
    return (
        dataclasses.replace(
            state,
            basis=_project_det(basis @ _as_float(unimodular)),
            fiber=act_on_quotient(state.model, state.fiber, unimodular),
            holonomy_log=state.holonomy_log + (unimodular,),
        ),
        True,
    )


def _advance(
    state: FlowState, propagator: np.ndarray, dt: float
) -> tuple[FlowState, bool]:
    basis = _project_det(propagator @ state.basis)
    moved = dataclasses.replace(state, time=state.time + dt)
    return _renormalize(moved, basis)


def _check_step(generator: FlowGenerator, state: FlowState, dt: float) -> None:
    if generator.n != state.basis.shape[0]:
        raise DimensionError(
            f"generator of size {generator.n} for an n={state.basis.shape[0]} state"
        )
    if dt <= 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if dt * generator.norm > 1.0 + 1e-12:
        raise InvalidInputError(f"step too large: ‖dt·X‖ = {dt * generator.norm} exceeds 1")


def step(state: FlowState, generator: FlowGenerator, dt: float) -> FlowState:
    """Advance by dt: basis ← exp(dt·X)·basis, then renormalize if needed.

    Args:
        state: current point of F_K.
        generator: the flow generator.
        dt: positive step with ‖dt·X‖₂ <= 1.

    Returns:
        the new state.

    Raises:
        InvalidInputError: if dt is not positive or too large.
        DimensionError: if the sizes disagree.
    """
    _check_step(generator, state, dt)
    return _advance(state, linalg.expm(dt * generator.matrix), dt)[0]


def default_dt(generator: FlowGenerator) -> float:
    """Largest step allowed for X, or 1 for X = 0."""
    return 1.0 / generator.norm if generator.norm > 0 else 1.0


class TrajectoryRow(typing.NamedTuple):
    """One step of a run log.

    Attributes:
        t: time after the step.
        reduced: whether a renormalization happened.
        holonomy_index: index into holonomy_log of the renormalization, if any.
    """

    t: float
    reduced: bool
    holonomy_index: int | None


class Trajectory(typing.NamedTuple):
    """A simulated run.

    Attributes:
        initial: starting state.
        final: state at the end time.
        rows: per-step log.
    """

    initial: FlowState
    final: FlowState
    rows: tuple[TrajectoryRow, ...]

    def to_csv(self) -> str:
        """Render the log with a header row t,reduced,holonomy_index."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["t", "reduced", "holonomy_index"])
        for row in self.rows:
            writer.writerow(
                [
                    repr(row.t),
                    str(row.reduced).lower(),
                    "" if row.holonomy_index is None else row.holonomy_index,
                ]
            )
        return buffer.getvalue()


def run_trajectory(
    state: FlowState, generator: FlowGenerator, t_end: float, dt: float | None = None
) -> Trajectory:
    """Integrate from state.time to t_end; the last step is shortened to land exactly.

    Raises:
        InvalidInputError: if t_end precedes the current time or dt is invalid.
    """
    dt = default_dt(generator) if dt is None else dt
    _check_step(generator, state, dt)
    if t_end < state.time:
        raise InvalidInputError(f"cannot flow backwards from {state.time} to {t_end}")
    propagator = linalg.expm(dt * generator.matrix)
    start = state.time
    span = t_end - start
    full_steps = math.floor(span / dt + 1e-9)
    remainder = span - full_steps * dt
    plan = [(propagator, dt, start + (index + 1) * dt) for index in range(full_steps)]
    if remainder > 1e-12:
        plan.append((linalg.expm(remainder * generator.matrix), remainder, t_end))
    current = state
    rows = []
    for matrix, length, arrival in plan:
        current, reduced = _advance(current, matrix, length)
        current = dataclasses.replace(current, time=min(arrival, t_end))
        rows.append(
            TrajectoryRow(
                current.time, reduced, len(current.holonomy_log) - 1 if reduced else None
            )
        )
    if rows:
        current = dataclasses.replace(current, time=t_end)
    return Trajectory(state, current, tuple(rows))


def evolve(
    state: FlowState, generator: FlowGenerator, t_end: float, dt: float | None = None
) -> FlowState:
    """Return the state at time t_end."""
    return run_trajectory(state, generator, t_end, dt).final


def reduce_state(state: FlowState) -> FlowState:
    """Apply one LLL renormalization regardless of the reducedness test."""
    return _renormalize(state, state.basis, force=True)[0]


def replay_holonomy(
    initial: QuotientPoint, holonomy_log: typing.Iterable[IntegerMatrix]
) -> QuotientPoint:
    """Apply the logged renormalizations to an initial fiber, in order."""
    fiber = initial
    for unimodular in holonomy_log:
        fiber = act_on_quotient(fiber.model, fiber, unimodular)
    return fiber


def _circular_distance(first: QuotientPoint, second: QuotientPoint) -> float:
    a = first.theta.as_array()
    b = second.theta.as_array()
    difference = np.abs(a - b) % 1.0
    return float(np.max(np.minimum(difference, 1.0 - difference)))


def same_bundle_point(first: FlowState, second: FlowState, tolerance: float = 1e-6) -> bool:
    """Whether two states represent the same point of F_K.

    The bases must differ by a unimodular integer W on the right, and the fibers by the
    action of the same W.
    """
    if first.basis.shape != second.basis.shape:
        return False
    relative = np.linalg.solve(first.basis, second.basis)
    rounded = np.rint(relative)
    if np.max(np.abs(relative - rounded)) > tolerance:
        return False
    change = IntegerMatrix.from_rows(rounded.astype(np.int64).tolist())
    if abs(change.det()) != 1:
        return False
    moved = act_on_quotient(first.model, first.fiber, change)
    return _circular_distance(moved, second.fiber) <= 1e-9


def random_flow_state(
    model: GroupModel, n: int, rng: np.random.Generator, scale: float = 1.0
) -> FlowState:
    """Draw basis = exp(A) for a random traceless A and a uniform fiber.

    Raises:
        InvalidInputError: if n < 1.
    """
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    generator = rng.normal(scale=scale, size=(n, n))
    generator -= np.trace(generator) / n * np.eye(n)
    basis = _project_det(linalg.expm(generator))
    fiber = to_quotient(model, sample_torus_point(model, n, rng))
    return FlowState(basis=basis, fiber=fiber)


@dataclasses.dataclass(frozen=True)
class Constant:
    """The constant observable."""

    value: float = 1.0

    @property
    def name(self) -> str:
        """Label used in result files."""
        return f"constant({self.value})"

    def __call__(self, state: FlowState) -> float:
        """Evaluate."""
        return self.value


@dataclasses.dataclass(frozen=True)
class ShortestVectorBelow:
    """Indicator that the lattice has a nonzero vector shorter than the threshold."""

    threshold: float

    @property
    def name(self) -> str:
        """Label used in result files."""
        return f"shortest_vector_below({self.threshold})"

    def __call__(self, state: FlowState) -> float:
        """Evaluate."""
        if state.basis.shape == (2, 2):
            reduced, _ = gauss_reduce(state.basis)
        else:
            reduced, _ = lll_reduce(state.basis)
        shortest = float(np.min(np.linalg.norm(reduced, axis=0)))
        return 1.0 if shortest < self.threshold else 0.0


@dataclasses.dataclass(frozen=True)
class ReducedGramEntry:
    """Entry (i, j) of the Gram matrix of the LLL-reduced basis, clipped to [-cap, cap]."""

    i: int
    j: int
    cap: float

    @property
    def name(self) -> str:
        """Label used in result files."""
        return f"reduced_gram_entry({self.i},{self.j},{self.cap})"

    def __call__(self, state: FlowState) -> float:
        """Evaluate."""
        reduced, _ = lll_reduce(state.basis)
        gram = reduced.T @ reduced
        return float(np.clip(gram[self.i, self.j], -self.cap, self.cap))


@dataclasses.dataclass(frozen=True)
class FiberBox:
    """W-invariant indicator of a box union on the fiber."""

    descriptor: SetDescriptor

    @property
    def name(self) -> str:
        """Label used in result files."""
        return f"fiber_box({self.descriptor.text})"

    def __call__(self, state: FlowState) -> float:
        """Evaluate."""
        inside = contains(self.descriptor, state.fiber.theta, state.model.weyl_elements)
        return 1.0 if inside else 0.0


Observable = Constant | ShortestVectorBelow | ReducedGramEntry | FiberBox


class _Sums(typing.NamedTuple):
    base: float
    fiber: list[float]
    joint: list[float]
    joint_squares: list[float]


def _ensemble_sums(
    model_name: str,
    n: int,
    generator: np.ndarray,
    base_observable: Observable,
    fiber_observable: Observable,
    times: tuple[float, ...],
    seed: np.random.SeedSequence,
    members: int,
) -> _Sums:
    """Accumulate the moments over one worker's share of the ensemble."""
    model = parse_model(model_name)
    flow = make_generator(generator)
    rng = np.random.default_rng(seed)
    base = 0.0
    fiber = [0.0] * len(times)
    joint = [0.0] * len(times)
    squares = [0.0] * len(times)
    order = sorted(range(len(times)), key=lambda index: times[index])
    for _ in range(members):
        state = random_flow_state(model, n, rng)
        f = base_observable(state)
        base += f
        for index in order:
            state = evolve(state, flow, times[index])
            g = fiber_observable(state)
            fiber[index] += g
            joint[index] += f * g
            squares[index] += (f * g) ** 2
    return _Sums(base, fiber, joint, squares)


def flow_correlation(
    ensemble: int,
    generator: FlowGenerator,
    base_observable: Observable,
    fiber_observable: Observable,
    times: typing.Sequence[float],
    seed: int,
    model: GroupModel,
    workers: int = 1,
) -> MixingSeries:
    """Estimate E[f(state₀)·g(state_t)] - E[f]·E[g(state_t)] over random initial states.

    Args:
        ensemble: number of initial states.
        generator: the flow generator.
        base_observable: f, evaluated at time 0.
        fiber_observable: g, evaluated at each time t.
        times: the times t.
        seed: base seed.
        model: compact group of the fiber; must be a built-in descriptor.
        workers: number of worker processes.

    Returns:
        a series whose estimates are the correlations and whose baseline is their mixing
        limit, 0.

    Raises:
        InvalidInputError: on an empty ensemble or time list.
    """
    if ensemble <= 0:
        raise InvalidInputError("flow_correlation needs a non-empty ensemble")
    if not times or workers < 1:
        raise InvalidInputError("flow_correlation needs times and a positive worker count")
    if any(t < 0 for t in times):
        raise InvalidInputError("times must be non-negative")
    share, extra = divmod(ensemble, workers)
    children = np.random.SeedSequence(seed).spawn(workers)
    tasks = [
        (
            model.name,
            generator.n,
            generator.matrix,
            base_observable,
            fiber_observable,
            tuple(float(t) for t in times),
            child,
            share + (1 if index < extra else 0),
        )
        for index, child in enumerate(children)
    ]
    if workers == 1:
        results = [_ensemble_sums(*tasks[0])]
    else:
        logger.info("distributing an ensemble of %d over %d workers", ensemble, workers)
        with multiprocessing.Pool(workers) as pool:
            results = pool.starmap(_ensemble_sums, tasks)
    base_mean = sum(result.base for result in results) / ensemble
    points = []
    for index, t in enumerate(times):
        fiber_mean = sum(result.fiber[index] for result in results) / ensemble
        joint_mean = sum(result.joint[index] for result in results) / ensemble
        square_mean = sum(result.joint_squares[index] for result in results) / ensemble
        variance = max(square_mean - joint_mean**2, 0.0)
        points.append(
            MixingPoint(
                t=float(t),
                estimate=joint_mean - base_mean * fiber_mean,
                stderr=math.sqrt(variance / ensemble),
            )
        )
    return MixingSeries(
        set_a=base_observable.name,
        set_b=fiber_observable.name,
        points=tuple(points),
        baseline=0.0,
        samples=ensemble,
        seed=seed,
        workers=workers,
    )
