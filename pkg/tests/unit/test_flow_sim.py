# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Unit tests for the flow on the bundle F_K."""

import numpy as np
import pytest

import flow_sim
import group_models
import torus_dynamics
from errors import DimensionError, InvalidInputError
from exact_linalg import IntegerMatrix
from flow_sim import FlowState
from torus_dynamics import TorusPoint

DIAGONAL = [[1.0, 0.0], [0.0, -1.0]]


@pytest.fixture(name="torus_model")
def torus_model_fixture():
    """The rank one torus."""
    return group_models.parse_model("T1")


@pytest.fixture(name="unit_state")
def unit_state_fixture(torus_model):
    """The standard lattice with fiber point (0.3, 0.1)."""
    fiber = group_models.to_quotient(torus_model, TorusPoint.from_rows([[0.3, 0.1]]))
    return FlowState(basis=np.eye(2), fiber=fiber)


def test_lll_reduces_skewed_basis():
    """
    arrange: the basis with columns (1, 0) and (5, 1).
    act: LLL-reduce it.
    assert: the result is reduced, equals basis·U and U is unimodular.
    """
    basis = np.array([[1.0, 5.0], [0.0, 1.0]])

    reduced, unimodular = flow_sim.lll_reduce(basis)

    assert flow_sim.is_reduced(reduced)
    assert np.allclose(reduced, basis @ np.array(unimodular.to_rows(), dtype=float))
    assert abs(unimodular.det()) == 1
    assert np.allclose(np.abs(reduced), np.eye(2))


def test_lll_random_bases(rng):
    """
    arrange: random bases of SL(3, R).
    act: LLL-reduce them.
    assert: every result is reduced with a unimodular change of basis.
    """
    model = group_models.parse_model("T1")
    for _ in range(30):
        basis = flow_sim.random_flow_state(model, 3, rng, scale=1.5).basis

        reduced, unimodular = flow_sim.lll_reduce(basis)

        assert flow_sim.is_reduced(reduced)
        assert abs(unimodular.det()) == 1
        assert np.allclose(reduced, basis @ np.array(unimodular.to_rows(), dtype=float))


def test_lll_rejects_bad_delta():
    """
    arrange: δ = 1.
    act: LLL-reduce.
    assert: an InvalidInputError is raised.
    """
    with pytest.raises(InvalidInputError):
        flow_sim.lll_reduce(np.eye(2), delta=1.0)


def test_lll_rejects_degenerate_bases():
    """
    arrange: a 2×3 basis and the zero basis.
    act: LLL-reduce them.
    assert: a DimensionError and an InvalidInputError are raised.
    """
    with pytest.raises(DimensionError):
        flow_sim.lll_reduce(np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        flow_sim.lll_reduce(np.zeros((2, 2)))


def test_lll_matches_gauss_on_planar_lattices(rng, torus_model):
    """
    arrange: random bases of SL(2, R).
    act: reduce them with LLL and with Gauss reduction.
    assert: both first vectors have the same length up to the LLL approximation factor.
    """
    factor = (1 / (flow_sim.LLL_DELTA - flow_sim.LLL_ETA**2)) ** 0.5
    for _ in range(30):
        basis = flow_sim.random_flow_state(torus_model, 2, rng, scale=2.0).basis

        gauss, _ = flow_sim.gauss_reduce(basis)
        lll, unimodular = flow_sim.lll_reduce(basis)

        assert np.linalg.norm(lll[:, 0]) <= factor * np.linalg.norm(gauss[:, 0]) + 1e-9
        assert abs(unimodular.det()) == 1


def test_gauss_reduce_finds_shortest_vector(rng, torus_model):
    """
    arrange: random bases of SL(2, R).
    act: Gauss- and LLL-reduce them.
    assert: the Gauss vector is never longer than the LLL first vector.
    """
    for _ in range(30):
        basis = flow_sim.random_flow_state(torus_model, 2, rng, scale=2.0).basis

        gauss, _ = flow_sim.gauss_reduce(basis)
        lll, _ = flow_sim.lll_reduce(basis)

        assert np.linalg.norm(gauss[:, 0]) <= np.linalg.norm(lll[:, 0]) + 1e-9


def test_make_generator_classifies():
    """
    arrange: a diagonal, a rotation, a nilpotent and the zero generator.
    act: validate them.
    assert: only the rotation and zero generators are compact.
    """
    assert flow_sim.make_generator(DIAGONAL).noncompact
    assert flow_sim.make_generator([[0.0, 1.0], [0.0, 0.0]]).noncompact
    assert not flow_sim.make_generator([[0.0, 1.0], [-1.0, 0.0]]).noncompact
    assert not flow_sim.make_generator(np.zeros((2, 2))).noncompact


def test_make_generator_rejects_trace():
    """
    arrange: a generator of trace 1.
    act: validate it.
    assert: an InvalidInputError is raised.
    """
    with pytest.raises(InvalidInputError):
        flow_sim.make_generator([[1.0, 0.0], [0.0, 0.0]])


def test_flow_state_rejects_bad_determinant(unit_state):
    """
    arrange: a basis of determinant 2.
    act: build a state.
    assert: an InvalidInputError is raised.
    """
    with pytest.raises(InvalidInputError):
        FlowState(basis=np.diag([2.0, 1.0]), fiber=unit_state.fiber)


def test_zero_generator_step_is_trivial(unit_state):
    """
    arrange: X = 0 and a reduced starting basis.
    act: take one step.
    assert: the basis and fiber are unchanged and nothing is logged.
    """
    moved = flow_sim.step(unit_state, flow_sim.make_generator(np.zeros((2, 2))), 0.5)

    assert np.allclose(moved.basis, unit_state.basis)
    assert moved.fiber == unit_state.fiber
    assert moved.holonomy_log == ()
    assert moved.time == 0.5


@pytest.mark.parametrize("dt", [0.0, -0.1, 2.0])
def test_step_rejects_bad_dt(unit_state, dt):
    """
    arrange: a non-positive step or one with ‖dt·X‖ > 1.
    act: take a step.
    assert: an InvalidInputError is raised.
    """
    with pytest.raises(InvalidInputError):
        flow_sim.step(unit_state, flow_sim.make_generator(DIAGONAL), dt)


def test_step_rejects_size_mismatch(unit_state):
    """
    arrange: a 3×3 generator for an n = 2 state.
    act: take a step.
    assert: a DimensionError is raised.
    """
    generator = flow_sim.make_generator(np.diag([1.0, 0.0, -1.0]))

    with pytest.raises(DimensionError):
        flow_sim.step(unit_state, generator, 0.1)


def test_diagonal_flow_renormalizes(unit_state):
    """
    arrange: the standard lattice and X = diag(1, -1).
    act: flow to t = 5 with dt = 0.1.
    assert: renormalizations are logged with determinant 1 and replay to the fiber.
    """
    trajectory = flow_sim.run_trajectory(unit_state, flow_sim.make_generator(DIAGONAL), 5.0, 0.1)
    final = trajectory.final

    assert final.holonomy_log
    assert all(unimodular.det() == 1 for unimodular in final.holonomy_log)
    assert final.holonomy().det() == 1
    assert flow_sim.replay_holonomy(unit_state.fiber, final.holonomy_log) == final.fiber
    assert final.time == 5.0
    assert trajectory.rows[-1].t == 5.0
    assert sum(row.reduced for row in trajectory.rows) == len(final.holonomy_log)


def test_trajectory_lands_on_end_time(unit_state):
    """
    arrange: an end time that is not a multiple of dt.
    act: run the trajectory.
    assert: the last step is shortened and arrives exactly at t_end.
    """
    trajectory = flow_sim.run_trajectory(unit_state, flow_sim.make_generator(DIAGONAL), 1.05, 0.5)

    assert [row.t for row in trajectory.rows] == pytest.approx([0.5, 1.0, 1.05])
    assert trajectory.final.time == 1.05


def test_trajectory_csv(unit_state):
    """
    arrange: a short trajectory.
    act: render its log.
    assert: the header and one line per step are present.
    """
    trajectory = flow_sim.run_trajectory(unit_state, flow_sim.make_generator(DIAGONAL), 1.0, 0.25)

    lines = trajectory.to_csv().splitlines()

    assert lines[0] == "t,reduced,holonomy_index"
    assert len(lines) == 5


def test_long_run_stays_reduced(rng):
    """
    arrange: a random starting state with a U2 fiber.
    act: flow to t = 100 one step at a time.
    assert: after every step the basis is reduced, its first vector obeys the LLL bound and
        the determinant stays 1; at the end the fiber replays.
    """
    model = group_models.parse_model("U2")
    state = flow_sim.random_flow_state(model, 2, rng)
    generator = flow_sim.make_generator(DIAGONAL)
    bound = (1 / (flow_sim.LLL_DELTA - flow_sim.LLL_ETA**2)) ** 0.25

    current = state
    for _ in range(100):
        current = flow_sim.step(current, generator, 1.0)

        assert flow_sim.is_reduced(current.basis)
        assert np.linalg.norm(current.basis[:, 0]) <= bound + 1e-6
        assert np.linalg.det(current.basis) == pytest.approx(1.0, abs=1e-6)
    assert current.time == pytest.approx(100.0)
    assert flow_sim.replay_holonomy(state.fiber, current.holonomy_log) == current.fiber


def test_equivariance(rng):
    """
    arrange: an evolved state and its translate by V in SL(2, Z).
    act: compare them, also after forcing an LLL renormalization of each.
    assert: they represent the same point of F_K.
    """
    model = group_models.parse_model("U2")
    state = flow_sim.evolve(
        flow_sim.random_flow_state(model, 2, rng), flow_sim.make_generator(DIAGONAL), 3.0
    )
    change = IntegerMatrix.from_rows([[2, 1], [1, 1]])
    translate = FlowState(
        basis=state.basis @ np.array(change.to_rows(), dtype=float),
        fiber=group_models.act_on_quotient(model, state.fiber, change),
    )

    assert flow_sim.same_bundle_point(state, translate)
    assert flow_sim.same_bundle_point(
        flow_sim.reduce_state(state), flow_sim.reduce_state(translate)
    )


def test_different_fibers_are_different_points(unit_state, torus_model):
    """
    arrange: two states with the same basis and different fibers.
    act: compare them.
    assert: they are not the same point.
    """
    other = FlowState(
        basis=unit_state.basis,
        fiber=group_models.to_quotient(torus_model, TorusPoint.from_rows([[0.5, 0.1]])),
    )

    assert not flow_sim.same_bundle_point(unit_state, other)


def test_observables(unit_state):
    """
    arrange: the standard lattice with fiber (0.3, 0.1).
    act: evaluate the built-in observables.
    assert: the values match the lattice and fiber.
    """
    box = torus_dynamics.parse_set_descriptor("box:0,0.5;0,0.5")

    assert flow_sim.Constant()(unit_state) == 1.0
    assert flow_sim.ShortestVectorBelow(0.9)(unit_state) == 0.0
    assert flow_sim.ShortestVectorBelow(1.1)(unit_state) == 1.0
    assert flow_sim.ReducedGramEntry(0, 0, 10.0)(unit_state) == pytest.approx(1.0)
    assert flow_sim.FiberBox(box)(unit_state) == 1.0


def test_constant_observable_has_no_correlation(torus_model):
    """
    arrange: f = 1.
    act: estimate the correlation at several times.
    assert: every estimate is zero.
    """
    box = torus_dynamics.parse_set_descriptor("box:0,0.5;0,0.5")

    series = flow_sim.flow_correlation(
        100,
        flow_sim.make_generator(DIAGONAL),
        flow_sim.Constant(),
        flow_sim.FiberBox(box),
        [0.0, 2.0, 5.0],
        3,
        torus_model,
    )

    assert [point.estimate for point in series.points] == pytest.approx([0.0] * 3, abs=1e-12)
    assert series.baseline == 0.0


def test_correlation_at_time_zero_is_variance(torus_model):
    """
    arrange: f = g = the short-vector indicator.
    act: estimate the correlation at t = 0.
    assert: it is the empirical variance p - p², which lies in [0, 1/4].
    """
    observable = flow_sim.ShortestVectorBelow(0.9)

    series = flow_sim.flow_correlation(
        200, flow_sim.make_generator(DIAGONAL), observable, observable, [0.0], 4, torus_model
    )

    assert series.points[0].estimate >= 0.0
    assert series.points[0].estimate <= 0.25


def test_fiber_correlation_vanishes(torus_model):
    """
    arrange: f = short-vector indicator, g = fiber box, n = 2, K = U(1).
    act: estimate the correlation at t = 20.
    assert: it is within four standard errors of zero.
    """
    box = torus_dynamics.parse_set_descriptor("box:0,0.5;0,0.5")

    series = flow_sim.flow_correlation(
        1000,
        flow_sim.make_generator(DIAGONAL),
        flow_sim.ShortestVectorBelow(0.9),
        flow_sim.FiberBox(box),
        [20.0],
        12,
        torus_model,
    )

    point = series.points[0]
    assert abs(point.estimate) < 4 * point.stderr + 1e-3


def test_flow_correlation_is_deterministic(torus_model):
    """
    arrange: a fixed seed, first in one process and then over two workers.
    act: estimate twice in each setting.
    assert: each setting reproduces its series exactly.
    """
    box = torus_dynamics.parse_set_descriptor("box:0,0.5;0,0.5")
    generator = flow_sim.make_generator(DIAGONAL)
    args = (flow_sim.ShortestVectorBelow(0.9), flow_sim.FiberBox(box), [1.0, 3.0], 8, torus_model)

    single = [flow_sim.flow_correlation(40, generator, *args) for _ in range(2)]
    pooled = [flow_sim.flow_correlation(40, generator, *args, workers=2) for _ in range(2)]

    assert single[0] == single[1]
    assert pooled[0] == pooled[1]


def test_flow_correlation_rejects_empty_ensemble(torus_model):
    """
    arrange: an empty ensemble.
    act: estimate the correlation.
    assert: an InvalidInputError is raised.
    """
    with pytest.raises(InvalidInputError):
        flow_sim.flow_correlation(
            0,
            flow_sim.make_generator(DIAGONAL),
            flow_sim.Constant(),
            flow_sim.Constant(),
            [1.0],
            1,
            torus_model,
        )
