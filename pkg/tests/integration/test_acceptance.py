# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Acceptance-scale runs of the dynamics, combinatorics and flow engines."""

import itertools
import json

import numpy as np
import pytest

import cli
import exact_linalg
import exotic_components
import flow_sim
import group_models
import nilpotent_catalog
import torus_dynamics
from exact_linalg import IntegerMatrix
from exotic_components import SkewFormFp
from nilpotent_catalog import NilpotentGroupDescriptor

QUARTER_BOX = "box:0,0.5;0,0.5"
DIAGONAL = [[1.0, 0.0], [0.0, -1.0]]


def _gaussian_rank(form):
    """Row-reduce over Z_p with Python integers."""
    p = form.p
    rows = [list(form.row(i)) for i in range(form.r)]
    rank = 0
    for column in range(form.r):
        pivot = next((i for i in range(rank, form.r) if rows[i][column] % p), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        inverse = pow(rows[rank][column], -1, p)
        for i in range(form.r):
            if i != rank and rows[i][column] % p:
                factor = rows[i][column] * inverse
                rows[i] = [(a - factor * b) % p for a, b in zip(rows[i], rows[rank])]
        rank += 1
    return rank


def _is_standard_shape(form):
    blocks = 0
    while 2 * blocks + 1 < form.r and form.at(2 * blocks, 2 * blocks + 1):
        blocks += 1
    values = [form.at(2 * b, 2 * b + 1) for b in range(blocks)]
    return form == SkewFormFp.standard(form.r, form.p, values)


def test_cat_map_frequencies_escape(cat_map):
    """
    arrange: the cat map and every nonzero frequency with sup norm at most 50.
    act: build the escape report with escape radius 10^6.
    assert: every orbit escapes within 40 iterations.
    """
    report = torus_dynamics.escape_report(cat_map, 50, 10**6, 1000)

    assert len(report.records) == 101**2 - 1
    assert report.escaped == len(report.records)
    assert report.periodic == report.undecided == 0
    assert report.max_escape_steps <= 40


def test_root_of_unity_detection():
    """
    arrange: companions of Φ_1 to Φ_8 and of the Salem polynomial x⁴ - x³ - x² - x + 1.
    act: classify them.
    assert: the cyclotomic ones are flagged with their index and the Salem one is not.
    """
    for index in range(1, 9):
        matrix = exact_linalg.companion(exact_linalg.cyclotomic(index))
        spectral = exact_linalg.spectral_classify(matrix)

        assert spectral.has_root_of_unity_eigenvalue
        assert spectral.cyclotomic_index == index

    salem = exact_linalg.spectral_classify(
        exact_linalg.companion(exact_linalg.IntPolynomial.of([1, -1, -1, -1, 1]))
    )

    assert not salem.has_root_of_unity_eigenvalue
    assert salem.has_unit_modulus_eigenvalue
    assert not salem.hyperbolic


def test_cat_map_mixes_on_torus(cat_map, workers):
    """
    arrange: the cat map on T², A = B = [0, 1/2)² and 10^6 samples.
    act: estimate μ(A ∩ T^-20 B).
    assert: it is within 5·10^-3 of 1/16.
    """
    box = torus_dynamics.parse_set_descriptor(QUARTER_BOX)

    series = torus_dynamics.estimate_mixing(
        group_models.parse_model("T1"), cat_map, 2, box, box, [20], 10**6, 2024, workers
    )

    assert series.points[0].estimate == pytest.approx(1 / 16, abs=5e-3)


def test_cat_map_mixes_on_unitary_component(cat_map, workers):
    """
    arrange: the cat map acting on X⁰(Z², U(2)) and a W-symmetric union of boxes.
    act: estimate μ(A ∩ T^-20 A).
    assert: it is within 5·10^-3 of μ(A)².
    """
    symmetric = torus_dynamics.parse_set_descriptor(
        "box:0,0.5;0,0.5;0,1;0,1|box:0,1;0,1;0,0.5;0,0.5"
    )

    series = torus_dynamics.estimate_mixing(
        group_models.parse_model("U2"),
        cat_map,
        2,
        symmetric,
        symmetric,
        [20],
        10**6,
        2025,
        workers,
    )

    assert series.baseline == pytest.approx((7 / 16) ** 2, abs=5e-3)
    assert series.points[0].estimate == pytest.approx(series.baseline, abs=5e-3)


def test_finite_order_control_does_not_mix(workers):
    """
    arrange: the companion of Φ_6 and A = B = [0, 1/2)².
    act: estimate the correlations at t = 6, 12, 18 and build an escape report.
    assert: the estimates sit at μ(A), far from μ(A)², and every frequency is periodic.
    """
    matrix = exact_linalg.companion(exact_linalg.cyclotomic(6))
    box = torus_dynamics.parse_set_descriptor(QUARTER_BOX)

    series = torus_dynamics.estimate_mixing(
        group_models.parse_model("T1"), matrix, 2, box, box, [6, 12, 18], 10**5, 6, workers
    )
    report = torus_dynamics.escape_report(matrix, 5, 10**6, 100)

    for point in series.points:
        assert abs(point.estimate - 0.25) < 4 * point.stderr
        assert abs(point.estimate - series.baseline) > 40 * point.stderr
    assert report.periodic == len(report.records)


@pytest.mark.parametrize("r, p, count", [(2, 3, 2), (3, 3, 26)])
def test_exotic_counts_match_enumeration(r, p, count):
    """
    arrange: small ranks and primes.
    act: count components by formula and by enumeration.
    assert: both give the known count.
    """
    assert exotic_components.component_count(r, 1, p).count == count
    assert len(exotic_components.enumerate_components(r, p)) == count


@pytest.mark.parametrize("r, p, sizes", [(3, 3, [26]), (2, 3, [2]), (2, 2, [1])])
def test_exotic_orbits(r, p, sizes):
    """
    arrange: small ranks and primes.
    act: partition the components into orbits.
    assert: the orbit sizes match transitivity for r >= 3 and the pairing for r = 2.
    """
    orbits = exotic_components.orbit_partition(r, p)

    assert [len(orbit) for orbit in orbits] == sizes


def test_normal_forms_are_sound(rng):
    """
    arrange: 1000 random skew forms with r <= 6 and p in {2, 3, 5}.
    act: compute their normal forms.
    assert: M carries Z to N, N is block standard and the rank is preserved.
    """
    for _ in range(1000):
        r = int(rng.integers(2, 7))
        p = int(rng.choice([2, 3, 5]))
        entries = [0] * (r * r)
        for i, j in itertools.combinations(range(r), 2):
            entries[i * r + j] = int(rng.integers(p))
            entries[j * r + i] = -entries[i * r + j]
        form = SkewFormFp(r, p, tuple(entries))

        normal, transform = exotic_components.skew_normal_form(form)

        assert exotic_components.gl_action(transform, form) == normal
        assert _is_standard_shape(normal)
        assert _gaussian_rank(normal) == _gaussian_rank(form)


@pytest.mark.parametrize("descriptor", ["T2", "U3", "SU3", "Sp2", "SO5", "SO4", "Gmp:1,2"])
def test_heisenberg_reduction(descriptor, cat_map):
    """
    arrange: H3 and Z² with a built-in compact group.
    act: reduce their identity components and classify the cat map on H3.
    assert: the components agree and mixing is guaranteed.
    """
    model = group_models.parse_model(descriptor)

    heisenberg = nilpotent_catalog.identity_component_model(
        NilpotentGroupDescriptor.heisenberg(1), model
    )
    abelian = nilpotent_catalog.identity_component_model(
        NilpotentGroupDescriptor.abelian(2), model
    )
    verdict = nilpotent_catalog.classify_induced_action(
        NilpotentGroupDescriptor.heisenberg(1), cat_map
    )

    assert heisenberg == abelian
    assert verdict.mixing_guaranteed


def test_long_flow_stays_reduced(rng):
    """
    arrange: random states of F_{U(2)} and X = diag(1, -1).
    act: flow to t = 100, both one step at a time and as a recorded trajectory.
    assert: every intermediate basis is reduced within the LLL bound, holonomies have det 1,
        both runs agree and the fiber replays exactly.
    """
    generator = flow_sim.make_generator(DIAGONAL)
    bound = (1 / (flow_sim.LLL_DELTA - flow_sim.LLL_ETA**2)) ** 0.25
    for _ in range(5):
        state = flow_sim.random_flow_state(group_models.parse_model("U2"), 2, rng)

        current = state
        for _ in range(100):
            current = flow_sim.step(current, generator, 1.0)
            assert flow_sim.is_reduced(current.basis)
            assert np.linalg.norm(current.basis[:, 0]) <= bound + 1e-6
        trajectory = flow_sim.run_trajectory(state, generator, 100.0, 1.0)

        final = trajectory.final
        assert any(row.reduced for row in trajectory.rows)
        assert all(unimodular.det() == 1 for unimodular in final.holonomy_log)
        assert np.allclose(final.basis, current.basis)
        assert final.holonomy_log == current.holonomy_log
        assert flow_sim.replay_holonomy(state.fiber, final.holonomy_log) == final.fiber


def test_flow_correlation_decays(workers):
    """
    arrange: 10^4 random states of F_{U(1)}, f the short-vector indicator, g a fiber box.
    act: estimate the correlation at t = 30.
    assert: it is within four standard errors of zero.
    """
    series = flow_sim.flow_correlation(
        10_000,
        flow_sim.make_generator(DIAGONAL),
        flow_sim.ShortestVectorBelow(0.9),
        flow_sim.FiberBox(torus_dynamics.parse_set_descriptor(QUARTER_BOX)),
        [30.0],
        30,
        group_models.parse_model("T1"),
        workers,
    )

    point = series.points[0]
    assert abs(point.estimate) < 4 * point.stderr + 1e-3


@pytest.mark.parametrize(
    "argv",
    [
        [
            "mix",
            "--group", "T1",
            "--r", "2",
            "--matrix", "[[2,1],[1,1]]",
            "--A", QUARTER_BOX,
            "--t", "1", "10", "20",
            "--samples", "50000",
            "--seed", "3",
        ],
        [
            "mix",
            "--group", "T1",
            "--r", "2",
            "--matrix", "[[0,-1],[1,1]]",
            "--A", QUARTER_BOX,
            "--t", "6", "12",
            "--samples", "50000",
            "--seed", "4",
        ],
        [
            "flow",
            "--group", "T1",
            "--generator", "[[1,0],[0,-1]]",
            "--ensemble", "500",
            "--t", "0", "5",
            "--seed", "8",
        ],
    ],
)  # fmt: skip
def test_cli_runs_are_reproducible(argv, tmp_path, workers):
    """
    arrange: a stochastic command with a fixed seed.
    act: run it twice through the command line.
    assert: the result fields are byte-identical.
    """
    outputs = []
    for attempt in range(2):
        path = tmp_path / f"run-{attempt}.json"
        assert cli.main([*argv, "--workers", str(workers), "--output", str(path)]) == 0
        envelope = cli.load_envelope(path.read_text(encoding="utf-8"))
        outputs.append(json.dumps(envelope.results, sort_keys=True))

    assert outputs[0] == outputs[1]


def test_random_unimodular_actions_preserve_measure(rng):
    """
    arrange: random matrices of GL(3, Z) acting on T³.
    act: compare μ(A) and μ(T^-1 A) for a box A.
    assert: they agree within sampling error.
    """
    box = torus_dynamics.parse_set_descriptor("box:0.1,0.6;0,0.5;0.2,1")
    model = group_models.parse_model("T1")

    for index in range(3):
        matrix = exact_linalg.random_unimodular(3, rng, 8)
        check = torus_dynamics.estimate_measure_preservation(model, matrix, 3, box, 100_000, index)

        assert abs(check.mass - check.preimage_mass) < 8 * check.stderr


def test_identity_matrix_is_not_a_witness():
    """
    arrange: the identity of Z².
    act: search for a mixing witness on Z².
    assert: none is found.
    """
    search = nilpotent_catalog.search_mixing_witness(
        NilpotentGroupDescriptor.abelian(2), [IntegerMatrix.identity(2)]
    )

    assert search.witness is None
    assert search.examined == 1
