# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

# pylint: disable=duplicate-code

"""Unit tests for the nilpotent group catalog."""

import pytest

import exact_linalg
import group_models
import nilpotent_catalog
from errors import DimensionError, InvalidInputError, NotAnAutomorphismError
from exact_linalg import IntegerMatrix
from nilpotent_catalog import (
    HeisenbergElement,
    NilpotentGroupDescriptor,
    WitnessOutcome,
)

SHEAR = IntegerMatrix.from_rows([[1, 1], [0, 1]])
LOWER_SHEAR = IntegerMatrix.from_rows([[1, 0], [1, 1]])
ORDER_SIX = exact_linalg.companion(exact_linalg.cyclotomic(6))


@pytest.mark.parametrize(
    "group, expected",
    [
        (NilpotentGroupDescriptor.heisenberg(1), (2, ())),
        (NilpotentGroupDescriptor.heisenberg(3), (6, ())),
        (NilpotentGroupDescriptor.free_nilpotent(3, 4), (4, ())),
        (NilpotentGroupDescriptor.abelian(2, [2, 4]), (2, (2, 4))),
    ],
)
def test_abelianization_rank(group, expected):
    """
    arrange: a catalog group.
    act: compute its abelianization.
    assert: the free rank and torsion match.
    """
    assert nilpotent_catalog.abelianization_rank(group) == expected


@pytest.mark.parametrize(
    "text, expected",
    [
        ("H3", NilpotentGroupDescriptor.heisenberg(1)),
        ("H5", NilpotentGroupDescriptor.heisenberg(2)),
        ("N:3,4", NilpotentGroupDescriptor.free_nilpotent(3, 4)),
        ("Z^2", NilpotentGroupDescriptor.abelian(2)),
        ("Z^2+T:2,4", NilpotentGroupDescriptor.abelian(2, [2, 4])),
    ],
)
def test_parse_descriptor(text, expected):
    """
    arrange: descriptor text.
    act: parse it.
    assert: the descriptor matches and renders back to the same text.
    """
    group = nilpotent_catalog.parse_descriptor(text)

    assert group == expected
    assert str(group) == text


@pytest.mark.parametrize("text", ["H4", "H1", "N:0,2", "Z^2+T:1", "F2"])
def test_parse_descriptor_rejects_malformed(text):
    """
    arrange: malformed descriptor text.
    act: parse it.
    assert: an InvalidInputError is raised.
    """
    with pytest.raises(InvalidInputError):
        nilpotent_catalog.parse_descriptor(text)


def test_identity_component_model():
    """
    arrange: H5 and U2.
    act: reduce X⁰(H5, U2).
    assert: it is the 8-dimensional torus (U(1)²)⁴ modulo a group of order 2.
    """
    model = group_models.parse_model("U2")

    component = nilpotent_catalog.identity_component_model(
        NilpotentGroupDescriptor.heisenberg(2), model
    )

    assert component == nilpotent_catalog.IdentityComponent(4, model, 8, 2)


def test_identity_component_of_finite_group_is_a_point():
    """
    arrange: the finite abelian group Z/5.
    act: reduce X⁰(Z/5, SU3).
    assert: the identity component is a point.
    """
    model = group_models.parse_model("SU3")

    component = nilpotent_catalog.identity_component_model(
        NilpotentGroupDescriptor.abelian(0, [5]), model
    )

    assert (component.r, component.torus_dimension, component.weyl_order) == (0, 0, 1)


@pytest.mark.parametrize("descriptor", ["T2", "U2", "SU3", "Sp2", "SO5", "SO4", "Gmp:1,2"])
@pytest.mark.parametrize("n", [1, 2])
def test_heisenberg_and_abelian_components_agree(descriptor, n):
    """
    arrange: H_{2n+1} and Z^{2n} with a compact group K.
    act: reduce both identity components.
    assert: they are the same quotient torus.
    """
    model = group_models.parse_model(descriptor)

    heisenberg = nilpotent_catalog.identity_component_model(
        NilpotentGroupDescriptor.heisenberg(n), model
    )
    abelian = nilpotent_catalog.identity_component_model(
        NilpotentGroupDescriptor.abelian(2 * n), model
    )

    assert heisenberg == abelian


def test_heisenberg_group_law(rng):
    """
    arrange: random triples of elements of H5.
    act: multiply them in both bracketings and against inverses.
    assert: the law is associative with two-sided inverses.
    """
    identity = nilpotent_catalog.heisenberg_identity(2)

    for _ in range(10_000):
        x, y, z = (nilpotent_catalog.random_heisenberg_element(2, rng) for _ in range(3))

        assert (x * y) * z == x * (y * z)
        assert x * nilpotent_catalog.heisenberg_inverse(x) == identity
        assert nilpotent_catalog.heisenberg_inverse(x) * x == identity


def test_heisenberg_commutator_is_central():
    """
    arrange: the generators x = (1, 0, 0) and y = (0, 1, 0) of H3.
    act: compute xy and yx.
    assert: they differ by the central element (0, 0, 2).
    """
    x = HeisenbergElement((1,), (0,), 0)
    y = HeisenbergElement((0,), (1,), 0)

    assert x * y == HeisenbergElement((1,), (1,), 1)
    assert y * x == HeisenbergElement((1,), (1,), -1)


def test_heisenberg_multiply_rejects_mixed_groups():
    """
    arrange: elements of H3 and H5.
    act: multiply them.
    assert: a DimensionError is raised.
    """
    with pytest.raises(DimensionError):
        nilpotent_catalog.heisenberg_identity(1) * nilpotent_catalog.heisenberg_identity(2)


def test_symplectic_lift_is_homomorphism(cat_map, rng):
    """
    arrange: the cat map in Sp(2, Z).
    act: lift it to H3.
    assert: the lift respects products and fixes the center.
    """
    automorphism = nilpotent_catalog.heisenberg_auto_from_symplectic(cat_map)

    for _ in range(200):
        x = nilpotent_catalog.random_heisenberg_element(1, rng)
        y = nilpotent_catalog.random_heisenberg_element(1, rng)

        assert automorphism(x * y) == automorphism(x) * automorphism(y)
        assert automorphism(x).c == x.c


def test_symplectic_lift_composes(rng):
    """
    arrange: two random matrices of Sp(4, Z).
    act: lift the product and compose the lifts.
    assert: both agree on random elements.
    """
    first = exact_linalg.random_symplectic(2, rng, 10)
    second = exact_linalg.random_symplectic(2, rng, 10)
    product = nilpotent_catalog.heisenberg_auto_from_symplectic(first @ second, rng)
    composed = nilpotent_catalog.heisenberg_auto_from_symplectic(first, rng).compose(
        nilpotent_catalog.heisenberg_auto_from_symplectic(second, rng)
    )

    for _ in range(50):
        x = nilpotent_catalog.random_heisenberg_element(2, rng)
        assert product(x) == composed(x)


def test_symplectic_lift_rejects_non_symplectic():
    """
    arrange: diag(2, 1).
    act: lift it.
    assert: a NotAnAutomorphismError is raised.
    """
    with pytest.raises(NotAnAutomorphismError):
        nilpotent_catalog.heisenberg_auto_from_symplectic(IntegerMatrix.diagonal([2, 1]))


def test_classify_hyperbolic_on_heisenberg(cat_map):
    """
    arrange: H3 and the cat map.
    act: classify the induced action.
    assert: it is admissible and mixing is guaranteed.
    """
    result = nilpotent_catalog.classify_induced_action(
        NilpotentGroupDescriptor.heisenberg(1), cat_map
    )

    assert result.admissible
    assert result.mixing_guaranteed
    assert result.spectral.hyperbolic


def test_classify_finite_order_on_free_nilpotent():
    """
    arrange: N_{2,2} and the companion of Φ_6.
    act: classify the induced action.
    assert: it is admissible but mixing is not guaranteed.
    """
    result = nilpotent_catalog.classify_induced_action(
        NilpotentGroupDescriptor.free_nilpotent(2, 2), ORDER_SIX
    )

    assert result.admissible
    assert not result.mixing_guaranteed
    assert result.spectral.cyclotomic_index == 6


def test_classify_shear_on_heisenberg():
    """
    arrange: H3 and the shear.
    act: classify the induced action.
    assert: it is admissible with a root-of-unity eigenvalue.
    """
    result = nilpotent_catalog.classify_induced_action(
        NilpotentGroupDescriptor.heisenberg(1), SHEAR
    )

    assert result.admissible
    assert not result.mixing_guaranteed
    assert result.spectral.has_root_of_unity_eigenvalue


def test_classify_rejects_orientation_reversal_on_heisenberg():
    """
    arrange: H3 and the swap of determinant -1.
    act: classify the induced action.
    assert: it is not admissible.
    """
    result = nilpotent_catalog.classify_induced_action(
        NilpotentGroupDescriptor.heisenberg(1), IntegerMatrix.from_rows([[0, 1], [1, 0]])
    )

    assert not result.admissible
    assert not result.mixing_guaranteed


def test_classify_rejects_wrong_size(cat_map):
    """
    arrange: H5 and a 2×2 matrix.
    act: classify the induced action.
    assert: a DimensionError is raised.
    """
    with pytest.raises(DimensionError):
        nilpotent_catalog.classify_induced_action(NilpotentGroupDescriptor.heisenberg(2), cat_map)


def test_search_finds_hyperbolic_witness(cat_map):
    """
    arrange: a shear followed by the cat map.
    act: search for a mixing witness on H3.
    assert: the cat map is found after two candidates.
    """
    search = nilpotent_catalog.search_mixing_witness(
        NilpotentGroupDescriptor.heisenberg(1), [SHEAR, cat_map]
    )

    assert search == nilpotent_catalog.WitnessSearch(WitnessOutcome.FOUND, cat_map, 2)


def test_search_reports_unipotent_obstruction():
    """
    arrange: only unipotent candidates.
    act: search for a mixing witness on H3.
    assert: the unipotent obstruction is reported.
    """
    search = nilpotent_catalog.search_mixing_witness(
        NilpotentGroupDescriptor.heisenberg(1), [SHEAR, LOWER_SHEAR]
    )

    assert search.outcome == WitnessOutcome.UNIPOTENT_OBSTRUCTION
    assert search.witness is None


def test_search_without_witness():
    """
    arrange: a finite-order candidate and a non-admissible one.
    act: search for a mixing witness on N_{2,2}.
    assert: no witness is reported.
    """
    search = nilpotent_catalog.search_mixing_witness(
        NilpotentGroupDescriptor.free_nilpotent(2, 2),
        [ORDER_SIX, IntegerMatrix.diagonal([2, 1])],
    )

    assert search.outcome == WitnessOutcome.NO_WITNESS
    assert search.examined == 2
