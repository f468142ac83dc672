"""Collar atlases: construction, gluing identities, error paths."""

import numpy as np
import pytest

from strataglue import (
    Chain,
    EpsilonUnderflowError,
    InputError,
    RangeError,
    box_space,
    build_collars,
    check_associativity,
    check_compat_concat,
    check_compat_one_pair,
    check_stratum_condition,
    cube_family,
    glue,
    glue_differential,
    glue_pair,
    single_space_collars,
    stretch_diffeo,
    with_target_diffeo,
)
from strataglue.collar import (
    check_differential,
    check_injectivity,
    check_single_space_compat,
)

FULL = Chain(("p0", "p1", "p2", "p3"))


# -- construction ------------------------------------------------------


def test_atlas_records(cube3_atlas):
    records = cube3_atlas.records()
    # one record per chain with at least one interior point
    assert len(records) == 5
    for rec in records:
        assert rec["epsilon"] >= 1e-3
        assert rec["affine"]


def test_affine_family_stays_affine(cube3_atlas):
    assert all(
        cube3_atlas.is_affine_pair(pq) for pq in cube3_atlas.family.pairs()
    )


def test_epsilon_floor_aborts_build():
    with pytest.raises(EpsilonUnderflowError):
        build_collars(cube_family(2), epsilon_floor=1.0)


def test_build_validates_family_first(rng):
    from strataglue import with_flipped_embedding

    broken = with_flipped_embedding(cube_family(3), ("p0", "p2", "p3"))
    with pytest.raises(InputError):
        build_collars(broken, rng=rng)


# -- pointwise gluing --------------------------------------------------


def test_zero_values_return_point_exactly(cube3_atlas, rng):
    (point,) = cube3_atlas.family.sample_stratum(FULL, 1, rng)
    piece, out = glue(cube3_atlas, FULL, point, np.zeros(2))
    assert piece == point[0]
    assert np.array_equal(out, np.asarray(point[1], dtype=float))


def test_glue_moves_off_each_wall(cube3_atlas, rng):
    (point,) = cube3_atlas.family.sample_stratum(FULL, 1, rng)
    eps = cube3_atlas.eps(FULL)
    piece, out = glue(cube3_atlas, FULL, point, [0.3 * eps, 0.7 * eps])
    space = cube3_atlas.family.space("p0", "p3")
    assert space.depth((piece, out)) == 0


def test_glue_range_checks(cube3_atlas, rng):
    (point,) = cube3_atlas.family.sample_stratum(FULL, 1, rng)
    eps = cube3_atlas.eps(FULL)
    with pytest.raises(RangeError):
        glue(cube3_atlas, FULL, point, [eps, 0.0])
    with pytest.raises(RangeError):
        glue(cube3_atlas, FULL, point, [-0.1, 0.0])
    with pytest.raises(InputError):
        glue(cube3_atlas, FULL, point, [0.0])


def test_glue_rejects_wrong_stratum(cube3_atlas, rng):
    (point,) = cube3_atlas.family.sample_stratum(
        Chain(("p0", "p1", "p3")), 1, rng
    )
    with pytest.raises(InputError):
        glue(cube3_atlas, FULL, point, np.zeros(2))


def test_glue_pair_at_zero_is_embedding(cube3_atlas):
    emb = cube3_atlas.family.embedding("p0", "p2", "p3")
    left, right = (0, np.array([0.4])), (0, np.array([]))
    expect = emb.forward(left, right)
    got = glue_pair(cube3_atlas, ("p0", "p2", "p3"), left, right, 0.0)
    assert got[0] == expect[0]
    assert np.allclose(got[1], expect[1])


# -- identities --------------------------------------------------------


def test_nested_compatibility(cube3_atlas, rng):
    for inner in (Chain(("p0", "p3")), Chain(("p0", "p1", "p3")),
                  Chain(("p0", "p2", "p3")), FULL):
        res = check_compat_one_pair(
            cube3_atlas, FULL, inner, samples=256, rng=rng
        )
        assert res < 1e-9


def test_concatenation_compatibility(cube3_atlas, rng):
    res = check_compat_concat(
        cube3_atlas, Chain(("p0", "p1", "p2")), Chain(("p2", "p3")),
        samples=256, rng=rng,
    )
    assert res < 1e-9


def test_associativity(cube3_atlas, rng):
    res = check_associativity(
        cube3_atlas, FULL.points, samples=5, grid=8, rng=rng
    )
    assert res < 1e-9


def test_stratum_condition(cube3_atlas, rng):
    failures, total = check_stratum_condition(
        cube3_atlas, samples=500, rng=rng
    )
    assert total >= 500
    assert failures == 0


def test_injectivity(cube3_atlas, rng):
    sep = check_injectivity(cube3_atlas, FULL, samples=2000, rng=rng)
    assert sep > 0


def test_differential_matches_finite_differences(cube3_atlas, rng):
    res = check_differential(cube3_atlas, FULL, samples=4, rng=rng)
    assert res < 1e-5
    (point,) = cube3_atlas.family.sample_stratum(FULL, 1, rng)
    jac = glue_differential(cube3_atlas, FULL, point, np.array([0.1, 0.1]))
    assert jac.shape == (2, 2)
    # affine route: the differential is a signed permutation
    assert np.allclose(np.abs(np.linalg.det(jac)), 1.0)


# -- non-affine charts -------------------------------------------------


@pytest.fixture(scope="module")
def stretched_atlas():
    family = with_target_diffeo(
        cube_family(3), ("p0", "p3"), stretch_diffeo(2)
    )
    return build_collars(family, rng=np.random.default_rng(2))


def test_stretched_family_needs_corrected_charts(stretched_atlas):
    assert not stretched_atlas.is_affine_pair(("p0", "p3"))


def test_stretched_identities_still_hold(stretched_atlas, rng):
    res1 = check_compat_one_pair(
        stretched_atlas, FULL, Chain(("p0", "p1", "p3")), samples=64, rng=rng
    )
    res2 = check_compat_concat(
        stretched_atlas, Chain(("p0", "p1")), Chain(("p1", "p2", "p3")),
        samples=64, rng=rng,
    )
    res3 = check_associativity(
        stretched_atlas, FULL.points, samples=2, grid=6, rng=rng
    )
    assert res1 < 1e-9
    assert res2 < 1e-9
    assert res3 < 1e-9


# -- face collars of a single space ------------------------------------


def test_single_space_empty_subset_is_inclusion(rng):
    collars = single_space_collars(box_space([1.0, 1.0]))
    point = (0, np.array([0.25, 0.75]))
    piece, out = collars.glue((), point, [])
    assert piece == 0
    assert np.array_equal(out, point[1])


def test_single_space_compat_dims_1_to_3(rng):
    for dim in (1, 2, 3):
        collars = single_space_collars(box_space([1.0] * dim))
        res = check_single_space_compat(collars, samples=400, rng=rng)
        assert res < 1e-9


def test_single_space_rejects_wrong_face_set(rng):
    collars = single_space_collars(box_space([1.0]))
    interior = (0, np.array([0.5]))
    with pytest.raises(InputError):
        collars.glue((0,), interior, [0.1])
    corner = (0, np.array([0.0]))
    with pytest.raises(RangeError):
        subset = next(s for s in collars.face_subsets() if s)
        # locate the subset pinning the lower wall, then exceed the range
        collars.glue(subset, corner, [1.5])
