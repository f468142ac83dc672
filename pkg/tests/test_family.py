"""Stratified families: generators, validation, mutations, file format."""

import numpy as np
import pytest

from strataglue import (
    Chain,
    CriticalPoint,
    InputError,
    UnsupportedDimensionError,
    cube_family,
    from_morse,
    load_family,
    save_family,
    stretch_diffeo,
    validate_family,
    with_flipped_embedding,
    with_target_diffeo,
)
from strataglue.family import ArcData, ArcEnd, PairModuli


# -- linear model family -----------------------------------------------


def test_cube3_structure(cube3_family):
    family = cube3_family
    assert len(family.pairs()) == 6
    assert len(family.chains("p0", "p3")) == 4
    assert family.space("p0", "p3").dim == 2
    assert family.space("p0", "p1").dim == 0


def test_cube_size_limits():
    with pytest.raises(InputError):
        cube_family(0)
    with pytest.raises(InputError):
        cube_family(6)


def test_classify_and_sampling(cube3_family, rng):
    family = cube3_family
    full = Chain(("p0", "p1", "p2", "p3"))
    for chain in family.chains("p0", "p3"):
        for point in family.sample_stratum(chain, 8, rng):
            assert family.classify(("p0", "p3"), point) == chain
    # the deepest stratum pins every wall
    (point,) = family.sample_stratum(full, 1, rng)
    assert np.allclose(point[1], 0.0)


def test_validate_cube3(cube3_family, rng):
    report = validate_family(cube3_family, samples=16, rng=rng)
    assert report.passed
    assert report.failures() == []


def test_validate_stretched_family(rng):
    family = with_target_diffeo(
        cube_family(2), ("p0", "p2"), stretch_diffeo(1)
    )
    report = validate_family(family, samples=16, rng=rng)
    assert report.passed


def test_flip_mutation_is_detected(rng):
    family = with_flipped_embedding(cube_family(3), ("p0", "p2", "p3"))
    report = validate_family(family, samples=32, rng=rng)
    assert not report.passed
    fail = report.first_failure()
    assert fail.name
    assert fail.witness


def test_flip_needs_a_real_axis():
    with pytest.raises(InputError):
        # left factor of (p0, p1, p3) is zero-dimensional: no axis to flip
        with_flipped_embedding(cube_family(3), ("p0", "p1", "p3"))


# -- file format -------------------------------------------------------


def test_save_load_roundtrip(cube3_family, tmp_path, rng):
    path = tmp_path / "family.json"
    save_family(cube3_family, path)
    loaded = load_family(path)
    assert loaded.name == cube3_family.name
    assert loaded.pairs() == cube3_family.pairs()
    for p, q in loaded.pairs():
        assert loaded.chains(p, q) == cube3_family.chains(p, q)
    assert validate_family(loaded, samples=8, rng=rng).passed


def test_load_rejects_unknown_schema(tmp_path):
    path = tmp_path / "family.json"
    path.write_text('{"schema_version": 99}')
    with pytest.raises(InputError):
        load_family(path)


# -- assembly from flow data -------------------------------------------


def tiny_moduli(arc_ends):
    return {
        ("p", "r"): PairModuli(("p", "r"), 0, count=1),
        ("r", "q"): PairModuli(("r", "q"), 0, count=1),
        ("p", "q"): PairModuli(
            ("p", "q"), 1,
            arcs=(ArcData(length=1.0, ends=arc_ends),),
        ),
    }


def tiny_points():
    return [
        CriticalPoint("p", 2), CriticalPoint("r", 1), CriticalPoint("q", 0)
    ]


def tiny_relations():
    return [("p", "r"), ("r", "q"), ("p", "q")]


def test_from_morse_assembles_family(rng):
    ends = (ArcEnd("r", 0, 0), None)
    family = from_morse(tiny_points(), tiny_relations(), tiny_moduli(ends))
    assert family.pairs() == [("p", "q"), ("p", "r"), ("r", "q")]
    assert validate_family(family, samples=16, rng=rng).passed


def test_from_morse_rejects_unmatched_broken_pair():
    with pytest.raises(InputError):
        from_morse(tiny_points(), tiny_relations(), tiny_moduli((None, None)))


def test_from_morse_rejects_double_matched_pair():
    ends = (ArcEnd("r", 0, 0), ArcEnd("r", 0, 0))
    with pytest.raises(InputError):
        from_morse(tiny_points(), tiny_relations(), tiny_moduli(ends))


def test_from_morse_rejects_high_dimension():
    moduli = {("p", "q"): PairModuli(("p", "q"), 2)}
    with pytest.raises(UnsupportedDimensionError):
        from_morse([CriticalPoint("p", 3), CriticalPoint("q", 0)],
                   [("p", "q")], moduli)


def test_from_morse_rejects_empty_moduli():
    moduli = {("p", "q"): PairModuli(("p", "q"), 0, count=0)}
    with pytest.raises(InputError):
        from_morse([CriticalPoint("p", 1), CriticalPoint("q", 0)],
                   [("p", "q")], moduli)
