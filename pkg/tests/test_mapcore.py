import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codingtrees.mapcore import (
    INF,
    InvalidMap,
    MapSpec,
    chordal,
    chordal_array,
    critical_points,
    critical_values,
    cycle_multiplier,
    evaluate,
    iterate_map,
    load_fixture,
    periodic_points,
    preimage_roots,
    preimages,
    spherical_derivative,
)

finite = st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False)


def test_evaluate_polynomial_and_infinity():
    m = load_fixture("z2-1")
    assert evaluate(m, 2.0) == 3.0
    assert evaluate(m, INF) == INF


def test_rational_map_pole_and_infinity():
    m = MapSpec((1,), (0, 1))  # 1/z
    assert evaluate(m, 0.0) == INF
    assert evaluate(m, INF) == 0
    assert evaluate(m, 2j) == pytest.approx(-0.5j)


def test_invalid_maps():
    with pytest.raises(InvalidMap):
        MapSpec((0,), (1,))
    with pytest.raises(InvalidMap):
        MapSpec((1, 1), (1, 1))  # common root, constant map
    with pytest.raises(InvalidMap):
        MapSpec.from_dict({"numerator": [[1, 0], "x"]})


@given(finite, finite)
def test_chordal_symmetric_and_bounded(z, w):
    d = chordal(z, w)
    assert d == pytest.approx(chordal(w, z))
    assert 0 <= d <= 2 + 1e-12


@given(finite, finite, finite)
def test_chordal_triangle_inequality(a, b, c):
    assert chordal(a, c) <= chordal(a, b) + chordal(b, c) + 1e-12


def test_chordal_antipodes_and_infinity():
    assert chordal(0, INF) == pytest.approx(2.0)
    assert chordal(1, -1) == pytest.approx(2.0)
    assert chordal(INF, INF) == 0.0
    assert chordal(1e300, 1e300) == 0.0
    assert chordal_array(np.array([0, INF]), 0)[1] == pytest.approx(2.0)


def test_preimages_counted_with_multiplicity():
    m = load_fixture("z2")
    pre = preimages(m, 0.0)
    assert sum(p.multiplicity for p in pre) == 2
    assert any(p.critical for p in pre)
    pts = sorted(p.point.real for p in preimages(m, 4.0))
    assert pts == pytest.approx([-2.0, 2.0])


def test_preimages_of_infinity_for_a_polynomial():
    pre = preimages(load_fixture("z2"), INF)
    assert pre == [type(pre[0])(INF, 2)]


@settings(max_examples=50)
@given(st.complex_numbers(max_magnitude=50, allow_nan=False, allow_infinity=False))
def test_preimage_roots_map_back(w):
    m = load_fixture("z3-3z")
    roots = preimage_roots(m, np.array([w]))[0]
    for r in roots:
        assert chordal(evaluate(m, r), w) < 1e-9


def test_critical_points_of_polynomial_include_infinity():
    cps = critical_points(load_fixture("z2-1"))
    assert INF in cps
    assert any(abs(c) < 1e-12 for c in cps if c != INF)
    assert -1 in [complex(round(v.real, 12), round(v.imag, 12)) for v in critical_values(load_fixture("z2-1"))]


def test_period_two_points_of_z2_are_cube_roots_of_unity():
    pts = periodic_points(load_fixture("z2"), 2)
    locs = sorted((p.location for p in pts), key=lambda z: z.imag)
    expect = [cmath.exp(-2j * math.pi / 3), cmath.exp(2j * math.pi / 3)]
    assert len(locs) == 2
    for a, b in zip(locs, expect):
        assert abs(a - b) < 1e-10
    assert all(abs(p.multiplier) == pytest.approx(4.0) for p in pts)


def test_fixed_points_of_z2m1():
    pts = periodic_points(load_fixture("z2-1"), 1)
    finite_pts = sorted(p.location.real for p in pts if p.location != INF)
    assert finite_pts == pytest.approx([(1 - 5 ** 0.5) / 2, (1 + 5 ** 0.5) / 2])
    for p in pts:
        if p.location != INF:
            assert abs(p.multiplier - 2 * p.location) < 1e-10
            assert p.repelling


def test_iterate_map_matches_composition():
    m = load_fixture("z2-1")
    num, den = iterate_map(m, 3)
    z = 0.3 + 0.2j
    val = np.polyval(num[::-1], z) / np.polyval(den[::-1], z)
    assert abs(val - evaluate(m, evaluate(m, evaluate(m, z)))) < 1e-12
    assert cycle_multiplier(m, 0.0, 2) == 0


def test_spherical_derivative_at_fixed_point():
    assert spherical_derivative(load_fixture("z2"), 1.0) == pytest.approx(2.0)


def test_unknown_fixture():
    with pytest.raises(KeyError):
        load_fixture("nope")
