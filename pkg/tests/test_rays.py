import math

import numpy as np
import pytest

from codingtrees.mapcore import MapSpec, evaluate, load_fixture
from codingtrees.rays import (
    InvalidPolyLike,
    build_potential,
    landing,
    piece_decay,
    poly_like,
    ray_pieces,
    trace_ray,
)

Z2 = load_fixture("z2")


def closed_form(z):
    return math.log2(math.log(4)) - np.log2(np.log(np.abs(z)))


@pytest.fixture(scope="module")
def pot_z2():
    return build_potential(poly_like(Z2, 0, 4.0))


@pytest.fixture(scope="module")
def pot_z2p1():
    return build_potential(poly_like(load_fixture("z2+1"), 0, 4.0))


def test_poly_like_validation():
    with pytest.raises(InvalidPolyLike):
        poly_like(MapSpec((1,), (0, 1)), 0, 4.0)  # rational
    with pytest.raises(InvalidPolyLike):
        poly_like(load_fixture("z2-1"), 0, 0.5)  # critical value -1 outside W
    with pytest.raises(InvalidPolyLike):
        poly_like(Z2, 0, 1.0)  # W1 = W, no margin
    spec = poly_like(Z2, 0, 4.0)
    assert spec.margin == pytest.approx(2.0)
    assert np.max(np.abs(np.abs(spec.boundary_w1) - 2)) < 1e-12


def test_potential_matches_closed_form(pot_z2):
    rng = np.random.default_rng(0)
    z = (1.05 + 2.9 * rng.random(64)) * np.exp(2j * np.pi * rng.random(64))
    assert np.max(np.abs(pot_z2(z) - closed_form(z))) < 1e-6
    assert pot_z2.functional_residual < 1e-5


def test_boundary_values(pot_z2):
    assert abs(pot_z2(4.0)[0]) < 1e-9
    assert abs(pot_z2(2.0j)[0] - 1) < 1e-9
    assert abs(pot_z2(math.sqrt(2))[0] - 2) < 1e-9


def test_gradient_matches_finite_differences(pot_z2p1):
    z, h = 2.1 + 0.7j, 1e-6
    g = pot_z2p1.grad(z)[0]
    gx = (pot_z2p1(z + h)[0] - pot_z2p1(z - h)[0]) / (2 * h)
    gy = (pot_z2p1(z + 1j * h)[0] - pot_z2p1(z - 1j * h)[0]) / (2 * h)
    assert abs(g - complex(gx, gy)) < 1e-6


def test_radial_ray(pot_z2):
    ray = trace_ray(pot_z2, math.pi / 2, 4.0, 10)
    assert np.max(np.abs(np.angle(ray.points))) < 1e-8
    assert np.all(np.diff(ray.levels) > 0)
    up = trace_ray(pot_z2, math.pi / 2, 4j, 10)
    assert np.max(np.abs(up.points.real)) < 1e-8
    assert abs(up.points[-1] - 1j) < 0.01


def test_spiral_crossing_angle(pot_z2):
    tau = 1.0
    ray = trace_ray(pot_z2, tau, 4.0, 6)
    z = ray.points[1:-1]
    dz = (ray.points[2:] - ray.points[:-2])
    ang = np.abs(np.angle(dz / (1j * z)))
    ang = np.minimum(ang, math.pi - ang)
    assert np.max(np.abs(ang - tau)) < 1e-3


def test_piece_lengths_closed_form(pot_z2):
    ray = trace_ray(pot_z2, math.pi / 2, 4.0, 8)
    pieces = ray_pieces(ray)
    for p in pieces:
        expect = 4 ** (1 / 2 ** p.n) - 4 ** (1 / 2 ** (p.n + 1))
        assert p.length == pytest.approx(expect, rel=1e-9)
    assert piece_decay(pieces)["holds"]


def test_truncated_ray_has_three_pieces(pot_z2):
    ray = trace_ray(pot_z2, math.pi / 2, 4.0, 3)
    assert len(ray_pieces(ray)) == 3
    land = landing(ray, tol=1e-6)
    assert not land.landed


def test_short_ray_window(pot_z2):
    ray = trace_ray(pot_z2, math.pi / 2, 4.0, 0.5)
    land = landing(ray)
    assert not land.landed and "insufficient window" in land.reason


def test_landing_with_distance_to_k(pot_z2):
    ray = trace_ray(pot_z2, math.pi / 2, 4 * np.exp(2j * np.pi / 3), 30)
    land = landing(ray, pot_z2.spec)
    assert land.landed
    assert abs(land.point - np.exp(2j * np.pi / 3)) < 1e-6
    assert land.distance_to_k < 1e-6


def test_saddle_rule_on_z2_plus_1(pot_z2p1):
    cw = trace_ray(pot_z2p1, math.pi / 2, 4j, 4, side="cw")
    ccw = trace_ray(pot_z2p1, math.pi / 2, 4j, 4, side="ccw")
    assert len(cw.saddles) == 1 and abs(cw.saddles[0].point - 1j) < 1e-10
    assert cw.points[-1].real > 0.1 and ccw.points[-1].real < -0.1
    assert abs(cw.points[-1] + ccw.points[-1].conjugate()) < 1e-8  # mirror images
    assert np.all(np.diff(cw.levels) > 0)


def test_equivariance(pot_z2p1):
    ray = trace_ray(pot_z2p1, 1.2, 4 * np.exp(0.7j), 6)
    k = int(np.flatnonzero(np.isclose(ray.levels, 1.0))[0])
    image_start = complex(evaluate(pot_z2p1.spec.map, ray.points[k]))
    other = trace_ray(pot_z2p1, 1.2, image_start, 5)
    mapped = np.array([evaluate(pot_z2p1.spec.map, z) for z in ray.points[k:]])
    assert len(mapped) == len(other.points)
    assert np.max(np.abs(mapped - other.points)) < 1e-4


def test_invalid_tau(pot_z2):
    with pytest.raises(ValueError):
        trace_ray(pot_z2, 0.0, 4.0, 2)
    with pytest.raises(ValueError):
        trace_ray(pot_z2, 1.0, 3.0, 2)
