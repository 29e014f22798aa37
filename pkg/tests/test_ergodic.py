import math

import numpy as np
import pytest
from scipy.stats import kstest

from codingtrees.ergodic import (
    EmpiricalMeasure,
    backward_orbits,
    check_inverse_branches,
    cycle_measure,
    lyapunov,
    pesin_block,
    ruelle_check,
    sample_mme,
    statistical_good_density,
    verify_pesin,
)
from codingtrees.mapcore import PeriodicPoint, evaluate, load_fixture, periodic_points
from codingtrees.telescopes import GoodPointParams

Z2 = load_fixture("z2")


@pytest.fixture(scope="module")
def mme_z2():
    return sample_mme(Z2, 20_000, seed=5)


def test_weights_validated():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([1.0]), np.array([0.5]), "x")


def test_mme_of_z2_is_uniform_on_circle(mme_z2):
    assert np.max(np.abs(np.abs(mme_z2.atoms) - 1)) < 1e-12
    angles = (np.angle(mme_z2.atoms[::53]) / (2 * math.pi)) % 1
    assert kstest(angles, "uniform").pvalue > 0.01


def test_chains_are_backward_orbits(mme_z2):
    ch = mme_z2.chains
    assert np.max(np.abs(ch[:, 1:] ** 2 - ch[:, :-1])) < 1e-12
    orb = mme_z2.forward_orbit(Z2, 17, 10)
    assert all(abs(evaluate(Z2, a) - b) < 1e-12 for a, b in zip(orb, orb[1:]))


def test_sampling_is_seeded():
    a = sample_mme(Z2, 500, seed=3)
    b = sample_mme(Z2, 500, seed=3)
    assert np.array_equal(a.atoms, b.atoms)


def test_lyapunov_of_z2(mme_z2):
    est = lyapunov(Z2, mme_z2)
    assert abs(est.value - math.log(2)) < 1e-10
    assert est.dropped == 0


def test_cycle_measure_gives_log_multiplier():
    m = load_fixture("z2-1")
    q = [p for p in periodic_points(m, 1) if p.location.real > 0][0]
    est = lyapunov(m, cycle_measure(m, q))
    # spherical derivative at a fixed point equals |f'(q)|
    assert est.value == pytest.approx(math.log(abs(q.multiplier)), abs=1e-12)


def test_ruelle_check():
    assert ruelle_check(math.log(2), math.log(2)).passed
    assert not ruelle_check(2.0, 0.5, 0.01).passed


def test_inverse_branches_along_fixed_point():
    past = np.ones(20, dtype=complex)
    ok = check_inverse_branches(Z2, past, 0.5, 4.0, 0.55)
    assert ok.ok
    bad = check_inverse_branches(Z2, past, 0.5, 4.0, 0.4)  # 2^-n < 4 * 0.4^n fails eventually
    assert not bad.ok and "derivative" in bad.reason


def test_pesin_block_and_held_out(mme_z2):
    rep = pesin_block(Z2, mme_z2, lam=0.55, C=4.0, orbits=32, length=20, target=0.9)
    assert rep.coverage >= 0.9
    held = sample_mme(Z2, 5000, seed=77, n_chains=40)
    assert verify_pesin(Z2, held, rep, 40) >= 0.9
    assert len(backward_orbits(held, 20, 5)) == 5


def test_statistical_density_small(mme_z2):
    rep = statistical_good_density(Z2, mme_z2, GoodPointParams(0.5, 0.1, 0.5, 1), 15, 10, seed=1)
    assert rep.tested == 10
    assert rep.fraction >= 0.9
