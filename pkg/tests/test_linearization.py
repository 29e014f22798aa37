import cmath
import math

import numpy as np
import pytest

from codingtrees.fixtures import z2m1_tree
from codingtrees.linearization import (
    annulus_index,
    candidate_addresses,
    diam_relog,
    find_periodic_branch,
    fit_rate,
    koenigs_chart,
    koenigs_coefficients,
    relog_uniform_bound,
)
from codingtrees.mapcore import PeriodicPoint, load_fixture, periodic_points

Z2 = load_fixture("z2")


def _avoid(tree):
    return [tree.root] + [z for c in tree.base_curves for z in c.z]


@pytest.fixture(scope="module")
def chart_z2(tree_z2):
    q = [p for p in periodic_points(Z2, 1) if p.repelling][0]
    return koenigs_chart(Z2, q, avoid=_avoid(tree_z2))


def test_coefficients_match_log_series():
    # h(z) = log z linearizes z^2 at 1: coefficients (-1)^(n+1)/n
    lam, b = koenigs_coefficients(Z2, 1.0, 1, 12)
    assert lam == 2
    for n in range(1, 13):
        assert abs(b[n] - (-1) ** (n + 1) / n) < 1e-12


def test_attracting_point_rejected():
    with pytest.raises(ValueError):
        koenigs_coefficients(Z2, 0.0, 1, 8)


def test_chart_residual_and_inverse(chart_z2):
    rng = np.random.default_rng(1)
    z = 1 + chart_z2.radius * np.sqrt(rng.random(500)) * np.exp(2j * np.pi * rng.random(500))
    assert chart_z2.equivariance_residual(z) < 1e-8
    w = chart_z2.inverse_branch(np.array([1.1 + 0.05j]))[0]
    assert abs(w - cmath.sqrt(1.1 + 0.05j)) < 1e-12
    assert chart_z2.in_v(np.array([1.0]))[0]


def test_annulus_index_counts_levels(chart_z2):
    L = chart_z2.log_lam
    z = chart_z2.h_inverse(np.array([math.exp(chart_z2.a - 2.5 * L)]))[0]
    assert annulus_index(chart_z2, z) == 2


def test_relog_bound_on_tree(tree_z2, chart_z2):
    assert relog_uniform_bound(tree_z2, chart_z2, 10) <= 2 * math.log(2)
    assert diam_relog(chart_z2, np.array([1.01, 1.02])) > 0


def test_fixed_branch_found(tree_z2, chart_z2):
    q = PeriodicPoint(1.0, 1, 2.0)
    rep = find_periodic_branch(tree_z2, q, chart_z2)
    assert rep.status == "found"
    assert str(rep.address) == "(1)∞"
    assert rep.rate_error < 0.1


def test_period_two_branch(tree_z2):
    q = [p for p in periodic_points(Z2, 2) if p.location.imag > 0][0]
    chart = koenigs_chart(Z2, q, avoid=_avoid(tree_z2))
    rep = find_periodic_branch(tree_z2, q, chart)
    assert rep.status == "found"
    assert len(rep.address.period) == 2 and not rep.address.prefix
    assert rep.rate_error < 0.1


def test_z2m1_alpha_fixed_point():
    tree = z2m1_tree()
    m = tree.map
    q = [p for p in periodic_points(m, 1) if p.location.real < 0][0]
    chart = koenigs_chart(m, q, avoid=_avoid(tree))
    rep = find_periodic_branch(tree, q, chart)
    assert rep.status == "found"
    assert abs(rep.rate - 1 / abs(2 * q.location)) / (1 / abs(2 * q.location)) < 0.15


def test_candidate_addresses_are_distinct():
    cands = candidate_addresses(2, 3)
    names = [str(a) for a in cands]
    assert len(names) == len(set(names))
    assert "(1)∞" in names and "2(1)∞" in names and "(12)∞" in names
    assert all(len(a.prefix) + len(a.period) <= 3 for a in cands)


def test_fit_rate_on_geometric_sequence():
    v = [1 + 0.04 * 0.5 ** n for n in range(30)]
    assert fit_rate(v, 1.0) == pytest.approx(0.5, rel=1e-6)
    assert math.isnan(fit_rate([1.0, 1.0], 1.0))
