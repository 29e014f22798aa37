import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from codingtrees.curves import Curve
from codingtrees.fixtures import linear_tree, z2_tree
from codingtrees.mapcore import load_fixture
from codingtrees.tree import (
    Address,
    BranchNonConvergence,
    CodingTree,
    TreeError,
    coding_limit,
    diameter_profile,
    hausdorff_chordal,
    inverse_iteration_cloud,
    limit_set_sample,
    n_epsilon,
    rho,
    shift,
    tree_consistency,
)

letters = st.lists(st.integers(1, 2), min_size=1, max_size=5).map(tuple)


def test_address_canonical_forms():
    assert str(Address((), (1, 1))) == "(1)∞"
    assert str(Address((1,), (1,))) == "(1)∞"
    assert str(Address((2,), (1,))) == "2(1)∞"
    assert str(Address((), (1, 2))) == "(12)∞"
    assert Address((1, 2), (1, 2)) == Address((), (1, 2))


@given(letters, letters)
def test_address_letters_and_shift(pre, per):
    a = Address(pre, per)
    w = a.letters(12)
    assert w == (tuple(pre) + tuple(per) * 12)[:12]
    assert a.shifted(1).letters(11) == w[1:]


def test_rho_and_shift():
    assert rho((1, 2, 1), (1, 2, 2)) == pytest.approx(math.exp(-2))
    assert rho((1, 2), (1, 2)) == 0.0
    assert shift((2, 1, 1)) == (1, 1)


def test_tree_rejects_bad_base_curves():
    m = load_fixture("z2")
    with pytest.raises(TreeError):
        CodingTree(m, 4.0, [Curve.segment(4, 2)])
    with pytest.raises(TreeError):
        CodingTree(m, 4.0, [Curve.segment(4, 2), Curve.segment(4, 2)])


def test_edge_functional_equation_and_concatenation(tree_z2):
    tree_z2.level_edges(8)
    rep = tree_consistency(tree_z2)
    assert rep.edges >= 2 ** 9
    assert rep.functional < 1e-12
    assert rep.concatenation == 0.0


def test_vertices_match_inverse_iteration(tree_z2):
    verts = limit_set_sample(tree_z2, 7)
    cloud = inverse_iteration_cloud(tree_z2.map, tree_z2.root, 7)
    assert hausdorff_chordal(verts, cloud) < 1e-12


def test_coding_limit_of_fixed_branch(tree_z2):
    lim = coding_limit(tree_z2, Address((), (1,)))
    assert lim.converged
    assert abs(lim.point - 1.0) < 1e-10


def test_coding_limit_raises_when_capped(tree_z2):
    with pytest.raises(BranchNonConvergence):
        coding_limit(tree_z2, Address((), (1,)), cap=5)


def test_z2_profile_halves():
    rows = diameter_profile(z2_tree(), 10)
    d = [r.max_diameter for r in rows]
    ratios = [b / a for a, b in zip(d[3:], d[4:])]
    assert all(abs(r - 0.5) < 0.1 for r in ratios)
    assert all(r.exhaustive for r in rows)


def test_n_epsilon(tree_z2):
    rows = diameter_profile(tree_z2, 12)
    ne = n_epsilon(tree_z2, 0.01, budget_depth=12, profile=rows)
    assert ne.trustworthy and not ne.empty
    assert rows[ne.value].max_diameter >= 0.01 > rows[ne.value + 1].max_diameter
    assert n_epsilon(tree_z2, 10.0, budget_depth=12, profile=rows).empty


def test_linear_tree_contracts_by_lambda():
    tree = linear_tree(2.0, 1.0)
    lim = coding_limit(tree, Address((), (1,)))
    assert abs(lim.point) < 1e-10
    d = [tree.edge((1,) * (n + 1)).z for n in range(6)]
    lengths = [abs(z[-1] - z[0]) for z in d]
    assert all(b / a == pytest.approx(0.5) for a, b in zip(lengths, lengths[1:]))


def test_sampled_levels_are_reproducible():
    a = diameter_profile(z2_tree(), 15, budget=2 ** 10, samples=64, seed=3)
    b = diameter_profile(z2_tree(), 15, budget=2 ** 10, samples=64, seed=3)
    assert a == b
    assert not a[-1].exhaustive
