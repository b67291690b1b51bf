import json

import numpy as np
import pytest

from nestedot import (
    GroundMetric,
    NestedAtom,
    NestedDistribution,
    PathDistribution,
    ValidationError,
    build_tree,
    dirac_approximation,
    embed,
    nested_distance,
    nested_wasserstein,
    wasserstein_1d,
)
from nestedot.embedding import _same_distribution
from nestedot.families import (
    collapsing_fan,
    fan_limit_nested,
    fan_vs_merged,
    merged_limit,
    random_tree,
    random_tree_pair,
)
from nestedot.io import dumps_canonical, nested_from_json, nested_to_json

M1 = GroundMetric.usual(1.0)
M2 = GroundMetric.usual(2.0)


def leaf_dist(*atoms):
    return NestedDistribution(tuple(NestedAtom(m, v, None) for v, m in atoms), 1)


def test_embed_single_path():
    tree = build_tree(PathDistribution.from_pairs([((0.0, 1.0), 1.0)]))
    dist = embed(tree)
    assert dist.depth == 2
    assert len(dist.atoms) == 1
    atom = dist.atoms[0]
    assert atom.mass == 1.0 and atom.value == 0.0
    assert atom.next.atoms[0].value == 1.0


def test_embed_merged_tree():
    dist = embed(merged_limit())
    assert len(dist.atoms) == 1
    atom = dist.atoms[0]
    assert atom.value == 0.0
    assert len(atom.next.atoms) == 2
    assert {a.value for a in atom.next.atoms} == {-1.0, 1.0}


def test_embed_fan():
    dist = embed(collapsing_fan(2))
    assert len(dist.atoms) == 2
    for atom in dist.atoms:
        assert atom.mass == 0.5
        assert len(atom.next.atoms) == 1


def test_embed_injective_on_laws():
    rng = np.random.default_rng(77)
    for _ in range(10):
        a = random_tree(rng, 2)
        b = random_tree(rng, 2)
        same_tree = a.canonical_key() == b.canonical_key()
        assert _same_distribution(embed(a), embed(b)) == same_tree


def test_nested_wasserstein_identity():
    dist = embed(collapsing_fan(3))
    assert nested_wasserstein(dist, dist, M2) == 0.0


def test_nested_wasserstein_matches_closed_form():
    fan, merged = fan_vs_merged(2)
    assert nested_wasserstein(embed(fan), embed(merged), M2) == pytest.approx(1.5, abs=1e-9)


def test_depth_one_reduces_to_line_transport():
    p = leaf_dist((0.0, 0.5), (1.0, 0.5))
    q = leaf_dist((0.5, 1.0))
    got = nested_wasserstein(p, q, M2)
    from nestedot import DiscreteDistribution

    cost, _ = wasserstein_1d(
        DiscreteDistribution([(0.0, 0.5), (1.0, 0.5)]),
        DiscreteDistribution([(0.5, 1.0)]),
        M2,
    )
    assert got == pytest.approx(cost**0.5, abs=1e-12)


def test_isometry_randomized():
    rng = np.random.default_rng(2718)
    for _ in range(25):
        mu, nu = random_tree_pair(rng, int(rng.integers(1, 4)))
        metric = GroundMetric.usual(float(rng.choice([1.0, 2.0])))
        nd = nested_distance(mu, nu, metric).distance
        lifted = nested_wasserstein(embed(mu), embed(nu), metric)
        assert abs(nd - lifted) <= 1e-9


def test_isometry_truncated_metric():
    rng = np.random.default_rng(303)
    metric = GroundMetric.truncated(2.0, cap=1.0)
    for _ in range(5):
        mu, nu = random_tree_pair(rng, 2)
        nd = nested_distance(mu, nu, metric).distance
        lifted = nested_wasserstein(embed(mu), embed(nu), metric)
        assert abs(nd - lifted) <= 1e-9


def test_completion_witness():
    # The lifted fans converge to a limit with two x=0 atoms carrying
    # different continuations; no tree law lifts to it, and the unlifted
    # nested distances to the merged tree stay bounded away from zero.
    limit = fan_limit_nested()
    merged = merged_limit()
    previous = None
    for n in (1, 2, 4, 8, 16):
        fan = collapsing_fan(n)
        lifted_gap = nested_wasserstein(embed(fan), limit, M1)
        assert lifted_gap == pytest.approx(1.0 / n, abs=1e-12)
        if previous is not None:
            assert lifted_gap < previous
        previous = lifted_gap
        assert nested_distance(fan, merged, M1).distance >= 1.0
    values = [a.value for a in limit.atoms]
    assert values[0] == values[1]
    assert not _same_distribution(limit.atoms[0].next, limit.atoms[1].next)
    for n in (1, 2, 4):
        assert not _same_distribution(embed(collapsing_fan(n)), limit)


def test_lifted_cauchy_matches_unlifted():
    fans = {n: embed(collapsing_fan(n)) for n in (2, 4, 8)}
    for n in (2, 4):
        gap = nested_wasserstein(fans[n], fans[2 * n], M1)
        assert gap <= abs(1.0 / n - 0.5 / n) + 1e-12


def test_dirac_approximation_converges():
    p = embed(merged_limit())
    for eps in (0.5, 0.25, 0.125):
        tree = dirac_approximation(p, eps)
        assert nested_wasserstein(embed(tree), p, M2) <= eps + 1e-12
    tree = dirac_approximation(p, 1e-3)
    stage1 = tree.nodes_at_stage(1)
    assert len(stage1) == 1  # a single atom stays a single (shifted) node
    assert abs(tree.node(stage1[0]).value) <= 1e-3


def test_dirac_approximation_separates_equal_values():
    limit = fan_limit_nested()
    for eps in (0.5, 0.1, 0.02):
        tree = dirac_approximation(limit, eps)
        stage1 = tree.nodes_at_stage(1)
        assert len(stage1) == 2  # equal atom values become distinct states
        assert nested_wasserstein(embed(tree), limit, M2) <= eps + 1e-12


def test_dirac_approximation_single_atom_chain():
    p = NestedDistribution(
        (NestedAtom(1.0, 0.25, leaf_dist((2.0, 1.0))),), 2
    )
    tree = dirac_approximation(p, 0.125)
    assert len(tree.leaves) == 1
    assert tree.leaf_paths()[0][0] == (0.375, 2.0)


def test_dirac_approximation_validation():
    with pytest.raises(ValidationError):
        dirac_approximation(leaf_dist((0.0, 1.0)), 0.1)
    with pytest.raises(ValidationError):
        dirac_approximation(fan_limit_nested(), 0.0)
    deep = embed(build_tree(PathDistribution.from_pairs([((0.0, 1.0, 2.0), 1.0)])))
    with pytest.raises(ValidationError):
        dirac_approximation(deep, 0.1)


def test_nested_distribution_validation():
    with pytest.raises(ValidationError):
        NestedDistribution((), 1)
    with pytest.raises(ValidationError):
        NestedDistribution((NestedAtom(0.4, 0.0, None),), 1)
    with pytest.raises(ValidationError):
        NestedDistribution((NestedAtom(1.0, 0.0, leaf_dist((0.0, 1.0))),), 1)
    with pytest.raises(ValidationError):
        NestedDistribution((NestedAtom(1.0, 0.0, None),), 2)


def test_duplicate_atoms_merged():
    dist = NestedDistribution(
        (NestedAtom(0.25, 1.0, None), NestedAtom(0.25, 1.0, None), NestedAtom(0.5, 2.0, None)),
        1,
    )
    assert len(dist.atoms) == 2
    assert dist.atoms[0].mass == pytest.approx(0.5)


def test_json_round_trip():
    dist = embed(collapsing_fan(3))
    text = dumps_canonical(nested_to_json(dist))
    back = nested_from_json(json.loads(text))
    assert _same_distribution(dist, back)
    limit = fan_limit_nested()
    back2 = nested_from_json(json.loads(dumps_canonical(nested_to_json(limit))))
    assert _same_distribution(limit, back2)
