"""Parameterized instance families used by demos, regressions and tests."""

from __future__ import annotations

import numpy as np

from .embedding import NestedAtom, NestedDistribution
from .errors import ValidationError
from .nested import Coupling, CouplingEntry
from .tree import PathDistribution, ScenarioTree, build_tree

_VALUE_LATTICE = tuple(round(-2.0 + 0.25 * k, 6) for k in range(17))


def _tree(pairs) -> ScenarioTree:
    return build_tree(PathDistribution.from_pairs(pairs))


def collapsing_fan(n: int) -> ScenarioTree:
    """Two-branch fan with stage-1 values +-1/n and stage-2 values +-1."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    return _tree([((1.0 / n, 1.0), 0.5), ((-1.0 / n, -1.0), 0.5)])


def merged_limit() -> ScenarioTree:
    """Tree with a single stage-1 state 0 branching to +-1."""
    return _tree([((0.0, 1.0), 0.5), ((0.0, -1.0), 0.5)])


def fan_vs_merged(n: int) -> tuple[ScenarioTree, ScenarioTree]:
    """The fan together with its first-coordinate-merged counterpart."""
    return collapsing_fan(n), merged_limit()


def perturbed_pair(eps: float, depth: int = 2) -> tuple[ScenarioTree, ScenarioTree]:
    """Chains (eps,...,eps,+-1) versus (0,...,0,+-1), each two branches."""
    if depth < 2:
        raise ValidationError("perturbed_pair needs depth >= 2")
    up = tuple([eps] * (depth - 1) + [1.0])
    down = tuple([-eps] * (depth - 1) + [-1.0])
    mu_eps = _tree([(up, 0.5), (down, 0.5)])
    mu = _tree(
        [(tuple([0.0] * (depth - 1) + [1.0]), 0.5), (tuple([0.0] * (depth - 1) + [-1.0]), 0.5)]
    )
    return mu_eps, mu


def crossed_fans(n: int) -> tuple[ScenarioTree, ScenarioTree]:
    """Fans whose second-stage values are sign-crossed between the laws."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    mu = _tree([((1.0 / n, n / 2.0), 0.5), ((-1.0 / n, -n / 2.0), 0.5)])
    nu = _tree([((1.0 / n, -n / 2.0), 0.5), ((-1.0 / n, n / 2.0), 0.5)])
    return mu, nu


def hidden_branch_pair(n: int, second_stage_atoms: int = 16) -> tuple[ScenarioTree, ScenarioTree]:
    """Branch-revealing tree versus its merged counterpart.

    One branch emits a uniform second stage on [0, 1], the other on
    [1, 2]; the first coordinate is 1/n on the second branch and 0 on the
    first.  In the merged law the first coordinate is 0 on both branches.
    Uniforms are discretized to ``second_stage_atoms`` equal atoms at the
    midpoints of a regular grid.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    k = second_stage_atoms
    if k < 1:
        raise ValidationError(f"need at least one second-stage atom, got {k}")
    mids = [(2 * i + 1) / (2 * k) for i in range(k)]
    w = 0.5 / k
    mu_n = _tree(
        [((0.0, m), w) for m in mids] + [((1.0 / n, 1.0 + m), w) for m in mids]
    )
    mu = _tree(
        [((0.0, m), w) for m in mids] + [((0.0, 1.0 + m), w) for m in mids]
    )
    return mu_n, mu


def fan_limit_nested() -> NestedDistribution:
    """Depth-2 nested distribution with two x=0 atoms and opposite leaves.

    This is the limit of the lifted collapsing fans; it cannot arise as
    the lift of any tree because two atoms share the value 0 with
    different continuations.
    """
    up = NestedDistribution((NestedAtom(1.0, 1.0, None),), 1)
    down = NestedDistribution((NestedAtom(1.0, -1.0, None),), 1)
    return NestedDistribution(
        (NestedAtom(0.5, 0.0, up), NestedAtom(0.5, 0.0, down)), 2
    )


def random_tree(
    rng: np.random.Generator,
    depth: int,
    max_branch: int = 3,
    max_leaves: int = 12,
    lattice: tuple[float, ...] = _VALUE_LATTICE,
) -> ScenarioTree:
    """Random tree with lattice values, bounded branching and leaf count."""
    if depth < 1:
        raise ValidationError("depth must be >= 1")

    pairs = []

    def expand(prefix: tuple[float, ...], weight: float, stage: int, budget: int):
        if stage == depth:
            pairs.append((prefix, weight))
            return
        nb = int(rng.integers(1, min(max_branch, budget) + 1))
        shares = rng.integers(1, 5, size=nb).astype(float)
        shares /= shares.sum()
        values = rng.choice(len(lattice), size=nb, replace=False)
        sub_budgets = _split_budget(rng, budget, nb)
        for v_idx, share, sub in zip(values, shares, sub_budgets):
            expand(prefix + (lattice[v_idx],), weight * share, stage + 1, sub)

    expand((), 1.0, 0, max_leaves)
    return build_tree(PathDistribution.from_pairs(pairs))


def _split_budget(rng: np.random.Generator, budget: int, parts: int) -> list[int]:
    out = [1] * parts
    for _ in range(budget - parts):
        out[int(rng.integers(parts))] += 1
    return out


def random_tree_pair(
    rng: np.random.Generator, depth: int, max_branch: int = 3, max_leaves: int = 12
) -> tuple[ScenarioTree, ScenarioTree]:
    return (
        random_tree(rng, depth, max_branch, max_leaves),
        random_tree(rng, depth, max_branch, max_leaves),
    )


def random_adapted_map(
    rng: np.random.Generator,
    tree: ScenarioTree,
    lattice: tuple[float, ...] = _VALUE_LATTICE,
) -> dict[int, float]:
    """Assign a target value to every non-root node (one per x-history)."""
    return {
        nid: float(lattice[int(rng.integers(len(lattice)))])
        for stage in range(1, tree.depth + 1)
        for nid in tree.nodes_at_stage(stage)
    }


def monge_pushforward(
    tree: ScenarioTree, assignment: dict[int, float]
) -> tuple[Coupling, ScenarioTree]:
    """Plan (id, T)_* mu of an adapted map given per-history values."""
    entries = []
    image_pairs: dict[tuple[float, ...], float] = {}
    for leaf, (path, weight) in zip(tree.leaves, tree.leaf_paths()):
        chain = []
        nid = leaf
        while tree.node(nid).parent is not None:
            chain.append(nid)
            nid = tree.node(nid).parent
        chain.reverse()
        ypath = tuple(assignment[k] for k in chain)
        entries.append(CouplingEntry(path, ypath, weight))
        image_pairs[ypath] = image_pairs.get(ypath, 0.0) + weight
    nu = build_tree(PathDistribution.from_pairs(image_pairs.items()))
    return Coupling(tuple(entries)), nu


def random_monge_mixture(
    rng: np.random.Generator, tree: ScenarioTree
) -> tuple[Coupling, ScenarioTree, float]:
    """Strict mixture of two distinct adapted-map plans with the same source.

    The result is causal (convexity) but not Monge-adapted, because the two
    maps are forced to disagree on at least one positive-mass history.
    """
    first = random_adapted_map(rng, tree)
    while True:
        second = random_adapted_map(rng, tree)
        if any(second[k] != first[k] for k in first):
            break
    alpha = float(rng.integers(2, 9)) / 10.0
    plan_a = monge_pushforward(tree, first)[0]
    plan_b = monge_pushforward(tree, second)[0]
    masses: dict[tuple, float] = {}
    for plan, w in ((plan_a, alpha), (plan_b, 1.0 - alpha)):
        for e in plan.entries:
            key = (e.mu_path, e.nu_path)
            masses[key] = masses.get(key, 0.0) + w * e.mass
    mixed_law: dict[tuple[float, ...], float] = {}
    for (_, y), m in masses.items():
        mixed_law[y] = mixed_law.get(y, 0.0) + m
    nu = build_tree(PathDistribution.from_pairs(mixed_law.items()))
    return Coupling.from_mass_map(masses), nu, alpha
