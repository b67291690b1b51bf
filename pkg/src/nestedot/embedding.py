"""Nested distributions and the isometric lift of tree laws.

A nested distribution of depth N is a finite distribution over elements
(value, nested distribution of depth N-1), bottoming out in plain reals.
Lifting a tree replaces every node by (its value, the lift of its child
law); the recursive Wasserstein distance between lifts reproduces the
nested distance exactly, and the lifted space also contains the limits
that the tree laws themselves miss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError
from .metrics import GroundMetric
from .transport import solve_ot
from .tree import PathDistribution, ScenarioTree, build_tree

MERGE_TOL = 1e-12
MASS_TOL = 1e-9


@dataclass(frozen=True)
class NestedAtom:
    mass: float
    value: float
    next: "NestedDistribution | None"


@dataclass(frozen=True)
class NestedDistribution:
    """Finite distribution over (value, deeper nested distribution) pairs."""

    atoms: tuple[NestedAtom, ...]
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValidationError("nested distribution depth must be >= 1")
        if not self.atoms:
            raise ValidationError("nested distribution needs at least one atom")
        for a in self.atoms:
            if not (math.isfinite(a.mass) and a.mass > 0.0):
                raise ValidationError(f"atom mass must be positive, got {a.mass!r}")
            if not math.isfinite(a.value):
                raise ValidationError(f"atom value must be finite, got {a.value!r}")
            if self.depth == 1:
                if a.next is not None:
                    raise ValidationError("depth-1 atoms must not have a continuation")
            else:
                if a.next is None or a.next.depth != self.depth - 1:
                    raise ValidationError(
                        f"atoms at depth {self.depth} need depth-{self.depth - 1} continuations"
                    )
        total = math.fsum(a.mass for a in self.atoms)
        if abs(total - 1.0) > MASS_TOL:
            raise ValidationError(f"atom masses sum to {total}, expected 1")
        atoms = _merge_atoms(
            [NestedAtom(a.mass / total, float(a.value), a.next) for a in self.atoms]
        )
        object.__setattr__(self, "atoms", tuple(atoms))


def _same_element(a: NestedAtom, b: NestedAtom, tol: float = MERGE_TOL) -> bool:
    """Equality of (value, continuation), ignoring the atom masses."""
    if abs(a.value - b.value) > tol:
        return False
    if (a.next is None) != (b.next is None):
        return False
    if a.next is None:
        return True
    return _same_distribution(a.next, b.next, tol)


def _same_distribution(
    p: NestedDistribution, q: NestedDistribution, tol: float = MERGE_TOL
) -> bool:
    if p.depth != q.depth or len(p.atoms) != len(q.atoms):
        return False
    for a, b in zip(p.atoms, q.atoms):
        if abs(a.mass - b.mass) > tol or not _same_element(a, b, tol):
            return False
    return True


def _merge_atoms(atoms: list[NestedAtom]) -> list[NestedAtom]:
    """Merge atoms with identical (value, continuation), adding masses."""
    atoms = sorted(atoms, key=lambda a: a.value)
    out: list[NestedAtom] = []
    for a in atoms:
        for k, b in enumerate(out):
            if _same_element(a, b):
                out[k] = NestedAtom(b.mass + a.mass, b.value, b.next)
                break
        else:
            out.append(a)
    return out


def embed(tree: ScenarioTree) -> NestedDistribution:
    """Lift a tree law to its nested distribution.

    Each stage-t node becomes (value, distribution of its lifted
    children); lifted siblings that coincide are merged with summed mass,
    which is exactly what identifies laws with the same information
    structure.
    """

    def lift(node: int, stage: int) -> NestedDistribution:
        atoms = []
        for k in tree.children(node):
            child = tree.node(k)
            nxt = None if stage + 1 == tree.depth else lift(k, stage + 1)
            atoms.append(NestedAtom(child.cond_prob, child.value, nxt))
        return NestedDistribution(tuple(atoms), tree.depth - stage)

    return lift(tree.root, 0)


def nested_wasserstein(
    p: NestedDistribution, q: NestedDistribution, metric: GroundMetric
) -> float:
    """Recursive Wasserstein distance between nested distributions.

    Element distances add the base cost of the values to the optimal
    transport cost between the continuations, evaluated bottom-up with the
    exact dense solver at every level.
    """
    if p.depth != q.depth:
        raise ValidationError(f"depth mismatch: {p.depth} vs {q.depth}")
    memo: dict[tuple[int, int], float] = {}

    def element_cost(a: NestedAtom, b: NestedAtom) -> float:
        key = (id(a), id(b))
        cached = memo.get(key)
        if cached is not None:
            return cached
        cost = metric.base_dist(a.value, b.value) ** metric.p
        if a.next is not None:
            cost += dist_cost(a.next, b.next)
        memo[key] = cost
        return cost

    def dist_cost(pp: NestedDistribution, qq: NestedDistribution) -> float:
        cost = [[element_cost(a, b) for b in qq.atoms] for a in pp.atoms]
        res = solve_ot(cost, [a.mass for a in pp.atoms], [b.mass for b in qq.atoms])
        return res.value

    return metric.root(dist_cost(p, q))


def dirac_approximation(p: NestedDistribution, epsilon: float) -> ScenarioTree:
    """Tree law approximating a depth-2 nested distribution.

    Stage-1 values fan out the atom values by the deterministic rule
    ``a_j + epsilon * j / k`` (1-based j over k atoms), so they stay within
    epsilon of the originals while becoming pairwise distinct; stage-2
    conditionals are copied verbatim.  The lift of the result converges to
    ``p`` as epsilon tends to zero.
    """
    if p.depth != 2:
        raise ValidationError("dirac_approximation expects a depth-2 nested distribution")
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise ValidationError(f"epsilon must be positive, got {epsilon!r}")
    k = len(p.atoms)
    pairs = []
    for j, atom in enumerate(p.atoms, start=1):
        first = atom.value + epsilon * j / k
        for leaf in atom.next.atoms:
            pairs.append(((first, leaf.value), atom.mass * leaf.mass))
    return build_tree(PathDistribution.from_pairs(pairs))
