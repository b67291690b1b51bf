"""Nested (bicausal) distance by backward recursion, with an LP oracle.

The backward recursion evaluates, for every pair of same-stage nodes, the
optimal one-stage transport between the conditional next-step laws where
the cost of a child pair adds the already-computed continuation value.
An optimal bicausal coupling is assembled by composing the per-pair
one-stage plans down the trees.  ``brute_force_bicausal`` solves the same
problem as a single linear program over all path pairs and serves as an
independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import SizeGuardError, ValidationError
from .metrics import GroundMetric
from .transport import solve_ot
from .tree import ScenarioTree

ORACLE_SIZE_GUARD = 10_000


class CouplingEntry(NamedTuple):
    mu_path: tuple[float, ...]
    nu_path: tuple[float, ...]
    mass: float


@dataclass(frozen=True)
class Coupling:
    """Joint mass assignment over pairs of root-to-leaf paths."""

    entries: tuple[CouplingEntry, ...]

    def __post_init__(self):
        for e in self.entries:
            if not (math.isfinite(e.mass) and e.mass > 0.0):
                raise ValidationError(f"coupling mass must be positive, got {e.mass!r}")
        ordered = tuple(sorted(self.entries, key=lambda e: (e.mu_path, e.nu_path)))
        keys = [(e.mu_path, e.nu_path) for e in ordered]
        if len(set(keys)) != len(keys):
            raise ValidationError("duplicate coupling entries")
        object.__setattr__(self, "entries", ordered)

    @classmethod
    def from_mass_map(
        cls, masses: Mapping[tuple[tuple[float, ...], tuple[float, ...]], float]
    ) -> "Coupling":
        return cls(
            tuple(
                CouplingEntry(x, y, m)
                for (x, y), m in masses.items()
                if m > 0.0
            )
        )

    def __len__(self):
        return len(self.entries)

    @property
    def total_mass(self) -> float:
        return math.fsum(e.mass for e in self.entries)

    def mu_marginal(self) -> dict[tuple[float, ...], float]:
        out: dict[tuple[float, ...], float] = {}
        for e in self.entries:
            out[e.mu_path] = out.get(e.mu_path, 0.0) + e.mass
        return out

    def nu_marginal(self) -> dict[tuple[float, ...], float]:
        out: dict[tuple[float, ...], float] = {}
        for e in self.entries:
            out[e.nu_path] = out.get(e.nu_path, 0.0) + e.mass
        return out

    def transpose(self) -> "Coupling":
        return Coupling(tuple(CouplingEntry(e.nu_path, e.mu_path, e.mass) for e in self.entries))

    def cost(self, metric: GroundMetric) -> float:
        """Total p-th-power transport cost of the plan."""
        return math.fsum(e.mass * metric.path_cost(e.mu_path, e.nu_path) for e in self.entries)

    def validate_marginals(
        self, mu: ScenarioTree, nu: ScenarioTree, tol: float = 1e-9
    ) -> float:
        """Max deviation of both marginals from the trees' path laws."""
        dev = 0.0
        for tree, marginal in ((mu, self.mu_marginal()), (nu, self.nu_marginal())):
            law = dict(tree.leaf_paths())
            for path in set(law) | set(marginal):
                dev = max(dev, abs(law.get(path, 0.0) - marginal.get(path, 0.0)))
        if dev > tol:
            raise ValidationError(f"coupling marginals deviate by {dev}")
        return dev


class ValueTable:
    """Optimal continuation costs of the backward recursion.

    ``value(t, i, j)`` is the p-th-power cost-to-go of the node pair
    (i at stage t of mu, j at stage t of nu); stage-N entries are exactly
    zero and the stage-0 root pair carries the total optimal cost.
    """

    def __init__(self, depth: int, values: Mapping[tuple[int, int, int], float]):
        self.depth = depth
        self._values = dict(values)

    def value(self, stage: int, mu_node: int, nu_node: int) -> float:
        return self._values[(stage, mu_node, nu_node)]

    def items(self):
        return self._values.items()

    def transpose(self) -> "ValueTable":
        return ValueTable(
            self.depth, {(t, j, i): v for (t, i, j), v in self._values.items()}
        )

    def __len__(self):
        return len(self._values)


class NestedResult(NamedTuple):
    distance: float
    table: ValueTable
    plan: Coupling


class OracleResult(NamedTuple):
    distance: float
    plan: Coupling


def _check_pair(mu: ScenarioTree, nu: ScenarioTree) -> None:
    if mu.depth != nu.depth:
        raise ValidationError(f"depth mismatch: {mu.depth} vs {nu.depth}")


def _backward(mu: ScenarioTree, nu: ScenarioTree, metric: GroundMetric):
    """Dense value table plus the optimal one-stage plan per node pair."""
    depth = mu.depth
    values: dict[tuple[int, int, int], float] = {}
    plans: dict[tuple[int, int], tuple[tuple[int, ...], tuple[int, ...], np.ndarray]] = {}
    for i in mu.nodes_at_stage(depth):
        for j in nu.nodes_at_stage(depth):
            values[(depth, i, j)] = 0.0
    for t in range(depth - 1, -1, -1):
        for i in mu.nodes_at_stage(t):
            kids_i = mu.children(i)
            vi = [mu.node(k).value for k in kids_i]
            pi = [mu.node(k).cond_prob for k in kids_i]
            for j in nu.nodes_at_stage(t):
                kids_j = nu.children(j)
                vj = [nu.node(k).value for k in kids_j]
                pj = [nu.node(k).cond_prob for k in kids_j]
                cost = np.empty((len(kids_i), len(kids_j)))
                for a, ka in enumerate(kids_i):
                    for b, kb in enumerate(kids_j):
                        cost[a, b] = (
                            metric.base_dist(vi[a], vj[b]) ** metric.p
                            + values[(t + 1, ka, kb)]
                        )
                res = solve_ot(cost, pi, pj)
                values[(t, i, j)] = res.value
                plans[(i, j)] = (kids_i, kids_j, res.plan.matrix)
    return values, plans


def _compose_plan(mu: ScenarioTree, nu: ScenarioTree, plans) -> Coupling:
    depth = mu.depth
    masses: dict[tuple[tuple[float, ...], tuple[float, ...]], float] = {}
    stack = [(mu.root, nu.root, 1.0, 0)]
    while stack:
        i, j, mass, t = stack.pop()
        if t == depth:
            key = (mu.path(i), nu.path(j))
            masses[key] = masses.get(key, 0.0) + mass
            continue
        kids_i, kids_j, x = plans[(i, j)]
        for a, ka in enumerate(kids_i):
            for b, kb in enumerate(kids_j):
                frac = x[a, b]
                if frac > 0.0:
                    stack.append((ka, kb, mass * frac, t + 1))
    return Coupling.from_mass_map(masses)


def nested_distance(
    mu: ScenarioTree, nu: ScenarioTree, metric: GroundMetric
) -> NestedResult:
    """Nested distance, value table and an optimal bicausal coupling.

    The recursion runs on the canonically ordered pair (results are
    transposed back when the arguments are swapped), which makes the
    returned distance exactly symmetric in its arguments.
    """
    _check_pair(mu, nu)
    swapped = mu.canonical_key() > nu.canonical_key()
    first, second = (nu, mu) if swapped else (mu, nu)
    values, plans = _backward(first, second, metric)
    plan = _compose_plan(first, second, plans)
    table = ValueTable(first.depth, values)
    if swapped:
        plan = plan.transpose()
        table = table.transpose()
    total = values[(0, first.root, second.root)]
    return NestedResult(metric.root(total), table, plan)


def wasserstein_distance(
    mu: ScenarioTree, nu: ScenarioTree, metric: GroundMetric
) -> float:
    """Classical transport distance over unconstrained path couplings."""
    _check_pair(mu, nu)
    mu_paths = mu.leaf_paths()
    nu_paths = nu.leaf_paths()
    if len(mu_paths) * len(nu_paths) > ORACLE_SIZE_GUARD:
        raise SizeGuardError("instance too large for the dense path-pair solver")
    cost = np.array(
        [[metric.path_cost(x, y) for y, _ in nu_paths] for x, _ in mu_paths]
    )
    res = solve_ot(cost, [w for _, w in mu_paths], [w for _, w in nu_paths])
    return metric.root(res.value)


def brute_force_bicausal(
    mu: ScenarioTree, nu: ScenarioTree, metric: GroundMetric
) -> OracleResult:
    """Exact bicausal optimum as one linear program over path pairs.

    Bicausality enters as linear equalities: for every stage t and every
    pair of stage-t histories, the joint mass on (history pair, next x
    child) equals the child's conditional probability times the history
    pair's mass, and symmetrically on the y side.  Conditioning on
    zero-mass history pairs is then automatically unconstrained.
    """
    _check_pair(mu, nu)
    mu_paths = mu.leaf_paths()
    nu_paths = nu.leaf_paths()
    m, n = len(mu_paths), len(nu_paths)
    if m * n > ORACLE_SIZE_GUARD:
        raise SizeGuardError("instance too large for the brute-force oracle")

    def var(k: int, l: int) -> int:
        return k * n + l

    c = np.array(
        [metric.path_cost(x, y) for x, _ in mu_paths for y, _ in nu_paths]
    )

    mu_leaf_index = {leaf: k for k, leaf in enumerate(mu.leaves)}
    nu_leaf_index = {leaf: l for l, leaf in enumerate(nu.leaves)}

    def leaves_under(tree: ScenarioTree, nid: int, index: dict[int, int]) -> list[int]:
        out = []
        stack = [nid]
        while stack:
            cur = stack.pop()
            kids = tree.children(cur)
            if not kids:
                out.append(index[cur])
            else:
                stack.extend(kids)
        return out

    rows: list[int] = []
    cols: list[int] = []
    data: list[float] = []
    rhs: list[float] = []
    row_id = 0

    def add(entries: Iterable[tuple[int, float]], b: float):
        nonlocal row_id
        for col, coef in entries:
            rows.append(row_id)
            cols.append(col)
            data.append(coef)
        rhs.append(b)
        row_id += 1

    for k, (_, w) in enumerate(mu_paths):
        add(((var(k, l), 1.0) for l in range(n)), w)
    for l, (_, w) in enumerate(nu_paths):
        add(((var(k, l), 1.0) for k in range(m)), w)

    for t in range(1, mu.depth):
        for i in mu.nodes_at_stage(t):
            block_i = leaves_under(mu, i, mu_leaf_index)
            for j in nu.nodes_at_stage(t):
                block_j = leaves_under(nu, j, nu_leaf_index)
                for child in mu.children(i):
                    p_child = mu.node(child).cond_prob
                    child_leaves = set(leaves_under(mu, child, mu_leaf_index))
                    coefs: dict[int, float] = {}
                    for k in block_i:
                        base = 1.0 if k in child_leaves else 0.0
                        for l in block_j:
                            coefs[var(k, l)] = base - p_child
                    add(coefs.items(), 0.0)
                for child in nu.children(j):
                    p_child = nu.node(child).cond_prob
                    child_leaves = set(leaves_under(nu, child, nu_leaf_index))
                    coefs = {}
                    for l in block_j:
                        base = 1.0 if l in child_leaves else 0.0
                        for k in block_i:
                            coefs[var(k, l)] = base - p_child
                    add(coefs.items(), 0.0)

    a_eq = sp.csr_matrix((data, (rows, cols)), shape=(row_id, m * n))
    res = linprog(c, A_eq=a_eq, b_eq=np.array(rhs), bounds=(0.0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"bicausal oracle LP failed: {res.message}")
    z = res.x
    masses: dict[tuple[tuple[float, ...], tuple[float, ...]], float] = {}
    for k, (x, _) in enumerate(mu_paths):
        for l, (y, _) in enumerate(nu_paths):
            mass = z[var(k, l)]
            if mass > 1e-12:
                masses[(x, y)] = mass
    return OracleResult(metric.root(float(res.fun)), Coupling.from_mass_map(masses))


def cauchy_check(trees: list[ScenarioTree], metric: GroundMetric) -> np.ndarray:
    """Full symmetric matrix of pairwise nested distances."""
    if len(trees) < 2:
        raise ValidationError("cauchy_check needs at least two trees")
    k = len(trees)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d = nested_distance(trees[i], trees[j], metric).distance
            out[i, j] = d
            out[j, i] = d
    return out
