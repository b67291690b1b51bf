"""Causality checkers and the constructive extreme-point splitter.

A coupling is causal (from mu to nu) when, conditionally on any pair of
same-length histories with positive mass, the next x step is distributed
exactly as mu's conditional kernel; bicausal adds the mirrored condition.
On trees this next-step kernel test is equivalent to the measurable-map
definition by the chain rule of disintegration.  All conditioning is on
positive-mass histories only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import AlreadyExtremeError, NotCausalError, ValidationError
from .nested import Coupling, CouplingEntry
from .tree import PathDistribution, ScenarioTree, build_tree

KERNEL_TOL = 1e-9
POINT_MASS_TOL = 1e-12
PATH_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    stage: int
    x_history: tuple[float, ...]
    y_history: tuple[float, ...]
    side: str  # "mu" or "nu"
    deviation: float


@dataclass(frozen=True)
class CausalityReport:
    is_causal: bool
    is_bicausal: bool
    is_monge_adapted: bool
    is_invertible_monge: bool
    violations: tuple[Violation, ...] = ()
    max_mu_deviation: float = 0.0
    max_nu_deviation: float = 0.0

    def __post_init__(self):
        if self.is_bicausal and not self.is_causal:
            raise ValidationError("bicausal implies causal")
        if self.is_invertible_monge and not self.is_monge_adapted:
            raise ValidationError("invertible Monge implies Monge-adapted")


def _snap_path(path, law_paths):
    """Match a plan path to a tree leaf path within tolerance."""
    if path in law_paths:
        return path
    for cand in law_paths:
        if len(cand) == len(path) and all(
            abs(a - b) <= PATH_MATCH_TOL for a, b in zip(cand, path)
        ):
            return cand
    raise ValidationError(f"plan path {path} is not a leaf path of the tree")


def _aligned_entries(gamma: Coupling, mu: ScenarioTree, nu: ScenarioTree):
    mu_paths = {p for p, _ in mu.leaf_paths()}
    nu_paths = {p for p, _ in nu.leaf_paths()}
    out: dict[tuple[tuple[float, ...], tuple[float, ...]], float] = {}
    for e in gamma.entries:
        key = (_snap_path(e.mu_path, mu_paths), _snap_path(e.nu_path, nu_paths))
        out[key] = out.get(key, 0.0) + e.mass
    return [CouplingEntry(x, y, m) for (x, y), m in out.items()]


def _marginal_deviation(entries, tree: ScenarioTree, side: int) -> float:
    marg: dict[tuple[float, ...], float] = {}
    for e in entries:
        key = e[side]
        marg[key] = marg.get(key, 0.0) + e.mass
    law = dict(tree.leaf_paths())
    dev = 0.0
    for path in set(law) | set(marg):
        dev = max(dev, abs(law.get(path, 0.0) - marg.get(path, 0.0)))
    return dev


def _nu_from_marginal(gamma: Coupling) -> ScenarioTree:
    pairs = list(gamma.nu_marginal().items())
    return build_tree(PathDistribution.from_pairs(pairs))


class _Analysis:
    """One pass over a coupling: kernel deviations, Monge structure, stops."""

    def __init__(self, gamma: Coupling, mu: ScenarioTree, nu: ScenarioTree, tol: float):
        self.mu = mu
        self.nu = nu
        self.tol = tol
        self.entries = _aligned_entries(gamma, mu, nu)
        self.depth = mu.depth
        dev = _marginal_deviation(self.entries, mu, 0)
        if dev > tol:
            raise ValidationError(
                f"coupling mu-marginal deviates from the tree path law by {dev}"
            )
        self._scan_kernels()
        self._scan_monge()

    def _scan_kernels(self):
        depth, tol = self.depth, self.tol
        violations: list[Violation] = []
        max_mu = max_nu = 0.0
        for t in range(depth):
            cells: dict[tuple, dict] = {}
            for e in self.entries:
                key = (e.mu_path[:t], e.nu_path[:t])
                cell = cells.get(key)
                if cell is None:
                    cell = cells[key] = {"mass": 0.0, "x": {}, "y": {}}
                cell["mass"] += e.mass
                xn, yn = e.mu_path[t], e.nu_path[t]
                cell["x"][xn] = cell["x"].get(xn, 0.0) + e.mass
                cell["y"][yn] = cell["y"].get(yn, 0.0) + e.mass
            for (xh, yh), cell in cells.items():
                mass = cell["mass"]
                if mass <= 0.0:
                    continue
                for side, tree, hist, nxt in (
                    ("mu", self.mu, xh, cell["x"]),
                    ("nu", self.nu, yh, cell["y"]),
                ):
                    node = tree.node_at_history(hist)
                    target = {
                        tree.node(k).value: tree.node(k).cond_prob
                        for k in tree.children(node)
                    }
                    dev = 0.0
                    for v in set(target) | set(nxt):
                        dev = max(
                            dev, abs(nxt.get(v, 0.0) / mass - target.get(v, 0.0))
                        )
                    if side == "mu":
                        max_mu = max(max_mu, dev)
                    else:
                        max_nu = max(max_nu, dev)
                    if dev > tol:
                        violations.append(Violation(t + 1, xh, yh, side, dev))
        violations.sort(key=lambda v: (v.stage, v.side, v.x_history, v.y_history))
        self.violations = tuple(violations)
        self.max_mu_deviation = max_mu
        self.max_nu_deviation = max_nu
        self.causal = max_mu <= tol
        self.bicausal = self.causal and max_nu <= tol

    def _scan_monge(self):
        # Conditional law of y_t given the x-history x_{1:t}, per stage.
        self.y_given_x: dict[tuple[float, ...], dict[float, float]] = {}
        for t in range(1, self.depth + 1):
            for e in self.entries:
                hist = e.mu_path[:t]
                law = self.y_given_x.setdefault(hist, {})
                yv = e.nu_path[t - 1]
                law[yv] = law.get(yv, 0.0) + e.mass
        monge = True
        ymap: dict[tuple[float, ...], float] = {}
        for hist, law in self.y_given_x.items():
            total = math.fsum(law.values())
            ranked = sorted(law.values(), reverse=True)
            if len(ranked) > 1 and ranked[1] / total >= POINT_MASS_TOL:
                monge = False
            ymap[hist] = max(law, key=lambda v: (law[v], -v))
        self.monge = monge
        self.invertible = False
        if monge:
            support = sorted({e.mu_path for e in self.entries})
            images = {x: tuple(ymap[x[:t]] for t in range(1, self.depth + 1)) for x in support}
            injective = len(set(images.values())) == len(support)
            adapted_inverse = True
            for t in range(1, self.depth + 1):
                seen: dict[tuple[float, ...], tuple[float, ...]] = {}
                for x in support:
                    ypre = images[x][:t]
                    xpre = x[:t]
                    if ypre in seen and seen[ypre] != xpre:
                        adapted_inverse = False
                        break
                    seen[ypre] = xpre
                if not adapted_inverse:
                    break
            self.invertible = injective and adapted_inverse

    def support_size(self, hist: tuple[float, ...]) -> int:
        law = self.y_given_x[hist]
        total = math.fsum(law.values())
        return sum(1 for m in law.values() if m / total >= POINT_MASS_TOL)

    def report(self) -> CausalityReport:
        return CausalityReport(
            is_causal=self.causal,
            is_bicausal=self.bicausal,
            is_monge_adapted=self.monge,
            is_invertible_monge=self.invertible,
            violations=self.violations,
            max_mu_deviation=self.max_mu_deviation,
            max_nu_deviation=self.max_nu_deviation,
        )


def _analyze(gamma, mu, nu, tol) -> _Analysis:
    if nu is None:
        nu = _nu_from_marginal(gamma)
    return _Analysis(gamma, mu, nu, tol)


def is_causal(
    gamma: Coupling,
    mu: ScenarioTree,
    nu: ScenarioTree | None = None,
    tol: float = KERNEL_TOL,
) -> CausalityReport:
    """Check the one-sided (mu to nu) information constraint.

    When ``nu`` is omitted it is reconstructed from the coupling's second
    marginal, which leaves the causal fields unchanged and makes the
    bicausal field refer to that induced law.
    """
    return _analyze(gamma, mu, nu, tol).report()


def is_bicausal(
    gamma: Coupling,
    mu: ScenarioTree,
    nu: ScenarioTree,
    tol: float = KERNEL_TOL,
) -> CausalityReport:
    """Check both information constraints; requires both trees."""
    analysis = _analyze(gamma, mu, nu, tol)
    dev = _marginal_deviation(analysis.entries, nu, 1)
    if dev > tol:
        raise ValidationError(
            f"coupling nu-marginal deviates from the tree path law by {dev}"
        )
    return analysis.report()


def detect_monge(
    gamma: Coupling,
    mu: ScenarioTree,
    nu: ScenarioTree | None = None,
    tol: float = KERNEL_TOL,
) -> CausalityReport:
    """Detect whether the plan is concentrated on an adapted map.

    Monge-adapted: conditionally on every positive-mass x-history the
    current y coordinate is a point mass (second-largest conditional atom
    below 1e-12).  Invertible additionally requires the induced path map
    to be injective on the support with an adapted inverse.
    """
    return _analyze(gamma, mu, nu, tol).report()


@dataclass(frozen=True)
class SplitResult:
    """Strict convex decomposition gamma = lam*pi + (1-lam)*pi_tilde."""

    lam: float
    pi: Coupling
    pi_tilde: Coupling
    tau_per_history: Mapping[tuple[float, ...], int]
    j_per_history: Mapping[tuple[float, ...], float] = field(default_factory=dict)


def split_non_extreme(
    gamma: Coupling,
    mu: ScenarioTree,
    nu: ScenarioTree | None = None,
    lam: float | None = None,
    tol: float = KERNEL_TOL,
) -> SplitResult:
    """Split a causal, non-Monge coupling into two distinct causal parts.

    For each x-path, tau is the first stage at which the conditional law
    of y_t given the x-history stops being a point mass; there j is the
    conditional mean and pi renormalizes the kernel onto {y_tau < j}
    whenever that event has conditional mass above lam, with pi_tilde
    taking the exact remainder.  The default lam is half the smallest
    below/above-threshold conditional mass over triggering histories,
    which keeps every triggering branch active.
    """
    analysis = _analyze(gamma, mu, nu, tol)
    if not analysis.causal:
        raise NotCausalError("coupling is not causal; nothing to split")
    if analysis.monge:
        raise AlreadyExtremeError("already extreme: coupling is Monge-adapted")

    depth = analysis.depth
    entries = analysis.entries

    tau: dict[tuple[float, ...], int] = {}
    jmap: dict[tuple[float, ...], float] = {}
    triggers: set[tuple[float, ...]] = set()
    for e in entries:
        x = e.mu_path
        if x in tau:
            continue
        stop = depth + 1
        for t in range(1, depth + 1):
            if analysis.support_size(x[:t]) > 1:
                stop = t
                triggers.add(x[:t])
                break
        tau[x] = stop
        jmap[x] = 0.0

    below: dict[tuple[float, ...], float] = {}
    mean: dict[tuple[float, ...], float] = {}
    for hist in triggers:
        law = analysis.y_given_x[hist]
        total = math.fsum(law.values())
        z = math.fsum(v * m for v, m in law.items()) / total
        mean[hist] = z
        below[hist] = math.fsum(m for v, m in law.items() if v < z) / total

    if lam is None:
        lam = 0.5 * min(min(c, 1.0 - c) for c in below.values())
    else:
        if not (0.0 < lam < 1.0):
            raise ValidationError(f"lambda must lie in (0, 1), got {lam!r}")
        if all(c <= lam for c in below.values()):
            raise ValidationError(
                "lambda leaves no triggering branch active; the split would be vacuous"
            )

    for x, stop in tau.items():
        if stop <= depth:
            jmap[x] = mean[x[:stop]]

    pi_masses: dict[tuple, float] = {}
    for e in entries:
        x, y, m = e.mu_path, e.nu_path, e.mass
        stop = tau[x]
        if stop == depth + 1:
            pi_masses[(x, y)] = m
            continue
        hist = x[:stop]
        c = below[hist]
        if c > lam:
            if y[stop - 1] < mean[hist]:
                pi_masses[(x, y)] = m / c
        else:
            pi_masses[(x, y)] = m

    tilde_masses: dict[tuple, float] = {}
    for e in entries:
        key = (e.mu_path, e.nu_path)
        rest = (e.mass - lam * pi_masses.get(key, 0.0)) / (1.0 - lam)
        if rest > 0.0:
            tilde_masses[key] = rest

    pi = Coupling.from_mass_map(pi_masses)
    pi_tilde = Coupling.from_mass_map(tilde_masses)
    if sorted(pi.entries) == sorted(pi_tilde.entries):
        raise RuntimeError("split produced identical components")
    return SplitResult(lam, pi, pi_tilde, dict(tau), dict(jmap))
