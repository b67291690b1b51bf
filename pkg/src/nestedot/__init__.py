"""Information-aware distances between laws of finite discrete-time processes.

Process laws live on scenario trees.  The package computes the nested
(bicausal) transport distance by backward recursion, the Knothe-Rosenblatt
rearrangement distance and the classical Wasserstein distance, verifies
causality properties of couplings, splits non-extreme causal couplings,
and lifts tree laws into nested distributions where the nested distance
becomes a plain Wasserstein distance.
"""

from .causality import (
    CausalityReport,
    SplitResult,
    Violation,
    detect_monge,
    is_bicausal,
    is_causal,
    split_non_extreme,
)
from .embedding import (
    NestedAtom,
    NestedDistribution,
    dirac_approximation,
    embed,
    nested_wasserstein,
)
from .errors import (
    AlreadyExtremeError,
    NotCausalError,
    OracleMismatchError,
    SizeGuardError,
    ValidationError,
)
from .knothe import KRCoupling, antitone_coupling, kr_coupling, kr_distance, kr_gap_demo
from .metrics import GroundMetric
from .nested import (
    Coupling,
    CouplingEntry,
    NestedResult,
    OracleResult,
    ValueTable,
    brute_force_bicausal,
    cauchy_check,
    nested_distance,
    wasserstein_distance,
)
from .transport import (
    DiscreteDistribution,
    OTResult,
    TransportPlan,
    quantile_function,
    solve_ot,
    wasserstein_1d,
)
from .tree import (
    Node,
    PathDistribution,
    ScenarioTree,
    build_tree,
    disintegrate,
    tree_to_paths,
)

__version__ = "0.1.0"

__all__ = [
    "AlreadyExtremeError",
    "CausalityReport",
    "Coupling",
    "CouplingEntry",
    "DiscreteDistribution",
    "GroundMetric",
    "KRCoupling",
    "NestedAtom",
    "NestedDistribution",
    "NestedResult",
    "Node",
    "NotCausalError",
    "OTResult",
    "OracleMismatchError",
    "OracleResult",
    "PathDistribution",
    "ScenarioTree",
    "SizeGuardError",
    "SplitResult",
    "TransportPlan",
    "ValidationError",
    "ValueTable",
    "Violation",
    "antitone_coupling",
    "brute_force_bicausal",
    "build_tree",
    "cauchy_check",
    "detect_monge",
    "dirac_approximation",
    "disintegrate",
    "embed",
    "is_bicausal",
    "is_causal",
    "kr_coupling",
    "kr_distance",
    "kr_gap_demo",
    "nested_distance",
    "nested_wasserstein",
    "quantile_function",
    "solve_ot",
    "split_non_extreme",
    "tree_to_paths",
    "wasserstein_1d",
    "wasserstein_distance",
]
