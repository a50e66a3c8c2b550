"""Link-failure impact evaluation and robust network design at desk scale."""

from .failure import (
    CriticalSet,
    Criticality,
    CriticalityLabel,
    FailureScenario,
    ImpactRecord,
    classify,
    enumerate_failures,
    impact_oracle,
    impact_simplified,
    select_critical,
)
from .netmodel import (
    NetworkInstance,
    Topology,
    TrafficMatrix,
    assign_random_capacities,
    generate_gravity_tm,
    generate_random_topology,
    load_topology,
    prune_degree_one,
)
from .robustdesign import (
    PredictorHandle,
    TEPlan,
    UpgradePlan,
    ValidationReport,
    robust_validate,
    te_certify_and_iterate,
    te_solve,
    upgrade_optimize,
    upgrade_threshold,
)
from .routing import (
    LinkLoadProfile,
    RoutingDecision,
    compute_loads,
    decompose_to_paths,
    solve_mcf_min_mlu,
    solve_ospf,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
