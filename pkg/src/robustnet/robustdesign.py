"""Robust network design on top of a pluggable failure-impact predictor.

Three problems share one pattern: rank failure scenarios by (predicted or
exact) impact, keep only the critical ones, and solve or verify against
that small set.

* robust validation: worst-case MLU over a scenario set;
* network upgrade: cheapest capacity additions that make every scenario
  congestion free;
* fault-tolerant traffic engineering: joint base routing plus per-link
  protection flows, congestion free under every scenario.

The pruned problems are solved with the in-repo simplex.  Full-enumeration
reference modes (used by tests and reports) go through scipy's HiGHS so the
cross-check does not share solver code with the implementation under test.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (
    PredictionError,
    RobustnetError,
    SolverError,
    UndefinedImpactError,
    UnprotectableError,
)
from .failure import (
    FailureScenario,
    ImpactRecord,
    SOURCE_PREDICTED,
    evaluate_scenarios,
    impact_oracle,
    impact_simplified,
    select_critical,
)
from .graphenc import deserialize_predictions
from .netmodel import Link, NetworkInstance, Topology
from .routing import (
    RoutingDecision,
    SCHEME_MCF,
    arc_space,
    compute_loads,
    solve_mcf_min_mlu,
    split_source_flows,
)

CONGESTION_TOL = 1e-6


# ---------------------------------------------------------------------------
# Predictor handles
# ---------------------------------------------------------------------------


class PredictorHandle:
    """Uniform access to exact, heuristic, and file-based impact predictions.

    A handle is bound to one (instance, base decision) pair and caches every
    scenario it has evaluated.
    """

    def __init__(self, variant: str, instance: NetworkInstance, decision: RoutingDecision,
                 rows=None):
        self.variant = variant
        self.instance = instance
        self.decision = decision
        self._rows = rows
        self._cache: dict[int, ImpactRecord] = {}

    @classmethod
    def oracle(cls, instance: NetworkInstance, decision: RoutingDecision) -> "PredictorHandle":
        return cls("oracle", instance, decision)

    @classmethod
    def simplified(cls, instance: NetworkInstance, decision: RoutingDecision) -> "PredictorHandle":
        return cls("simplified", instance, decision)

    @classmethod
    def from_file(cls, path, instance: NetworkInstance, decision: RoutingDecision) -> "PredictorHandle":
        return cls("file", instance, decision, rows=deserialize_predictions(path))

    @classmethod
    def from_spec(cls, spec: str, instance: NetworkInstance, decision: RoutingDecision) -> "PredictorHandle":
        """Parse a CLI-style predictor spec: oracle | simplified | file:<path>."""
        if spec == "oracle":
            return cls.oracle(instance, decision)
        if spec == "simplified":
            return cls.simplified(instance, decision)
        if spec.startswith("file:"):
            return cls.from_file(spec[5:], instance, decision)
        raise ValueError(f"unknown predictor spec {spec!r}")

    @property
    def critical_probs(self) -> dict[int, float] | None:
        if self._rows is None:
            return None
        return {sid: row.critical_prob for sid, row in self._rows.items()}

    def predict(self, scenarios: Sequence[FailureScenario], threads: int = 1) -> list[ImpactRecord]:
        missing = [x for x in scenarios if x.id not in self._cache]
        if missing:
            for record in self._evaluate(missing, threads):
                self._cache[record.scenario_id] = record
        return [self._cache[x.id] for x in scenarios]

    def _evaluate(self, scenarios, threads):
        if self.variant == "oracle":
            return evaluate_scenarios(
                self.instance, self.decision, scenarios, impact_oracle, threads=threads
            )
        if self.variant == "simplified":
            return evaluate_scenarios(
                self.instance, self.decision, scenarios, impact_simplified, threads=threads
            )
        mlu_base = compute_loads(self.instance.topology, self.instance.tm, self.decision).mlu
        if mlu_base <= 0:
            raise UndefinedImpactError("baseline MLU is zero; impact is undefined")
        records = []
        for x in scenarios:
            row = self._rows.get(x.id)
            if row is None:
                raise PredictionError(f"prediction file missing scenario {x.id}")
            records.append(
                ImpactRecord(
                    scenario_id=x.id,
                    mlu_base=mlu_base,
                    mlu_failed=row.impact_pred * mlu_base,
                    impact=row.impact_pred,
                    source=SOURCE_PREDICTED,
                )
            )
        return records


# ---------------------------------------------------------------------------
# Robust validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    worst_scenario_id: int
    worst_mlu: float
    worst_impact: float
    predicted_max_impact: float
    scenarios_total: int
    scenarios_verified: int
    lp_solves_pruned: int
    lp_solves_full: int
    constraint_rows_pruned: int
    constraint_rows_full: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def robust_validate(
    instance: NetworkInstance,
    decision: RoutingDecision,
    scenarios: Sequence[FailureScenario],
    predictor: PredictorHandle,
    k: int | None = None,
    threads: int = 1,
) -> ValidationReport:
    """Worst-case MLU over the scenario set, verified on a pruned subset.

    The predictor ranks every scenario; the top-k (default: every scenario
    with predicted impact within 80% of the predicted maximum) are then
    re-evaluated with the exact oracle.  With the oracle predictor the
    result equals exhaustive enumeration.
    """
    if not scenarios:
        raise ValueError("robust validation needs a non-empty scenario set")
    predictions = predictor.predict(scenarios, threads=threads)
    ranked = sorted(predictions, key=lambda r: (-r.impact, r.scenario_id))
    max_pred = ranked[0].impact
    if k is not None:
        verify_ids = {r.scenario_id for r in ranked[: max(1, k)]}
    else:
        verify_ids = {r.scenario_id for r in ranked if r.impact >= 0.8 * max_pred}
    verify = [x for x in scenarios if x.id in verify_ids]

    verified = evaluate_scenarios(instance, decision, verify, impact_oracle, threads=threads)
    worst = max(verified, key=lambda r: (r.mlu_failed, -r.scenario_id))

    rows_per_lp = _mcf_rows(instance)
    return ValidationReport(
        worst_scenario_id=worst.scenario_id,
        worst_mlu=worst.mlu_failed,
        worst_impact=worst.impact,
        predicted_max_impact=max_pred,
        scenarios_total=len(scenarios),
        scenarios_verified=len(verify),
        lp_solves_pruned=len(verify),
        lp_solves_full=len(scenarios),
        constraint_rows_pruned=len(verify) * rows_per_lp,
        constraint_rows_full=len(scenarios) * rows_per_lp,
    )


def _mcf_rows(instance: NetworkInstance) -> int:
    demands = instance.tm.positive_demands()
    sources = {s for s, _, _ in demands}
    return len(sources) * (instance.topology.num_nodes - 1) + 2 * instance.topology.num_links


# ---------------------------------------------------------------------------
# Network upgrade optimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UpgradePlan:
    added: tuple[float, ...]  # per-link capacity additions
    cost: float
    threshold: float
    critical_ids: tuple[int, ...]
    worst_validated_mlu: float | None
    iterations: int
    constraint_rows_pruned: int
    constraint_rows_full: int

    def to_dict(self) -> dict:
        return {
            "added": list(self.added),
            "cost": self.cost,
            "threshold": self.threshold,
            "critical_ids": list(self.critical_ids),
            "worst_validated_mlu": self.worst_validated_mlu,
            "iterations": self.iterations,
            "constraint_rows_pruned": self.constraint_rows_pruned,
            "constraint_rows_full": self.constraint_rows_full,
        }


def upgrade_threshold(records: Sequence[ImpactRecord]) -> float:
    """Impact level above which scenarios must enter the upgrade LP.

    Equals impact(x_worst) / MLU(x_worst), which algebraically reduces to
    1 / MLU(no failure); both forms are computed and cross-checked.
    """
    if not records:
        raise ValueError("no impact records")
    worst = max(records, key=lambda r: r.impact)
    if worst.mlu_base <= 0 or worst.mlu_failed <= 0:
        raise UndefinedImpactError("upgrade threshold undefined for zero MLU")
    threshold = worst.impact / worst.mlu_failed
    identity = 1.0 / worst.mlu_base
    if abs(threshold - identity) > 1e-9 * max(1.0, identity):
        raise RobustnetError(
            f"threshold identity violated: {threshold!r} vs {identity!r}"
        )
    return threshold


def upgraded_topology(topology: Topology, added: Sequence[float]) -> Topology:
    links = [
        Link(l.u, l.v, l.capacity + added[i]) for i, l in enumerate(topology.links)
    ]
    return Topology(num_nodes=topology.num_nodes, links=tuple(links))


def upgrade_optimize(
    instance: NetworkInstance,
    scenarios: Sequence[FailureScenario],
    predictor: PredictorHandle,
    full_enumeration: bool = False,
    certify: bool = True,
    round_up: bool = False,
    threads: int = 1,
    max_iterations: int = 10,
) -> UpgradePlan:
    """Cheapest capacity additions keeping every scenario congestion free.

    Congestion constraints are built only for scenarios whose predicted
    impact reaches the threshold; with an exact predictor this is lossless.
    ``full_enumeration`` switches to a reference mode that constrains every
    scenario and solves with scipy (for testing and reports).  ``certify``
    re-checks the plan on every scenario afterwards; violations (possible
    only with inexact predictors) re-enter the LP and it is solved again.
    """
    records = predictor.predict(scenarios, threads=threads)
    threshold = upgrade_threshold(records)
    by_id = {x.id: x for x in scenarios}

    if full_enumeration:
        critical_ids = [x.id for x in scenarios]
    else:
        critical_ids = [
            r.scenario_id for r in records if r.impact >= threshold - 1e-9
        ]

    rows_full = _upgrade_rows(instance, scenarios)

    iterations = 0
    while True:
        iterations += 1
        critical = [by_id[i] for i in sorted(critical_ids)]
        if not critical:
            added = np.zeros(instance.topology.num_links)
        else:
            added = _solve_upgrade_lp(instance, critical)
        if round_up:
            added = np.ceil(added - 1e-9).clip(min=0.0)

        if not certify:
            worst = None
            break
        worst, violators = _certify_upgrade(instance, added, scenarios, threads)
        if not violators or iterations > max_iterations:
            break
        critical_ids = sorted(set(critical_ids) | set(violators))

    return UpgradePlan(
        added=tuple(float(a) for a in added),
        cost=float(added.sum()),
        threshold=threshold,
        critical_ids=tuple(sorted(critical_ids)),
        worst_validated_mlu=worst,
        iterations=iterations,
        constraint_rows_pruned=_upgrade_rows(instance, [by_id[i] for i in critical_ids]),
        constraint_rows_full=rows_full,
    )


def _upgrade_rows(instance: NetworkInstance, scenarios: Sequence[FailureScenario]) -> int:
    demands = instance.tm.positive_demands()
    sources = {s for s, _, _ in demands}
    n = instance.topology.num_nodes
    total = 0
    for x in scenarios:
        live_arcs = 2 * (instance.topology.num_links - len(x.links))
        total += len(sources) * (n - 1) + live_arcs
    return total


def _upgrade_lp_coo(instance: NetworkInstance, scenarios):
    """Shared constraint builder: returns COO triplets for the upgrade LP.

    Variable layout: per-scenario blocks of (source x live-arc) flows,
    then one addition variable per link.
    """
    topology = instance.topology
    arcs = arc_space(topology)
    demands = instance.tm.positive_demands()
    sources = sorted({s for s, _, _ in demands})
    src_index = {s: i for i, s in enumerate(sources)}
    n_nodes = topology.num_nodes

    supply = np.zeros((len(sources), n_nodes))
    for src, dst, volume in demands:
        supply[src_index[src], src] += volume
        supply[src_index[src], dst] -= volume

    blocks = []
    var_offset = 0
    for x in scenarios:
        live = np.flatnonzero(~np.isin(arcs.link, list(x.links)))
        blocks.append((x, live, var_offset))
        var_offset += len(sources) * len(live)
    n_flow_vars = var_offset
    n_vars = n_flow_vars + topology.num_links  # + a_e block

    eq = ([], [], [])  # rows, cols, values
    b_eq = []
    ub = ([], [], [])
    b_ub = []
    eq_row = 0
    ub_row = 0
    for x, live, offset in blocks:
        n_live = len(live)
        row_of = {}
        for si, s in enumerate(sources):
            for v in range(n_nodes):
                if v != s:
                    row_of[(si, v)] = eq_row
                    b_eq.append(supply[si, v])
                    eq_row += 1
        for si, s in enumerate(sources):
            base = offset + si * n_live
            for k, arc in enumerate(live):
                u, v = int(arcs.src[arc]), int(arcs.dst[arc])
                if u != s:
                    eq[0].append(row_of[(si, u)])
                    eq[1].append(base + k)
                    eq[2].append(1.0)
                if v != s:
                    eq[0].append(row_of[(si, v)])
                    eq[1].append(base + k)
                    eq[2].append(-1.0)
        # sum_s f(s, arc) - a_link <= C_link on surviving arcs
        for k, arc in enumerate(live):
            for si in range(len(sources)):
                ub[0].append(ub_row)
                ub[1].append(offset + si * n_live + k)
                ub[2].append(1.0)
            ub[0].append(ub_row)
            ub[1].append(n_flow_vars + int(arcs.link[arc]))
            ub[2].append(-1.0)
            b_ub.append(float(arcs.capacity[arc]))
            ub_row += 1

    c = np.zeros(n_vars)
    c[n_flow_vars:] = 1.0
    return c, eq, np.array(b_eq), ub, np.array(b_ub), (eq_row, ub_row, n_vars, n_flow_vars)


def _solve_upgrade_lp(instance, scenarios) -> np.ndarray:
    # Joint over scenario blocks; solved sparse with HiGHS (see module note).
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    c, eq, b_eq, ub, b_ub, shape = _upgrade_lp_coo(instance, scenarios)
    n_eq, n_ub, n_vars, n_flow_vars = shape
    a_eq = coo_matrix((eq[2], (eq[0], eq[1])), shape=(n_eq, n_vars))
    a_ub = coo_matrix((ub[2], (ub[0], ub[1])), shape=(n_ub, n_vars))
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"upgrade LP failed with status {res.status}")
    return np.maximum(res.x[n_flow_vars:], 0.0)


def _certify_upgrade(instance, added, scenarios, threads):
    """Re-evaluate the upgraded network on every scenario with fresh LPs."""
    upgraded = NetworkInstance(
        topology=upgraded_topology(instance.topology, added),
        tm=instance.tm,
        seed=instance.seed,
    )
    worst = 0.0
    violators = []
    for x in scenarios:
        _, mlu = solve_mcf_min_mlu(upgraded, frozenset(x.links))
        worst = max(worst, mlu)
        if mlu > 1.0 + CONGESTION_TOL:
            violators.append(x.id)
    return worst, violators


# ---------------------------------------------------------------------------
# Fault-tolerant traffic engineering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TEPlan:
    decision: RoutingDecision  # base routing
    protection: np.ndarray  # (num_links, num_arcs) reroute flow per failed link
    objective: float
    u_critical: float
    u_singles: tuple[float, ...]
    critical_ids: tuple[int, ...]
    certification: str  # "certified-all" | "certified-subset"
    violations: tuple[int, ...]
    iterations: int
    constraint_rows_pruned: int
    constraint_rows_full: int

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "u_critical": self.u_critical,
            "u_singles": list(self.u_singles),
            "critical_ids": list(self.critical_ids),
            "certification": self.certification,
            "violations": list(self.violations),
            "iterations": self.iterations,
            "constraint_rows_pruned": self.constraint_rows_pruned,
            "constraint_rows_full": self.constraint_rows_full,
            "protection": self.protection.tolist(),
            "routing": self.decision.to_dict(),
        }


def te_post_failure_mlu(
    topology: Topology, plan: TEPlan, scenario: FailureScenario
) -> float:
    """Post-failure congestion: base loads plus activated protection flows."""
    arcs = arc_space(topology)
    loads = plan.decision.arc_loads().copy()
    for link in scenario.links:
        loads += plan.protection[link]
    return float((loads / arcs.capacity).max())


def te_solve(
    instance: NetworkInstance,
    scenarios: Sequence[FailureScenario],
    predictor: PredictorHandle,
    threads: int = 1,
) -> TEPlan:
    """Joint base routing and per-link protection, congestion constrained on
    the critical set plus all single failures.

    Raises:
        UnprotectableError: no congestion-free protection exists for the
            critical scenarios (the LP with U_C <= 1 is infeasible).
    """
    singles_needed = {
        x.links[0] for x in _connected_singles(instance.topology, scenarios)
    }
    present_singles = {x.links[0] for x in scenarios if len(x.links) == 1}
    if not singles_needed <= present_singles:
        raise ValueError("scenario set must contain every connected single failure")

    records = predictor.predict(scenarios, threads=threads)
    critical = select_critical(records, critical_probs=predictor.critical_probs)
    return _te_solve_with(instance, scenarios, critical.scenario_ids)


def _connected_singles(topology, scenarios):
    from .failure import enumerate_failures

    return enumerate_failures(topology, 1)


def _protectable_links(topology: Topology) -> set[int]:
    from .netmodel import is_connected

    return {
        l for l in range(topology.num_links)
        if is_connected(topology, frozenset({l}))
    }


def _te_solve_with(
    instance: NetworkInstance,
    scenarios: Sequence[FailureScenario],
    critical_ids: Sequence[int],
) -> TEPlan:
    # The joint TE system couples every scenario block through the shared
    # base routing; at a few thousand heavily degenerate rows it is solved
    # sparse with HiGHS rather than the dense in-repo simplex.
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    topology = instance.topology
    arcs = arc_space(topology)
    demands = instance.tm.positive_demands()
    sources = sorted({s for s, _, _ in demands})
    src_index = {s: i for i, s in enumerate(sources)}
    n_nodes = topology.num_nodes
    n_arcs = arcs.num_arcs
    n_links = topology.num_links
    by_id = {x.id: x for x in scenarios}
    singles = sorted(
        (x for x in scenarios if len(x.links) == 1), key=lambda x: x.links[0]
    )
    critical = [by_id[i] for i in sorted(critical_ids)]

    # Variable layout: base flows | protection flows | U_C | U'_eps.
    # Bridges cannot be protected and never appear in a connected scenario,
    # so they get no protection commodity.
    protectable = _protectable_links(topology)
    n_base = len(sources) * n_arcs
    prot_index = {}
    for l in sorted(protectable):
        own = {2 * l, 2 * l + 1}
        for a in range(n_arcs):
            if a not in own:
                prot_index[(l, a)] = n_base + len(prot_index)
    n_prot = len(prot_index)
    uc = n_base + n_prot
    u_single = {x.links[0]: uc + 1 + i for i, x in enumerate(singles)}
    n_vars = uc + 1 + len(singles)

    supply = np.zeros((len(sources), n_nodes))
    for src, dst, volume in demands:
        supply[src_index[src], src] += volume
        supply[src_index[src], dst] -= volume

    rows, cols, vals, b_eq = [], [], [], []
    row = 0
    for si, s in enumerate(sources):
        for v in range(n_nodes):
            if v == s:
                continue
            for a in range(n_arcs):
                col = si * n_arcs + a
                if int(arcs.src[a]) == v:
                    rows.append(row), cols.append(col), vals.append(1.0)
                if int(arcs.dst[a]) == v:
                    rows.append(row), cols.append(col), vals.append(-1.0)
            b_eq.append(supply[si, v])
            row += 1
    # Protection conservation: volume C_l from head u to tail v of link l.
    for l in sorted(protectable):
        link = topology.links[l]
        for w in range(n_nodes):
            if w == link.u:
                continue
            for a in range(n_arcs):
                col = prot_index.get((l, a))
                if col is None:
                    continue
                if int(arcs.src[a]) == w:
                    rows.append(row), cols.append(col), vals.append(1.0)
                if int(arcs.dst[a]) == w:
                    rows.append(row), cols.append(col), vals.append(-1.0)
            b_eq.append(-link.capacity if w == link.v else 0.0)
            row += 1
    a_eq = coo_matrix((vals, (rows, cols)), shape=(row, n_vars))

    urows, ucols, uvals, b_ub = [], [], [], []
    row = 0
    for group, u_col_of in (
        (critical, lambda x: uc),
        (singles, lambda x: u_single[x.links[0]]),
    ):
        for x in group:
            for a in range(n_arcs):
                for si in range(len(sources)):
                    urows.append(row), ucols.append(si * n_arcs + a), uvals.append(1.0)
                for l in x.links:
                    col = prot_index.get((l, a))
                    if col is not None:
                        urows.append(row), ucols.append(col), uvals.append(1.0)
                urows.append(row), ucols.append(u_col_of(x)), uvals.append(-float(arcs.capacity[a]))
                b_ub.append(0.0)
                row += 1
    urows.append(row), ucols.append(uc), uvals.append(1.0)
    b_ub.append(1.0)
    row += 1
    a_ub = coo_matrix((uvals, (urows, ucols)), shape=(row, n_vars))

    c = np.zeros(n_vars)
    c[uc] = 1.0
    for col in u_single.values():
        c[col] = 1.0 / n_links

    res = linprog(c, A_ub=a_ub, b_ub=np.array(b_ub), A_eq=a_eq, b_eq=np.array(b_eq),
                  bounds=(0, None), method="highs")
    if res.status == 2:
        raise UnprotectableError(
            "no congestion-free protection exists for the critical failure set"
        )
    if res.status != 0:
        raise SolverError(f"TE LP failed with status {res.status}")

    base_flows = split_source_flows(
        arcs, np.arange(n_arcs), demands, sources, res.x[:n_base]
    )
    decision = RoutingDecision(SCHEME_MCF, demands, base_flows)
    protection = np.zeros((n_links, n_arcs))
    for (l, a), col in prot_index.items():
        protection[l, a] = max(0.0, float(res.x[col]))

    scenarios_all = len(scenarios)
    rows_pruned = (len(critical) + len(singles)) * n_arcs + 1
    rows_full = scenarios_all * n_arcs
    return TEPlan(
        decision=decision,
        protection=protection,
        objective=float(res.fun),
        u_critical=float(res.x[uc]),
        u_singles=tuple(float(res.x[u_single[x.links[0]]]) for x in singles),
        critical_ids=tuple(sorted(critical_ids)),
        certification="certified-subset",
        violations=(),
        iterations=1,
        constraint_rows_pruned=rows_pruned,
        constraint_rows_full=rows_full,
    )


def te_certify_and_iterate(
    instance: NetworkInstance,
    plan: TEPlan,
    scenarios: Sequence[FailureScenario],
    max_iterations: int = 20,
) -> TEPlan:
    """Validate the plan on every scenario; re-solve with violators added
    until congestion free everywhere or the iteration budget is spent.
    """
    topology = instance.topology
    critical_ids = set(plan.critical_ids)
    iterations = plan.iterations
    current = plan
    for _ in range(max_iterations):
        violations = [
            x.id
            for x in scenarios
            if te_post_failure_mlu(topology, current, x) > 1.0 + CONGESTION_TOL
        ]
        if not violations:
            return replace(
                current,
                certification="certified-all",
                violations=(),
                iterations=iterations,
            )
        critical_ids |= set(violations)
        current = _te_solve_with(instance, scenarios, sorted(critical_ids))
        iterations += 1
    violations = tuple(
        x.id
        for x in scenarios
        if te_post_failure_mlu(topology, current, x) > 1.0 + CONGESTION_TOL
    )
    return replace(
        current,
        certification="certified-subset",
        violations=violations,
        iterations=iterations,
    )


def te_full_reference(
    instance: NetworkInstance, scenarios: Sequence[FailureScenario]
) -> float:
    """Optimum of the unpruned problem (min worst-case congestion over every
    scenario), solved sparse with scipy; used as the comparison baseline.
    """
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    topology = instance.topology
    arcs = arc_space(topology)
    demands = instance.tm.positive_demands()
    sources = sorted({s for s, _, _ in demands})
    src_index = {s: i for i, s in enumerate(sources)}
    n_nodes = topology.num_nodes
    n_arcs = arcs.num_arcs
    n_links = topology.num_links

    protectable = _protectable_links(topology)
    n_base = len(sources) * n_arcs
    prot_index = {}
    for l in sorted(protectable):
        own = {2 * l, 2 * l + 1}
        for a in range(n_arcs):
            if a not in own:
                prot_index[(l, a)] = n_base + len(prot_index)
    u_col = n_base + len(prot_index)
    n_vars = u_col + 1

    supply = np.zeros((len(sources), n_nodes))
    for src, dst, volume in demands:
        supply[src_index[src], src] += volume
        supply[src_index[src], dst] -= volume

    rows, cols, vals, b_eq = [], [], [], []
    row = 0
    for si, s in enumerate(sources):
        for v in range(n_nodes):
            if v == s:
                continue
            for a in range(n_arcs):
                if int(arcs.src[a]) == v:
                    rows.append(row), cols.append(si * n_arcs + a), vals.append(1.0)
                if int(arcs.dst[a]) == v:
                    rows.append(row), cols.append(si * n_arcs + a), vals.append(-1.0)
            b_eq.append(supply[si, v])
            row += 1
    for l in sorted(protectable):
        link = topology.links[l]
        for w in range(n_nodes):
            if w == link.u:
                continue
            for a in range(n_arcs):
                col = prot_index.get((l, a))
                if col is None:
                    continue
                if int(arcs.src[a]) == w:
                    rows.append(row), cols.append(col), vals.append(1.0)
                if int(arcs.dst[a]) == w:
                    rows.append(row), cols.append(col), vals.append(-1.0)
            b_eq.append(-link.capacity if w == link.v else 0.0)
            row += 1
    a_eq = coo_matrix((vals, (rows, cols)), shape=(row, n_vars))

    urows, ucols, uvals, b_ub = [], [], [], []
    row = 0
    for x in scenarios:
        for a in range(n_arcs):
            for si in range(len(sources)):
                urows.append(row), ucols.append(si * n_arcs + a), uvals.append(1.0)
            for l in x.links:
                col = prot_index.get((l, a))
                if col is not None:
                    urows.append(row), ucols.append(col), uvals.append(1.0)
            urows.append(row), ucols.append(u_col), uvals.append(-float(arcs.capacity[a]))
            b_ub.append(0.0)
            row += 1
    a_ub = coo_matrix((uvals, (urows, ucols)), shape=(row, n_vars))

    c = np.zeros(n_vars)
    c[u_col] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=np.array(b_eq),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"TE reference LP failed with status {res.status}")
    return float(res.fun)
