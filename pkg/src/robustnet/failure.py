"""Failure scenarios: enumeration, impact evaluation, and criticality.

The impact of a failure scenario is the MLU after rerouting divided by the
failure-free MLU under the same scheme.  Scenarios that disconnect the
graph are excluded at enumeration time so every retained scenario admits a
feasible reroute.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InfeasibleError, RobustnetError, UndefinedImpactError
from .lp import solve_lp
from .netmodel import NetworkInstance, Topology, is_connected
from .routing import (
    RoutingDecision,
    SCHEME_MCF,
    SCHEME_OSPF,
    arc_space,
    compute_loads,
    decompose_to_paths,
    solve_mcf_min_mlu,
    solve_ospf,
)

WORST_THRESHOLD = 0.95
SIGNIFICANT_THRESHOLD = 0.8

SOURCE_ORACLE_MCF = "oracle-mcf"
SOURCE_ORACLE_OSPF = "oracle-ospf"
SOURCE_SIMPLIFIED = "simplified"
SOURCE_PREDICTED = "predicted"


@dataclass(frozen=True, order=True)
class FailureScenario:
    """A canonical (sorted, duplicate-free) set of simultaneously failed links."""

    id: int
    links: tuple[int, ...]

    def __post_init__(self):
        if not self.links:
            raise ValueError("failure scenario must fail at least one link")
        if tuple(sorted(set(self.links))) != self.links:
            raise ValueError(f"links {self.links} not in canonical form")


@dataclass(frozen=True)
class ImpactRecord:
    scenario_id: int
    mlu_base: float
    mlu_failed: float
    impact: float
    source: str


class Criticality(Enum):
    WORST = "worst"
    SIGNIFICANT = "significant"
    NORMAL = "normal"


@dataclass(frozen=True)
class CriticalityLabel:
    category: Criticality
    ratio: float


@dataclass(frozen=True)
class CriticalSet:
    """Scenario ids ordered by decreasing (predicted or measured) impact."""

    scenario_ids: tuple[int, ...]
    source: str


def enumerate_failures(topology: Topology, max_failures: int = 2) -> list[FailureScenario]:
    """All link subsets of size 1..max_failures that keep the graph connected.

    Canonical order: by subset size, then lexicographically by link ids.
    """
    if max_failures < 1:
        raise ValueError("max_failures must be at least 1")
    scenarios = []
    next_id = 0
    for size in range(1, max_failures + 1):
        for combo in itertools.combinations(range(topology.num_links), size):
            if is_connected(topology, frozenset(combo)):
                scenarios.append(FailureScenario(id=next_id, links=combo))
                next_id += 1
    return scenarios


def _base_mlu(instance: NetworkInstance, decision: RoutingDecision) -> float:
    mlu = compute_loads(instance.topology, instance.tm, decision).mlu
    if mlu <= 0.0:
        raise UndefinedImpactError("baseline MLU is zero; impact is undefined")
    return mlu


def impact_oracle(
    instance: NetworkInstance,
    base_decision: RoutingDecision,
    scenario: FailureScenario,
    scheme: str | None = None,
) -> ImpactRecord:
    """Exact impact: re-solve routing from scratch on the surviving graph."""
    scheme = scheme or base_decision.scheme
    mlu_base = _base_mlu(instance, base_decision)
    disabled = frozenset(scenario.links)
    if scheme == SCHEME_MCF:
        _, mlu_failed = solve_mcf_min_mlu(instance, disabled)
        source = SOURCE_ORACLE_MCF
    elif scheme == SCHEME_OSPF:
        _, mlu_failed = solve_ospf(instance, disabled)
        source = SOURCE_ORACLE_OSPF
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ImpactRecord(
        scenario_id=scenario.id,
        mlu_base=mlu_base,
        mlu_failed=mlu_failed,
        impact=mlu_failed / mlu_base,
        source=source,
    )


def impact_simplified(
    instance: NetworkInstance,
    base_decision: RoutingDecision,
    scenario: FailureScenario,
) -> ImpactRecord:
    """Simplified reroute: freeze unaffected flows, re-optimize only traffic
    whose base paths cross a failed link.

    The blocked volume per demand is rerouted by one min-MLU LP over the
    surviving arcs with the frozen background loads inside the congestion
    constraint.  A scenario that touches no traffic has impact exactly 1.
    """
    topology, tm = instance.topology, instance.tm
    mlu_base = _base_mlu(instance, base_decision)
    if not base_decision.is_decomposed:
        base_decision = decompose_to_paths(topology, base_decision)
    failed = set(scenario.links)
    check_connected(topology, scenario)

    arcs = arc_space(topology)
    arc_of = {(int(arcs.src[a]), int(arcs.dst[a])): a for a in range(arcs.num_arcs)}
    link_of_pair = {
        (topology.links[i].u, topology.links[i].v): i for i in range(topology.num_links)
    }

    background = np.zeros(arcs.num_arcs)
    blocked: dict[tuple[int, int], float] = {}
    for (src, dst, volume), demand_paths in zip(base_decision.demands, base_decision.paths):
        for nodes, ratio in demand_paths:
            hops = list(zip(nodes, nodes[1:]))
            hit = any(
                link_of_pair[(min(u, v), max(u, v))] in failed for u, v in hops
            )
            if hit:
                blocked[(src, dst)] = blocked.get((src, dst), 0.0) + ratio * volume
            else:
                for u, v in hops:
                    background[arc_of[(u, v)]] += ratio * volume

    total_blocked = sum(blocked.values())
    if total_blocked <= 1e-12:
        return ImpactRecord(
            scenario_id=scenario.id,
            mlu_base=mlu_base,
            mlu_failed=mlu_base,
            impact=1.0,
            source=SOURCE_SIMPLIFIED,
        )

    mlu_failed = _reroute_blocked_lp(topology, background, blocked, frozenset(failed))
    return ImpactRecord(
        scenario_id=scenario.id,
        mlu_base=mlu_base,
        mlu_failed=mlu_failed,
        impact=mlu_failed / mlu_base,
        source=SOURCE_SIMPLIFIED,
    )


def _reroute_blocked_lp(
    topology: Topology,
    background: np.ndarray,
    blocked: dict[tuple[int, int], float],
    failed: frozenset[int],
) -> float:
    """min U s.t. background + rerouted <= U * capacity on surviving arcs."""
    arcs = arc_space(topology)
    live = np.flatnonzero(~np.isin(arcs.link, list(failed)))
    sources = sorted({src for src, _ in blocked})
    src_index = {s: i for i, s in enumerate(sources)}
    n_nodes = topology.num_nodes
    n_live = live.shape[0]
    n_flow = len(sources) * n_live
    n_vars = n_flow + 1

    supply = np.zeros((len(sources), n_nodes))
    for (src, dst), volume in blocked.items():
        supply[src_index[src], src] += volume
        supply[src_index[src], dst] -= volume

    row_of = {}
    n_rows = 0
    for si, s in enumerate(sources):
        for v in range(n_nodes):
            if v != s:
                row_of[(si, v)] = n_rows
                n_rows += 1
    a_eq = np.zeros((n_rows, n_vars))
    b_eq = np.zeros(n_rows)
    for si, s in enumerate(sources):
        base = si * n_live
        for k, arc in enumerate(live):
            u, v = int(arcs.src[arc]), int(arcs.dst[arc])
            if u != s:
                a_eq[row_of[(si, u)], base + k] += 1.0
            if v != s:
                a_eq[row_of[(si, v)], base + k] -= 1.0
        for v in range(n_nodes):
            if v != s:
                b_eq[row_of[(si, v)]] = supply[si, v]

    a_ub = np.zeros((n_live, n_vars))
    for si in range(len(sources)):
        a_ub[np.arange(n_live), si * n_live + np.arange(n_live)] = 1.0
    a_ub[:, n_flow] = -arcs.capacity[live]
    b_ub = -background[live]

    c = np.zeros(n_vars)
    c[n_flow] = 1.0
    result = solve_lp(c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub)
    if not result.optimal:
        raise InfeasibleError(f"simplified reroute LP status {result.status}")
    return float(result.objective)


def check_connected(topology: Topology, scenario: FailureScenario) -> None:
    if not is_connected(topology, frozenset(scenario.links)):
        raise InfeasibleError(
            f"scenario {scenario.id} (links {scenario.links}) disconnects the graph"
        )


def classify(records: Sequence[ImpactRecord]) -> list[CriticalityLabel]:
    """Three-way criticality by ratio to the maximum impact in the set."""
    if not records:
        raise ValueError("cannot classify an empty record set")
    max_impact = max(r.impact for r in records)
    if max_impact <= 0:
        raise ValueError("all impacts are non-positive")
    labels = []
    for r in records:
        ratio = r.impact / max_impact
        if ratio >= WORST_THRESHOLD:
            category = Criticality.WORST
        elif ratio >= SIGNIFICANT_THRESHOLD:
            category = Criticality.SIGNIFICANT
        else:
            category = Criticality.NORMAL
        labels.append(CriticalityLabel(category=category, ratio=ratio))
    return labels


def select_critical(
    records: Sequence[ImpactRecord],
    labels: Sequence[CriticalityLabel] | None = None,
    critical_probs: dict[int, float] | None = None,
    prob_threshold: float = 0.5,
) -> CriticalSet:
    """The critical set: worst plus significant scenarios, impact-ranked.

    When classifier probabilities are available (file predictor) the filter
    is ``prob >= prob_threshold`` and the ranking still follows the impact
    values; otherwise the ratio-based labels decide membership.
    """
    if labels is None:
        labels = classify(records)
    chosen = []
    for record, label in zip(records, labels):
        if critical_probs is not None:
            if critical_probs.get(record.scenario_id, 0.0) >= prob_threshold:
                chosen.append(record)
        elif label.category in (Criticality.WORST, Criticality.SIGNIFICANT):
            chosen.append(record)
    chosen.sort(key=lambda r: (-r.impact, r.scenario_id))
    source = records[0].source if records else "empty"
    return CriticalSet(scenario_ids=tuple(r.scenario_id for r in chosen), source=source)


def evaluate_scenarios(
    instance: NetworkInstance,
    base_decision: RoutingDecision,
    scenarios: Sequence[FailureScenario],
    evaluator: Callable[[NetworkInstance, RoutingDecision, FailureScenario], ImpactRecord],
    threads: int = 1,
) -> list[ImpactRecord]:
    """Evaluate scenarios, optionally in parallel; output order follows input."""
    if threads <= 1 or len(scenarios) < 2:
        return [evaluator(instance, base_decision, x) for x in scenarios]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda x: evaluator(instance, base_decision, x), scenarios))


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

IMPACT_CSV_HEADER = ["scenario_id", "links", "mlu_base", "mlu_failed", "impact", "label", "source"]


def write_impact_csv(
    path: str | Path,
    records: Sequence[ImpactRecord],
    scenarios: Sequence[FailureScenario],
    labels: Sequence[CriticalityLabel] | None = None,
) -> None:
    by_id = {x.id: x for x in scenarios}
    if labels is None:
        labels = classify(records) if records else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(IMPACT_CSV_HEADER)
        for record, label in zip(records, labels):
            writer.writerow(
                [
                    record.scenario_id,
                    ";".join(str(l) for l in by_id[record.scenario_id].links),
                    repr(record.mlu_base),
                    repr(record.mlu_failed),
                    repr(record.impact),
                    label.category.value,
                    record.source,
                ]
            )


def read_impact_csv(path: str | Path) -> tuple[list[ImpactRecord], list[FailureScenario], list[str]]:
    records, scenarios, label_names = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != IMPACT_CSV_HEADER:
            raise RobustnetError(f"{path}: unexpected impact CSV header {reader.fieldnames}")
        for row in reader:
            sid = int(row["scenario_id"])
            links = tuple(int(x) for x in row["links"].split(";"))
            scenarios.append(FailureScenario(id=sid, links=links))
            records.append(
                ImpactRecord(
                    scenario_id=sid,
                    mlu_base=float(row["mlu_base"]),
                    mlu_failed=float(row["mlu_failed"]),
                    impact=float(row["impact"]),
                    source=row["source"],
                )
            )
            label_names.append(row["label"])
    return records, scenarios, label_names


def write_scenarios_csv(path: str | Path, scenarios: Sequence[FailureScenario], topology: Topology) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario_id", "links", "endpoints"])
        for x in scenarios:
            endpoints = ";".join(
                f"{topology.links[l].u}-{topology.links[l].v}" for l in x.links
            )
            writer.writerow([x.id, ";".join(str(l) for l in x.links), endpoints])


def read_scenarios_csv(path: str | Path) -> list[FailureScenario]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                FailureScenario(
                    id=int(row["scenario_id"]),
                    links=tuple(int(x) for x in row["links"].split(";")),
                )
            )
    return out
