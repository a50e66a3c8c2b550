"""Routing engines: optimal multicommodity flow and OSPF/ECMP.

Every undirected link ``i`` becomes two directed arcs, ``2i`` (u -> v) and
``2i + 1`` (v -> u), each carrying the full link capacity.  Flows, loads,
and the congestion constraints all live on arcs; utilization of a link is
the larger of its two arc utilizations.

The optimal scheme minimizes the maximum link utilization (MLU) with a
single LP.  Demands sharing a source are aggregated into one commodity
before the solve, which is an exact reformulation of the per-demand LP
(single-source flows decompose into per-demand path flows), and the result
is split back into per-demand flows afterwards.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, RobustnetError, SolverError
from .lp import solve_lp
from .netmodel import NetworkInstance, Topology, TrafficMatrix

SCHEME_MCF = "mcf"
SCHEME_OSPF = "ospf"

_FLOW_TOL = 1e-9
_RATIO_TOL = 1e-6


@dataclass(frozen=True)
class ArcSpace:
    """Directed-arc view of a topology; arrays are indexed by arc id."""

    src: np.ndarray
    dst: np.ndarray
    capacity: np.ndarray
    link: np.ndarray

    @property
    def num_arcs(self) -> int:
        return self.src.shape[0]


def arc_space(topology: Topology) -> ArcSpace:
    m = topology.num_links
    src = np.empty(2 * m, dtype=np.int64)
    dst = np.empty(2 * m, dtype=np.int64)
    cap = np.empty(2 * m, dtype=float)
    link = np.empty(2 * m, dtype=np.int64)
    for i, l in enumerate(topology.links):
        src[2 * i], dst[2 * i] = l.u, l.v
        src[2 * i + 1], dst[2 * i + 1] = l.v, l.u
        cap[2 * i] = cap[2 * i + 1] = l.capacity
        link[2 * i] = link[2 * i + 1] = i
    return ArcSpace(src=src, dst=dst, capacity=cap, link=link)


Path_ = tuple[int, ...]


@dataclass(frozen=True)
class RoutingDecision:
    """Per-demand routing: arc flows plus an optional path decomposition.

    ``flows[d, a]`` is the traffic of demand ``d`` on arc ``a`` in volume
    units.  ``paths`` is None until :func:`decompose_to_paths` has run; after
    that it holds ``(node_sequence, split_ratio)`` pairs per demand.
    """

    scheme: str
    demands: tuple[tuple[int, int, float], ...]
    flows: np.ndarray
    paths: tuple[tuple[tuple[Path_, float], ...], ...] | None = None

    def __post_init__(self):
        self.flows.flags.writeable = False

    @property
    def is_decomposed(self) -> bool:
        return self.paths is not None

    def arc_loads(self) -> np.ndarray:
        if self.flows.size == 0:
            return np.zeros(self.flows.shape[1])
        return self.flows.sum(axis=0)

    def to_dict(self) -> dict:
        out = {"scheme": self.scheme, "demands": []}
        for d, (src, dst, volume) in enumerate(self.demands):
            entry: dict = {"src": int(src), "dst": int(dst), "volume": float(volume)}
            if self.paths is not None:
                entry["paths"] = [
                    {"nodes": list(map(int, nodes)), "ratio": float(ratio)}
                    for nodes, ratio in self.paths[d]
                ]
            out["demands"].append(entry)
        return out

    @classmethod
    def from_dict(cls, data: dict, topology: Topology) -> "RoutingDecision":
        arcs = arc_space(topology)
        arc_of = {
            (int(arcs.src[a]), int(arcs.dst[a])): a for a in range(arcs.num_arcs)
        }
        demands = []
        paths = []
        rows = []
        for entry in data["demands"]:
            if "paths" not in entry:
                raise RobustnetError(
                    "routing JSON lacks the path decomposition; run decompose first"
                )
            volume = float(entry["volume"])
            demands.append((int(entry["src"]), int(entry["dst"]), volume))
            demand_paths = []
            row = np.zeros(arcs.num_arcs)
            for p in entry["paths"]:
                nodes = tuple(int(x) for x in p["nodes"])
                ratio = float(p["ratio"])
                demand_paths.append((nodes, ratio))
                for u, v in zip(nodes, nodes[1:]):
                    row[arc_of[(u, v)]] += ratio * volume
            paths.append(tuple(demand_paths))
            rows.append(row)
        flows = np.array(rows) if rows else np.zeros((0, arcs.num_arcs))
        return cls(
            scheme=data["scheme"],
            demands=tuple(demands),
            flows=flows,
            paths=tuple(paths),
        )


def save_decision(decision: RoutingDecision, path: str | Path) -> None:
    Path(path).write_text(json.dumps(decision.to_dict(), indent=2) + "\n")


def load_decision(path: str | Path, topology: Topology) -> RoutingDecision:
    return RoutingDecision.from_dict(json.loads(Path(path).read_text()), topology)


@dataclass(frozen=True)
class LinkLoadProfile:
    """Arc loads plus the per-link aggregates derived from them.

    ``link_utilization`` is the larger of the two directions.
    ``link_volume`` is the total traffic crossing the link in both
    directions, the quantity the feature encoder calls traversed volume.
    """

    arc_loads: np.ndarray
    arc_utilization: np.ndarray
    link_utilization: np.ndarray
    link_volume: np.ndarray
    mlu: float


def compute_loads(
    topology: Topology, tm: TrafficMatrix, decision: RoutingDecision
) -> LinkLoadProfile:
    arcs = arc_space(topology)
    loads = decision.arc_loads()
    if loads.shape[0] != arcs.num_arcs:
        raise RobustnetError("decision does not match topology arc count")
    util = loads / arcs.capacity
    fwd, rev = loads[0::2], loads[1::2]
    link_util = np.maximum(fwd, rev) / topology.capacities()
    mlu = float(util.max()) if util.size else 0.0
    return LinkLoadProfile(
        arc_loads=loads,
        arc_utilization=util,
        link_utilization=link_util,
        link_volume=fwd + rev,
        mlu=mlu,
    )


# ---------------------------------------------------------------------------
# Connectivity helpers
# ---------------------------------------------------------------------------


def _surviving_arcs(arcs: ArcSpace, disabled_links: frozenset[int]) -> np.ndarray:
    if not disabled_links:
        return np.arange(arcs.num_arcs)
    mask = ~np.isin(arcs.link, list(disabled_links))
    return np.flatnonzero(mask)


def _reachable(topology: Topology, disabled_links: frozenset[int], start: int) -> set[int]:
    adj = topology.adjacency(frozenset(disabled_links))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def check_demands_connected(
    topology: Topology,
    demands: tuple[tuple[int, int, float], ...],
    disabled_links: frozenset[int],
) -> None:
    by_src: dict[int, list[int]] = {}
    for src, dst, _ in demands:
        by_src.setdefault(src, []).append(dst)
    for src, dsts in sorted(by_src.items()):
        reach = _reachable(topology, disabled_links, src)
        for dst in dsts:
            if dst not in reach:
                raise InfeasibleError(
                    f"demand {src}->{dst} disconnected by failed links "
                    f"{sorted(disabled_links)}"
                )


# ---------------------------------------------------------------------------
# Optimal (min-MLU multicommodity flow) routing
# ---------------------------------------------------------------------------


def solve_mcf_min_mlu(
    instance: NetworkInstance, disabled_links: frozenset[int] = frozenset()
) -> tuple[RoutingDecision, float]:
    """LP-optimal minimum-MLU routing of all demands.

    Returns the decision (arc flows per demand, not yet path-decomposed) and
    the achieved MLU.  Disabled links carry zero flow.

    Raises:
        InfeasibleError: some demand pair is disconnected.
        SolverError: the LP failed numerically.
    """
    topology, tm = instance.topology, instance.tm
    demands = tm.positive_demands()
    arcs = arc_space(topology)
    if not demands:
        return (
            RoutingDecision(SCHEME_MCF, (), np.zeros((0, arcs.num_arcs))),
            0.0,
        )
    check_demands_connected(topology, demands, disabled_links)

    live = _surviving_arcs(arcs, disabled_links)
    sources = sorted({src for src, _, _ in demands})
    src_index = {s: i for i, s in enumerate(sources)}
    n_nodes = topology.num_nodes
    n_live = live.shape[0]
    n_src = len(sources)
    n_flow = n_src * n_live
    n_vars = n_flow + 1  # + U

    # Net supply per (source, node): + at the source, - at each destination.
    supply = np.zeros((n_src, n_nodes))
    for src, dst, volume in demands:
        si = src_index[src]
        supply[si, src] += volume
        supply[si, dst] -= volume

    # Conservation rows: one per (source, node != source); the source row is
    # implied by the others.
    row_of = {}
    n_rows = 0
    for si, s in enumerate(sources):
        for v in range(n_nodes):
            if v == s:
                continue
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

    # Congestion: sum_s f(s, a) - U * cap_a <= 0 for every surviving arc.
    a_ub = np.zeros((n_live, n_vars))
    for si in range(n_src):
        a_ub[np.arange(n_live), si * n_live + np.arange(n_live)] = 1.0
    a_ub[:, n_flow] = -arcs.capacity[live]
    b_ub = np.zeros(n_live)

    c = np.zeros(n_vars)
    c[n_flow] = 1.0

    result = solve_lp(c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub)
    if not result.optimal:
        raise SolverError(f"min-MLU LP ended with status {result.status}")

    flows = split_source_flows(arcs, live, demands, sources, result.x[:n_flow])
    decision = RoutingDecision(SCHEME_MCF, demands, flows)
    mlu = compute_loads(topology, tm, decision).mlu
    return decision, mlu


def split_source_flows(
    arcs: ArcSpace,
    live: np.ndarray,
    demands: tuple[tuple[int, int, float], ...],
    sources: list[int],
    flow_vars: np.ndarray,
) -> np.ndarray:
    """Split per-source arc flows into per-demand flows by path peeling.

    Peels source-to-destination paths out of each aggregated flow until every
    demand volume is covered; leftover circulation is discarded.
    """
    n_live = live.shape[0]
    flows = np.zeros((len(demands), arcs.num_arcs))
    out_arcs: dict[int, list[tuple[int, int]]] = {}
    for k, arc in enumerate(live):
        out_arcs.setdefault(int(arcs.src[arc]), []).append((int(arcs.dst[arc]), k))
    for lst in out_arcs.values():
        lst.sort()

    for si, s in enumerate(sources):
        residual = flow_vars[si * n_live : (si + 1) * n_live].copy()
        residual[residual < _FLOW_TOL] = 0.0
        for d, (src, dst, volume) in enumerate(demands):
            if src != s:
                continue
            remaining = volume
            while remaining > _FLOW_TOL:
                path_arcs = _support_path(out_arcs, residual, s, dst)
                if path_arcs is None:
                    if remaining > 1e-6 * max(1.0, volume):
                        raise SolverError(
                            f"flow decomposition stalled for demand {src}->{dst}"
                        )
                    break
                bottleneck = min(residual[k] for k in path_arcs)
                amount = min(bottleneck, remaining)
                for k in path_arcs:
                    residual[k] -= amount
                    flows[d, live[k]] += amount
                remaining -= amount
    return flows


def _support_path(out_arcs, residual, start, goal):
    """BFS over arcs with positive residual; neighbors in ascending node id."""
    parent: dict[int, tuple[int, int]] = {start: (-1, -1)}
    queue = [start]
    while queue:
        u = queue.pop(0)
        if u == goal:
            arcs_on_path = []
            while u != start:
                pu, k = parent[u]
                arcs_on_path.append(k)
                u = pu
            return arcs_on_path[::-1]
        for v, k in out_arcs.get(u, ()):
            if residual[k] > _FLOW_TOL and v not in parent:
                parent[v] = (u, k)
                queue.append(v)
    return None


# ---------------------------------------------------------------------------
# OSPF / ECMP routing
# ---------------------------------------------------------------------------


def ospf_weights(topology: Topology) -> np.ndarray:
    """Per-link OSPF weight: the reciprocal of the link capacity."""
    return 1.0 / topology.capacities()


def _dijkstra(adj, weights, start, n_nodes):
    dist = [math.inf] * n_nodes
    dist[start] = 0.0
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u] + 1e-15:
            continue
        for v, link in adj[u]:
            nd = d + weights[link]
            if nd < dist[v] - 1e-15:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def solve_ospf(
    instance: NetworkInstance, disabled_links: frozenset[int] = frozenset()
) -> tuple[RoutingDecision, float]:
    """Shortest-path routing with inverse-capacity weights and ECMP.

    Traffic splits evenly across equal-cost successors at every hop.
    """
    topology, tm = instance.topology, instance.tm
    demands = tm.positive_demands()
    arcs = arc_space(topology)
    if not demands:
        return (
            RoutingDecision(SCHEME_OSPF, (), np.zeros((0, arcs.num_arcs))),
            0.0,
        )
    check_demands_connected(topology, demands, disabled_links)

    weights = ospf_weights(topology)
    adj = topology.adjacency(frozenset(disabled_links))
    for lst in adj:
        lst.sort()
    targets = sorted({dst for _, dst, _ in demands})
    dist_to = {t: _dijkstra(adj, weights, t, topology.num_nodes) for t in targets}

    arc_of = {(int(arcs.src[a]), int(arcs.dst[a])): a for a in range(arcs.num_arcs)}
    flows = np.zeros((len(demands), arcs.num_arcs))
    for d, (src, dst, volume) in enumerate(demands):
        dist = dist_to[dst]
        frac = {src: 1.0}
        # Strictly decreasing distance-to-target makes this order acyclic.
        order = sorted(frac, key=lambda u: -dist[u])
        seen = set()
        while order:
            u = order.pop(0)
            if u in seen or u == dst:
                continue
            seen.add(u)
            share = frac.pop(u, 0.0)
            if share <= 0:
                continue
            succs = [
                v
                for v, link in adj[u]
                if math.isclose(dist[u], weights[link] + dist[v], rel_tol=1e-9, abs_tol=1e-12)
            ]
            part = share / len(succs)
            for v in succs:
                flows[d, arc_of[(u, v)]] += part * volume
                frac[v] = frac.get(v, 0.0) + part
                if v not in seen and v != dst:
                    order.append(v)
            order.sort(key=lambda x: -dist[x])
    decision = RoutingDecision(SCHEME_OSPF, demands, flows)
    mlu = compute_loads(topology, tm, decision).mlu
    return decision, mlu


def solve_routing(
    instance: NetworkInstance,
    scheme: str,
    disabled_links: frozenset[int] = frozenset(),
) -> tuple[RoutingDecision, float]:
    if scheme == SCHEME_MCF:
        return solve_mcf_min_mlu(instance, disabled_links)
    if scheme == SCHEME_OSPF:
        return solve_ospf(instance, disabled_links)
    raise ValueError(f"unknown routing scheme {scheme!r}")


# ---------------------------------------------------------------------------
# Path decomposition
# ---------------------------------------------------------------------------


def decompose_to_paths(topology: Topology, decision: RoutingDecision) -> RoutingDecision:
    """Flow decomposition into simple paths, one path set per demand.

    Repeatedly peels the path with the maximum bottleneck flow (ties broken
    by lexicographically smallest node sequence).  Circulations left over
    after the demand volume is covered are discarded, and the arc flows are
    rebuilt from the peeled paths, so the output is cycle-free.

    Raises:
        RobustnetError: flow conservation is violated beyond 1e-6.
    """
    arcs = arc_space(topology)
    out_arcs: dict[int, list[tuple[int, int]]] = {}
    for a in range(arcs.num_arcs):
        out_arcs.setdefault(int(arcs.src[a]), []).append((int(arcs.dst[a]), a))
    for lst in out_arcs.values():
        lst.sort()

    all_paths = []
    new_flows = np.zeros_like(decision.flows)
    for d, (src, dst, volume) in enumerate(decision.demands):
        residual = decision.flows[d].copy()
        _check_conservation(arcs, residual, src, dst, volume, topology.num_nodes)
        peels: list[tuple[Path_, float]] = []
        remaining = volume
        while remaining > _RATIO_TOL * max(1.0, volume):
            width = _widest_width(out_arcs, residual, src, dst, topology.num_nodes)
            if width <= _FLOW_TOL:
                break
            nodes, path_arcs = _lex_smallest_path(out_arcs, residual, src, dst, width)
            amount = min(min(residual[a] for a in path_arcs), remaining)
            for a in path_arcs:
                residual[a] -= amount
                new_flows[d, a] += amount
            peels.append((nodes, amount))
            remaining -= amount
        merged: dict[Path_, float] = {}
        for nodes, amount in peels:
            merged[nodes] = merged.get(nodes, 0.0) + amount
        ratios = tuple(
            (nodes, amount / volume) for nodes, amount in merged.items()
        )
        all_paths.append(tuple(sorted(ratios, key=lambda pr: pr[0])))
    return replace(decision, flows=new_flows, paths=tuple(all_paths))


def _check_conservation(arcs, flow, src, dst, volume, n_nodes):
    net = np.zeros(n_nodes)
    np.add.at(net, arcs.src, flow)
    np.subtract.at(net, arcs.dst, flow)
    expected = np.zeros(n_nodes)
    expected[src] = volume
    expected[dst] = -volume
    worst = float(np.abs(net - expected).max())
    if worst > 1e-6:
        raise RobustnetError(
            f"flow conservation violated by {worst:.3e} for demand {src}->{dst}"
        )


def _widest_width(out_arcs, residual, src, dst, n_nodes):
    """Maximum bottleneck value over src -> dst paths in the residual."""
    width = [0.0] * n_nodes
    width[src] = math.inf
    heap = [(-math.inf, src)]
    while heap:
        w, u = heapq.heappop(heap)
        w = -w
        if w < width[u]:
            continue
        if u == dst:
            return w
        for v, a in out_arcs.get(u, ()):
            if residual[a] <= _FLOW_TOL:
                continue
            nw = min(w, residual[a])
            if nw > width[v]:
                width[v] = nw
                heapq.heappush(heap, (-nw, v))
    return width[dst]


def _lex_smallest_path(out_arcs, residual, src, dst, width):
    """First simple path of bottleneck >= width in ascending-neighbor DFS."""
    slack = width * (1.0 - 1e-9)
    stack_nodes = [src]
    stack_arcs: list[int] = []
    iterators = [iter(out_arcs.get(src, ()))]
    on_path = {src}
    while stack_nodes:
        advanced = False
        for v, a in iterators[-1]:
            if v in on_path or residual[a] < slack:
                continue
            stack_nodes.append(v)
            stack_arcs.append(a)
            if v == dst:
                return tuple(stack_nodes), stack_arcs
            on_path.add(v)
            iterators.append(iter(out_arcs.get(v, ())))
            advanced = True
            break
        if not advanced:
            on_path.discard(stack_nodes.pop())
            iterators.pop()
            if stack_arcs:
                stack_arcs.pop()
    raise SolverError("widest path extraction failed")  # pragma: no cover
