"""Heterogeneous input-graph construction for the learned impact predictor.

The graph has four node types.  Every topology link becomes a Link node
(the line-graph transform), every demand a Flow node, every decomposed
routing path a Path node, and every failure scenario a Failure node.
Canonical edge directions are Flow -> Path, Path -> Link, and
Link -> Failure; Link-Link adjacency is stored once per unordered pair.
Consumers are free to add reverse message edges.

Feature vectors are 16 wide.  Slot layout:

    Link:    [utilization/max, capacity/max, traversed volume/max, 0 x 9, one-hot]
    Flow:    [demand/max, 0 x 11, one-hot]
    Path:    [split ratio, 0 x 11, one-hot]
    Failure: [0 x 12, one-hot]

The one-hot type marker occupies the last four slots in the order
link, flow, path, failure.  All populated entries are normalized into
[0, 1]; a zero maximum yields zero features.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import PredictionError, RobustnetError
from .failure import FailureScenario
from .netmodel import NetworkInstance
from .routing import RoutingDecision, compute_loads

FEATURE_WIDTH = 16

NODE_LINK = "link"
NODE_FLOW = "flow"
NODE_PATH = "path"
NODE_FAILURE = "failure"
_TYPE_ORDER = (NODE_LINK, NODE_FLOW, NODE_PATH, NODE_FAILURE)

EDGE_LINK_LINK = "link_link"
EDGE_FLOW_PATH = "flow_path"
EDGE_PATH_LINK = "path_link"
EDGE_LINK_FAILURE = "link_failure"


@dataclass
class GraphNode:
    id: int
    ntype: str
    feat: list[float] = field(default_factory=lambda: [0.0] * FEATURE_WIDTH)


@dataclass(frozen=True)
class GraphEdge:
    s: int
    d: int
    etype: str


@dataclass
class InputGraph:
    nodes: list[GraphNode]
    edges: list[GraphEdge]
    scenario_links: dict[int, tuple[int, ...]]  # failure node id -> failed link ids
    scenario_of_node: dict[int, int]  # failure node id -> scenario id

    def nodes_of_type(self, ntype: str) -> list[GraphNode]:
        return [n for n in self.nodes if n.ntype == ntype]


def build_input_graph(
    instance: NetworkInstance,
    decision: RoutingDecision,
    scenarios: list[FailureScenario],
) -> InputGraph:
    """Assemble the node and edge sets; features start zeroed.

    Ordering is deterministic: link nodes by link id, flow nodes in demand
    order, path nodes demand-major, failure nodes in scenario order.

    Raises:
        RobustnetError: the decision has no path decomposition.
    """
    if not decision.is_decomposed:
        raise RobustnetError("input graph needs a path-decomposed decision")
    topology = instance.topology

    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []

    link_node = {}
    for link_id in range(topology.num_links):
        link_node[link_id] = len(nodes)
        nodes.append(GraphNode(id=len(nodes), ntype=NODE_LINK))

    flow_node = {}
    for d in range(len(decision.demands)):
        flow_node[d] = len(nodes)
        nodes.append(GraphNode(id=len(nodes), ntype=NODE_FLOW))

    path_node = {}
    for d, demand_paths in enumerate(decision.paths):
        for p in range(len(demand_paths)):
            path_node[(d, p)] = len(nodes)
            nodes.append(GraphNode(id=len(nodes), ntype=NODE_PATH))

    failure_node = {}
    for x in scenarios:
        failure_node[x.id] = len(nodes)
        nodes.append(GraphNode(id=len(nodes), ntype=NODE_FAILURE))

    # Link-Link: one edge per unordered pair of links sharing an endpoint.
    endpoint_links: dict[int, list[int]] = {}
    for link_id, link in enumerate(topology.links):
        endpoint_links.setdefault(link.u, []).append(link_id)
        endpoint_links.setdefault(link.v, []).append(link_id)
    seen_pairs = set()
    for shared in sorted(endpoint_links):
        members = endpoint_links[shared]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                a, b = sorted((members[i], members[j]))
                if (a, b) not in seen_pairs:
                    seen_pairs.add((a, b))
    for a, b in sorted(seen_pairs):
        edges.append(GraphEdge(link_node[a], link_node[b], EDGE_LINK_LINK))

    for d, demand_paths in enumerate(decision.paths):
        for p, (nodes_seq, _) in enumerate(demand_paths):
            edges.append(GraphEdge(flow_node[d], path_node[(d, p)], EDGE_FLOW_PATH))
        for p, (nodes_seq, _) in enumerate(demand_paths):
            for u, v in zip(nodes_seq, nodes_seq[1:]):
                link_id = topology.link_id(u, v)
                edges.append(GraphEdge(path_node[(d, p)], link_node[link_id], EDGE_PATH_LINK))

    for x in scenarios:
        for link_id in x.links:
            edges.append(GraphEdge(link_node[link_id], failure_node[x.id], EDGE_LINK_FAILURE))

    return InputGraph(
        nodes=nodes,
        edges=edges,
        scenario_links={failure_node[x.id]: x.links for x in scenarios},
        scenario_of_node={failure_node[x.id]: x.id for x in scenarios},
    )


def encode_features(
    instance: NetworkInstance, decision: RoutingDecision, graph: InputGraph
) -> InputGraph:
    """Populate feature vectors in place and return the graph."""
    loads = compute_loads(instance.topology, instance.tm, decision)
    util = loads.link_utilization
    caps = instance.topology.capacities()
    volume = loads.link_volume
    demands = decision.demands

    max_util = float(util.max()) if util.size else 0.0
    max_cap = float(caps.max()) if caps.size else 0.0
    max_volume = float(volume.max()) if volume.size else 0.0
    max_demand = max((v for _, _, v in demands), default=0.0)

    def norm(value: float, maximum: float) -> float:
        return float(value) / maximum if maximum > 0 else 0.0

    link_iter = iter(range(instance.topology.num_links))
    flow_iter = iter(range(len(demands)))
    path_ratios = [r for demand_paths in decision.paths for _, r in demand_paths]
    path_iter = iter(path_ratios)

    for node in graph.nodes:
        feat = [0.0] * FEATURE_WIDTH
        if node.ntype == NODE_LINK:
            link_id = next(link_iter)
            feat[0] = norm(util[link_id], max_util)
            feat[1] = norm(caps[link_id], max_cap)
            feat[2] = norm(volume[link_id], max_volume)
        elif node.ntype == NODE_FLOW:
            d = next(flow_iter)
            feat[0] = norm(demands[d][2], max_demand)
        elif node.ntype == NODE_PATH:
            feat[0] = min(1.0, next(path_iter))
        hot = FEATURE_WIDTH - 4 + _TYPE_ORDER.index(node.ntype)
        feat[hot] = 1.0
        node.feat = feat
    return graph


# ---------------------------------------------------------------------------
# Interchange formats
# ---------------------------------------------------------------------------


def graph_to_dict(graph: InputGraph) -> dict:
    return {
        "nodes": [{"id": n.id, "type": n.ntype, "feat": n.feat} for n in graph.nodes],
        "edges": [{"s": e.s, "d": e.d, "etype": e.etype} for e in graph.edges],
        "scenarios": [
            {
                "fid": fid,
                "scenario_id": graph.scenario_of_node[fid],
                "links": list(graph.scenario_links[fid]),
            }
            for fid in sorted(graph.scenario_of_node)
        ],
    }


def serialize_graph(graph: InputGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=None) + "\n")


def deserialize_graph(path: str | Path) -> InputGraph:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RobustnetError(f"{path}: invalid graph JSON: {exc}") from exc
    for key in ("nodes", "edges", "scenarios"):
        if key not in data:
            raise RobustnetError(f"{path}: graph JSON missing {key!r}")
    nodes = []
    for n in data["nodes"]:
        if n["type"] not in _TYPE_ORDER:
            raise RobustnetError(f"{path}: unknown node type {n['type']!r}")
        feat = [float(x) for x in n["feat"]]
        if len(feat) != FEATURE_WIDTH:
            raise RobustnetError(f"{path}: node {n['id']} feature width {len(feat)}")
        nodes.append(GraphNode(id=int(n["id"]), ntype=n["type"], feat=feat))
    edges = [GraphEdge(int(e["s"]), int(e["d"]), e["etype"]) for e in data["edges"]]
    scenario_links = {}
    scenario_of_node = {}
    for s in data["scenarios"]:
        scenario_links[int(s["fid"])] = tuple(int(x) for x in s["links"])
        scenario_of_node[int(s["fid"])] = int(s["scenario_id"])
    return InputGraph(
        nodes=nodes,
        edges=edges,
        scenario_links=scenario_links,
        scenario_of_node=scenario_of_node,
    )


PREDICTIONS_HEADER = ["scenario_id", "impact_pred", "critical_prob"]


@dataclass(frozen=True)
class PredictionRow:
    scenario_id: int
    impact_pred: float
    critical_prob: float


def deserialize_predictions(path: str | Path) -> dict[int, PredictionRow]:
    """Read a predictions CSV keyed by scenario id.

    Raises:
        PredictionError: malformed file, missing columns, or out-of-range
            values.  Missing scenarios surface later, at lookup time.
    """
    rows: dict[int, PredictionRow] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PREDICTIONS_HEADER:
            raise PredictionError(
                f"{path}: expected header {','.join(PREDICTIONS_HEADER)}, "
                f"got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                sid = int(row["scenario_id"])
                impact = float(row["impact_pred"])
                prob = float(row["critical_prob"])
            except (TypeError, ValueError) as exc:
                raise PredictionError(f"{path}:{lineno}: bad prediction row") from exc
            if impact < 0:
                raise PredictionError(f"{path}:{lineno}: negative impact {impact}")
            if not 0.0 <= prob <= 1.0:
                raise PredictionError(f"{path}:{lineno}: probability {prob} outside [0, 1]")
            if sid in rows:
                raise PredictionError(f"{path}:{lineno}: duplicate scenario {sid}")
            rows[sid] = PredictionRow(scenario_id=sid, impact_pred=impact, critical_prob=prob)
    return rows


def write_predictions(path: str | Path, rows: list[PredictionRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTIONS_HEADER)
        for row in rows:
            writer.writerow([row.scenario_id, repr(row.impact_pred), repr(row.critical_prob)])


def canonical_hash(graph: InputGraph, rounds: int = 3) -> str:
    """Permutation-invariant fingerprint via iterated neighborhood hashing."""

    def digest(text: str) -> str:
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    # Feature values are compared at 1e-6 so float noise from different
    # summation orders does not break the invariance check.
    labels = {
        n.id: digest(n.ntype + "|" + ",".join(f"{f:.6f}" for f in n.feat))
        for n in graph.nodes
    }
    # link_link adjacency is mutual; its storage order carries no meaning.
    neighbors: dict[int, list[tuple[str, str, int]]] = {n.id: [] for n in graph.nodes}
    for e in graph.edges:
        fwd, rev = (">", "<") if e.etype != EDGE_LINK_LINK else ("-", "-")
        neighbors[e.s].append((e.etype, fwd, e.d))
        neighbors[e.d].append((e.etype, rev, e.s))
    for _ in range(rounds):
        labels = {
            nid: digest(
                labels[nid]
                + "#"
                + ";".join(sorted(f"{et}{dr}{labels[other]}" for et, dr, other in neighbors[nid]))
            )
            for nid in labels
        }
    return digest(",".join(sorted(labels.values())))
