"""Network model: topologies, traffic matrices, loaders, and generators.

Storage is undirected: a link is a canonical ``(u, v)`` pair with ``u < v``
and a strictly positive capacity.  Routing treats every link as two directed
arcs that each get the full link capacity independently; that convention
lives in :mod:`robustnet.routing`.

All generators are pure functions of their parameters and a seed.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ParseError, TopologyError

CAPACITY_FRACTIONS = (0.25, 0.5, 0.75, 1.0)


class Link(NamedTuple):
    u: int
    v: int
    capacity: float


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph with per-link capacities.

    Nodes are dense integers ``0 .. num_nodes - 1``.  Links are stored in
    canonical order (``u < v``, sorted), and the link id is the index into
    ``links``.
    """

    num_nodes: int
    links: tuple[Link, ...]

    def __post_init__(self):
        seen = set()
        for link in self.links:
            if link.u == link.v:
                raise TopologyError(f"self-loop on node {link.u}")
            if not (0 <= link.u < self.num_nodes and 0 <= link.v < self.num_nodes):
                raise TopologyError(f"link {link.u}-{link.v} outside node range")
            if link.u > link.v:
                raise TopologyError(f"link {link.u}-{link.v} not in canonical order")
            if (link.u, link.v) in seen:
                raise TopologyError(f"duplicate link {link.u}-{link.v}")
            if not (link.capacity > 0 and math.isfinite(link.capacity)):
                raise TopologyError(f"non-positive capacity on link {link.u}-{link.v}")
            seen.add((link.u, link.v))

    @classmethod
    def from_links(cls, num_nodes: int, links: Iterable[tuple[int, int, float]]) -> "Topology":
        canonical = sorted(Link(min(u, v), max(u, v), float(c)) for u, v, c in links)
        return cls(num_nodes=num_nodes, links=tuple(canonical))

    @property
    def num_links(self) -> int:
        return len(self.links)

    def capacities(self) -> np.ndarray:
        return np.array([l.capacity for l in self.links])

    def adjacency(self, removed_links: frozenset[int] = frozenset()) -> list[list[tuple[int, int]]]:
        """Neighbor lists as ``(neighbor, link_id)`` pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.num_nodes)]
        for i, link in enumerate(self.links):
            if i in removed_links:
                continue
            adj[link.u].append((link.v, i))
            adj[link.v].append((link.u, i))
        return adj

    def degrees(self) -> list[int]:
        deg = [0] * self.num_nodes
        for link in self.links:
            deg[link.u] += 1
            deg[link.v] += 1
        return deg

    def link_id(self, u: int, v: int) -> int:
        key = (min(u, v), max(u, v))
        for i, link in enumerate(self.links):
            if (link.u, link.v) == key:
                return i
        raise KeyError(f"no link {u}-{v}")


def is_connected(topology: Topology, removed_links: frozenset[int] = frozenset()) -> bool:
    if topology.num_nodes == 0:
        return False
    adj = topology.adjacency(removed_links)
    seen = [False] * topology.num_nodes
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    return count == topology.num_nodes


@dataclass(frozen=True)
class TrafficMatrix:
    """Per-pair demand volumes; duplicates are merged at construction."""

    num_nodes: int
    demands: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        for src, dst, volume in self.demands:
            if src == dst:
                raise TopologyError(f"demand {src}->{dst} has equal endpoints")
            if not (0 <= src < self.num_nodes and 0 <= dst < self.num_nodes):
                raise TopologyError(f"demand {src}->{dst} outside node range")
            if not (volume >= 0 and math.isfinite(volume)):
                raise TopologyError(f"demand {src}->{dst} has invalid volume {volume}")

    @classmethod
    def from_demands(
        cls, num_nodes: int, demands: Iterable[tuple[int, int, float]]
    ) -> "TrafficMatrix":
        merged: dict[tuple[int, int], float] = {}
        for src, dst, volume in demands:
            merged[(src, dst)] = merged.get((src, dst), 0.0) + float(volume)
        flat = tuple((s, d, v) for (s, d), v in sorted(merged.items()))
        return cls(num_nodes=num_nodes, demands=flat)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_nodes))
        for src, dst, volume in self.demands:
            out[src, dst] = volume
        return out

    @property
    def total_volume(self) -> float:
        return float(sum(v for _, _, v in self.demands))

    def positive_demands(self) -> tuple[tuple[int, int, float], ...]:
        return tuple(d for d in self.demands if d[2] > 0)


@dataclass(frozen=True)
class NetworkInstance:
    """A topology plus the traffic offered to it; ``seed`` records provenance."""

    topology: Topology
    tm: TrafficMatrix
    seed: int = 0

    def __post_init__(self):
        if self.topology.num_nodes != self.tm.num_nodes:
            raise TopologyError(
                f"topology has {self.topology.num_nodes} nodes but traffic matrix "
                f"has {self.tm.num_nodes}"
            )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_topology(path: str | Path, fmt: str | None = None, allow_disconnected: bool = False) -> Topology:
    """Load a topology from an edge list or GraphML-subset file.

    ``fmt`` is ``"edgelist"`` or ``"graphml"``; when omitted it is inferred
    from the file suffix (``.graphml``/``.xml`` vs everything else).
    Node labels are remapped to dense integers in sorted label order, so a
    reload of a saved file is the identity.
    """
    path = Path(path)
    if fmt is None:
        fmt = "graphml" if path.suffix.lower() in (".graphml", ".xml") else "edgelist"
    if fmt == "edgelist":
        raw = _parse_edgelist(path)
    elif fmt == "graphml":
        raw = _parse_graphml_subset(path)
    else:
        raise ValueError(f"unknown topology format {fmt!r}")

    labels = sorted({u for u, _, _ in raw} | {v for _, v, _ in raw})
    index = {label: i for i, label in enumerate(labels)}
    links: dict[tuple[int, int], float] = {}
    for u, v, cap in raw:
        iu, iv = index[u], index[v]
        if iu == iv:
            raise ParseError(f"self-loop on node {u}", path=str(path))
        key = (min(iu, iv), max(iu, iv))
        if key in links:
            raise ParseError(f"duplicate link {u}-{v}", path=str(path))
        links[key] = cap
    topology = Topology.from_links(len(labels), [(u, v, c) for (u, v), c in links.items()])
    if not allow_disconnected and not is_connected(topology):
        raise TopologyError(f"{path}: graph is disconnected")
    return topology


def _parse_edgelist(path: Path) -> list[tuple[str, str, float]]:
    raw = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(exc), path=str(path)) from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(
                f"expected 'u v capacity', got {line!r}", path=str(path), line=lineno
            )
        u, v, cap_str = parts
        try:
            cap = float(cap_str)
        except ValueError:
            raise ParseError(f"bad capacity {cap_str!r}", path=str(path), line=lineno)
        if u == v:
            raise ParseError(f"self-loop on node {u}", path=str(path), line=lineno)
        raw.append((u, v, cap))
    if not raw:
        raise ParseError("file contains no links", path=str(path))
    return raw


_GRAPHML_NS = "{http://graphml.graphdrawing.org/xmlns}"


def _parse_graphml_subset(path: Path) -> list[tuple[str, str, float]]:
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        raise ParseError(f"invalid XML: {exc}", path=str(path)) from exc
    root = tree.getroot()
    ns = _GRAPHML_NS if root.tag.startswith(_GRAPHML_NS) else ""

    capacity_keys = set()
    for key in root.iter(f"{ns}key"):
        if key.get("attr.name") == "capacity":
            capacity_keys.add(key.get("id"))

    raw = []
    for edge in root.iter(f"{ns}edge"):
        src = edge.get("source")
        dst = edge.get("target")
        if src is None or dst is None:
            raise ParseError("edge without source/target", path=str(path))
        cap = 1.0
        for data in edge.iter(f"{ns}data"):
            if data.get("key") in capacity_keys or data.get("key") == "capacity":
                try:
                    cap = float(data.text)
                except (TypeError, ValueError):
                    raise ParseError(
                        f"bad capacity on edge {src}-{dst}", path=str(path)
                    )
        raw.append((src, dst, cap))
    if not raw:
        raise ParseError("GraphML file contains no edges", path=str(path))
    return raw


def save_topology(topology: Topology, path: str | Path) -> None:
    lines = [f"# {topology.num_nodes} nodes, {topology.num_links} links"]
    lines += [f"{l.u} {l.v} {l.capacity!r}" for l in topology.links]
    Path(path).write_text("\n".join(lines) + "\n")


def load_tm(path: str | Path, num_nodes: int) -> TrafficMatrix:
    demands = []
    path = Path(path)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(
                f"expected 'src dst volume', got {line!r}", path=str(path), line=lineno
            )
        try:
            src, dst, volume = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad demand line {line!r}", path=str(path), line=lineno)
        demands.append((src, dst, volume))
    return TrafficMatrix.from_demands(num_nodes, demands)


def save_tm(tm: TrafficMatrix, path: str | Path) -> None:
    lines = [f"# {len(tm.demands)} demands"]
    lines += [f"{s} {d} {v!r}" for s, d, v in tm.demands]
    Path(path).write_text("\n".join(lines) + "\n")


def save_instance(instance: NetworkInstance, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_topology(instance.topology, out / "topology.txt")
    save_tm(instance.tm, out / "tm.txt")
    meta = {
        "seed": instance.seed,
        "num_nodes": instance.topology.num_nodes,
        "num_links": instance.topology.num_links,
        "total_volume": instance.tm.total_volume,
    }
    (out / "instance.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def load_instance(in_dir: str | Path) -> NetworkInstance:
    in_dir = Path(in_dir)
    topology = load_topology(in_dir / "topology.txt")
    tm = load_tm(in_dir / "tm.txt", topology.num_nodes)
    seed = 0
    meta_path = in_dir / "instance.json"
    if meta_path.exists():
        seed = json.loads(meta_path.read_text()).get("seed", 0)
    return NetworkInstance(topology=topology, tm=tm, seed=seed)


# ---------------------------------------------------------------------------
# Pruning and generators
# ---------------------------------------------------------------------------


def prune_degree_one(topology: Topology) -> tuple[Topology, dict[int, int]]:
    """Repeatedly strip degree-1 nodes; returns the pruned graph and the
    old-id -> new-id mapping of surviving nodes.

    Raises:
        TopologyError: when pruning consumes the whole graph (tree input).
    """
    alive = set(range(topology.num_nodes))
    links = {(l.u, l.v): l.capacity for l in topology.links}
    while True:
        deg: dict[int, int] = {n: 0 for n in alive}
        for u, v in links:
            deg[u] += 1
            deg[v] += 1
        leaves = {n for n in alive if deg[n] <= 1}
        if not leaves:
            break
        alive -= leaves
        links = {(u, v): c for (u, v), c in links.items() if u in alive and v in alive}
    if len(alive) < 3 or not links:
        raise TopologyError("pruning degree-one nodes left no usable graph")
    mapping = {old: new for new, old in enumerate(sorted(alive))}
    pruned = Topology.from_links(
        len(alive), [(mapping[u], mapping[v], c) for (u, v), c in links.items()]
    )
    return pruned, mapping


def generate_random_topology(
    num_nodes: int,
    seed: int,
    avg_degree: float = 3.0,
    alpha: float = 0.3,
    max_attempts: int = 500,
) -> Topology:
    """Waxman-style geometric random graph, rejected until it is connected
    with minimum degree 2.  Unit capacities; assign capacities separately.
    """
    if num_nodes < 3:
        raise ValueError("need at least 3 nodes")
    rng = np.random.default_rng(seed)
    target_edges = avg_degree * num_nodes / 2.0
    for _ in range(max_attempts):
        pos = rng.uniform(0, 1, size=(num_nodes, 2))
        weight = {}
        scale = alpha * math.sqrt(2.0)
        for u in range(num_nodes):
            for v in range(u + 1, num_nodes):
                d = math.dist(pos[u], pos[v])
                weight[(u, v)] = math.exp(-d / scale)
        total = sum(weight.values())
        factor = target_edges / total
        links = []
        for (u, v), w in weight.items():
            if rng.random() < min(1.0, factor * w):
                links.append((u, v, 1.0))
        if len(links) < num_nodes:
            continue
        candidate = Topology.from_links(num_nodes, links)
        if is_connected(candidate) and min(candidate.degrees()) >= 2:
            return candidate
    raise TopologyError(
        f"no connected min-degree-2 graph found for n={num_nodes}, "
        f"avg_degree={avg_degree} after {max_attempts} attempts"
    )


def assign_random_capacities(topology: Topology, base: float, seed: int) -> Topology:
    """Draw each link capacity i.i.d. uniformly from the four base fractions."""
    if base <= 0:
        raise ValueError("base capacity must be positive")
    rng = np.random.default_rng(seed)
    choices = rng.choice(len(CAPACITY_FRACTIONS), size=topology.num_links)
    links = [
        Link(l.u, l.v, base * CAPACITY_FRACTIONS[c])
        for l, c in zip(topology.links, choices)
    ]
    return Topology(num_nodes=topology.num_nodes, links=tuple(links))


def generate_gravity_tm(
    topology: Topology,
    total_volume: float,
    seed: int,
    uniform_masses: bool = False,
) -> TrafficMatrix:
    """Gravity-model demands: volume(i, j) proportional to ``m_i * m_j``.

    Node masses are log-uniform on [0.1, 1]; ``uniform_masses`` forces all
    masses equal (debug mode, yields a uniform matrix).  Off-diagonal demands
    sum to ``total_volume`` exactly up to rounding.
    """
    if total_volume <= 0:
        raise ValueError("total volume must be positive")
    n = topology.num_nodes
    rng = np.random.default_rng(seed)
    if uniform_masses:
        masses = np.ones(n)
    else:
        masses = np.exp(rng.uniform(math.log(0.1), math.log(1.0), size=n))
    weights = np.outer(masses, masses)
    np.fill_diagonal(weights, 0.0)
    volumes = weights * (total_volume / weights.sum())
    demands = [
        (i, j, float(volumes[i, j]))
        for i in range(n)
        for j in range(n)
        if i != j
    ]
    return TrafficMatrix.from_demands(n, demands)


def generate_instance(
    num_nodes: int,
    seed: int,
    avg_degree: float = 3.0,
    base_capacity: float = 1.0,
    total_volume: float | None = None,
) -> NetworkInstance:
    """Convenience bundle: random topology + capacities + gravity demands.

    Sub-steps get decorrelated seeds derived from ``seed``.
    """
    topology = generate_random_topology(num_nodes, seed=seed, avg_degree=avg_degree)
    topology = assign_random_capacities(topology, base=base_capacity, seed=seed + 1)
    if total_volume is None:
        total_volume = 0.5 * base_capacity * num_nodes
    tm = generate_gravity_tm(topology, total_volume=total_volume, seed=seed + 2)
    return NetworkInstance(topology=topology, tm=tm, seed=seed)


def scale_tm(tm: TrafficMatrix, factor: float) -> TrafficMatrix:
    return TrafficMatrix(
        num_nodes=tm.num_nodes,
        demands=tuple((s, d, v * factor) for s, d, v in tm.demands),
    )
