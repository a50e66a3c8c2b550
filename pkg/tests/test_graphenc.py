import json

import pytest

from robustnet.errors import PredictionError, RobustnetError
from robustnet.failure import FailureScenario, enumerate_failures
from robustnet.graphenc import (
    EDGE_FLOW_PATH,
    EDGE_LINK_FAILURE,
    EDGE_LINK_LINK,
    EDGE_PATH_LINK,
    FEATURE_WIDTH,
    NODE_FAILURE,
    NODE_FLOW,
    NODE_LINK,
    NODE_PATH,
    PredictionRow,
    build_input_graph,
    canonical_hash,
    deserialize_graph,
    deserialize_predictions,
    encode_features,
    serialize_graph,
    write_predictions,
)
from robustnet.netmodel import (
    NetworkInstance,
    Topology,
    TrafficMatrix,
    generate_instance,
)
from robustnet.routing import decompose_to_paths, solve_mcf_min_mlu, solve_ospf


@pytest.fixture()
def triangle_setup():
    topo = Topology.from_links(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
    tm = TrafficMatrix.from_demands(3, [(0, 1, 0.6)])
    instance = NetworkInstance(topo, tm)
    decision, _ = solve_mcf_min_mlu(instance)
    decision = decompose_to_paths(topo, decision)
    scenarios = enumerate_failures(topo, 1)
    return instance, decision, scenarios


class TestBuildGraph:
    def test_triangle_counts(self, triangle_setup):
        instance, decision, scenarios = triangle_setup
        graph = build_input_graph(instance, decision, scenarios)
        by_type = {t: len(graph.nodes_of_type(t)) for t in
                   (NODE_LINK, NODE_FLOW, NODE_PATH, NODE_FAILURE)}
        assert by_type == {NODE_LINK: 3, NODE_FLOW: 1, NODE_PATH: 2, NODE_FAILURE: 3}
        assert len(graph.nodes) == 9
        by_etype = {}
        for e in graph.edges:
            by_etype[e.etype] = by_etype.get(e.etype, 0) + 1
        assert by_etype == {
            EDGE_LINK_LINK: 3,
            EDGE_FLOW_PATH: 2,
            EDGE_PATH_LINK: 3,
            EDGE_LINK_FAILURE: 3,
        }

    def test_zero_scenarios_is_valid(self, triangle_setup):
        instance, decision, _ = triangle_setup
        graph = build_input_graph(instance, decision, [])
        assert graph.nodes_of_type(NODE_FAILURE) == []
        assert all(e.etype != EDGE_LINK_FAILURE for e in graph.edges)

    def test_ospf_single_path_node_per_demand(self, triangle_setup):
        instance, _, scenarios = triangle_setup
        decision, _ = solve_ospf(instance)
        decision = decompose_to_paths(instance.topology, decision)
        graph = build_input_graph(instance, decision, scenarios)
        assert len(graph.nodes_of_type(NODE_PATH)) == 1

    def test_failure_in_edges_match_failed_links(self, triangle_setup):
        instance, decision, scenarios = triangle_setup
        graph = build_input_graph(instance, decision, scenarios)
        for fid, links in graph.scenario_links.items():
            incoming = [e.s for e in graph.edges if e.etype == EDGE_LINK_FAILURE and e.d == fid]
            assert sorted(incoming) == sorted(links)  # link node id == link id

    def test_undecomposed_decision_rejected(self, triangle_setup):
        instance, _, scenarios = triangle_setup
        raw, _ = solve_mcf_min_mlu(instance)
        with pytest.raises(RobustnetError):
            build_input_graph(instance, raw, scenarios)


class TestFeatures:
    def test_triangle_link_features_all_one(self, triangle_setup):
        instance, decision, scenarios = triangle_setup
        graph = encode_features(
            instance, decision, build_input_graph(instance, decision, scenarios)
        )
        for node in graph.nodes_of_type(NODE_LINK):
            assert node.feat[0] == pytest.approx(1.0, abs=1e-9)  # equal utilizations
            assert node.feat[1] == pytest.approx(1.0)  # uniform capacities
            assert node.feat[2] == pytest.approx(1.0, abs=1e-9)
            assert node.feat[12] == 1.0

    def test_one_hot_and_padding_contract(self, triangle_setup):
        instance, decision, scenarios = triangle_setup
        graph = encode_features(
            instance, decision, build_input_graph(instance, decision, scenarios)
        )
        hot_slot = {NODE_LINK: 12, NODE_FLOW: 13, NODE_PATH: 14, NODE_FAILURE: 15}
        for node in graph.nodes:
            assert len(node.feat) == FEATURE_WIDTH
            assert node.feat[hot_slot[node.ntype]] == 1.0
            assert sum(node.feat[12:]) == 1.0
            assert all(0.0 <= f <= 1.0 for f in node.feat)
            if node.ntype == NODE_FAILURE:
                assert node.feat[:12] == [0.0] * 12

    def test_flow_and_path_values(self, triangle_setup):
        instance, decision, scenarios = triangle_setup
        graph = encode_features(
            instance, decision, build_input_graph(instance, decision, scenarios)
        )
        flow = graph.nodes_of_type(NODE_FLOW)[0]
        assert flow.feat[0] == 1.0  # single demand normalizes to itself
        ratios = sorted(n.feat[0] for n in graph.nodes_of_type(NODE_PATH))
        assert ratios == pytest.approx([0.5, 0.5], abs=1e-6)


class TestPermutationInvariance:
    def test_relabeled_topology_same_canonical_hash(self):
        from robustnet.routing import RoutingDecision

        instance = generate_instance(6, seed=8, total_volume=2.0)
        perm = {0: 3, 1: 5, 2: 0, 3: 1, 4: 2, 5: 4}
        relabeled_topo = Topology.from_links(
            6,
            [(perm[l.u], perm[l.v], l.capacity) for l in instance.topology.links],
        )
        relabeled_tm = TrafficMatrix.from_demands(
            6, [(perm[s], perm[d], v) for s, d, v in instance.tm.demands]
        )
        relabeled = NetworkInstance(relabeled_topo, relabeled_tm)

        decision, _ = solve_mcf_min_mlu(instance)
        decision = decompose_to_paths(instance.topology, decision)
        # Transport the same routing through the relabeling.
        moved = decision.to_dict()
        for entry in moved["demands"]:
            entry["src"], entry["dst"] = perm[entry["src"]], perm[entry["dst"]]
            for p in entry["paths"]:
                p["nodes"] = [perm[u] for u in p["nodes"]]
        moved["demands"].sort(key=lambda e: (e["src"], e["dst"]))
        permuted = RoutingDecision.from_dict(moved, relabeled_topo)

        graphs = []
        for inst, dec in ((instance, decision), (relabeled, permuted)):
            scenarios = enumerate_failures(inst.topology, 1)
            graphs.append(
                encode_features(inst, dec, build_input_graph(inst, dec, scenarios))
            )
        assert canonical_hash(graphs[0]) == canonical_hash(graphs[1])


class TestSerialization:
    def test_graph_round_trip(self, triangle_setup, tmp_path):
        instance, decision, scenarios = triangle_setup
        graph = encode_features(
            instance, decision, build_input_graph(instance, decision, scenarios)
        )
        path = tmp_path / "graph.json"
        serialize_graph(graph, path)
        loaded = deserialize_graph(path)
        assert loaded.nodes == graph.nodes
        assert loaded.edges == graph.edges
        assert loaded.scenario_links == graph.scenario_links
        assert loaded.scenario_of_node == graph.scenario_of_node

    def test_schema_violation_is_descriptive(self, tmp_path):
        path = tmp_path / "graph.json"
        path.write_text(json.dumps({"nodes": []}))
        with pytest.raises(RobustnetError, match="edges"):
            deserialize_graph(path)


class TestPredictions:
    def test_row_parsing(self, tmp_path):
        path = tmp_path / "pred.csv"
        path.write_text("scenario_id,impact_pred,critical_prob\n7,1.83,0.99\n")
        rows = deserialize_predictions(path)
        assert rows == {7: PredictionRow(7, 1.83, 0.99)}

    def test_round_trip(self, tmp_path):
        path = tmp_path / "pred.csv"
        rows = [PredictionRow(0, 1.0, 0.25), PredictionRow(3, 2.5, 1.0)]
        write_predictions(path, rows)
        assert list(deserialize_predictions(path).values()) == rows

    def test_bad_header(self, tmp_path):
        path = tmp_path / "pred.csv"
        path.write_text("id,impact\n1,2\n")
        with pytest.raises(PredictionError, match="header"):
            deserialize_predictions(path)

    def test_out_of_range_probability(self, tmp_path):
        path = tmp_path / "pred.csv"
        path.write_text("scenario_id,impact_pred,critical_prob\n1,2.0,1.5\n")
        with pytest.raises(PredictionError, match="probability"):
            deserialize_predictions(path)

    def test_negative_impact(self, tmp_path):
        path = tmp_path / "pred.csv"
        path.write_text("scenario_id,impact_pred,critical_prob\n1,-2.0,0.5\n")
        with pytest.raises(PredictionError, match="negative"):
            deserialize_predictions(path)
