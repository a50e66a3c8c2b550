import numpy as np
import pytest
from helpers import dense_uniform_instance, scale_to_te_optimum, scale_to_worst_mlu

from robustnet.errors import PredictionError, UnprotectableError
from robustnet.failure import enumerate_failures, impact_oracle
from robustnet.graphenc import PredictionRow, write_predictions
from robustnet.netmodel import (
    NetworkInstance,
    Topology,
    TrafficMatrix,
    generate_instance,
)
from robustnet.robustdesign import (
    PredictorHandle,
    robust_validate,
    te_certify_and_iterate,
    te_full_reference,
    te_post_failure_mlu,
    te_solve,
    upgrade_optimize,
    upgrade_threshold,
    upgraded_topology,
)
from robustnet.routing import compute_loads, solve_mcf_min_mlu


def triangle_instance(volume):
    topo = Topology.from_links(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
    tm = TrafficMatrix.from_demands(3, [(0, 1, volume)])
    return NetworkInstance(topo, tm)


def oracle_setup(instance):
    decision, _ = solve_mcf_min_mlu(instance)
    predictor = PredictorHandle.oracle(instance, decision)
    scenarios = enumerate_failures(instance.topology, 2)
    return decision, predictor, scenarios


class TestPredictorHandle:
    def test_file_predictor_missing_scenario(self, tmp_path):
        instance = triangle_instance(0.6)
        decision, _, scenarios = oracle_setup(instance)
        path = tmp_path / "pred.csv"
        write_predictions(path, [PredictionRow(0, 2.0, 1.0)])
        predictor = PredictorHandle.from_file(path, instance, decision)
        with pytest.raises(PredictionError, match="scenario 1"):
            predictor.predict(scenarios)

    def test_oracle_cache_consistency(self):
        instance = triangle_instance(0.6)
        decision, predictor, scenarios = oracle_setup(instance)
        first = predictor.predict(scenarios)
        second = predictor.predict(scenarios)
        assert first == second


class TestRobustValidate:
    def test_oracle_equals_exhaustive(self):
        instance = triangle_instance(0.6)
        decision, predictor, scenarios = oracle_setup(instance)
        report = robust_validate(instance, decision, scenarios, predictor)
        assert report.worst_mlu == pytest.approx(0.6, abs=1e-9)
        assert report.worst_impact == pytest.approx(2.0, abs=1e-9)
        assert report.scenarios_total == 3

    def test_oracle_matches_full_sweep_on_random_instance(self):
        instance = generate_instance(7, seed=13, total_volume=2.0)
        decision, predictor, scenarios = oracle_setup(instance)
        report = robust_validate(instance, decision, scenarios, predictor)
        exhaustive = max(
            impact_oracle(instance, decision, x).mlu_failed for x in scenarios
        )
        assert report.worst_mlu == exhaustive  # exact equality, same solver

    def test_perfect_prediction_file_with_k(self, tmp_path):
        instance = generate_instance(6, seed=3, total_volume=2.0)
        decision, oracle, scenarios = oracle_setup(instance)
        records = oracle.predict(scenarios)
        rows = [
            PredictionRow(r.scenario_id, r.impact, 1.0 if r.impact >= 0.8 * max(x.impact for x in records) else 0.0)
            for r in records
        ]
        path = tmp_path / "pred.csv"
        write_predictions(path, rows)
        predictor = PredictorHandle.from_file(path, instance, decision)
        critical_count = sum(1 for r in rows if r.critical_prob >= 0.5)
        report = robust_validate(instance, decision, scenarios, predictor, k=critical_count)
        exhaustive = max(
            impact_oracle(instance, decision, x).mlu_failed for x in scenarios
        )
        assert report.worst_mlu == exhaustive
        assert report.scenarios_verified == critical_count

    def test_constraint_bookkeeping(self):
        instance = triangle_instance(0.6)
        decision, predictor, scenarios = oracle_setup(instance)
        report = robust_validate(instance, decision, scenarios, predictor)
        assert report.lp_solves_pruned <= report.lp_solves_full
        assert report.constraint_rows_pruned <= report.constraint_rows_full

    def test_empty_scenarios_rejected(self):
        instance = triangle_instance(0.6)
        decision, predictor, _ = oracle_setup(instance)
        with pytest.raises(ValueError):
            robust_validate(instance, decision, [], predictor)


class TestUpgradeThreshold:
    def test_triangle_small_demand(self):
        instance = triangle_instance(0.6)
        decision, predictor, scenarios = oracle_setup(instance)
        records = predictor.predict(scenarios)
        threshold = upgrade_threshold(records)
        assert threshold == pytest.approx(10.0 / 3.0, abs=1e-9)
        assert threshold == pytest.approx(1.0 / 0.3, abs=1e-9)

    def test_triangle_large_demand(self):
        instance = triangle_instance(1.8)
        decision, predictor, scenarios = oracle_setup(instance)
        threshold = upgrade_threshold(predictor.predict(scenarios))
        assert threshold == pytest.approx(1.0 / 0.9, abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_identity_on_random_instances(self, seed):
        instance = generate_instance(6, seed=seed, total_volume=2.0)
        decision, predictor, scenarios = oracle_setup(instance)
        records = predictor.predict(scenarios)
        threshold = upgrade_threshold(records)
        mlu_base = compute_loads(instance.topology, instance.tm, decision).mlu
        assert abs(threshold - 1.0 / mlu_base) <= 1e-9 * max(1.0, 1.0 / mlu_base)


class TestUpgradeOptimize:
    def test_triangle_small_demand_zero_cost(self):
        instance = triangle_instance(0.6)
        _, predictor, scenarios = oracle_setup(instance)
        plan = upgrade_optimize(instance, scenarios, predictor)
        assert plan.cost == pytest.approx(0.0, abs=1e-9)
        assert plan.critical_ids == ()
        assert plan.worst_validated_mlu <= 1.0 + 1e-6

    def test_triangle_large_demand_cost(self):
        instance = triangle_instance(1.8)
        _, predictor, scenarios = oracle_setup(instance)
        plan = upgrade_optimize(instance, scenarios, predictor)
        # Every single failure forces 1.8 units over unit-capacity links.
        assert len(plan.critical_ids) == 3
        assert plan.cost == pytest.approx(2.4, abs=1e-6)
        assert plan.worst_validated_mlu <= 1.0 + 1e-6

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_pruned_equals_full_enumeration(self, seed):
        instance = generate_instance(6, seed=seed, total_volume=2.0)
        scenarios = enumerate_failures(instance.topology, 2)
        instance = scale_to_worst_mlu(instance, 1.25, scenarios)
        decision, _ = solve_mcf_min_mlu(instance)
        predictor = PredictorHandle.oracle(instance, decision)
        pruned = upgrade_optimize(instance, scenarios, predictor, certify=False)
        full = upgrade_optimize(instance, scenarios, predictor, full_enumeration=True,
                                certify=False)
        assert pruned.cost == pytest.approx(full.cost, abs=1e-5)
        assert len(pruned.critical_ids) <= len(full.critical_ids)
        assert pruned.constraint_rows_pruned <= full.constraint_rows_full

    def test_certified_plan_is_congestion_free(self):
        instance = generate_instance(6, seed=2, total_volume=2.0)
        scenarios = enumerate_failures(instance.topology, 2)
        instance = scale_to_worst_mlu(instance, 1.25, scenarios)
        decision, _ = solve_mcf_min_mlu(instance)
        predictor = PredictorHandle.oracle(instance, decision)
        plan = upgrade_optimize(instance, scenarios, predictor)
        upgraded = NetworkInstance(
            upgraded_topology(instance.topology, plan.added), instance.tm
        )
        for x in scenarios:
            _, mlu = solve_mcf_min_mlu(upgraded, frozenset(x.links))
            assert mlu <= 1.0 + 1e-6

    def test_round_up_produces_integer_additions(self):
        instance = triangle_instance(1.8)
        _, predictor, scenarios = oracle_setup(instance)
        plan = upgrade_optimize(instance, scenarios, predictor, round_up=True)
        assert all(float(a).is_integer() for a in plan.added)
        assert plan.worst_validated_mlu <= 1.0 + 1e-6


@pytest.fixture(scope="module")
def protectable_setup():
    base = dense_uniform_instance(6, seed=33, avg_degree=5.0)
    scenarios = enumerate_failures(base.topology, 2)
    instance = scale_to_te_optimum(base, scenarios, target=0.97)
    assert instance is not None
    decision, _ = solve_mcf_min_mlu(instance)
    predictor = PredictorHandle.oracle(instance, decision)
    return instance, scenarios, predictor


class TestTrafficEngineering:
    def test_triangle_is_unprotectable(self):
        # Protecting any triangle link saturates its only detour, so the
        # link-protection problem has no congestion-free solution.
        instance = triangle_instance(0.6)
        _, predictor, _ = oracle_setup(instance)
        scenarios = enumerate_failures(instance.topology, 2)
        with pytest.raises(UnprotectableError):
            te_solve(instance, scenarios, predictor)

    def test_plan_certifies(self, protectable_setup):
        instance, scenarios, predictor = protectable_setup
        plan = te_solve(instance, scenarios, predictor)
        plan = te_certify_and_iterate(instance, plan, scenarios)
        assert plan.certification == "certified-all"
        for x in scenarios:
            assert te_post_failure_mlu(instance.topology, plan, x) <= 1.0 + 1e-6

    def test_protection_flow_conservation(self, protectable_setup):
        instance, scenarios, predictor = protectable_setup
        plan = te_solve(instance, scenarios, predictor)
        from robustnet.routing import arc_space

        arcs = arc_space(instance.topology)
        for l, link in enumerate(instance.topology.links):
            flow = plan.protection[l]
            assert flow[2 * l] == 0.0 and flow[2 * l + 1] == 0.0
            net = np.zeros(instance.topology.num_nodes)
            np.add.at(net, arcs.src, flow)
            np.subtract.at(net, arcs.dst, flow)
            expected = np.zeros(instance.topology.num_nodes)
            expected[link.u] = link.capacity
            expected[link.v] = -link.capacity
            assert np.abs(net - expected).max() < 1e-6

    def test_no_pruning_matches_full_certification(self, protectable_setup):
        instance, scenarios, predictor = protectable_setup
        from robustnet.robustdesign import _te_solve_with

        plan = _te_solve_with(instance, scenarios, [x.id for x in scenarios])
        plan = te_certify_and_iterate(instance, plan, scenarios)
        assert plan.certification == "certified-all"
        assert plan.iterations == 1
        ustar = te_full_reference(instance, scenarios)
        assert plan.u_critical <= 1.0 + 1e-6
        achieved = max(
            te_post_failure_mlu(instance.topology, plan, x) for x in scenarios
        )
        assert achieved <= max(1.0, ustar) + 1e-6

    def test_bad_predictor_triggers_iteration(self, protectable_setup, tmp_path):
        instance, scenarios, _ = protectable_setup
        decision, _ = solve_mcf_min_mlu(instance)
        # Adversarial file: every scenario declared normal with tiny impact.
        rows = [PredictionRow(x.id, 1.0, 0.0) for x in scenarios]
        path = tmp_path / "bad.csv"
        write_predictions(path, rows)
        predictor = PredictorHandle.from_file(path, instance, decision)
        plan = te_solve(instance, scenarios, predictor)
        assert plan.critical_ids == ()
        violations = [
            x.id
            for x in scenarios
            if te_post_failure_mlu(instance.topology, plan, x) > 1.0 + 1e-6
        ]
        certified = te_certify_and_iterate(instance, plan, scenarios)
        assert certified.certification == "certified-all"
        if violations:
            assert certified.iterations > plan.iterations
            assert set(violations) <= set(certified.critical_ids)

    def test_constraint_bookkeeping(self, protectable_setup):
        instance, scenarios, predictor = protectable_setup
        plan = te_solve(instance, scenarios, predictor)
        assert plan.constraint_rows_pruned <= plan.constraint_rows_full + 1
