"""Instance builders shared by the unit and acceptance suites."""

from robustnet.failure import enumerate_failures, impact_oracle
from robustnet.netmodel import (
    NetworkInstance,
    generate_gravity_tm,
    generate_random_topology,
    scale_tm,
)
from robustnet.robustdesign import te_full_reference
from robustnet.routing import solve_mcf_min_mlu


def dense_uniform_instance(n, seed, avg_degree=5.0, demand_frac=0.2):
    """Dense unit-capacity instance; the kind that can support protection."""
    topo = generate_random_topology(n, seed=seed, avg_degree=avg_degree)
    tm = generate_gravity_tm(topo, total_volume=demand_frac * n, seed=seed + 2)
    return NetworkInstance(topo, tm, seed=seed)


def scale_to_worst_mlu(instance, target, scenarios=None):
    """Rescale demands so the worst-case optimal-reroute MLU equals target.

    Valid because the min-MLU objective is linear in a uniform demand scale.
    """
    if scenarios is None:
        scenarios = enumerate_failures(instance.topology, 2)
    decision, _ = solve_mcf_min_mlu(instance)
    worst = max(
        impact_oracle(instance, decision, x).mlu_failed for x in scenarios
    )
    return NetworkInstance(
        topology=instance.topology,
        tm=scale_tm(instance.tm, target / worst),
        seed=instance.seed,
    )


def scale_to_te_optimum(instance, scenarios, target=0.97, tol=1e-3, max_steps=40):
    """Rescale demands so the full fault-tolerant-TE optimum hits ``target``.

    The optimum is monotone in a uniform demand scale but has a
    demand-independent floor from the protection flows, so this bisects.
    Returns None when the floor already exceeds the target (the instance
    cannot be made congestion free).
    """
    base = te_full_reference(instance, scenarios)
    floor = te_full_reference(
        NetworkInstance(instance.topology, scale_tm(instance.tm, 1e-9), instance.seed),
        scenarios,
    )
    if floor > target:
        return None
    lo, hi = 1e-9, 1.0
    if base < target:
        while te_full_reference(
            NetworkInstance(instance.topology, scale_tm(instance.tm, hi), instance.seed),
            scenarios,
        ) < target and hi < 1e6:
            hi *= 2.0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        candidate = NetworkInstance(
            instance.topology, scale_tm(instance.tm, mid), instance.seed
        )
        value = te_full_reference(candidate, scenarios)
        if abs(value - target) <= tol:
            return candidate
        if value < target:
            lo = mid
        else:
            hi = mid
    return NetworkInstance(
        instance.topology, scale_tm(instance.tm, lo), instance.seed
    )
