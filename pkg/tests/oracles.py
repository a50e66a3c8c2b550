"""Independent reference computations used by the test suite.

These deliberately take a different route from the library code: the
min-MLU reference keeps one commodity per demand (no source aggregation),
builds sparse matrices, and solves with scipy's HiGHS backend instead of
the in-repo simplex.
"""

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from robustnet.routing import arc_space


def brute_force_min_mlu(instance, disabled_links=frozenset()):
    """Minimum MLU via a per-demand LP solved by scipy/HiGHS."""
    topology, tm = instance.topology, instance.tm
    demands = tm.positive_demands()
    if not demands:
        return 0.0
    arcs = arc_space(topology)
    live = [a for a in range(arcs.num_arcs) if int(arcs.link[a]) not in disabled_links]
    n_nodes = topology.num_nodes
    nd, na = len(demands), len(live)
    n_vars = nd * na + 1

    eq_r, eq_c, eq_v = [], [], []
    b_eq = np.zeros(nd * n_nodes)
    for d, (src, dst, volume) in enumerate(demands):
        for k, a in enumerate(live):
            u, v = int(arcs.src[a]), int(arcs.dst[a])
            eq_r.append(d * n_nodes + u)
            eq_c.append(d * na + k)
            eq_v.append(1.0)
            eq_r.append(d * n_nodes + v)
            eq_c.append(d * na + k)
            eq_v.append(-1.0)
        b_eq[d * n_nodes + src] = volume
        b_eq[d * n_nodes + dst] = -volume
    a_eq = coo_matrix((eq_v, (eq_r, eq_c)), shape=(nd * n_nodes, n_vars))

    ub_r, ub_c, ub_v = [], [], []
    for k, a in enumerate(live):
        for d in range(nd):
            ub_r.append(k)
            ub_c.append(d * na + k)
            ub_v.append(1.0)
        ub_r.append(k)
        ub_c.append(n_vars - 1)
        ub_v.append(-float(arcs.capacity[a]))
    a_ub = coo_matrix((ub_v, (ub_r, ub_c)), shape=(na, n_vars))

    c = np.zeros(n_vars)
    c[-1] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(na), A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"reference LP failed with status {res.status}")
    return float(res.fun)
