import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from robustnet.lp import solve_lp


def scipy_reference(c, a_eq=None, b_eq=None, a_ub=None, b_ub=None):
    return linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                   bounds=(0, None), method="highs")


def test_simple_equality():
    # min x0 + 2 x1  s.t.  x0 + x1 = 1
    res = solve_lp(np.array([1.0, 2.0]), a_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
    assert res.optimal
    assert res.objective == pytest.approx(1.0, abs=1e-9)
    assert res.x == pytest.approx([1.0, 0.0], abs=1e-9)


def test_inequality_and_equality_mix():
    # min -x0 - x1  s.t.  x0 + 2 x1 <= 4,  x0 <= 2,  x0 + x1 = 3 -> x = (2, 1)
    res = solve_lp(
        np.array([-1.0, -1.0]),
        a_eq=np.array([[1.0, 1.0]]),
        b_eq=np.array([3.0]),
        a_ub=np.array([[1.0, 2.0], [1.0, 0.0]]),
        b_ub=np.array([4.0, 2.0]),
    )
    assert res.optimal
    assert res.x == pytest.approx([2.0, 1.0], abs=1e-8)


def test_infeasible_detected():
    res = solve_lp(
        np.array([1.0]),
        a_eq=np.array([[1.0]]),
        b_eq=np.array([2.0]),
        a_ub=np.array([[1.0]]),
        b_ub=np.array([1.0]),
    )
    assert res.status == "infeasible"


def test_unbounded_detected():
    res = solve_lp(np.array([-1.0]), a_ub=np.array([[-1.0]]), b_ub=np.array([1.0]))
    assert res.status == "unbounded"


def test_beale_cycling_example_terminates():
    # Classic degenerate instance that cycles under naive Dantzig pricing.
    c = np.array([-0.75, 150.0, -0.02, 6.0])
    a_ub = np.array([
        [0.25, -60.0, -0.04, 9.0],
        [0.5, -90.0, -0.02, 3.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    b_ub = np.array([0.0, 0.0, 1.0])
    res = solve_lp(c, a_ub=a_ub, b_ub=b_ub)
    ref = scipy_reference(c, a_ub=a_ub, b_ub=b_ub)
    assert res.optimal
    assert res.objective == pytest.approx(ref.fun, abs=1e-8)


def test_redundant_equalities():
    # Duplicated rows must not break phase 1 cleanup.
    a_eq = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]])
    b_eq = np.array([1.0, 1.0, 2.0])
    res = solve_lp(np.array([1.0, 3.0]), a_eq=a_eq, b_eq=b_eq)
    assert res.optimal
    assert res.objective == pytest.approx(1.0, abs=1e-9)


def test_degenerate_transport_lp_matches_scipy():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m, n = 4, 7
        a_eq = rng.integers(0, 2, size=(m, n)).astype(float)
        a_eq[:, :m] += np.eye(m)  # keep rows independent-ish
        x_feas = rng.uniform(0, 1, size=n)
        b_eq = a_eq @ x_feas
        c = rng.uniform(-1, 1, size=n)
        res = solve_lp(c, a_eq=a_eq, b_eq=b_eq)
        ref = scipy_reference(c, a_eq=a_eq, b_eq=b_eq)
        if ref.status == 3:
            assert res.status == "unbounded"
        else:
            assert res.optimal
            assert res.objective == pytest.approx(ref.fun, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_random_lps_match_scipy(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 6))
    n = int(rng.integers(2, 9))
    a_ub = rng.uniform(-1, 2, size=(m, n))
    b_ub = rng.uniform(0.5, 3, size=m)  # x = 0 feasible
    c = rng.uniform(-2, 2, size=n)
    res = solve_lp(c, a_ub=a_ub, b_ub=b_ub)
    ref = scipy_reference(c, a_ub=a_ub, b_ub=b_ub)
    if ref.status == 3:
        assert res.status == "unbounded"
    else:
        assert res.optimal
        assert res.objective == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(res.x >= -1e-9)
        assert np.all(a_ub @ res.x <= b_ub + 1e-7)
