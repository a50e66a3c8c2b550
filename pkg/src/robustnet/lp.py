"""Dense linear-programming solver used by the routing and design modules.

Solves  min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0  with a
two-phase revised simplex.  Pricing is Dantzig by default and falls back to
Bland's rule after a run of degenerate pivots, which guarantees termination.
The basis inverse is kept explicitly, refactorized periodically, and sooner
whenever a small pivot was accepted.  If the basis still degrades, the solve
restarts once under Bland's rule from scratch; solutions are residual-checked
before they are returned.

The solver is deliberately dense: every problem built in this repository is
at most a few thousand rows, and a dense basis keeps the implementation
small, deterministic, and easy to audit against an external solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError

# Pivot / feasibility tolerances.  _PIV_TOL rejects ratio-test entries,
# _PIV_GOOD is the preferred minimum pivot magnitude; columns below it are
# deferred while better ones exist.
_RC_TOL = 1e-9
_PIV_TOL = 1e-9
_PIV_GOOD = 1e-5
_PIV_REFACTOR = 1e-4
_DEGENERATE_STREAK = 12
_REFACTOR_EVERY = 60
_RESIDUAL_TOL = 1e-6


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float
    x: np.ndarray

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _SingularBasis(Exception):
    pass


def solve_lp(
    c: np.ndarray,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    a_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    max_iterations: int | None = None,
) -> LPResult:
    """Minimize ``c @ x`` over ``a_eq x = b_eq``, ``a_ub x <= b_ub``, ``x >= 0``.

    Raises:
        SolverError: on iteration-limit or numerical breakdown.  Infeasible
            and unbounded problems are reported through ``LPResult.status``.
    """
    c = np.asarray(c, dtype=float)
    n_orig = c.shape[0]

    blocks = []
    rhs_blocks = []
    if a_eq is not None:
        a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
        blocks.append((a_eq, 0))
        rhs_blocks.append(b_eq)
    n_ub = 0
    if a_ub is not None:
        a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
        n_ub = a_ub.shape[0]
        blocks.append((a_ub, 1))
        rhs_blocks.append(b_ub)
    if not blocks:
        raise SolverError("LP has no constraints")

    m = sum(block.shape[0] for block, _ in blocks)
    n = n_orig + n_ub
    a = np.zeros((m, n))
    b = np.concatenate(rhs_blocks).astype(float)
    row = 0
    slack = n_orig
    for block, kind in blocks:
        r = block.shape[0]
        a[row : row + r, :n_orig] = block
        if kind == 1:
            for i in range(r):
                a[row + i, slack] = 1.0
                slack += 1
        row += r

    # Standard form wants b >= 0.
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # Slack columns of un-flipped inequality rows still hold +1 and can seed
    # the starting basis; every other row gets a phase-1 artificial.
    n_eq_rows = m - n_ub
    slack_of_row = {}
    for i in range(n_ub):
        if not neg[n_eq_rows + i]:
            slack_of_row[n_eq_rows + i] = n_orig + i

    cost = np.zeros(n)
    cost[:n_orig] = c

    if max_iterations is None:
        max_iterations = max(5000, 100 * (m + n))

    try:
        x, status = _two_phase(a, b, cost, slack_of_row, max_iterations, bland=False)
    except _SingularBasis:
        # Deterministic fallback: Bland from the start is slower but does not
        # chase the aggressive pivots that eroded the basis.
        try:
            x, status = _two_phase(a, b, cost, slack_of_row, max_iterations, bland=True)
        except _SingularBasis as exc:
            raise SolverError("basis matrix became singular") from exc

    if status != "optimal":
        return LPResult(status=status, objective=np.nan, x=np.full(n_orig, np.nan))

    scale = max(1.0, float(np.abs(b).max()))
    residual = float(np.abs(a @ x - b).max())
    if residual > _RESIDUAL_TOL * scale:
        raise SolverError(f"solution residual {residual:.3e} exceeds tolerance")
    x_orig = x[:n_orig]
    return LPResult(status="optimal", objective=float(cost[:n_orig] @ x_orig), x=x_orig)


def _two_phase(a, b, cost, slack_of_row, max_iterations, bland):
    m, n = a.shape

    # Phase 1: crash basis from slacks, artificials elsewhere; minimize the
    # artificial total.
    artificial_rows = [r for r in range(m) if r not in slack_of_row]
    a1 = np.hstack([a, np.zeros((m, len(artificial_rows)))])
    c1 = np.zeros(n + len(artificial_rows))
    basis = [0] * m
    for k, r in enumerate(artificial_rows):
        a1[r, n + k] = 1.0
        c1[n + k] = 1.0
        basis[r] = n + k
    for r, col in slack_of_row.items():
        basis[r] = col
    b_inv = np.eye(m)

    basis, b_inv, status = _simplex(a1, b, c1, basis, b_inv, max_iterations, bland)
    if status == "unbounded":  # cannot happen for the phase-1 objective
        raise SolverError("phase-1 simplex reported unbounded")
    x_b = b_inv @ b
    if float(c1[basis] @ x_b) > 1e-7:
        return None, "infeasible"

    # Drive leftover artificials out of the basis; drop redundant rows.
    keep_rows = list(range(m))
    for pos in range(m):
        if basis[pos] < n:
            continue
        pivot_row = b_inv[pos] @ a1[:, :n]
        candidates = np.flatnonzero(np.abs(pivot_row) > 1e-7)
        candidates = [j for j in candidates if j not in basis]
        if candidates:
            _pivot(b_inv, b_inv @ a1[:, candidates[0]], pos)
            basis[pos] = candidates[0]
        else:
            keep_rows[pos] = -1  # redundant constraint

    if any(r == -1 for r in keep_rows):
        positions = [p for p in range(m) if keep_rows[p] != -1]
        a = (b_inv @ a1[:, :n])[positions]
        b = (b_inv @ b)[positions]
        basis = [basis[p] for p in positions]
        m = len(positions)
        b_inv = np.eye(m)
    else:
        a = a1[:, :n]

    basis, b_inv, status = _simplex(a, b, cost, basis, b_inv, max_iterations, bland)
    if status == "unbounded":
        return None, "unbounded"
    x = np.zeros(n)
    x[basis] = b_inv @ b
    np.maximum(x, 0.0, out=x)
    return x, "optimal"


def _simplex(a, b, cost, basis, b_inv, max_iterations, bland_always=False):
    """Revised simplex core; mutates ``basis`` and returns the final inverse."""
    m, n = a.shape
    basic_mask = np.zeros(n, dtype=bool)
    basic_mask[basis] = True
    degenerate_streak = 0
    refactor_in = _REFACTOR_EVERY

    for _ in range(max_iterations):
        if refactor_in <= 0:
            b_inv = _refactor(a, basis)
            refactor_in = _REFACTOR_EVERY
        refactor_in -= 1

        x_b = b_inv @ b
        y = cost[basis] @ b_inv
        reduced = cost - y @ a
        reduced[basic_mask] = 0.0

        use_bland = bland_always or degenerate_streak >= _DEGENERATE_STREAK
        # Columns whose usable pivots are all tiny get deferred; accepting
        # them would erode the basis inverse.
        skipped = []
        while True:
            entering = _choose_entering(reduced, use_bland)
            if entering is None:
                if skipped:
                    entering, direction, rows = max(
                        skipped, key=lambda item: float(item[1][item[2]].max())
                    )
                    break
                return basis, b_inv, "optimal"

            direction = b_inv @ a[:, entering]
            positive = direction > _PIV_TOL
            if not positive.any():
                return basis, b_inv, "unbounded"

            ratios = np.full(m, np.inf)
            ratios[positive] = np.maximum(x_b[positive], 0.0) / direction[positive]
            theta = ratios.min()
            rows = np.flatnonzero(ratios <= theta + 1e-12)
            if float(direction[rows].max()) >= _PIV_GOOD:
                break
            skipped.append((entering, direction, rows))
            reduced[entering] = 0.0

        if use_bland:
            # Bland tie-break on the leaving variable index prevents cycling.
            leaving_pos = min(rows, key=lambda r: basis[r])
        else:
            # Prefer the largest pivot among ties: faster and more stable.
            leaving_pos = int(rows[np.argmax(direction[rows])])
        pivot = float(direction[leaving_pos])
        theta = max(float(x_b[leaving_pos]), 0.0) / pivot

        _pivot(b_inv, direction, leaving_pos)
        basic_mask[basis[leaving_pos]] = False
        basic_mask[entering] = True
        basis[leaving_pos] = entering

        if pivot < _PIV_REFACTOR:
            refactor_in = 0
        degenerate_streak = degenerate_streak + 1 if theta <= 1e-10 else 0

    raise SolverError(f"simplex iteration limit ({max_iterations}) exceeded")


def _choose_entering(reduced: np.ndarray, bland: bool) -> int | None:
    if bland:
        below = np.flatnonzero(reduced < -_RC_TOL)
        return int(below[0]) if below.size else None
    j = int(np.argmin(reduced))
    return j if reduced[j] < -_RC_TOL else None


def _pivot(b_inv: np.ndarray, direction: np.ndarray, row: int) -> None:
    pivot = direction[row]
    if abs(pivot) < _PIV_TOL:
        raise SolverError("pivot element below tolerance")
    b_inv[row] /= pivot
    scale = direction.copy()
    scale[row] = 0.0
    b_inv -= np.outer(scale, b_inv[row])


def _refactor(a: np.ndarray, basis: list[int]) -> np.ndarray:
    try:
        return np.linalg.inv(a[:, basis])
    except np.linalg.LinAlgError as exc:
        raise _SingularBasis from exc
