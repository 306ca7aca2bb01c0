"""Dense bounded-variable primal simplex (two phases).

Each row k gets a slack s_k with ``a_k.x + s_k = b_k``; the slack bounds encode
the relation (<=: s >= 0, >=: s <= 0, =: s = 0). Rows whose slack cannot
absorb the starting residual get an artificial column, driven to zero in
phase one. Entering columns use Dantzig's rule until 1000 degenerate pivots
have occurred, then Bland's rule.
"""

import math
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
CHECK_TOL = 1e-7
BLAND_AFTER = 1000
REFACTOR_EVERY = 100

AT_LOWER, AT_UPPER, AT_ZERO, BASIC = 0, 1, 2, 3


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit | numerical
    x: np.ndarray
    objective: float
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self):
        return self.status == "optimal"


class _Tableau:
    def __init__(self, A_full, b, lower, upper, basis, status):
        self.A = A_full
        self.b = b
        self.lower = lower
        self.upper = upper
        self.basis = basis
        self.status = np.array(status, dtype=np.int64)
        self.x = np.zeros(A_full.shape[1])
        for j, st in enumerate(status):
            if st == AT_LOWER:
                self.x[j] = lower[j]
            elif st == AT_UPPER:
                self.x[j] = upper[j]
        self.refactor()
        self.iterations = 0
        self.degenerate = 0

    def refactor(self):
        B = self.A[:, self.basis]
        self.T = np.linalg.solve(B, self.A)
        nonbasic = np.ones(self.A.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = np.linalg.solve(B, rhs)
        self.since_refactor = 0

    def run(self, cost, max_iter):
        """Minimize cost.x from the current basic solution."""
        st = self.status
        movable_base = self.lower != self.upper
        while True:
            if self.iterations >= max_iter:
                return "iteration_limit"
            d = cost - cost[self.basis] @ self.T
            score = np.where(st == AT_LOWER, -d, np.where(st == AT_UPPER, d, np.abs(d)))
            score[(st == BASIC) | ~movable_base] = -np.inf
            bland = self.degenerate >= BLAND_AFTER
            if bland:
                candidates = np.flatnonzero(score > OPT_TOL)
                if candidates.size == 0:
                    return "optimal"
                entering = int(candidates[0])
            else:
                entering = int(np.argmax(score))
                if score[entering] <= OPT_TOL:
                    return "optimal"
            if st[entering] == AT_LOWER:
                direction = 1
            elif st[entering] == AT_UPPER:
                direction = -1
            else:
                direction = 1 if d[entering] < 0 else -1

            alpha = self.T[:, entering]
            xb = self.x[self.basis]
            lb = self.lower[self.basis]
            ub = self.upper[self.basis]
            rate = -direction * alpha
            usable = np.abs(alpha) > PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                down = usable & (rate < 0) & (lb > -np.inf)
                up = usable & (rate > 0) & (ub < np.inf)
                limits = np.full(rate.shape, np.inf)
                limits[down] = np.maximum(xb[down] - lb[down], 0.0) / -rate[down]
                limits[up] = np.maximum(ub[up] - xb[up], 0.0) / rate[up]
            step = float(limits.min()) if limits.size else math.inf
            leave_row = -1
            if math.isfinite(step):
                ties = np.flatnonzero(limits <= step + 1e-12)
                if bland:
                    leave_row = int(ties[np.argmin(self.basis[ties])])
                else:
                    leave_row = int(ties[np.argmax(np.abs(alpha[ties]))])
                step = float(limits[leave_row])
            span = self.upper[entering] - self.lower[entering]
            if span <= step:
                step, leave_row = span, -1
            if math.isinf(step):
                return "unbounded"

            self.iterations += 1
            if step <= 1e-12:
                self.degenerate += 1
            self.x[self.basis] = xb + rate * step
            self.x[entering] += direction * step
            if leave_row < 0:
                st[entering] = AT_UPPER if direction > 0 else AT_LOWER
                continue
            leaving = self.basis[leave_row]
            if rate[leave_row] < 0:
                self.x[leaving], st[leaving] = self.lower[leaving], AT_LOWER
            else:
                self.x[leaving], st[leaving] = self.upper[leaving], AT_UPPER
            st[entering] = BASIC
            self.basis[leave_row] = entering
            pivot_row = self.T[leave_row] / alpha[leave_row]
            self.T -= np.outer(alpha, pivot_row)
            self.T[leave_row] = pivot_row
            self.since_refactor += 1
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()


def _max_violation(A, rel, b, lower, upper, x):
    lhs = A @ x if A.size else np.zeros(len(b))
    worst = 0.0
    for k, r in enumerate(rel):
        if r == "<=":
            worst = max(worst, lhs[k] - b[k])
        elif r == ">=":
            worst = max(worst, b[k] - lhs[k])
        else:
            worst = max(worst, abs(lhs[k] - b[k]))
    if len(x):
        worst = max(worst, float(np.max(lower - x)), float(np.max(x - upper)))
    return worst


def simplex(c, A, rel, b, lower, upper, max_iter=None):
    """Minimize c.x subject to rows ``A x (rel) b`` and bounds."""
    c = np.asarray(c, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64).reshape(len(rel), len(c))
    b = np.asarray(b, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    m, n = A.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    if np.any(lower > upper):
        return LpResult("infeasible", np.full(n, np.nan), math.nan, 0, "crossed bounds")

    if m == 0:
        x = np.where(c > 0, lower, np.where(c < 0, upper, np.clip(0.0, lower, upper)))
        if not np.all(np.isfinite(x)):
            return LpResult("unbounded", x, -math.inf, 0)
        return LpResult("optimal", x, float(c @ x), 0)

    slack_lo = np.array([0.0 if r == "<=" else (-math.inf if r == ">=" else 0.0) for r in rel])
    slack_hi = np.array([math.inf if r == "<=" else 0.0 for r in rel])

    status = []
    x0 = np.zeros(n)
    for j in range(n):
        if lower[j] > -math.inf:
            status.append(AT_LOWER)
            x0[j] = lower[j]
        elif upper[j] < math.inf:
            status.append(AT_UPPER)
            x0[j] = upper[j]
        else:
            status.append(AT_ZERO)
    residual = b - A @ x0 if m else np.zeros(0)

    art_rows = []
    slack_status = []
    for k in range(m):
        if slack_lo[k] - FEAS_TOL <= residual[k] <= slack_hi[k] + FEAS_TOL:
            slack_status.append(BASIC)
        else:
            art_rows.append(k)
            slack_status.append(AT_LOWER if residual[k] < slack_lo[k] else AT_UPPER)
    n_art = len(art_rows)
    A_full = np.zeros((m, n + m + n_art))
    A_full[:, :n] = A
    A_full[:, n : n + m] = np.eye(m)
    full_lo = np.concatenate([lower, slack_lo, np.zeros(n_art)])
    full_hi = np.concatenate([upper, slack_hi, np.full(n_art, math.inf)])
    for a, k in enumerate(art_rows):
        bound = slack_lo[k] if slack_status[k] == AT_LOWER else slack_hi[k]
        A_full[k, n + m + a] = 1.0 if residual[k] - bound > 0 else -1.0
    # basis order must match rows: row k's basic column is its slack or artificial
    basis = []
    art_of = {k: n + m + a for a, k in enumerate(art_rows)}
    for k in range(m):
        basis.append(art_of.get(k, n + k))
    full_status = status + slack_status + [BASIC] * n_art

    try:
        tab = _Tableau(A_full, b, full_lo, full_hi, np.array(basis, dtype=np.int64), full_status)
        if n_art:
            phase1 = np.zeros(A_full.shape[1])
            phase1[n + m :] = 1.0
            outcome = tab.run(phase1, max_iter)
            if outcome == "iteration_limit":
                return LpResult("iteration_limit", tab.x[:n].copy(), math.nan, tab.iterations)
            tab.refactor()
            if float(np.sum(tab.x[n + m :])) > CHECK_TOL:
                return LpResult("infeasible", tab.x[:n].copy(), math.nan, tab.iterations)
            tab.upper[n + m :] = 0.0
            tab.x[n + m :] = np.where(tab.status[n + m :] == BASIC, tab.x[n + m :], 0.0)
        cost = np.concatenate([c, np.zeros(m + n_art)])
        outcome = tab.run(cost, max_iter)
        if outcome != "optimal":
            return LpResult(outcome, tab.x[:n].copy(), math.nan, tab.iterations)
        tab.refactor()
    except np.linalg.LinAlgError as exc:
        return LpResult("numerical", np.full(n, np.nan), math.nan, 0, f"singular basis: {exc}")

    x = tab.x[:n].copy()
    x = np.clip(x, lower, upper)
    worst = _max_violation(A, rel, b, lower, upper, x)
    if not np.all(np.isfinite(x)) or worst > CHECK_TOL:
        return LpResult(
            "numerical", x, math.nan, tab.iterations, f"max violation {worst:.3e} after refactor"
        )
    return LpResult("optimal", x, float(c @ x), tab.iterations)


def solve_lp(inst, lower=None, upper=None, max_iter=None):
    """LP relaxation of ``inst`` (binaries relaxed to [0, 1]); objective in the instance's sense.

    Fixed variables are substituted out and rows left without free columns
    are checked directly, so deep branch-and-bound nodes solve small LPs.
    """
    lower = np.asarray(inst.lower if lower is None else lower, dtype=np.float64)
    upper = np.asarray(inst.upper if upper is None else upper, dtype=np.float64)
    sign = -1.0 if inst.maximize else 1.0
    n = inst.num_vars
    if np.any(lower > upper):
        return LpResult("infeasible", np.full(n, np.nan), math.nan, 0, "crossed bounds")
    A = inst.dense_matrix
    fixed = lower == upper
    free = np.flatnonzero(~fixed)
    shift = A[:, fixed] @ lower[fixed] if A.size else np.zeros(inst.num_rows)
    rhs = inst.rhs - shift
    A_free = A[:, free]
    live = np.any(A_free != 0.0, axis=1) if A.size else np.zeros(0, dtype=bool)
    for k in np.flatnonzero(~live):
        r = inst.relations[k]
        slack = rhs[k]
        if (r == "<=" and slack < -CHECK_TOL) or (r == ">=" and slack > CHECK_TOL) or (
            r == "=" and abs(slack) > CHECK_TOL
        ):
            return LpResult("infeasible", np.full(n, np.nan), math.nan, 0, f"row {k} violated")
    rel = [inst.relations[k] for k in np.flatnonzero(live)]
    res = simplex(
        sign * inst.c[free], A_free[live], rel, rhs[live], lower[free], upper[free], max_iter
    )
    x = lower.copy()
    x[free] = res.x
    res.x = x
    if res.status == "optimal":
        res.objective = float(inst.c @ x)
        if _max_violation(A, inst.relations, inst.rhs, lower, upper, x) > CHECK_TOL:
            res.status, res.message = "numerical", "violation after substitution"
            res.objective = math.nan
    return res
