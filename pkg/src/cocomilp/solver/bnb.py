"""Best-bound branch-and-bound for binary MILPs on top of the LP relaxation.

Internally everything is minimized (maximization negates the objective);
results are reported in the instance's own sense.

With ``pool_size > 1`` the search keeps the best N distinct solutions: nodes
are pruned only against the N-th best pool objective once the pool is full,
and integral nodes with free binaries are branched further so that other
solutions in their subtree are not lost.
"""

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..instance import Assignment, check_feasibility, evaluate_objective
from .lp import solve_lp


@dataclass(frozen=True)
class BnbConfig:
    node_limit: int = 100_000
    time_limit: float = math.inf
    abs_gap_tol: float = 1e-6
    integrality_tol: float = 1e-6
    pool_size: int = 1
    branching: str = "most_fractional"
    node_order: str = "best_bound"

    def __post_init__(self):
        if self.node_limit < 1 or self.time_limit <= 0 or self.pool_size < 1:
            raise ValueError(f"BnbConfig limits must be positive: {self}")
        if self.abs_gap_tol < 0 or self.integrality_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.branching != "most_fractional" or self.node_order != "best_bound":
            raise ValueError("only most_fractional branching with best_bound order is supported")


@dataclass
class SolutionPool:
    """Distinct feasible assignments, best objective first."""

    sense: str
    assignments: list = field(default_factory=list)

    def __len__(self):
        return len(self.assignments)

    @property
    def objectives(self):
        return [a.objective for a in self.assignments]

    @property
    def best(self):
        return self.assignments[0] if self.assignments else None


@dataclass
class TraceEvent:
    node: int
    bound: float
    incumbent: float
    time: float


@dataclass
class BnbResult:
    status: str  # optimal | feasible | infeasible | limit
    incumbent: Assignment
    bound: float
    pool: SolutionPool
    nodes_explored: int
    trace: list = field(default_factory=list)

    @property
    def objective(self):
        return None if self.incumbent is None else self.incumbent.objective


class _Pool:
    def __init__(self, capacity, p):
        self.capacity = capacity
        self.p = p
        self.entries = []  # (internal objective, seq, x)
        self.keys = set()
        self.seq = 0

    def offer(self, internal_obj, x):
        key = tuple(np.round(x[: self.p]).astype(np.int8).tolist())
        if key in self.keys:
            return False
        if len(self.entries) == self.capacity and internal_obj >= self.entries[-1][0]:
            return False
        self.keys.add(key)
        self.entries.append((internal_obj, self.seq, x))
        self.seq += 1
        self.entries.sort(key=lambda e: (e[0], e[1]))
        if len(self.entries) > self.capacity:
            _, _, dropped = self.entries.pop()
            self.keys.discard(tuple(np.round(dropped[: self.p]).astype(np.int8).tolist()))
        return True

    @property
    def best(self):
        return self.entries[0][0] if self.entries else math.inf

    def threshold(self, tol):
        if len(self.entries) < self.capacity:
            return math.inf
        return self.entries[-1][0] - tol


def branch_and_bound(inst, cfg=BnbConfig()):
    sign = -1.0 if inst.maximize else 1.0
    p = inst.num_binary
    if np.any(inst.lower[:p] != 0) or np.any(inst.upper[:p] != 1):
        raise ValueError("branch_and_bound requires binary integer variables")
    start = time.perf_counter()
    pool = _Pool(cfg.pool_size, p)
    heap = [(-math.inf, 0, 0, inst.lower.copy(), inst.upper.copy())]
    seq = 1
    nodes = 0
    trace = []
    hit_limit = False
    unreliable = False
    last_event = (None, None)

    def global_bound():
        open_min = heap[0][0] if heap else math.inf
        return min(open_min, pool.best)

    def record():
        nonlocal last_event
        event = (global_bound(), pool.best)
        if event != last_event:
            last_event = event
            trace.append(
                TraceEvent(nodes, sign * event[0], sign * event[1], time.perf_counter() - start)
            )

    while heap:
        threshold = pool.threshold(cfg.abs_gap_tol)
        if heap[0][0] >= threshold:
            heap.clear()
            break
        if nodes >= cfg.node_limit or time.perf_counter() - start >= cfg.time_limit:
            hit_limit = True
            break
        key, neg_depth, _, lo, hi = heapq.heappop(heap)
        lp = solve_lp(inst, lo, hi)
        nodes += 1
        if lp.status == "infeasible":
            record()
            continue
        if lp.status != "optimal":
            # unsolved node: dropping it would void the optimality proof
            unreliable = True
            record()
            continue
        bound = max(sign * lp.objective, key)
        if bound >= pool.threshold(cfg.abs_gap_tol):
            record()
            continue
        xb = lp.x[:p]
        dist = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        if np.all(dist <= cfg.integrality_tol):
            x = lp.x.copy()
            x[:p] = np.round(xb)
            if check_feasibility(inst, x, 1e-6).feasible:
                pool.offer(sign * evaluate_objective(inst, x), x)
            free = np.flatnonzero(lo[:p] != hi[:p])
            if cfg.pool_size > 1 and free.size:
                branch_var = int(free[0])
            else:
                record()
                continue
        else:
            # most fractional, ties to the lowest index
            branch_var = int(np.argmax(dist))
        for value in (0.0, 1.0):
            child_lo, child_hi = lo.copy(), hi.copy()
            child_lo[branch_var] = child_hi[branch_var] = value
            heapq.heappush(heap, (bound, neg_depth - 1, seq, child_lo, child_hi))
            seq += 1
        record()

    bound = global_bound()
    best = pool.best
    if not heap and not hit_limit:
        bound = best
    if pool.entries and best - bound <= cfg.abs_gap_tol and not unreliable:
        status = "optimal"
    elif hit_limit:
        status = "limit"
    elif pool.entries:
        status = "feasible"
    else:
        status = "infeasible" if not unreliable else "limit"
    record()
    assignments = [
        Assignment(x, evaluate_objective(inst, x)) for _, _, x in pool.entries
    ]
    result_pool = SolutionPool(inst.sense, assignments)
    return BnbResult(
        status=status,
        incumbent=result_pool.best,
        bound=sign * bound,
        pool=result_pool,
        nodes_explored=nodes,
        trace=trace,
    )
