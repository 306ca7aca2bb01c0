from .lp import LpResult, simplex, solve_lp
from .bnb import BnbConfig, BnbResult, SolutionPool, TraceEvent, branch_and_bound
from .search import (
    SearchConfig,
    build_trust_region,
    predict_and_search,
    search_with_marginals,
    select_fixings,
)

__all__ = [
    "BnbConfig",
    "BnbResult",
    "LpResult",
    "SearchConfig",
    "SolutionPool",
    "TraceEvent",
    "branch_and_bound",
    "build_trust_region",
    "predict_and_search",
    "search_with_marginals",
    "select_fixings",
    "simplex",
    "solve_lp",
]
