"""Trust-region neighbourhood around predicted marginals and the search step."""

from dataclasses import dataclass

import numpy as np

from ..instance import ConstraintRow
from .bnb import BnbConfig, branch_and_bound


@dataclass(frozen=True)
class SearchConfig:
    k0: int = 30
    k1: int = 0
    delta: int = 5

    def __post_init__(self):
        if self.k0 < 0 or self.k1 < 0 or self.delta < 0:
            raise ValueError(f"SearchConfig entries must be nonnegative: {self}")

    def validate_for(self, p):
        if self.k0 + self.k1 > p:
            raise ValueError(f"SearchConfig k0 + k1 = {self.k0 + self.k1} exceeds {p} binaries")


def select_fixings(marginals, sc):
    """(L, H): the k0 lowest and k1 highest marginals, ties to the lowest index."""
    marginals = np.asarray(marginals, dtype=np.float64)
    sc.validate_for(marginals.size)
    low = np.argsort(marginals, kind="stable")[: sc.k0]
    rest = np.setdiff1d(np.arange(marginals.size), low)
    high = rest[np.argsort(-marginals[rest], kind="stable")][: sc.k1]
    return sorted(low.tolist()), sorted(high.tolist())


def build_trust_region(inst, marginals, sc):
    """Copy of ``inst`` with sum_L x + sum_H (1 - x) <= delta appended.

    With both selections empty the row would read 0 <= delta, so the instance
    is returned unchanged.
    """
    if len(marginals) != inst.num_binary:
        raise ValueError(f"expected {inst.num_binary} marginals, got {len(marginals)}")
    low, high = select_fixings(marginals, sc)
    if not low and not high:
        return inst
    pairs = [(j, 1.0) for j in low] + [(j, -1.0) for j in high]
    row = ConstraintRow.from_pairs(pairs, "<=", float(sc.delta - len(high)))
    return inst.with_rows([row], name=f"{inst.name}+tr")


def search_with_marginals(inst, marginals, sc, cfg=BnbConfig()):
    region = build_trust_region(inst, marginals, sc)
    return branch_and_bound(region, cfg)


def predict_and_search(inst, model, sc, cfg=BnbConfig()):
    """Encode, predict marginals, restrict to the trust region and solve.

    Objectives are those of the original instance (the added row carries no
    cost). An empty region is reported as ``infeasible``.
    """
    from ..graphenc import encode
    from ..nn import forward

    pred = forward(model, encode(inst))
    return search_with_marginals(inst, pred.marginals, sc, cfg)
