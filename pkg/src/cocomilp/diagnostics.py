"""Logit separability, intra-constraint variance, activation ratios and primal curves."""

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64


@dataclass
class SeparabilityReport:
    sampled_pairs: int
    fraction_positive: float
    mean_delta: float
    bin_edges: np.ndarray
    counts: np.ndarray

    def to_csv(self):
        lines = [f"# sampled_pairs={self.sampled_pairs} fraction_positive={self.fraction_positive!r} "
                 f"mean_delta={self.mean_delta!r}",
                 "bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            lines.append(f"{lo!r},{hi!r},{int(c)}")
        return "\n".join(lines) + "\n"


@dataclass
class VarianceReport:
    intra_var_mean: float
    inter_var: float
    ratio: float


def pairwise_ranking_stats(marginals, truth, num_pairs=10_000, seed=0, bins=50):
    """Differences x_hat_i - x_hat_j over (positive, negative) pairs of ``truth``."""
    marginals = np.asarray(marginals, dtype=np.float64)
    truth = np.asarray(truth)
    pos = np.flatnonzero(truth > 0.5)
    neg = np.flatnonzero(truth <= 0.5)
    if pos.size == 0 or neg.size == 0:
        raise ValueError(
            f"truth needs at least one 1 and one 0 (has {pos.size} ones, {neg.size} zeros)"
        )
    if pos.size * neg.size <= num_pairs:
        pi = np.repeat(pos, neg.size)
        nj = np.tile(neg, pos.size)
    else:
        rng = SplitMix64(seed)
        pi = pos[[rng.randint(0, pos.size - 1) for _ in range(num_pairs)]]
        nj = neg[[rng.randint(0, neg.size - 1) for _ in range(num_pairs)]]
    delta = marginals[pi] - marginals[nj]
    counts, edges = np.histogram(delta, bins=bins, range=(-1.0, 1.0))
    return SeparabilityReport(
        sampled_pairs=int(delta.size),
        fraction_positive=float(np.mean(delta > 0.0)),
        mean_delta=float(np.mean(delta)),
        bin_edges=edges,
        counts=counts,
    )


def _binary_members(inst):
    p = inst.num_binary
    return [[j for j in row.cols if j < p] for row in inst.rows]


def intra_constraint_variance(logits, inst):
    """Mean per-constraint population variance of member logits over the global variance."""
    z = np.asarray(logits, dtype=np.float64)
    per_row = [np.var(z[m]) for m in _binary_members(inst) if len(m) >= 2]
    if not per_row:
        raise ValueError("no constraint has two or more binary members")
    intra = float(np.mean(per_row))
    inter = float(np.var(z))
    ratio = intra / inter if inter > 0 else 0.0
    return VarianceReport(intra, inter, ratio)


def activation_ratios(inst, solution, bins=20):
    """Per-constraint fraction of binary members at 1, plus a histogram over [0, 1]."""
    x = np.asarray(solution, dtype=np.float64)
    ratios = np.array(
        [np.sum(x[m] > 0.5) / len(m) for m in _binary_members(inst) if m], dtype=np.float64
    )
    counts, edges = np.histogram(ratios, bins=bins, range=(0.0, 1.0))
    return ratios, counts, edges


NO_SOLUTION = "no solution"


def primal_curve(trace, bks, axis="time"):
    """Step points (axis value, |incumbent - BKS|) at each incumbent improvement.

    Returns ``(points, marker)`` where marker is ``NO_SOLUTION`` when the trace
    never had an incumbent, else ``None``.
    """
    from .pipeline import gap_abs

    if not trace:
        raise ValueError("empty trace")
    points = []
    last = None
    for ev in trace:
        inc = ev.incumbent
        if inc is None or not np.isfinite(inc):
            continue
        if last is not None and inc == last:
            continue
        gap = gap_abs(inc, bks)
        if points and gap > points[-1][1]:
            continue
        last = inc
        points.append((getattr(ev, axis), gap))
    return points, (None if points else NO_SOLUTION)


def curve_to_csv(points, marker, axis="time"):
    lines = [f"{axis},gap_abs"]
    if marker:
        lines.append(f"# {marker}")
    lines += [f"{t!r},{g!r}" for t, g in points]
    return "\n".join(lines) + "\n"
