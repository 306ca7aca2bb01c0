"""Supervision objectives over logits, each returning (loss, dloss/dlogits)."""

import logging
from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12
_LOG_FLOOR = np.log(LOG_CLAMP)


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    gamma: float = 0.9
    lambda_rank: float = 0.01
    pair_cap: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0 or self.gamma <= 0 or self.lambda_rank < 0 or self.pair_cap < 1:
            raise ValueError(f"invalid LossConfig {self}")


@dataclass
class LabeledSolutionSet:
    """N binary label vectors (rows of ``solutions``) with normalized weights."""

    solutions: np.ndarray
    weights: np.ndarray
    objectives: np.ndarray

    def __post_init__(self):
        self.solutions = np.atleast_2d(np.asarray(self.solutions, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.objectives = np.asarray(self.objectives, dtype=np.float64)
        if self.weights.shape != (self.solutions.shape[0],):
            raise ValueError("one weight per solution required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def best(self):
        return self.solutions[0]


def _log_sigmoid(z):
    # log(sigmoid(z)) = -softplus(-z)
    return -np.logaddexp(0.0, -z)


def bce_weighted(z, labels):
    """Weighted binary cross-entropy on marginals sigmoid(z); logs clamped at 1e-12."""
    z = np.asarray(z, dtype=np.float64)
    x_hat = 1.0 / (1.0 + np.exp(-z))
    log_p = _log_sigmoid(z)
    log_q = _log_sigmoid(-z)
    live_p = log_p > _LOG_FLOOR
    live_q = log_q > _LOG_FLOOR
    log_p = np.where(live_p, log_p, _LOG_FLOOR)
    log_q = np.where(live_q, log_q, _LOG_FLOOR)
    # d log_p / dz = 1 - x_hat and d log_q / dz = -x_hat while unclamped
    dlog_p = np.where(live_p, 1.0 - x_hat, 0.0)
    dlog_q = np.where(live_q, -x_hat, 0.0)
    loss = 0.0
    grad = np.zeros_like(z)
    for w, x in zip(labels.weights, labels.solutions):
        loss += w * float(-np.sum(x * log_p + (1.0 - x) * log_q))
        grad -= w * (x * dlog_p + (1.0 - x) * dlog_q)
    return loss, grad


def _logsumexp(v):
    top = np.max(v)
    return top + np.log(np.sum(np.exp(v - top)))


def mscl(z, positives, tau=0.1):
    """-log of the softmax mass (temperature tau) held by ``positives`` among all logits."""
    z = np.asarray(z, dtype=np.float64)
    pos = np.asarray(sorted(set(int(i) for i in positives)), dtype=np.int64)
    if pos.size == 0:
        log.warning("MSCL with an empty positive set contributes zero loss")
        return 0.0, np.zeros_like(z)
    if pos.size == z.size:
        return 0.0, np.zeros_like(z)
    s = z / tau
    lse_all = _logsumexp(s)
    lse_pos = _logsumexp(s[pos])
    grad = np.exp(s - lse_all)
    grad[pos] -= np.exp(s[pos] - lse_pos)
    return float(lse_all - lse_pos), grad / tau


def rank_loss(z, positives, negatives, gamma=0.9, pair_cap=50_000, seed=0):
    """Mean hinge max(0, gamma - (z_i - z_j)) over positive/negative pairs.

    All pairs are used up to ``pair_cap``; beyond it ``pair_cap`` pairs are drawn
    uniformly with replacement from the seeded generator.
    """
    z = np.asarray(z, dtype=np.float64)
    pos = np.asarray(list(positives), dtype=np.int64)
    neg = np.asarray(list(negatives), dtype=np.int64)
    grad = np.zeros_like(z)
    if pos.size == 0 or neg.size == 0:
        return 0.0, grad
    if pos.size * neg.size <= pair_cap:
        pi = np.repeat(pos, neg.size)
        nj = np.tile(neg, pos.size)
    else:
        rng = SplitMix64(seed)
        pi = pos[[rng.randint(0, pos.size - 1) for _ in range(pair_cap)]]
        nj = neg[[rng.randint(0, neg.size - 1) for _ in range(pair_cap)]]
    margins = gamma - (z[pi] - z[nj])
    active = margins > 0.0
    count = pi.size
    loss = float(np.sum(np.where(active, margins, 0.0)) / count)
    weight = active / count
    grad -= np.bincount(pi, weights=weight, minlength=z.size)
    grad += np.bincount(nj, weights=weight, minlength=z.size)
    return loss, grad


def vcl(z, labels, cfg, use_mscl=True, use_rank=True):
    """Solution-weighted MSCL + lambda_rank * rank loss.

    ``use_mscl``/``use_rank`` switch off either term for ablations.
    """
    z = np.asarray(z, dtype=np.float64)
    loss = 0.0
    grad = np.zeros_like(z)
    for i, (w, x) in enumerate(zip(labels.weights, labels.solutions)):
        positives = np.flatnonzero(x > 0.5)
        negatives = np.flatnonzero(x <= 0.5)
        if use_mscl:
            value, g = mscl(z, positives, cfg.tau)
            loss += w * value
            grad += w * g
        if use_rank and cfg.lambda_rank > 0:
            value, g = rank_loss(
                z, positives, negatives, cfg.gamma, cfg.pair_cap, derive_seed(cfg.seed, i)
            )
            loss += w * cfg.lambda_rank * value
            grad += (w * cfg.lambda_rank) * g
    return loss, grad


LOSS_KINDS = ("bce", "vcl", "vcl_no_rank", "vcl_no_mscl")


def loss_for(kind, z, labels, cfg):
    if kind == "bce":
        return bce_weighted(z, labels)
    if kind == "vcl":
        return vcl(z, labels, cfg)
    if kind == "vcl_no_rank":
        return vcl(z, labels, cfg, use_rank=False)
    if kind == "vcl_no_mscl":
        return vcl(z, labels, cfg, use_mscl=False)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
