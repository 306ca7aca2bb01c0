import logging
import math

import numpy as np
import pytest

from cocomilp.loss import (
    LabeledSolutionSet,
    LossConfig,
    bce_weighted,
    loss_for,
    mscl,
    rank_loss,
    vcl,
)


def _labels(*solutions, weights=None):
    sols = np.array(solutions, dtype=float)
    w = np.full(len(sols), 1 / len(sols)) if weights is None else np.array(weights)
    return LabeledSolutionSet(sols, w, np.arange(len(sols), dtype=float))


def _fd(fn, z, eps=1e-6):
    out = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = eps
        out[i] = (fn(z + e) - fn(z - e)) / (2 * eps)
    return out


def _rel_err(a, b):
    # relative to the gradient's scale; tiny entries sit at round-off level
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def test_defaults():
    cfg = LossConfig()
    assert (cfg.tau, cfg.gamma, cfg.lambda_rank, cfg.pair_cap) == (0.1, 0.9, 0.01, 50_000)
    with pytest.raises(ValueError):
        LossConfig(tau=0.0)


# --- BCE --------------------------------------------------------------------


def test_bce_symmetric_point():
    loss, _ = bce_weighted(np.zeros(7), _labels([1, 0, 1, 1, 0, 0, 1]))
    assert math.isclose(loss, 7 * math.log(2), rel_tol=1e-15)


def test_bce_perfect_fit_limit():
    loss, grad = bce_weighted(np.array([60.0, -60.0]), _labels([1, 0]))
    assert loss < 1e-20 and np.all(np.abs(grad) < 1e-20)


def test_bce_clamp_caps_loss():
    loss, grad = bce_weighted(np.array([-80.0]), _labels([1]))
    assert loss == pytest.approx(-math.log(1e-12), rel=1e-15)
    assert grad[0] == 0.0


def test_bce_linear_in_weights():
    z = np.array([0.3, -1.2, 2.0])
    a, b = [1, 0, 1], [0, 0, 1]
    joint, g = bce_weighted(z, _labels(a, b, weights=[2 / 3, 1 / 3]))
    la, ga = bce_weighted(z, _labels(a))
    lb, gb = bce_weighted(z, _labels(b))
    assert joint == pytest.approx(2 / 3 * la + 1 / 3 * lb, rel=1e-14)
    assert np.allclose(g, 2 / 3 * ga + 1 / 3 * gb, rtol=1e-14, atol=0)


def test_bce_gradient():
    z = np.random.default_rng(0).normal(size=9)
    labels = _labels(np.arange(9) % 2, np.arange(9) % 3 == 0, weights=[0.7, 0.3])
    _, g = bce_weighted(z, labels)
    assert _rel_err(g, _fd(lambda v: bce_weighted(v, labels)[0], z)) < 1e-6


# --- MSCL -------------------------------------------------------------------


def test_mscl_all_positive_is_exactly_zero():
    loss, grad = mscl(np.array([3.0, -1.0, 0.5]), [0, 1, 2], tau=0.1)
    assert loss == 0.0 and not np.any(grad)


def test_mscl_closed_form():
    loss, _ = mscl(np.array([2.0, 0.0]), [0], tau=1.0)
    assert abs(loss - math.log(1 + math.exp(-2))) <= 1e-12


def test_mscl_empty_positives_warns(caplog):
    with caplog.at_level(logging.WARNING):
        loss, grad = mscl(np.array([1.0, 2.0]), [], tau=0.1)
    assert loss == 0.0 and not np.any(grad)
    assert "empty" in caplog.text


def test_mscl_shift_invariance_and_stability():
    z = np.random.default_rng(1).normal(size=10)
    base, _ = mscl(z, [1, 4, 7], tau=0.1)
    shifted, _ = mscl(z + 1234.5, [1, 4, 7], tau=0.1)
    assert shifted == pytest.approx(base, rel=1e-9)
    assert np.isfinite(mscl(z * 1e3, [0], tau=0.1)[0])


@pytest.mark.parametrize("tau", [0.1, 1.0, 3.0])
def test_mscl_gradient(tau):
    z = np.random.default_rng(2).normal(size=8)
    _, g = mscl(z, [0, 3, 5], tau)
    assert _rel_err(g, _fd(lambda v: mscl(v, [0, 3, 5], tau)[0], z)) < 1e-6


# --- rank ---------------------------------------------------------------------


def test_rank_single_pair_anchors():
    assert rank_loss(np.array([1.0, 0.5]), [0], [1], gamma=0.9)[0] == 0.4
    assert rank_loss(np.array([0.0, 0.0]), [0], [1], gamma=0.9)[0] == 0.9


def test_rank_separated_pairs_are_free():
    loss, grad = rank_loss(np.array([3.0, 2.5, 0.0, -1.0]), [0, 1], [2, 3], gamma=0.9)
    assert loss == 0.0 and not np.any(grad)


def test_rank_empty_side():
    assert rank_loss(np.zeros(3), [], [0, 1, 2])[0] == 0.0
    assert rank_loss(np.zeros(3), [0, 1, 2], [])[0] == 0.0


def test_rank_shift_invariance():
    z = np.random.default_rng(3).normal(size=12)
    pos, neg = [0, 2, 5], [1, 3, 4, 6, 7]
    assert rank_loss(z + 17.0, pos, neg)[0] == pytest.approx(rank_loss(z, pos, neg)[0], rel=1e-12)


def test_rank_gradient_away_from_kinks():
    z = np.array([1.0, 0.05, 0.3, -0.5, 2.0])
    pos, neg = [0, 4], [1, 2, 3]
    _, g = rank_loss(z, pos, neg, gamma=0.9)
    assert _rel_err(g, _fd(lambda v: rank_loss(v, pos, neg, gamma=0.9)[0], z)) < 1e-6


@pytest.mark.parametrize("side", [-1e-3, 1e-3])
def test_rank_gradient_either_side_of_kink(side):
    z = np.array([0.9 + side, 0.0])
    _, g = rank_loss(z, [0], [1], gamma=0.9)
    assert _rel_err(g, _fd(lambda v: rank_loss(v, [0], [1], gamma=0.9)[0], z)) < 1e-6


def test_rank_pair_cap_sampling_is_seeded():
    z = np.random.default_rng(4).normal(size=40)
    pos, neg = range(20), range(20, 40)
    a = rank_loss(z, pos, neg, pair_cap=50, seed=7)
    b = rank_loss(z, pos, neg, pair_cap=50, seed=7)
    c = rank_loss(z, pos, neg, pair_cap=50, seed=8)
    full = rank_loss(z, pos, neg, pair_cap=400)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])
    assert a[0] != c[0]
    assert abs(a[0] - full[0]) < 0.5


# --- VCL --------------------------------------------------------------------


def test_vcl_without_rank_is_weighted_mscl():
    z = np.random.default_rng(5).normal(size=6)
    labels = _labels([1, 0, 1, 0, 0, 1], [0, 1, 1, 0, 0, 0], weights=[0.8, 0.2])
    cfg = LossConfig(lambda_rank=0.0)
    expected = 0.8 * mscl(z, [0, 2, 5], 0.1)[0] + 0.2 * mscl(z, [1, 2], 0.1)[0]
    assert vcl(z, labels, cfg)[0] == pytest.approx(expected, rel=1e-14)


def test_vcl_single_solution_definition():
    z = np.random.default_rng(6).normal(size=5)
    x = [1, 1, 0, 0, 1]
    cfg = LossConfig()
    expected = mscl(z, [0, 1, 4], cfg.tau)[0] + cfg.lambda_rank * rank_loss(z, [0, 1, 4], [2, 3], cfg.gamma)[0]
    assert vcl(z, _labels(x), cfg)[0] == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("kind", ["bce", "vcl", "vcl_no_rank", "vcl_no_mscl"])
def test_loss_kind_gradients(kind):
    z = np.random.default_rng(7).normal(size=10)
    labels = _labels(np.arange(10) % 2, np.arange(10) < 4, weights=[0.6, 0.4])
    cfg = LossConfig(lambda_rank=0.5)
    _, g = loss_for(kind, z, labels, cfg)
    assert _rel_err(g, _fd(lambda v: loss_for(kind, v, labels, cfg)[0], z)) < 1e-6


def test_ablation_kinds_decompose():
    z = np.random.default_rng(8).normal(size=10)
    labels = _labels(np.arange(10) % 2)
    cfg = LossConfig()
    full = loss_for("vcl", z, labels, cfg)[0]
    assert full == pytest.approx(loss_for("vcl_no_rank", z, labels, cfg)[0] + loss_for("vcl_no_mscl", z, labels, cfg)[0], rel=1e-14)
    with pytest.raises(ValueError):
        loss_for("mse", z, labels, cfg)
