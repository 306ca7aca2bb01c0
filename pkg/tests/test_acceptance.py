"""Acceptance criteria 1-11, one PASS/FAIL line each.

Criteria 6-8 train on the standard desk dataset (60 train / 15 valid / 25 test
set cover instances at 40x80, master seed 0) and take several minutes.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from cocomilp import config
from cocomilp.cli import main as cli_main
from cocomilp.diagnostics import intra_constraint_variance, pairwise_ranking_stats
from cocomilp.graphenc import encode
from cocomilp.instance import generate_comb_auction, generate_set_cover, load_instance
from cocomilp.loss import LabeledSolutionSet, LossConfig, loss_for, mscl, rank_loss
from cocomilp.nn import GnnConfig, backward, forward, icc_apply, init_model
from cocomilp.pipeline import Example, LabeledDataset, evaluate_suite, gap_abs, pool_from_json, train_model, with_icc
from cocomilp.solver import SearchConfig, branch_and_bound, build_trust_region, search_with_marginals, select_fixings

from conftest import brute_force_optimum, enumerate_binary, random_instance


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


# --- 1. solver oracle ---------------------------------------------------------


def test_criterion_01_bnb_matches_enumeration(report):
    start = time.perf_counter()
    worst, mismatches = 0.0, 0
    for seed in range(200):
        if seed % 2 == 0:
            inst = generate_set_cover(7, 15, 0.25, 1, 50, seed=seed)
        else:
            inst = generate_comb_auction(8, 15, 3, seed=seed)
        res = branch_and_bound(inst)
        opt = brute_force_optimum(inst)
        if res.status != "optimal" or opt is None:
            mismatches += 1
            continue
        worst = max(worst, abs(res.objective - opt))
        mismatches += abs(res.objective - opt) > 1e-6
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 60.0
    report(1, ok, f"200 instances, max |bnb - enum| = {worst:.2e}, mismatches {mismatches}, {elapsed:.1f} s")
    assert ok


# --- 2. gradients ---------------------------------------------------------------


def _fd_rel_error(fn, theta, analytic, h):
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        t = theta.copy()
        t[i] += h
        up = fn(t)
        t[i] -= 2 * h
        numeric[i] = (up - fn(t)) / (2 * h)
    return np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)


def test_criterion_02_gradient_fidelity(report):
    model_errors = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(3, 8)), int(rng.integers(2, 5))
        g = encode(random_instance(seed, n=n, m=m))
        model = init_model(GnnConfig(embed_size=3, mlp_hidden=3, seed=seed))
        for k in range(2):
            model.params[f"beta.{k}"] = np.array(rng.uniform(-1, 1))
        model.version += 1
        r = rng.normal(size=n)
        grads = backward(model, g, forward(model, g), r)
        analytic = np.concatenate([grads[k].ravel() for k in model.params])
        probe = model.copy()

        def objective(theta):
            probe.set_flat(theta)
            return float(r @ forward(probe, g).logits)

        model_errors.append(_fd_rel_error(objective, model.flat(), analytic, 1e-5))

    loss_errors = {}
    z = np.random.default_rng(99).normal(size=12)
    labels = LabeledSolutionSet(
        [np.arange(12) % 2, (np.arange(12) < 5).astype(float)], [0.7, 0.3], [0.0, 1.0]
    )
    cfg = LossConfig(lambda_rank=0.5)
    pos, neg = [0, 2, 4, 7], [1, 3, 5, 6, 8]
    cases = {
        "bce": lambda v: loss_for("bce", v, labels, cfg),
        "mscl": lambda v: mscl(v, pos, 0.1),
        "rank": lambda v: rank_loss(v, pos, neg, 0.9),
        "vcl": lambda v: loss_for("vcl", v, labels, cfg),
    }
    for name, fn in cases.items():
        loss_errors[name] = _fd_rel_error(lambda v: fn(v)[0], z, fn(z)[1], 1e-6)
    worst_model = max(model_errors)
    worst_loss = max(loss_errors.values())
    ok = worst_model < 1e-4 and worst_loss < 1e-6
    report(2, ok, f"model max rel err {worst_model:.2e} over 20 graphs; "
                  + ", ".join(f"{k} {v:.1e}" for k, v in loss_errors.items()))
    assert ok


# --- 3. loss closed forms ---------------------------------------------------------


def test_criterion_03_loss_closed_forms(report):
    all_pos = mscl(np.array([0.3, -2.0, 5.0]), [0, 1, 2], 0.1)[0]
    two = mscl(np.array([2.0, 0.0]), [0], 1.0)[0]
    r1 = rank_loss(np.array([1.0, 0.5]), [0], [1], 0.9)[0]
    r2 = rank_loss(np.array([0.0, 0.0]), [0], [1], 0.9)[0]
    ok = all_pos == 0.0 and abs(two - math.log(1 + math.exp(-2))) <= 1e-12 and r1 == 0.4 and r2 == 0.9
    report(3, ok, f"MSCL(all pos)={all_pos!r}, MSCL([2,0])={two!r}, rank={r1!r}, {r2!r}")
    assert ok


# --- 4. ICC algebra -----------------------------------------------------------------


def test_criterion_04_icc_algebra(report):
    h = np.random.default_rng(0).normal(size=(5, 4))
    edges = [(0, 0), (0, 1), (1, 1), (1, 2), (1, 3)]
    identity = np.array_equal(icc_apply(h, edges, 0.0), h)
    sym = icc_apply(np.array([[0.4, -1.1], [0.4, -1.1]]), [(0, 0), (0, 1)], 1.0)
    cancel = float(np.max(np.abs(sym)))
    hand = icc_apply(np.array([[1.0, 0.0], [0.0, 1.0]]), [(0, 0), (0, 1)], 1.0)
    exact = np.array_equal(hand, [[0.5, -0.5], [-0.5, 0.5]])
    ok = identity and cancel <= 1e-12 and exact
    report(4, ok, f"beta=0 bitwise identity {identity}, symmetric residual {cancel:.1e}, hand case exact {exact}")
    assert ok


# --- 5. trust region -------------------------------------------------------------------


def test_criterion_05_trust_region_semantics(report):
    rng = np.random.default_rng(5)
    checked, bad = 0, 0
    for seed in range(60):
        p = int(rng.integers(2, 13))
        inst = random_instance(seed, n=p, m=3) if seed % 2 else generate_comb_auction(6, p, 3, seed=seed)
        k0 = int(rng.integers(0, p + 1))
        k1 = int(rng.integers(0, p - k0 + 1))
        delta = int(rng.integers(0, p + 1))
        marginals = rng.random(p)
        sc = SearchConfig(k0, k1, delta)
        low, high = select_fixings(marginals, sc)
        ok_plain, _, X = enumerate_binary(inst)
        ok_region, _, _ = enumerate_binary(build_trust_region(inst, marginals, sc))
        dist = X[:, low].sum(axis=1) + (1 - X[:, high]).sum(axis=1)
        bad += not np.array_equal(ok_region, ok_plain & (dist <= delta))
        checked += 1
    inst = generate_set_cover(20, 40, 0.15, 1, 50, seed=2)
    marg = np.linspace(0, 1, 40)
    a = search_with_marginals(inst, marg, SearchConfig(0, 0, 40))
    b = branch_and_bound(inst)
    same = a.objective == b.objective and a.nodes_explored == b.nodes_explored
    ok = bad == 0 and same
    report(5, ok, f"{checked} enumerated regions, {bad} mismatches; k0=k1=0 identical to plain solver {same}")
    assert ok


# --- desk dataset (criteria 6-8) -------------------------------------------------------------


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    """Generate, label (through the CLI) and train the three comparison models."""
    out = tmp_path_factory.mktemp("desk")
    for stage in ("generate", "label"):
        assert cli_main([stage, "--out", str(out)]) == 0
    cfg = config.load(None, {"experiment.out": str(out)})
    examples = []
    for entry in json.loads((out / "manifest.json").read_text())["instances"]:
        inst = load_instance(out / entry["path"])
        pool = pool_from_json((out / entry["pool"]).read_text(), inst)
        examples.append(Example(entry["name"], inst, entry["split"], pool, entry["bks"]))
    ds = LabeledDataset(examples)
    gcfg, tcfg, lcfg = cfg.gnn_config(), cfg.train_config(), cfg.loss_config()
    models = {
        "vcl": train_model(ds, gcfg, tcfg, lcfg)[0],
        "bce": train_model(ds, gcfg, replace(tcfg, loss_kind="bce"), lcfg)[0],
        "vcl_no_icc": train_model(ds, with_icc(gcfg, False), tcfg, lcfg)[0],
    }
    return cfg, ds, models


def _fraction_positive(model, examples, cfg):
    values = []
    for ex in examples:
        truth = ex.pool.best.values[: ex.instance.num_binary]
        rep = pairwise_ranking_stats(forward(model, ex.graph).marginals, truth, cfg.analyze.num_pairs,
                                     cfg.seed_for(f"analyze/{ex.name}"))
        values.append(rep.fraction_positive)
    return float(np.mean(values))


def test_criterion_06_vcl_separates_better_than_bce(report, desk):
    cfg, ds, models = desk
    test = ds.split("test")
    vcl = _fraction_positive(models["vcl"], test, cfg)
    bce = _fraction_positive(models["bce"], test, cfg)
    ok = vcl > bce
    report(6, ok, f"mean fraction_positive VCL {vcl:.4f} vs BCE {bce:.4f} on {len(test)} test instances")
    assert ok


def test_criterion_07_icc_raises_variance_ratio(report, desk):
    cfg, ds, models = desk
    test = ds.split("test")
    on = np.array([intra_constraint_variance(forward(models["vcl"], e.graph).logits, e.instance).ratio for e in test])
    off = np.array([intra_constraint_variance(forward(models["vcl_no_icc"], e.graph).logits, e.instance).ratio
                    for e in test])
    share = float(np.mean(on > off))
    ok = share >= 0.7
    report(7, ok, f"ICC ratio higher on {share:.0%} of test instances "
                  f"(mean {on.mean():.4f} vs {off.mean():.4f})")
    assert ok


def test_criterion_08_predict_and_search_benefit(report, desk):
    cfg, ds, models = desk
    table = evaluate_suite(ds.split("test"), models["vcl"], cfg.search_config(), cfg.bnb_config())
    c = table.counts()
    share = (c["win"] + c["tie"]) / len(table.rows)
    ok = table.mean_gap <= table.mean_base_gap and share >= 0.6
    report(8, ok, f"node budget {cfg.bnb.node_limit}: mean gap_abs PS {table.mean_gap:.3f} vs plain "
                  f"{table.mean_base_gap:.3f}; win {c['win']} tie {c['tie']} loss {c['loss']} ({share:.0%})")
    assert ok


# --- 9-11 -----------------------------------------------------------------------------------------


def test_criterion_09_gap_arithmetic(report):
    a, b = gap_abs(11.43, 11.16), gap_abs(97228.93, 97524.37)
    ok = a == 0.27 and b == 295.44
    report(9, ok, f"gap_abs(11.43, 11.16) = {a!r}, gap_abs(97228.93, 97524.37) = {b!r}")
    assert ok


TINY = """
[data]
n_train = 4
n_valid = 2
n_test = 3
sc_rows = 8
sc_cols = 16
sc_density = 0.25

[train]
epochs = 2
pool_size = 3

[gnn]
embed_size = 6

[bnb]
node_limit = 10

[search]
k0 = 4
delta = 2
"""


def test_criterion_10_cli_determinism(report, tmp_path):
    cfg_path = tmp_path / "tiny.toml"
    cfg_path.write_text(TINY)
    stages = ["generate", "label", "train", "search", "eval", "analyze", "ablate"]

    def run_all(out):
        for stage in stages:
            assert cli_main([stage, "--config", str(cfg_path), "--out", str(out)]) == 0, stage
        return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}

    first = run_all(tmp_path / "run")
    second = run_all(tmp_path / "run")
    differing = sorted(k for k in first if first[k] != second.get(k))
    ok = not differing and first.keys() == second.keys()
    report(10, ok, f"{len(stages)} subcommands re-run, {len(first)} artifacts, byte-identical {ok}")
    assert ok


def test_criterion_11_config_defaults_round_trip(report):
    cfg = config.load(None)
    text = config.dumps(cfg)
    back = config.loads(text)
    g, t, l = back.gnn_config(), back.train_config(), back.loss_config()
    values = (g.embed_size, t.lr, l.tau, l.lambda_rank, l.gamma)
    ok = values == (64, 1e-4, 0.1, 0.01, 0.9) and back == cfg and config.dumps(back) == text
    report(11, ok, f"embed {g.embed_size}, lr {t.lr!r}, tau {l.tau!r}, lambda_rank {l.lambda_rank!r}, "
                   f"gamma {l.gamma!r}; round trip exact {back == cfg}")
    assert ok
