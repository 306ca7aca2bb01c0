"""Command-line entry point: generate, label, train, search, eval, analyze, ablate.

Every run writes ``config.<command>.toml`` (the resolved configuration) into the
output directory. Artifacts carry no timestamps; times appear only in logs.
Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError
from .diagnostics import (
    activation_ratios,
    curve_to_csv,
    intra_constraint_variance,
    pairwise_ranking_stats,
    primal_curve,
)
from .instance import (
    InstanceError,
    InstanceFormatError,
    generate_comb_auction,
    generate_set_cover,
    load_instance,
    save_instance,
)
from .nn import forward, load_model, model_to_json
from .pipeline import (
    Example,
    LabeledDataset,
    LabelingError,
    ResultRow,
    ResultTable,
    collect_pool,
    evaluate_suite,
    gap_abs,
    parallel_map,
    pool_from_json,
    pool_to_json,
    train_model,
    with_icc,
)
from .solver import TraceEvent, branch_and_bound, search_with_marginals

log = logging.getLogger("cocomilp")

COMMANDS = ("generate", "label", "train", "search", "eval", "analyze", "ablate")
SPLITS = ("train", "valid", "test")
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

# (variant, loss_kind, icc_enabled); the first five are the named ablation rows
ABLATION_GRID = [
    ("full", "vcl", True),
    ("no-ICC", "vcl", False),
    ("BCE", "bce", True),
    ("no-rank", "vcl_no_rank", True),
    ("no-MSCL", "vcl_no_mscl", True),
    ("BCE+no-ICC", "bce", False),
    ("no-rank+no-ICC", "vcl_no_rank", False),
    ("no-MSCL+no-ICC", "vcl_no_mscl", False),
]


class InputError(Exception):
    """Missing or malformed input artifact (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="cocomilp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="master seed (experiment.seed)")
        p.add_argument("--out", help="output directory (experiment.out)")
        p.add_argument("--jobs", type=int, help="parallel instances (experiment.jobs)")
    return parser


def parse_overrides(extra):
    """``--section.key value`` / ``--section.key=value`` pairs into a dict."""
    out = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"unrecognized argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {token} needs a value")
            value = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def resolve_config(args, extra):
    overrides = parse_overrides(extra)
    for flag, key in (("seed", "experiment.seed"), ("out", "experiment.out"), ("jobs", "experiment.jobs")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = str(value)
    return config_mod.load(args.config, overrides)


# --- file helpers ------------------------------------------------------------


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(obj):
    return json.dumps(obj, indent=1, allow_nan=False, sort_keys=False) + "\n"


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"missing {what}: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed {what} {path}: {exc}") from None


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else v


def _out(cfg):
    return Path(cfg.experiment.out)


# --- dataset loading ------------------------------------------------------------


def _manifest(cfg):
    doc = _read_json(_out(cfg) / "manifest.json", "manifest (run generate first)")
    return doc["instances"]


def _load_examples(cfg, splits=SPLITS, need_pools=True):
    out = _out(cfg)
    examples = []
    for entry in _manifest(cfg):
        if entry["split"] not in splits:
            continue
        path = out / entry["path"]
        try:
            inst = load_instance(path)
        except FileNotFoundError:
            raise InputError(f"missing instance file {path}") from None
        ex = Example(entry["name"], inst, entry["split"], path=str(path))
        if need_pools:
            if "pool" not in entry:
                raise InputError(f"manifest has no pool for {entry['name']} (run label first)")
            if entry["pool"] is None:
                log.warning("%s has no pool; skipped", entry["name"])
                continue
            pool_path = out / entry["pool"]
            try:
                with open(pool_path, encoding="utf-8") as fh:
                    ex.pool = pool_from_json(fh.read(), inst)
            except FileNotFoundError:
                raise InputError(f"missing pool file {pool_path}") from None
            ex.bks = entry["bks"]
        examples.append(ex)
    return examples


def _load_checkpoint(cfg):
    path = _out(cfg) / "model.json"
    try:
        return load_model(path)
    except FileNotFoundError:
        raise InputError(f"missing checkpoint {path} (run train first)") from None


def _check_search_config(cfg, examples):
    sc = cfg.search_config()
    for ex in examples:
        try:
            sc.validate_for(ex.instance.num_binary)
        except ValueError as exc:
            raise ConfigError(f"[search] {exc} ({ex.name})") from None
    return sc


# --- subcommands ------------------------------------------------------------------


def cmd_generate(cfg):
    d = cfg.data
    entries = []
    counts = {"train": d.n_train, "valid": d.n_valid, "test": d.n_test}
    for split in SPLITS:
        for i in range(counts[split]):
            name = f"{d.family}_{split}_{i:03d}"
            seed = cfg.seed_for(f"data/{d.family}/{split}/{i}")
            if d.family == "sc":
                inst = generate_set_cover(d.sc_rows, d.sc_cols, d.sc_density, d.sc_cost_lo, d.sc_cost_hi, seed, name)
            else:
                inst = generate_comb_auction(d.ca_items, d.ca_bids, d.ca_max_bundle, seed, name)
            rel = f"instances/{name}.milp.json"
            (_out(cfg) / "instances").mkdir(parents=True, exist_ok=True)
            save_instance(inst, _out(cfg) / rel)
            entries.append({"name": name, "split": split, "seed": seed, "path": rel})
    _write(_out(cfg) / "manifest.json", _dump_json({"family": d.family, "instances": entries}))
    log.info("generated %d instances", len(entries))


def cmd_label(cfg):
    examples = _load_examples(cfg, need_pools=False)
    bcfg = cfg.label_bnb_config()

    def label(ex):
        try:
            return ex, collect_pool(ex.instance, bcfg)
        except LabelingError as exc:
            log.warning("%s; skipped", exc)
            return ex, None

    done = {}
    for ex, pool in parallel_map(label, examples, cfg.experiment.jobs):
        if pool is None:
            continue
        rel = f"pools/{ex.name}.pool.json"
        _write(_out(cfg) / rel, pool_to_json(pool, ex.name))
        done[ex.name] = (rel, pool.best.objective)
    if not done:
        raise LabelingError("no instance could be labeled")
    doc = _read_json(_out(cfg) / "manifest.json", "manifest")
    for entry in doc["instances"]:
        entry["pool"], entry["bks"] = done.get(entry["name"], (None, None))
    _write(_out(cfg) / "manifest.json", _dump_json(doc))
    log.info("labeled %d of %d instances", len(done), len(examples))


def _train(cfg, loss_kind=None, icc=None):
    ds = LabeledDataset(_load_examples(cfg, splits=("train", "valid")))
    gcfg = cfg.gnn_config()
    tcfg = cfg.train_config()
    if icc is not None:
        gcfg = with_icc(gcfg, icc)
    if loss_kind is not None:
        tcfg = replace(tcfg, loss_kind=loss_kind)
    return train_model(ds, gcfg, tcfg, cfg.loss_config())


def cmd_train(cfg):
    model, history = _train(cfg)
    _write(_out(cfg) / "model.json", model_to_json(model))
    _write(_out(cfg) / "train_log.csv", history.to_csv())
    log.info("best epoch %d", history.best_epoch)


def _trace_doc(trace):
    return [[ev.node, _finite_or_none(ev.bound), _finite_or_none(ev.incumbent)] for ev in trace]


def _trace_from_doc(rows):
    return [TraceEvent(n, math.inf if b is None else b, i, 0.0) for n, b, i in rows]


def cmd_search(cfg):
    examples = _load_examples(cfg, splits=("test",))
    sc = _check_search_config(cfg, examples)
    model = _load_checkpoint(cfg)
    bcfg = cfg.bnb_config()

    def run(ex):
        marginals = forward(model, ex.graph).marginals
        res = search_with_marginals(ex.instance, marginals, sc, bcfg)
        return {
            "instance": ex.name,
            "status": res.status,
            "objective": res.objective,
            "bound": _finite_or_none(res.bound),
            "nodes": res.nodes_explored,
            "x": None if res.incumbent is None else res.incumbent.values.tolist(),
            "trace": _trace_doc(res.trace),
        }

    rows = parallel_map(run, examples, cfg.experiment.jobs)
    _write(_out(cfg) / "search_results.json", _dump_json({"search": vars(sc), "results": rows}))
    log.info("searched %d instances", len(rows))


def cmd_eval(cfg):
    examples = {ex.name: ex for ex in _load_examples(cfg, splits=("test",))}
    doc = _read_json(_out(cfg) / "search_results.json", "search results (run search first)")
    bcfg = cfg.bnb_config()

    def run(entry):
        ex = examples.get(entry["instance"])
        if ex is None:
            raise InputError(f"search result for unknown instance {entry['instance']}")
        base = branch_and_bound(ex.instance, bcfg)
        return ResultRow(
            name=ex.name,
            bks=ex.bks,
            obj=entry["objective"],
            gap=gap_abs(entry["objective"], ex.bks),
            base_obj=base.objective,
            base_gap=gap_abs(base.objective, ex.bks),
            status=entry["status"],
            base_status=base.status,
            nodes=entry["nodes"],
            base_nodes=base.nodes_explored,
        )

    table = ResultTable(parallel_map(run, doc["results"], cfg.experiment.jobs))
    _write(_out(cfg) / "results.csv", table.to_csv())
    c = table.counts()
    print(
        f"mean gap_abs {table.mean_gap:.6g} (plain solver {table.mean_base_gap:.6g}); "
        f"win {c['win']} tie {c['tie']} loss {c['loss']}"
    )


def cmd_analyze(cfg):
    examples = _load_examples(cfg, splits=("test",))
    model = _load_checkpoint(cfg)
    adir = _out(cfg) / "analysis"
    sep_lines = ["instance,sampled_pairs,fraction_positive,mean_delta"]
    var_lines = ["instance,intra_var_mean,inter_var,ratio"]
    hist = None
    act_counts = None
    for ex in examples:
        pred = forward(model, ex.graph)
        truth = ex.pool.best.values[: ex.instance.num_binary]
        sep = pairwise_ranking_stats(pred.marginals, truth, cfg.analyze.num_pairs, cfg.seed_for(f"analyze/{ex.name}"))
        sep_lines.append(f"{ex.name},{sep.sampled_pairs},{sep.fraction_positive!r},{sep.mean_delta!r}")
        hist = sep.counts.copy() if hist is None else hist + sep.counts
        edges = sep.bin_edges
        var = intra_constraint_variance(pred.logits, ex.instance)
        var_lines.append(f"{ex.name},{var.intra_var_mean!r},{var.inter_var!r},{var.ratio!r}")
        _, counts, act_edges = activation_ratios(ex.instance, truth)
        act_counts = counts.copy() if act_counts is None else act_counts + counts
    if not examples:
        raise InputError("no labeled test instances to analyze")
    _write(adir / "separability.csv", "\n".join(sep_lines) + "\n")
    _write(adir / "separability_hist.csv", "bin_lo,bin_hi,count\n" + "".join(
        f"{lo!r},{hi!r},{int(c)}\n" for lo, hi, c in zip(edges[:-1], edges[1:], hist)))
    _write(adir / "variance.csv", "\n".join(var_lines) + "\n")
    _write(adir / "activation.csv", "bin_lo,bin_hi,count\n" + "".join(
        f"{lo!r},{hi!r},{int(c)}\n" for lo, hi, c in zip(act_edges[:-1], act_edges[1:], act_counts)))

    results = _out(cfg) / "search_results.json"
    if results.exists():
        bks = {ex.name: ex.bks for ex in examples}
        for entry in _read_json(results, "search results")["results"]:
            points, marker = primal_curve(_trace_from_doc(entry["trace"]), bks[entry["instance"]], axis="node")
            _write(adir / "curves" / f"{entry['instance']}.csv", curve_to_csv(points, marker, axis="node"))
    log.info("analyzed %d instances", len(examples))


def cmd_ablate(cfg):
    test = _load_examples(cfg, splits=("test",))
    sc = _check_search_config(cfg, test)
    bcfg = cfg.bnb_config()
    lines = ["variant,loss_kind,icc,mean_gap_abs,base_mean_gap_abs,win,tie,loss,fraction_positive,variance_ratio"]
    for variant, kind, icc in ABLATION_GRID:
        log.info("ablation cell %s", variant)
        model, history = _train(cfg, loss_kind=kind, icc=icc)
        _write(_out(cfg) / "ablation" / f"{variant}.model.json", model_to_json(model))
        table = evaluate_suite(test, model, sc, bcfg, cfg.experiment.jobs)
        fp, ratio = [], []
        for ex in test:
            pred = forward(model, ex.graph)
            truth = ex.pool.best.values[: ex.instance.num_binary]
            fp.append(pairwise_ranking_stats(pred.marginals, truth, cfg.analyze.num_pairs,
                                             cfg.seed_for(f"analyze/{ex.name}")).fraction_positive)
            ratio.append(intra_constraint_variance(pred.logits, ex.instance).ratio)
        c = table.counts()
        lines.append(
            f"{variant},{kind},{str(icc).lower()},{table.mean_gap!r},{table.mean_base_gap!r},"
            f"{c['win']},{c['tie']},{c['loss']},{float(np.mean(fp))!r},{float(np.mean(ratio))!r}"
        )
    _write(_out(cfg) / "ablation" / "ablation.csv", "\n".join(lines) + "\n")


HANDLERS = {
    "generate": cmd_generate,
    "label": cmd_label,
    "train": cmd_train,
    "search": cmd_search,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "ablate": cmd_ablate,
}


def _setup_logging():
    level_name = os.environ.get("COCO_LOG", "info").lower()
    if level_name not in LOG_LEVELS:
        raise ConfigError(f"COCO_LOG must be one of {sorted(LOG_LEVELS)}, got {level_name!r}")
    logging.basicConfig(
        level=LOG_LEVELS[level_name],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        _setup_logging()
        cfg = resolve_config(args, extra)
        _write(_out(cfg) / f"config.{args.command}.toml", config_mod.dumps(cfg))
        HANDLERS[args.command](cfg)
    except (ConfigError, InputError, InstanceError, InstanceFormatError) as exc:
        print(f"cocomilp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        log.debug("traceback", exc_info=True)
        print(f"cocomilp {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
