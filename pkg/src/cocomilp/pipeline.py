"""Label collection, training with validation snapshotting, and suite evaluation."""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from decimal import Decimal

import numpy as np

from .graphenc import encode
from .instance import Assignment, check_feasibility, evaluate_objective
from .loss import LOSS_KINDS, LabeledSolutionSet, LossConfig, loss_for
from .nn import GnnConfig, adam_init, adam_step, backward, forward, init_model
from .rng import SplitMix64, derive_seed
from .solver import BnbConfig, SearchConfig, SolutionPool, branch_and_bound, search_with_marginals

log = logging.getLogger(__name__)


class LabelingError(RuntimeError):
    pass


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-4
    loss_kind: str = "vcl"
    pool_size: int = 10
    weight_temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.lr <= 0 or self.weight_temperature <= 0 or self.pool_size < 1:
            raise ValueError(f"invalid TrainConfig {self}")


# --- labels -------------------------------------------------------------------


def collect_pool(inst, cfg):
    """Best ``cfg.pool_size`` distinct feasible solutions found by branch-and-bound."""
    result = branch_and_bound(inst, cfg)
    if not result.pool.assignments:
        raise LabelingError(f"{inst.name}: no feasible solution within limits ({result.status})")
    return result.pool


def compute_weights(objectives, sense="minimize", temperature=1.0):
    """w_i proportional to exp(-obj_i / T) for minimization (sign flipped for maximization)."""
    obj = np.asarray(objectives, dtype=np.float64)
    if obj.size == 0:
        raise ValueError("cannot weight an empty pool")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    energy = obj if sense == "minimize" else -obj
    logits = -(energy - energy.min()) / temperature
    w = np.exp(logits)
    return w / w.sum()


def labels_from_pool(pool, num_binary, temperature=1.0):
    objectives = np.array(pool.objectives)
    solutions = np.array([a.values[:num_binary] for a in pool.assignments])
    weights = compute_weights(objectives, pool.sense, temperature)
    return LabeledSolutionSet(np.round(solutions), weights, objectives)


def pool_to_json(pool, name):
    doc = {
        "format": "cocomilp-pool",
        "version": 1,
        "instance": name,
        "sense": pool.sense,
        "solutions": [
            {"objective": a.objective, "x": a.values.tolist()} for a in pool.assignments
        ],
    }
    return json.dumps(doc, allow_nan=False, indent=1) + "\n"


def pool_from_json(text, inst=None):
    doc = json.loads(text)
    if doc.get("format") != "cocomilp-pool":
        raise ValueError("not a cocomilp-pool document")
    assignments = [Assignment(np.array(s["x"]), s["objective"]) for s in doc["solutions"]]
    if inst is not None:
        for k, a in enumerate(assignments):
            if not check_feasibility(inst, a.values).feasible:
                raise ValueError(f"pool solution {k} is infeasible for {inst.name}")
    return SolutionPool(doc["sense"], assignments)


# --- datasets -------------------------------------------------------------------


@dataclass
class Example:
    name: str
    instance: object
    split: str
    pool: SolutionPool = None
    bks: float = None
    path: str = None

    _graph: object = field(default=None, repr=False)

    @property
    def graph(self):
        if self._graph is None:
            self._graph = encode(self.instance)
        return self._graph

    def labels(self, temperature=1.0):
        return labels_from_pool(self.pool, self.instance.num_binary, temperature)


@dataclass
class LabeledDataset:
    examples: list

    def split(self, name):
        return [e for e in self.examples if e.split == name]

    def __post_init__(self):
        seen = {}
        for e in self.examples:
            if e.name in seen and seen[e.name] != e.split:
                raise ValueError(f"{e.name} appears in splits {seen[e.name]} and {e.split}")
            seen[e.name] = e.split


# --- training ---------------------------------------------------------------------


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)  # (epoch, train_loss, valid_loss)
    best_epoch: int = -1

    def to_csv(self):
        lines = ["epoch,train_loss,valid_loss"]
        lines += [f"{e},{t!r},{v!r}" for e, t, v in self.epochs]
        return "\n".join(lines) + "\n"


def _instance_loss(model, ex, tcfg, lcfg, labels):
    pred = forward(model, ex.graph)
    loss, dz = loss_for(tcfg.loss_kind, pred.logits, labels, lcfg)
    return pred, loss, dz


def train_model(dataset, gcfg, tcfg, lcfg=LossConfig()):
    """Per-instance Adam steps; returns the snapshot with the lowest validation loss."""
    train = dataset.split("train")
    valid = dataset.split("valid")
    if not train or not valid:
        raise ValueError("training needs nonempty train and valid splits")
    labels = {e.name: e.labels(tcfg.weight_temperature) for e in train + valid}
    model = init_model(gcfg)
    state = adam_init(model)
    history = TrainingLog()
    best_loss, best_params = math.inf, None
    for epoch in range(tcfg.epochs):
        order = SplitMix64(derive_seed(tcfg.seed, f"shuffle/{epoch}")).shuffle(range(len(train)))
        total = 0.0
        for idx in order:
            ex = train[idx]
            pred, loss, dz = _instance_loss(model, ex, tcfg, lcfg, labels[ex.name])
            if not math.isfinite(loss) or not np.all(np.isfinite(dz)):
                raise TrainingDivergence(f"non-finite loss on {ex.name} at epoch {epoch}")
            grads = backward(model, ex.graph, pred, dz)
            adam_step(model, grads, state, lr=tcfg.lr)
            total += loss
        vloss = 0.0
        for ex in valid:
            _, loss, _ = _instance_loss(model, ex, tcfg, lcfg, labels[ex.name])
            if not math.isfinite(loss):
                raise TrainingDivergence(f"non-finite validation loss on {ex.name}")
            vloss += loss
        vloss /= len(valid)
        history.epochs.append((epoch, total / len(train), vloss))
        if vloss < best_loss:
            best_loss = vloss
            best_params = {k: v.copy() for k, v in model.params.items()}
            history.best_epoch = epoch
        log.debug("epoch %d train %.6f valid %.6f", epoch, total / len(train), vloss)
    model.params = best_params
    model.version += 1
    return model, history


# --- evaluation ---------------------------------------------------------------------


def gap_abs(obj, bks):
    """|OBJ - BKS| evaluated in decimal on the shortest float reprs.

    None for a missing objective maps to +inf.
    """
    if obj is None or bks is None:
        return math.inf
    return float(abs(Decimal(repr(float(obj))) - Decimal(repr(float(bks)))))


@dataclass
class ResultRow:
    name: str
    bks: float
    obj: float
    gap: float
    base_obj: float
    base_gap: float
    status: str
    base_status: str
    nodes: int
    base_nodes: int

    @property
    def outcome(self):
        if math.isclose(self.gap, self.base_gap, rel_tol=0.0, abs_tol=1e-9) or (
            math.isinf(self.gap) and math.isinf(self.base_gap)
        ):
            return "tie"
        return "win" if self.gap < self.base_gap else "loss"


@dataclass
class ResultTable:
    rows: list

    def _mean(self, values):
        values = [v for v in values]
        return float(np.mean(values)) if values else math.nan

    @property
    def mean_obj(self):
        return self._mean([r.obj for r in self.rows if r.obj is not None])

    @property
    def mean_gap(self):
        return self._mean([r.gap for r in self.rows])

    @property
    def mean_base_gap(self):
        return self._mean([r.base_gap for r in self.rows])

    def counts(self):
        out = {"win": 0, "tie": 0, "loss": 0}
        for r in self.rows:
            out[r.outcome] += 1
        return out

    def to_csv(self):
        head = "instance,bks,obj,gap_abs,base_obj,base_gap_abs,outcome,status,base_status,nodes,base_nodes"
        lines = [head]
        for r in self.rows:
            lines.append(
                ",".join(
                    [
                        r.name,
                        repr(r.bks),
                        "" if r.obj is None else repr(r.obj),
                        repr(r.gap),
                        "" if r.base_obj is None else repr(r.base_obj),
                        repr(r.base_gap),
                        r.outcome,
                        r.status,
                        r.base_status,
                        str(r.nodes),
                        str(r.base_nodes),
                    ]
                )
            )
        c = self.counts()
        lines.append(
            f"# mean_obj={self.mean_obj!r} mean_gap_abs={self.mean_gap!r} "
            f"base_mean_gap_abs={self.mean_base_gap!r} win={c['win']} tie={c['tie']} loss={c['loss']}"
        )
        return "\n".join(lines) + "\n"


def evaluate_instance(ex, marginals, sc, cfg):
    ps = search_with_marginals(ex.instance, marginals, sc, cfg)
    base = branch_and_bound(ex.instance, cfg)
    return ResultRow(
        name=ex.name,
        bks=ex.bks,
        obj=ps.objective,
        gap=gap_abs(ps.objective, ex.bks),
        base_obj=base.objective,
        base_gap=gap_abs(base.objective, ex.bks),
        status=ps.status,
        base_status=base.status,
        nodes=ps.nodes_explored,
        base_nodes=base.nodes_explored,
    )


def evaluate_suite(examples, model, sc, cfg, jobs=1):
    """Predict-and-search vs the plain solver, both under ``cfg``'s budget."""
    work = []
    for ex in examples:
        if ex.bks is None:
            raise ValueError(f"{ex.name} has no BKS; label it first")
        work.append((ex, forward(model, ex.graph).marginals))
    rows = parallel_map(lambda item: evaluate_instance(item[0], item[1], sc, cfg), work, jobs)
    return ResultTable(rows)


def parallel_map(fn, items, jobs=1):
    """Ordered map; threads only, so results are identical to the serial run."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def with_icc(gcfg, enabled):
    return replace(gcfg, icc_enabled=enabled)


__all__ = [
    "Example",
    "LabeledDataset",
    "LabelingError",
    "ResultRow",
    "ResultTable",
    "TrainConfig",
    "TrainingDivergence",
    "TrainingLog",
    "collect_pool",
    "compute_weights",
    "evaluate_instance",
    "evaluate_suite",
    "gap_abs",
    "labels_from_pool",
    "parallel_map",
    "pool_from_json",
    "pool_to_json",
    "train_model",
    "with_icc",
]
