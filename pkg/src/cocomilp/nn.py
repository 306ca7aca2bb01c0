"""Bipartite GNN predictor with intra-constraint competitive (ICC) normalization.

Architecture: input MLPs embed variable, constraint and edge features; each of
K rounds runs a constraint-side then a variable-side half-convolution, and,
when ICC is on, subtracts ``beta_k`` times each variable's averaged peer
embedding. A jumping-knowledge MLP reads the concatenation of all K+1
variable embeddings and an output MLP maps it to one logit.

Every MLP is ``Linear -> ReLU -> Linear``. Gradients are computed by an
explicit reverse pass over the tape recorded in :func:`forward`.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphenc import CON_FEATURES, EDGE_FEATURES, VAR_FEATURES
from .rng import SplitMix64

CHECKPOINT_FORMAT = "cocomilp-gnn"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GnnConfig:
    embed_size: int = 64
    num_rounds: int = 2
    mlp_hidden: int = 0  # 0 means embed_size
    icc_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.embed_size < 1 or self.num_rounds < 1 or self.mlp_hidden < 0:
            raise ValueError(f"invalid GnnConfig {self}")

    @property
    def hidden(self):
        return self.mlp_hidden or self.embed_size


class GnnModel:
    def __init__(self, config, params):
        self.config = config
        self.params = params
        self.version = 0

    def num_parameters(self):
        return sum(v.size for v in self.params.values())

    def flat(self):
        return np.concatenate([v.ravel() for v in self.params.values()])

    def set_flat(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        offset = 0
        for name, value in self.params.items():
            self.params[name] = vector[offset : offset + value.size].reshape(value.shape).copy()
            offset += value.size
        if offset != vector.size:
            raise ValueError("flat vector length does not match model")
        self.version += 1

    def copy(self):
        clone = GnnModel(self.config, {k: v.copy() for k, v in self.params.items()})
        clone.version = self.version
        return clone

    def betas(self):
        return [float(self.params[f"beta.{k}"]) for k in range(self.config.num_rounds)]


def _mlp_specs(cfg):
    d, h = cfg.embed_size, cfg.hidden
    specs = [
        ("var_in", VAR_FEATURES, d),
        ("con_in", CON_FEATURES, d),
        ("edge_in", EDGE_FEATURES, d),
    ]
    for k in range(cfg.num_rounds):
        specs += [
            (f"con_msg.{k}", 3 * d, d),
            (f"con_upd.{k}", 2 * d, d),
            (f"var_msg.{k}", 3 * d, d),
            (f"var_upd.{k}", 2 * d, d),
        ]
    specs += [("jk", (cfg.num_rounds + 1) * d, d), ("out", d, 1)]
    return [(name, fan_in, h, out) for name, fan_in, out in specs]


def init_model(cfg):
    """Weights uniform in +-1/sqrt(fan_in) from the config's seed; betas start at 0."""
    rng = SplitMix64(cfg.seed)
    params = {}

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        size = int(np.prod(shape))
        return ((2.0 * rng.random_array(size) - 1.0) * bound).reshape(shape)

    for name, fan_in, hidden, out in _mlp_specs(cfg):
        params[f"{name}.W1"] = uniform((fan_in, hidden), fan_in)
        params[f"{name}.b1"] = uniform((hidden,), fan_in)
        params[f"{name}.W2"] = uniform((hidden, out), hidden)
        params[f"{name}.b2"] = uniform((out,), hidden)
    for k in range(cfg.num_rounds):
        params[f"beta.{k}"] = np.zeros(())
    return GnnModel(cfg, params)


# --- MLP with block inputs --------------------------------------------------
# A block is (X, gather, scatter): the first layer sees X[gather] (or X when
# gather is None) and the backward pass sums gradients back with ``scatter``.


def _mlp_forward(params, prefix, blocks):
    W1 = params[f"{prefix}.W1"]
    pre = params[f"{prefix}.b1"]
    offset = 0
    for X, gather, _ in blocks:
        width = X.shape[1]
        proj = X @ W1[offset : offset + width]
        pre = pre + (proj if gather is None else proj[gather])
        offset += width
    if offset != W1.shape[0]:
        raise ValueError(f"{prefix}: input width {offset} != {W1.shape[0]}")
    act = np.maximum(pre, 0.0)
    out = act @ params[f"{prefix}.W2"] + params[f"{prefix}.b2"]
    return out, (blocks, pre, act)


def _mlp_backward(params, grads, prefix, cache, d_out):
    blocks, pre, act = cache
    W1, W2 = params[f"{prefix}.W1"], params[f"{prefix}.W2"]
    grads[f"{prefix}.W2"] += act.T @ d_out
    grads[f"{prefix}.b2"] += d_out.sum(axis=0)
    d_pre = (d_out @ W2.T) * (pre > 0.0)
    grads[f"{prefix}.b1"] += d_pre.sum(axis=0)
    d_inputs = []
    offset = 0
    for X, gather, scatter in blocks:
        width = X.shape[1]
        W_block = W1[offset : offset + width]
        g = d_pre if gather is None else scatter @ d_pre
        grads[f"{prefix}.W1"][offset : offset + width] += X.T @ g
        d_inputs.append(g @ W_block.T)
        offset += width
    return d_inputs


# --- ICC ----------------------------------------------------------------------


def _incidence_means(edges, num_vars, num_cons):
    edges = list(edges)
    cons = np.array([k for k, _ in edges], dtype=np.int64)
    vars_ = np.array([j for _, j in edges], dtype=np.int64)
    ones = np.ones(len(edges))
    inc = sp.csr_matrix((ones, (cons, vars_)), shape=(num_cons, num_vars))
    con_deg = np.asarray(inc.sum(axis=1)).ravel()
    var_deg = np.asarray(inc.sum(axis=0)).ravel()
    con_mean = sp.diags(1.0 / np.where(con_deg > 0, con_deg, 1.0)) @ inc
    var_mean = sp.diags(1.0 / np.where(var_deg > 0, var_deg, 1.0)) @ inc.T.tocsr()
    return sp.csr_matrix(con_mean), sp.csr_matrix(var_mean)


def _icc(var_emb, con_mean, var_mean, beta):
    con_avg = con_mean @ var_emb
    peer = var_mean @ con_avg
    return var_emb - beta * peer, peer


def icc_apply(var_emb, edges, beta, num_cons=None):
    """Subtract ``beta`` times each variable's mean-of-constraint-means peer embedding.

    ``edges`` is an iterable of (constraint, variable) index pairs.
    Variables in no constraint have a zero peer embedding.
    """
    var_emb = np.asarray(var_emb, dtype=np.float64)
    edges = list(edges)
    if num_cons is None:
        num_cons = 1 + max((k for k, _ in edges), default=-1)
    con_mean, var_mean = _incidence_means(edges, var_emb.shape[0], num_cons)
    out, _ = _icc(var_emb, con_mean, var_mean, beta)
    return out


# --- forward / backward --------------------------------------------------------


@dataclass
class Tape:
    graph: object
    version: int
    caches: dict = field(default_factory=dict)
    peers: dict = field(default_factory=dict)


@dataclass
class Prediction:
    logits: np.ndarray
    marginals: np.ndarray
    layer_var_embeddings: list
    tape: Tape = field(default=None, repr=False)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _marginals(z):
    eps = np.finfo(np.float64).eps
    return np.clip(sigmoid(z), eps, 1.0 - eps)


def forward(model, g):
    cfg, params = model.config, model.params
    if g.var_features.shape[1] != VAR_FEATURES or g.con_features.shape[1] != CON_FEATURES:
        raise ValueError("graph feature widths do not match the model")
    if g.edge_features.shape[1] != EDGE_FEATURES:
        raise ValueError("graph edge feature width does not match the model")
    tape = Tape(graph=g, version=model.version)
    c = tape.caches
    cs, vs = g.con_scatter, g.var_scatter
    ec, ev = g.edge_con, g.edge_var

    hv, c["var_in"] = _mlp_forward(params, "var_in", [(g.var_features, None, None)])
    hc, c["con_in"] = _mlp_forward(params, "con_in", [(g.con_features, None, None)])
    he, c["edge_in"] = _mlp_forward(params, "edge_in", [(g.edge_features, None, None)])
    layers = [hv]
    for k in range(cfg.num_rounds):
        msg, c[f"con_msg.{k}"] = _mlp_forward(
            params, f"con_msg.{k}", [(hc, ec, cs), (he, None, None), (hv, ev, vs)]
        )
        hc, c[f"con_upd.{k}"] = _mlp_forward(
            params, f"con_upd.{k}", [(hc, None, None), (cs @ msg, None, None)]
        )
        msg, c[f"var_msg.{k}"] = _mlp_forward(
            params, f"var_msg.{k}", [(hc, ec, cs), (he, None, None), (hv, ev, vs)]
        )
        hv, c[f"var_upd.{k}"] = _mlp_forward(
            params, f"var_upd.{k}", [(hv, None, None), (vs @ msg, None, None)]
        )
        if cfg.icc_enabled:
            hv, tape.peers[k] = _icc(hv, g.con_mean, g.var_mean, params[f"beta.{k}"])
        layers.append(hv)
    jk, c["jk"] = _mlp_forward(params, "jk", [(h, None, None) for h in layers])
    out, c["out"] = _mlp_forward(params, "out", [(jk, None, None)])
    z = out[: g.num_binary, 0].copy()
    return Prediction(logits=z, marginals=_marginals(z), layer_var_embeddings=layers, tape=tape)


def zero_grads(model):
    return {k: np.zeros_like(v) for k, v in model.params.items()}


def backward(model, g, pred, d_logits):
    """Parameter gradients of ``sum(d_logits * logits)`` for a recorded forward."""
    tape = getattr(pred, "tape", None)
    if tape is None or tape.graph is not g or tape.version != model.version:
        raise RuntimeError("backward needs the forward pass of this model on this graph")
    cfg, params = model.config, model.params
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != (g.num_binary,):
        raise ValueError(f"expected {g.num_binary} logit gradients, got {d_logits.shape}")
    grads = zero_grads(model)
    c = tape.caches
    cs, vs = g.con_scatter, g.var_scatter

    d_out = np.zeros((g.num_var_nodes, 1))
    d_out[: g.num_binary, 0] = d_logits
    (d_jk,) = _mlp_backward(params, grads, "out", c["out"], d_out)
    d_layers = _mlp_backward(params, grads, "jk", c["jk"], d_jk)

    d_hv = d_layers[cfg.num_rounds]
    d_hc = np.zeros((g.num_con_nodes, cfg.embed_size))
    d_he = np.zeros((g.num_edges, cfg.embed_size))
    for k in reversed(range(cfg.num_rounds)):
        if cfg.icc_enabled:
            beta = params[f"beta.{k}"]
            grads[f"beta.{k}"] += -np.sum(d_hv * tape.peers[k])
            # adjoint of var_mean @ con_mean
            d_hv = d_hv - beta * (g.con_mean.T @ (g.var_mean.T @ d_hv))
        d_hv_prev, d_agg = _mlp_backward(params, grads, f"var_upd.{k}", c[f"var_upd.{k}"], d_hv)
        d_msg = d_agg[g.edge_var]
        d_hc_new, d_he_k, d_hv_msg = _mlp_backward(
            params, grads, f"var_msg.{k}", c[f"var_msg.{k}"], d_msg
        )
        d_he += d_he_k
        d_hv_prev = d_hv_prev + d_hv_msg
        d_hc_new = d_hc_new + d_hc
        d_hc_prev, d_agg = _mlp_backward(
            params, grads, f"con_upd.{k}", c[f"con_upd.{k}"], d_hc_new
        )
        d_msg = d_agg[g.edge_con]
        d_hc_msg, d_he_k, d_hv_msg = _mlp_backward(
            params, grads, f"con_msg.{k}", c[f"con_msg.{k}"], d_msg
        )
        d_he += d_he_k
        d_hc = d_hc_prev + d_hc_msg
        d_hv = d_hv_prev + d_hv_msg + d_layers[k]
    _mlp_backward(params, grads, "var_in", c["var_in"], d_hv)
    _mlp_backward(params, grads, "con_in", c["con_in"], d_hc)
    _mlp_backward(params, grads, "edge_in", c["edge_in"], d_he)
    return grads


# --- optimizer -----------------------------------------------------------------


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def adam_init(model):
    return AdamState(m=zero_grads(model), v=zero_grads(model), t=0)


def adam_step(model, grads, state, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied in place. Returns (model, state)."""
    if state.m.keys() != model.params.keys():
        raise ValueError("optimizer state does not match model parameters")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, value in model.params.items():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        model.params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    model.version += 1
    return model, state


# --- checkpoints ------------------------------------------------------------------


def model_to_json(model):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "params": {
            name: {"shape": list(v.shape), "data": v.ravel().tolist()}
            for name, v in model.params.items()
        },
    }
    return json.dumps(doc, allow_nan=False, separators=(",", ":")) + "\n"


def model_from_json(text):
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a cocomilp-gnn checkpoint (format/version mismatch)")
    cfg = GnnConfig(**doc["config"])
    reference = init_model(GnnConfig(**{**doc["config"], "seed": 0}))
    params = {}
    for name, ref in reference.params.items():
        if name not in doc["params"]:
            raise ValueError(f"checkpoint lacks parameter {name!r}")
        entry = doc["params"][name]
        value = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if value.shape != ref.shape:
            raise ValueError(f"parameter {name!r} has shape {value.shape}, expected {ref.shape}")
        params[name] = value
    extra = set(doc["params"]) - set(params)
    if extra:
        raise ValueError(f"unknown parameters in checkpoint: {sorted(extra)}")
    return GnnModel(cfg, params)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
