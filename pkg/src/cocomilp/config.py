"""Sectioned TOML experiment configuration.

Every component seed is derived from ``experiment.seed`` with a fixed label,
so one number reproduces a whole run.
"""

import math
from dataclasses import asdict, dataclass, field, fields

import tomli
import tomli_w

from .loss import LOSS_KINDS, LossConfig
from .nn import GnnConfig
from .pipeline import TrainConfig
from .rng import derive_seed
from .solver import BnbConfig, SearchConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSection:
    seed: int = 0
    out: str = "runs/desk"
    jobs: int = 1


@dataclass
class DataSection:
    family: str = "sc"
    n_train: int = 60
    n_valid: int = 15
    n_test: int = 25
    sc_rows: int = 40
    sc_cols: int = 80
    sc_density: float = 0.1
    sc_cost_lo: int = 1
    sc_cost_hi: int = 100
    ca_items: int = 8
    ca_bids: int = 20
    ca_max_bundle: int = 3


@dataclass
class GnnSection:
    embed_size: int = 64
    num_rounds: int = 2
    mlp_hidden: int = 0
    icc_enabled: bool = True


@dataclass
class TrainSection:
    epochs: int = 200
    lr: float = 1e-4
    loss_kind: str = "vcl"
    pool_size: int = 10
    weight_temperature: float = 1.0


@dataclass
class LossSection:
    tau: float = 0.1
    gamma: float = 0.9
    lambda_rank: float = 0.01
    pair_cap: int = 50_000


@dataclass
class LabelSection:
    node_limit: int = 100_000
    time_limit: float = math.inf


@dataclass
class BnbSection:
    node_limit: int = 10
    time_limit: float = math.inf
    abs_gap_tol: float = 1e-6
    integrality_tol: float = 1e-6


@dataclass
class SearchSection:
    k0: int = 30
    k1: int = 0
    delta: int = 5


@dataclass
class AnalyzeSection:
    num_pairs: int = 10_000


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    gnn: GnnSection = field(default_factory=GnnSection)
    train: TrainSection = field(default_factory=TrainSection)
    loss: LossSection = field(default_factory=LossSection)
    label: LabelSection = field(default_factory=LabelSection)
    bnb: BnbSection = field(default_factory=BnbSection)
    search: SearchSection = field(default_factory=SearchSection)
    analyze: AnalyzeSection = field(default_factory=AnalyzeSection)

    # --- component configs ---

    def seed_for(self, label):
        return derive_seed(self.experiment.seed, label)

    def gnn_config(self):
        return GnnConfig(**asdict(self.gnn), seed=self.seed_for("gnn"))

    def train_config(self):
        return TrainConfig(**asdict(self.train), seed=self.seed_for("train"))

    def loss_config(self):
        return LossConfig(**asdict(self.loss), seed=self.seed_for("loss"))

    def label_bnb_config(self):
        return BnbConfig(
            node_limit=self.label.node_limit,
            time_limit=self.label.time_limit,
            pool_size=self.train.pool_size,
        )

    def bnb_config(self):
        return BnbConfig(**asdict(self.bnb), pool_size=1)

    def search_config(self):
        return SearchConfig(**asdict(self.search))

    def validate(self):
        """Build every component config so their invariants run; names the failing section."""
        checks = {
            "gnn": self.gnn_config,
            "train": self.train_config,
            "loss": self.loss_config,
            "label": self.label_bnb_config,
            "bnb": self.bnb_config,
            "search": self.search_config,
        }
        for name, build in checks.items():
            try:
                build()
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}] {exc}") from None
        if self.data.family not in ("sc", "ca"):
            raise ConfigError(f"[data] family must be 'sc' or 'ca', got {self.data.family!r}")
        if self.train.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"[train] loss_kind must be one of {LOSS_KINDS}")
        if self.experiment.jobs < 1:
            raise ConfigError("[experiment] jobs must be >= 1")
        return self


SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)}


def _coerce(section, key, kind, value):
    where = f"{section}.{key}"
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
    elif kind is str:
        if isinstance(value, str):
            return value
    raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}")


def _field_types(section_cls):
    types = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: types.get(f.type, f.type) if isinstance(f.type, str) else f.type
            for f in fields(section_cls)}


def from_dict(doc, overrides=None):
    cfg = ExperimentConfig()
    items = []
    for section, table in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        items += [(section, key, value) for key, value in table.items()]
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}] in override {dotted!r}")
        items.append((section, key, value))
    for section, key, value in items:
        target = getattr(cfg, section)
        types = _field_types(type(target))
        if key not in types:
            raise ConfigError(f"unknown key {section}.{key}")
        setattr(target, key, _coerce(section, key, types[key], value))
    return cfg.validate()


def to_dict(cfg):
    return {name: asdict(getattr(cfg, name)) for name in SECTIONS}


def loads(text, overrides=None):
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    return from_dict(doc, overrides)


def dumps(cfg):
    return tomli_w.dumps(to_dict(cfg))


def load(path, overrides=None):
    if path is None:
        return from_dict({}, overrides)
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read(), overrides)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
