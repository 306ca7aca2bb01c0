import math
import re

import pytest

from cocomilp import config
from cocomilp.config import ConfigError


def test_defaults_match_reference_hyperparameters():
    cfg = config.load(None)
    g, t, l = cfg.gnn_config(), cfg.train_config(), cfg.loss_config()
    assert g.embed_size == 64 and t.lr == 1e-4
    assert (l.tau, l.lambda_rank, l.gamma) == (0.1, 0.01, 0.9)
    assert t.pool_size == 10 and t.epochs == 200


def test_round_trip_is_exact():
    cfg = config.load(None)
    text = config.dumps(cfg)
    back = config.loads(text)
    assert back == cfg and config.dumps(back) == text
    assert math.isinf(back.label.time_limit)


def test_file_and_overrides(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[loss]\ntau = 0.5\n[gnn]\nicc_enabled = false\n")
    cfg = config.load(path, {"loss.tau": "0.25", "search.k0": "7"})
    assert cfg.loss.tau == 0.25 and cfg.search.k0 == 7 and cfg.gnn.icc_enabled is False


@pytest.mark.parametrize(
    "text, where",
    [
        ("[gnn]\nembed_sz = 3\n", "gnn.embed_sz"),
        ("[nope]\nx = 1\n", "nope"),
        ("[loss]\ntau = -1.0\n", "[loss]"),
        ("[train]\nloss_kind = 'mse'\n", "[train]"),
        ("[train]\nepochs = 'many'\n", "train.epochs"),
        ("[data]\nfamily = 'tsp'\n", "[data]"),
        ("[gnn\n", "parse"),
    ],
)
def test_errors_name_the_field(text, where):
    with pytest.raises(ConfigError, match=re.escape(where)):
        config.loads(text)


def test_seeds_are_derived_per_component():
    a = config.load(None, {"experiment.seed": "1"})
    b = config.load(None, {"experiment.seed": "2"})
    assert a.gnn_config().seed != a.train_config().seed
    assert a.gnn_config().seed != b.gnn_config().seed


def test_component_configs():
    cfg = config.load(None)
    assert cfg.label_bnb_config().pool_size == 10
    assert cfg.bnb_config().pool_size == 1 and cfg.bnb_config().node_limit == 10
    assert cfg.search_config().k0 == 30
