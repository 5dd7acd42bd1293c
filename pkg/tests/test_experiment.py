import numpy as np
import pytest

from hgelink.data import generate_synthetic_graph
from hgelink.errors import ConfigError
from hgelink.experiment import ABLATION_ROWS, VARIANTS, ExperimentConfig, run_experiment, summarize
from hgelink.model import EncoderConfig
from hgelink.splits import SplitConfig, build_fold
from hgelink.training import TrainConfig

TINY = TrainConfig(epochs=2, learning_rate=1e-3, encoder=EncoderConfig(layer_sizes=(8, 8)))


@pytest.fixture(scope="module")
def graph():
    return generate_synthetic_graph(200, 20, 3, 6, seed=0)


def test_default_grid_counts(graph):
    cfg = ExperimentConfig(train=TINY)
    res = run_experiment(graph, cfg)
    assert not res.failures
    assert len(res.reports) == (cfg.split.n_folds - 1) * cfg.split.n_test_splits == 20
    rows = summarize(res.reports)
    assert len(rows) == 1 and rows[0]["n"] == 20


def test_sweep_cells_and_tags(graph):
    cfg = ExperimentConfig(
        split=SplitConfig(n_test_splits=2),
        train=TINY,
        variants=("full", "no_enrichment"),
        test_ratios=(0.5, 1.0),
        folds=(2,),
    )
    assert len(cfg.cells()) == 4
    res = run_experiment(graph, cfg)
    assert len(res.reports) == 8
    assert {(r.tags["variant"], r.tags["test_ratio"]) for r in res.reports} == {
        ("full", 0.5), ("full", 1.0), ("no_enrichment", 0.5), ("no_enrichment", 1.0)
    }


def test_ablation_rows_build(graph):
    fold = build_fold(graph, 2, SplitConfig())
    assert len(ABLATION_ROWS) == 5
    configs = {v: VARIANTS[v](TINY, fold.train_graph) for v in VARIANTS}
    assert configs["no_reverse"].enrichment.add_reverse is False
    assert configs["no_exposed"].enrichment.meta_features == ()
    assert configs["no_residual"].encoder.use_residual is False
    assert configs["homogeneous"].encoder.homogeneous
    assert configs["separate"].joint is False
    assert configs["rgcn"].encoder.variant == "RGCN" and not configs["rgcn"].enrichment.add_self_loops
    assert configs["gcn"].encoder.variant == "GCN"
    cfg = ExperimentConfig(split=SplitConfig(n_test_splits=1), train=TINY, variants=tuple(VARIANTS), folds=(3,))
    res = run_experiment(graph, cfg)
    assert not res.failures
    assert [r.tags["variant"] for r in res.reports] == list(VARIANTS)


def test_failures_are_recorded_and_run_continues(graph):
    # ratio 0 leaves nothing to score
    cfg = ExperimentConfig(split=SplitConfig(n_test_splits=1), train=TINY, test_ratios=(0.0, 0.5), folds=(1,))
    res = run_experiment(graph, cfg)
    assert len(res.reports) == 1
    assert len(res.failures) == 1 and "ConfigError" in res.failures[0]["error"]


def test_config_validation_and_round_trip():
    cfg = ExperimentConfig(train=TINY, variants=("full", "gcn"), test_ratios=(0.25, 1.0), cumulative_train=(True, False))
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig(variants=())
    with pytest.raises(ConfigError):
        ExperimentConfig(variants=("bogus",))
    with pytest.raises(ConfigError):
        ExperimentConfig(test_ratios=(2.0,))
    with pytest.raises(ConfigError):
        ExperimentConfig(folds=(9,))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"sweeps": {"lr": [1]}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"split": {"folds": 3}})


def test_seeded_runs_repeat(graph):
    cfg = ExperimentConfig(split=SplitConfig(n_test_splits=1, seed=4), train=TINY, folds=(2,))
    a, b = run_experiment(graph, cfg), run_experiment(graph, cfg)
    assert [r.macro for r in a.reports] == [r.macro for r in b.reports]
