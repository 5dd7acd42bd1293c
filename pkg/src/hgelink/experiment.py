"""Experiment runner: folds x test splits x sweep cells, with ablation variants."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .enrichment import EnrichmentSpec
from .errors import ConfigError, HGEError
from .graph import HeteroGraph
from .metrics import MetricReport, aggregate
from .model import EncoderConfig
from .splits import FoldPlan, SplitConfig, build_fold, make_test_split
from .training import TrainConfig, TrainResult, evaluate, score_split, train

log = logging.getLogger(__name__)


def _no_exposed(tc: TrainConfig, g: HeteroGraph) -> TrainConfig:
    spec = tc.enrichment_for(g)
    return replace(tc, enrichment=replace(spec, meta_features=()))


def _no_reverse(tc: TrainConfig, g: HeteroGraph) -> TrainConfig:
    return replace(tc, enrichment=replace(tc.enrichment_for(g), add_reverse=False))


def _encoder(**changes) -> Callable[[TrainConfig, HeteroGraph], TrainConfig]:
    return lambda tc, g: replace(tc, encoder=replace(tc.encoder, **changes))


def _rgcn(tc: TrainConfig, g: HeteroGraph) -> TrainConfig:
    # the learned self-transform replaces the self-loop relation
    spec = replace(tc.enrichment_for(g), add_self_loops=False)
    return replace(tc, enrichment=spec, encoder=replace(tc.encoder, variant="RGCN"))


def _gcn(tc: TrainConfig, g: HeteroGraph) -> TrainConfig:
    return replace(tc, enrichment=EnrichmentSpec.none(), encoder=replace(tc.encoder, variant="GCN"))


# Ablations plus baselines; each maps a base config to a variant.
VARIANTS: dict[str, Callable[[TrainConfig, HeteroGraph], TrainConfig]] = {
    "full": lambda tc, g: tc,
    "no_reverse": _no_reverse,
    "no_residual": _encoder(use_residual=False),
    "no_exposed": _no_exposed,
    "homogeneous": _encoder(homogeneous=True),
    "no_enrichment": lambda tc, g: replace(tc, enrichment=EnrichmentSpec.none()),
    "separate": lambda tc, g: replace(tc, joint=False),
    "rgcn": _rgcn,
    "gcn": _gcn,
}
ABLATION_ROWS = ("full", "no_reverse", "no_residual", "no_exposed", "homogeneous")


@dataclass(frozen=True)
class ExperimentConfig:
    split: SplitConfig = field(default_factory=SplitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variants: tuple[str, ...] = ("full",)
    # sweep axes; None keeps the value from ``split``
    test_ratios: tuple[float, ...] | None = None
    cumulative_train: tuple[bool, ...] | None = None
    cumulative_test: tuple[bool, ...] | None = None
    folds: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("variants", "test_ratios", "cumulative_train", "cumulative_test", "folds"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(v)
                object.__setattr__(self, name, v)
                if not v:
                    raise ConfigError(f"sweep axis {name!r} is empty")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; expected one of {sorted(VARIANTS)}")
        for r in self.test_ratios or ():
            if not 0 <= r <= 1:
                raise ConfigError(f"test ratio {r} outside [0, 1]")
        for k in self.folds or ():
            if k not in self.split.folds:
                raise ConfigError(f"fold {k} outside 1..{self.split.n_folds - 1}")

    def cells(self) -> list[dict]:
        axes = {
            "variant": self.variants,
            "cumulative_train": self.cumulative_train or (self.split.cumulative_train,),
            "cumulative_test": self.cumulative_test or (self.split.cumulative_test,),
            "test_ratio": self.test_ratios or (self.split.test_ratio,),
        }
        return [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]

    def to_dict(self) -> dict:
        return {
            "split": self.split.to_dict(),
            "train": self.train.to_dict(),
            "sweeps": {
                "variants": list(self.variants),
                "test_ratio": None if self.test_ratios is None else list(self.test_ratios),
                "cumulative_train": None if self.cumulative_train is None else list(self.cumulative_train),
                "cumulative_test": None if self.cumulative_test is None else list(self.cumulative_test),
            },
            "folds": None if self.folds is None else list(self.folds),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        unknown = set(d) - {"split", "train", "sweeps", "folds"}
        if unknown:
            raise ConfigError(f"unknown experiment config keys {sorted(unknown)}")
        try:
            split = SplitConfig(**d.get("split", {}))
        except TypeError as e:
            raise ConfigError(f"bad split config: {e}") from None
        try:
            tc = TrainConfig.from_dict(d.get("train", {}))
        except TypeError as e:
            raise ConfigError(f"bad train config: {e}") from None
        sweeps = dict(d.get("sweeps") or {})
        unknown = set(sweeps) - {"variants", "test_ratio", "cumulative_train", "cumulative_test"}
        if unknown:
            raise ConfigError(f"unknown sweep axes {sorted(unknown)}")
        return cls(
            split=split,
            train=tc,
            variants=tuple(sweeps.get("variants") or ("full",)),
            test_ratios=sweeps.get("test_ratio"),
            cumulative_train=sweeps.get("cumulative_train"),
            cumulative_test=sweeps.get("cumulative_test"),
            folds=d.get("folds"),
        )


@dataclass
class ExperimentResult:
    reports: list[MetricReport]
    failures: list[dict]
    config: ExperimentConfig


def train_variant(fold: FoldPlan, tc: TrainConfig) -> list[TrainResult]:
    """One joint model, or one model per target relation when not joint."""
    if tc.joint:
        return [train(fold, tc)]
    return [train(fold, tc, targets=(r,)) for r in fold.targets]


def evaluate_variant(results: Sequence[TrainResult], fold: FoldPlan, split) -> MetricReport:
    if len(results) == 1:
        return evaluate(results[0], fold, split)
    sets, test_s = {}, 0.0
    import time

    for res in results:
        t0 = time.perf_counter()
        for r, v in score_split(res.params, split, res.encoder, res.enrichment, res.targets).items():
            sets[str(r)] = v
        test_s += time.perf_counter() - t0
    report = aggregate(sets)
    report.train_seconds = sum(r.seconds for r in results)
    report.test_seconds = test_s
    report.tags.update({"fold": fold.fold, "split": split.index, "test_ratio": split.test_ratio})
    return report


def run_experiment(data: HeteroGraph, cfg: ExperimentConfig, progress: Callable[[str], None] | None = None) -> ExperimentResult:
    """Evaluate every sweep cell on every fold and test split.

    Models are trained once per (variant, training mode, fold) and reused
    across test ratios and test modes.  Failed cells are recorded and the
    run continues.
    """
    reports: list[MetricReport] = []
    failures: list[dict] = []
    folds_cache: dict[tuple, FoldPlan] = {}
    model_cache: dict[tuple, list[TrainResult]] = {}
    folds = cfg.folds or tuple(cfg.split.folds)
    for cell in cfg.cells():
        split_cfg = replace(
            cfg.split,
            cumulative_train=cell["cumulative_train"],
            cumulative_test=cell["cumulative_test"],
            test_ratio=cell["test_ratio"],
        )
        for k in folds:
            tags = dict(cell, fold=k)
            try:
                fkey = (cell["cumulative_train"], cell["cumulative_test"], k)
                if fkey not in folds_cache:
                    folds_cache[fkey] = build_fold(data, k, split_cfg)
                fold = folds_cache[fkey]
                mkey = (cell["variant"], cell["cumulative_train"], k)
                if mkey not in model_cache:
                    tc = VARIANTS[cell["variant"]](cfg.train, fold.train_graph)
                    if progress:
                        progress(f"training {cell['variant']} fold {k}")
                    model_cache[mkey] = train_variant(fold, tc)
                results = model_cache[mkey]
            except HGEError as e:
                log.warning("cell %s fold %d failed: %s", cell, k, e)
                failures.append({**tags, "split": None, "error": f"{type(e).__name__}: {e}"})
                continue
            for i in range(split_cfg.n_test_splits):
                try:
                    split = make_test_split(fold, i, split_cfg.test_ratio)
                    report = evaluate_variant(results, fold, split)
                except HGEError as e:
                    log.warning("cell %s fold %d split %d failed: %s", cell, k, i, e)
                    failures.append({**tags, "split": i, "error": f"{type(e).__name__}: {e}"})
                    continue
                report.tags = {**cell, **report.tags}
                reports.append(report)
    return ExperimentResult(reports, failures, cfg)


def summarize(reports: Sequence[MetricReport], keys=("variant", "cumulative_train", "cumulative_test", "test_ratio")) -> list[dict]:
    """Mean and standard deviation per cell, in first-seen cell order."""
    groups: dict[tuple, list[MetricReport]] = {}
    for r in reports:
        groups.setdefault(tuple(r.tags.get(k) for k in keys), []).append(r)
    rows = []
    for key, rs in groups.items():
        row: dict = dict(zip(keys, key))
        row["n"] = len(rs)
        for name, values in _metric_columns(rs).items():
            arr = np.asarray(values, dtype=np.float64)
            row[name] = float(arr.mean())
            row[name + "_std"] = float(arr.std())
        rows.append(row)
    return rows


def _metric_columns(rs: Sequence[MetricReport]) -> dict[str, list[float]]:
    cols: dict[str, list[float]] = {}
    for r in rs:
        for rel, m in r.per_relation.items():
            for k, v in m.items():
                cols.setdefault(f"{rel}:{k}", []).append(v)
        for agg in ("micro", "macro"):
            for k, v in getattr(r, agg).items():
                cols.setdefault(f"{agg}:{k}", []).append(v)
        cols.setdefault("train_seconds", []).append(r.train_seconds)
        cols.setdefault("test_seconds", []).append(r.test_seconds)
    return cols
