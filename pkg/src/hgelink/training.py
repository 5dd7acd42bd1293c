"""Full-batch training and evaluation on temporal folds."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .enrichment import EnrichmentSpec, MetaFeature, enrich
from .errors import BatchError, ConfigError, DivergenceError, MetricError
from .graph import HeteroGraph, Relation
from .metrics import MetricReport, aggregate
from .model import EncoderConfig, ModelParams, encode, init_params, joint_loss, prepare, score_pairs
from .numerics import Adam, sigmoid
from .splits import EvalSplit, FoldPlan, derive_seed, sample_negatives_per_source

log = logging.getLogger(__name__)


def default_enrichment(g: HeteroGraph) -> EnrichmentSpec:
    """Expose every categorical meta column, add reverse relations and self-loops."""
    columns = [(t, c) for t in g.node_types for c in sorted(g.meta.get(t, {}))]
    names = [c for _, c in columns]
    mfs = tuple(
        MetaFeature(t, c, c if names.count(c) == 1 and c not in g.node_counts else f"{t}_{c}") for t, c in columns
    )
    return EnrichmentSpec(mfs, add_reverse=True, add_self_loops=True)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-4
    dropout_p: float = 0.2
    joint: bool = True
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    # None: expose all meta columns of the data, with reverse edges and self-loops
    enrichment: EnrichmentSpec | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def encoder_config(self) -> EncoderConfig:
        return replace(self.encoder, dropout_p=self.dropout_p)

    def enrichment_for(self, g: HeteroGraph) -> EnrichmentSpec:
        return self.enrichment if self.enrichment is not None else default_enrichment(g)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "dropout_p": self.dropout_p,
            "joint": self.joint,
            "seed": self.seed,
            "encoder": self.encoder.to_dict(),
            "enrichment": None if self.enrichment is None else self.enrichment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        d = dict(d)
        if "encoder" in d:
            d["encoder"] = EncoderConfig.from_dict(d["encoder"])
        if d.get("enrichment") is not None:
            d["enrichment"] = EnrichmentSpec.from_dict(d["enrichment"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[float]
    seconds: float
    enrichment: EnrichmentSpec
    encoder: EncoderConfig
    targets: tuple[Relation, ...]


def train(fold: FoldPlan, cfg: TrainConfig, targets: Sequence[Relation] | None = None) -> TrainResult:
    """Full-batch Adam training; one step per epoch on all training positives.

    Negatives are resampled every epoch with seed ``(cfg.seed, epoch)``.
    ``targets`` restricts the loss to some relations (separate training).
    """
    t0 = time.perf_counter()
    targets = tuple(Relation(*r) for r in (targets or fold.targets))
    enc = cfg.encoder_config
    spec = cfg.enrichment_for(fold.train_graph)
    g = enrich(fold.train_graph, spec)
    prop = prepare(g, enc)
    params = init_params(enc, prop, np.random.default_rng(derive_seed(cfg.seed, 0)), targets)

    positives, keys = {}, {}
    for r in targets:
        pos = fold.train_graph.edge_array(r)
        if len(pos) == 0:
            log.warning("fold %d: no training edges for %s; relation left out of the loss", fold.fold, r)
            continue
        positives[r] = pos
        keys[r] = fold.train_graph.edge_keys(r)
    if not positives:
        raise BatchError(f"fold {fold.fold}: no training edges for any of {[str(r) for r in targets]}")

    opt = Adam(lr=cfg.learning_rate)
    history = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(derive_seed(cfg.seed, 1, epoch))
        batches = {}
        for r, pos in positives.items():
            neg, ok = sample_negatives_per_source(pos, fold.train_graph, r, rng, forbidden_keys=keys[r])
            batches[r] = (pos[ok], neg)
        res = joint_loss(prop, params, enc, batches, rng, training=True)
        if not np.isfinite(res.loss):
            raise DivergenceError(epoch, res.loss)
        history.append(res.loss)
        opt.step(params.tensors, res.grads)
    return TrainResult(params, history, time.perf_counter() - t0, spec, enc, targets)


def score_split(
    params: ModelParams,
    split: EvalSplit,
    enc: EncoderConfig,
    spec: EnrichmentSpec,
    relations: Sequence[Relation] | None = None,
) -> dict[Relation, tuple[np.ndarray, np.ndarray]]:
    """Probabilities and labels for the indicator positives and frozen negatives."""
    dtype = next(iter(params.tensors.values())).dtype
    g = enrich(split.inference_graph, spec)
    reps = encode(prepare(g, enc, dtype), params, enc, training=False)
    out = {}
    for r in relations or tuple(params.decoder_forms):
        pos, neg = split.scored_pairs(r)
        if len(pos) == 0:
            continue
        pairs = np.concatenate([pos, neg])
        labels = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
        # fixed shuffle: tied scores must not rank positives first
        order = np.random.default_rng(derive_seed(split.seed, 3, len(pairs))).permutation(len(pairs))
        pairs, labels = pairs[order], labels[order]
        scores = sigmoid(score_pairs(reps, params, r, pairs).astype(np.float64))
        out[r] = (scores, labels)
    return out


def evaluate(result: TrainResult, fold: FoldPlan, split: EvalSplit) -> MetricReport:
    t0 = time.perf_counter()
    sets = score_split(result.params, split, result.encoder, result.enrichment, result.targets)
    if not sets:
        raise MetricError(f"fold {fold.fold} split {split.index}: no indicator edges to score")
    report = aggregate({str(r): v for r, v in sets.items()})
    report.test_seconds = time.perf_counter() - t0
    report.train_seconds = result.seconds
    report.tags.update({"fold": fold.fold, "split": split.index, "test_ratio": split.test_ratio})
    return report
