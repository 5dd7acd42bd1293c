"""Temporally cohesive fold construction, test-edge subsampling and negative sampling.

Cases are dynamic and split by date; every other node type (laws, and meta
categories added later by enrichment) is static and present everywhere.
Bucket membership follows the (date, node index) order so equal dates never
make the split ambiguous.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, FoldError
from .graph import CASE, TARGET_RELATIONS, HeteroGraph, Relation, csr_from_pairs, induce_node_subset

log = logging.getLogger(__name__)

MAX_REJECTION_ROUNDS = 100


@dataclass(frozen=True)
class SplitConfig:
    n_folds: int = 5
    cumulative_train: bool = True
    cumulative_test: bool = True
    test_ratio: float = 0.9
    n_test_splits: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_folds < 2:
            raise ConfigError(f"n_folds must be >= 2, got {self.n_folds}")
        if not 0 <= self.test_ratio <= 1:
            raise ConfigError(f"test_ratio must be in [0, 1], got {self.test_ratio}")
        if self.n_test_splits < 1:
            raise ConfigError(f"n_test_splits must be >= 1, got {self.n_test_splits}")

    @property
    def folds(self) -> range:
        """Evaluable fold indices; fold k tests from the k-th cutoff on."""
        return range(1, self.n_folds)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from integer parts (fold, split, epoch, ...)."""
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(2, np.uint64)[0] >> np.uint64(1))


# -- temporal buckets ----------------------------------------------------------


def _case_dates(g: HeteroGraph) -> np.ndarray:
    if CASE not in g.dates:
        raise DataError("graph has no case dates; cannot split by time")
    return np.asarray(g.dates[CASE])


def date_buckets(case_dates: Sequence[int], n_folds: int) -> np.ndarray:
    """Bucket index per case: equal-sized buckets over the (date, index) order."""
    d = np.asarray(case_dates, dtype=np.int64)
    n = len(d)
    if len(np.unique(d)) < n_folds:
        raise DataError(f"need at least {n_folds} distinct case dates to build {n_folds} buckets, got {len(np.unique(d))}")
    order = np.lexsort((np.arange(n), d))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    return (rank * n_folds) // n


def time_cutoffs(case_dates: Sequence[int], n_folds: int) -> list[int]:
    """Cutoff date of each fold k = 1..n_folds-1: the first date in bucket k."""
    d = np.asarray(case_dates, dtype=np.int64)
    buckets = date_buckets(d, n_folds)
    return [int(d[buckets == k].min()) for k in range(1, n_folds)]


# -- folds ---------------------------------------------------------------------


@dataclass
class FoldPlan:
    """Graphs and masks for one temporal fold, before test-edge subsampling.

    ``inference_full`` holds train and test cases with all their edges;
    test splits drop held-out indicator edges from it.  Node indices of the
    three graphs differ; ``train_ids`` / ``inference_ids`` give the base
    graph index of each case row.
    """

    fold: int
    cutoff_date: int
    train_graph: HeteroGraph
    inference_full: HeteroGraph
    train_ids: np.ndarray
    inference_ids: np.ndarray
    test_mask: np.ndarray  # over inference-graph cases
    targets: tuple[Relation, ...] = TARGET_RELATIONS
    seed: int = 0

    @property
    def test_ids(self) -> np.ndarray:
        return self.inference_ids[self.test_mask]


def build_fold(g: HeteroGraph, fold: int, cfg: SplitConfig, targets=TARGET_RELATIONS) -> FoldPlan:
    if fold not in cfg.folds:
        raise ConfigError(f"fold must be in 1..{cfg.n_folds - 1}, got {fold}")
    dates = _case_dates(g)
    buckets = date_buckets(dates, cfg.n_folds)
    train = buckets < fold if cfg.cumulative_train else buckets == fold - 1
    test = buckets >= fold if cfg.cumulative_test else buckets == fold
    if not train.any():
        raise FoldError(f"fold {fold} has no training cases")
    if not test.any():
        raise FoldError(f"fold {fold} has no test cases")

    train_graph, train_map = induce_node_subset(g, {CASE: train})
    inference, inf_map = induce_node_subset(g, {CASE: train | test})
    inference_ids = np.flatnonzero(train | test)
    return FoldPlan(
        fold=fold,
        cutoff_date=int(dates[buckets == fold].min()),
        train_graph=train_graph,
        inference_full=inference,
        train_ids=np.flatnonzero(train),
        inference_ids=inference_ids,
        test_mask=test[inference_ids],
        targets=tuple(Relation(*r) for r in targets),
        seed=derive_seed(cfg.seed, fold),
    )


# -- test splits ---------------------------------------------------------------


@dataclass
class EvalSplit:
    fold: int
    index: int
    test_ratio: float
    seed: int
    inference_graph: HeteroGraph
    indicator_edges: dict[Relation, np.ndarray]
    negatives: dict[Relation, np.ndarray] = field(default_factory=dict)

    def scored_pairs(self, r: Relation) -> tuple[np.ndarray, np.ndarray]:
        """Positive and negative pairs to score for ``r`` (balanced)."""
        return self.indicator_edges[r], self.negatives[r]


def subsample_test_edges(
    fold: FoldPlan, test_ratio: float, split_seed: int
) -> tuple[dict[Relation, np.ndarray], dict[Relation, np.ndarray]]:
    """Per test source node and target relation, hold out ``ceil(ratio * deg)`` edges.

    Returns ``(kept, held)`` pair arrays per relation in inference-graph
    indices.  Only edges whose source is a test case are candidates.
    """
    if not 0 <= test_ratio <= 1:
        raise ConfigError(f"test_ratio must be in [0, 1], got {test_ratio}")
    rng = np.random.default_rng(split_seed)
    g = fold.inference_full
    kept, held = {}, {}
    for r in fold.targets:
        s, d = g.edges(r)
        cand = fold.test_mask[s] if r.src == CASE else np.zeros(len(s), dtype=bool)
        s, d = s[cand], d[cand]
        keys = rng.random(len(s))
        order = np.lexsort((keys, s))
        s, d = s[order], d[order]
        starts = np.r_[0, np.flatnonzero(s[1:] != s[:-1]) + 1] if len(s) else np.zeros(0, dtype=np.int64)
        sizes = np.diff(np.r_[starts, len(s)])
        rank = np.arange(len(s)) - np.repeat(starts, sizes)
        quota = np.repeat(np.ceil(test_ratio * sizes - 1e-9).astype(np.int64), sizes)
        hold = rank < quota
        pairs = np.stack([s, d], axis=1)
        kept[r] = _sorted_pairs(pairs[~hold])
        held[r] = _sorted_pairs(pairs[hold])
    return kept, held


def _sorted_pairs(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.int64).reshape(-1, 2)
    return p[np.lexsort((p[:, 1], p[:, 0]))]


def _remove_pairs(g: HeteroGraph, r: Relation, drop: np.ndarray) -> HeteroGraph:
    n_dst = g.num_nodes(r.dst)
    keys = g.edge_keys(r)
    drop_keys = drop[:, 0] * n_dst + drop[:, 1]
    keep = ~np.isin(keys, drop_keys)
    s, d = g.edges(r)
    adjacency = {q: g.adjacency(q) for q in g.relations}
    adjacency[r], _ = csr_from_pairs(s[keep], d[keep], g.num_nodes(r.src))
    return g.replace(adjacency=adjacency)


def make_test_split(fold: FoldPlan, index: int, test_ratio: float, *, require_indicator: bool = True) -> EvalSplit:
    """Subsample one test split and sample its frozen evaluation negatives."""
    seed = derive_seed(fold.seed, 1, index, int(round(test_ratio * 1e6)))
    kept, held = subsample_test_edges(fold, test_ratio, seed)
    if require_indicator and not any(len(h) for h in held.values()):
        raise ConfigError(f"test ratio {test_ratio} leaves no indicator edges to evaluate")
    g = fold.inference_full
    for r, h in held.items():
        if len(h):
            g = _remove_pairs(g, r, h)
    negatives = {}
    for i, r in enumerate(fold.targets):
        pos = held[r]
        neg, ok = sample_negatives_per_source(pos, fold.inference_full, r, derive_seed(seed, 2, i))
        held[r] = pos[ok]
        negatives[r] = neg
    return EvalSplit(fold.fold, index, test_ratio, seed, g, held, negatives)


# -- negative sampling -----------------------------------------------------------


def sample_negatives_per_source(
    positives: np.ndarray,
    g: HeteroGraph,
    relation: Relation,
    seed: int | np.random.Generator,
    *,
    forbidden_keys: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One uniform negative ``(u, v')`` with ``(u, v')`` not an edge of ``g`` per positive ``(u, v)``.

    Rejection sampling runs for at most 100 rounds; leftover positives fall
    back to an exact draw from the source's complement.  Returns the
    negatives and a mask over ``positives`` of those that received one
    (sources citing every target are skipped with a warning).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    n_dst = g.num_nodes(relation.dst)
    keys = g.edge_keys(relation) if forbidden_keys is None else np.asarray(forbidden_keys, dtype=np.int64)
    u = pos[:, 0]
    v = np.full(len(pos), -1, dtype=np.int64)
    todo = np.arange(len(pos))
    for _ in range(MAX_REJECTION_ROUNDS):
        if not len(todo):
            break
        cand = rng.integers(0, n_dst, size=len(todo)) if n_dst else np.zeros(len(todo), dtype=np.int64)
        if not n_dst:
            break
        bad = _contains(keys, u[todo] * n_dst + cand)
        v[todo[~bad]] = cand[~bad]
        todo = todo[bad]
    ok = np.ones(len(pos), dtype=bool)
    skipped = 0
    for i in todo:
        taken = keys[(keys >= u[i] * n_dst) & (keys < (u[i] + 1) * n_dst)] - u[i] * n_dst
        free = np.setdiff1d(np.arange(n_dst), taken, assume_unique=True)
        if len(free) == 0:
            ok[i] = False
            skipped += 1
            continue
        v[i] = free[rng.integers(len(free))]
    if skipped:
        log.warning("%s: %d positives skipped, their source cites every %s node", relation, skipped, relation.dst)
    return np.stack([u[ok], v[ok]], axis=1), ok


def _contains(sorted_keys: np.ndarray, q: np.ndarray) -> np.ndarray:
    if not len(sorted_keys):
        return np.zeros(len(q), dtype=bool)
    i = np.searchsorted(sorted_keys, q)
    i = np.minimum(i, len(sorted_keys) - 1)
    return sorted_keys[i] == q


# -- manifest ----------------------------------------------------------------------


def _write_pairs(path: Path, pairs: np.ndarray) -> None:
    np.ascontiguousarray(np.asarray(pairs, dtype="<u8").reshape(-1, 2)).tofile(path)


def read_pairs(path: str | Path) -> np.ndarray:
    raw = np.fromfile(path, dtype="<u8")
    if raw.size % 2:
        raise DataError(f"{path}: odd number of u64 values ({raw.size}), expected pairs")
    return raw.reshape(-1, 2).astype(np.int64)


def _rel_slug(r: Relation) -> str:
    return f"{r.src}-{r.name}-{r.dst}"


def save_fold_plan(fold: FoldPlan, splits: Sequence[EvalSplit], out_dir: str | Path, cfg: SplitConfig | None = None) -> Path:
    """Write a JSON manifest plus u64 little-endian pair files for a fold.

    Node lists are stored as ``(local index, base graph index)`` pairs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}

    def put(name: str, pairs: np.ndarray) -> None:
        fn = f"fold{fold.fold}_{name}.bin"
        _write_pairs(out / fn, pairs)
        files[name] = fn

    put("train_cases", np.stack([np.arange(len(fold.train_ids)), fold.train_ids], axis=1))
    put("inference_cases", np.stack([np.arange(len(fold.inference_ids)), fold.inference_ids], axis=1))
    put("test_cases", np.stack([np.flatnonzero(fold.test_mask), fold.test_ids], axis=1))
    for r in fold.targets:
        put(f"train_{_rel_slug(r)}", fold.train_graph.edge_array(r))
    split_entries = []
    for sp_ in splits:
        entry = {"index": sp_.index, "test_ratio": sp_.test_ratio, "seed": sp_.seed, "files": {}}
        for r in fold.targets:
            for kind, pairs in (("indicator", sp_.indicator_edges[r]), ("negatives", sp_.negatives[r])):
                name = f"split{sp_.index}_{kind}_{_rel_slug(r)}"
                put(name, pairs)
                entry["files"][f"{kind}/{r}"] = files[name]
        split_entries.append(entry)
    manifest = {
        "fold": fold.fold,
        "cutoff_date": fold.cutoff_date,
        "fold_seed": fold.seed,
        "seed_scheme": "fold_seed = SeedSequence([seed, fold]); split_seed = SeedSequence([fold_seed, 1, split, round(ratio*1e6)]); "
        "negative_seed = SeedSequence([split_seed, 2, relation_index])",
        "split_config": cfg.to_dict() if cfg else None,
        "targets": [str(r) for r in fold.targets],
        "files": files,
        "splits": split_entries,
    }
    path = out / f"fold{fold.fold}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_fold_manifest(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    manifest = json.loads(path.read_text())
    arrays = {name: read_pairs(path.parent / fn) for name, fn in manifest["files"].items()}
    return manifest, arrays

