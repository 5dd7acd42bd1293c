"""Immutable heterogeneous graph with per-relation CSR adjacency.

Node types are identified by name; their dense index is their position in
``HeteroGraph.node_types``.  A relation is a directed ``(src, name, dst)``
triple whose adjacency is stored with source nodes as rows and sorted,
duplicate-free destination columns.
"""

from __future__ import annotations

import logging
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, GraphError, SchemaError

log = logging.getLogger(__name__)


class Relation(NamedTuple):
    src: str
    name: str
    dst: str

    def __str__(self) -> str:
        return f"{self.src}|{self.name}|{self.dst}"

    @classmethod
    def parse(cls, text: str) -> "Relation":
        parts = text.split("|")
        if len(parts) != 3:
            raise SchemaError(f"malformed relation name {text!r}")
        return cls(*parts)


# Canonical citation relations.
CASE, LAW = "case", "law"
CITES_CASE = Relation(CASE, "cites_case", CASE)
CITES_LAW = Relation(CASE, "cites_law", LAW)
TARGET_RELATIONS = (CITES_CASE, CITES_LAW)


class CSR(NamedTuple):
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.indptr) - 1, dtype=np.int64), np.diff(self.indptr))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def csr_from_pairs(src: np.ndarray, dst: np.ndarray, n_rows: int) -> tuple[CSR, int]:
    """Sort and deduplicate ``(src, dst)`` pairs into CSR; returns the duplicate count."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src):
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        keep = np.ones(len(src), dtype=bool)
        keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        dups = int(len(src) - keep.sum())
        src, dst = src[keep], dst[keep]
    else:
        dups = 0
    counts = np.bincount(src, minlength=n_rows)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return CSR(_frozen(indptr), _frozen(dst)), dups


class HeteroGraph:
    """Sealed heterogeneous graph.  Use :func:`build_graph` to construct one."""

    __slots__ = ("_counts", "_adj", "_features", "_dates", "_meta", "duplicates_dropped")

    def __init__(self, node_counts, adjacency, features, dates, meta, duplicates_dropped=None):
        self._counts = MappingProxyType(dict(node_counts))
        self._adj = MappingProxyType(dict(adjacency))
        self._features = MappingProxyType(dict(features))
        self._dates = MappingProxyType(dict(dates))
        self._meta = MappingProxyType({t: MappingProxyType(dict(cols)) for t, cols in meta.items()})
        self.duplicates_dropped = MappingProxyType(dict(duplicates_dropped or {}))

    # -- schema ---------------------------------------------------------
    @property
    def node_types(self) -> tuple[str, ...]:
        return tuple(self._counts)

    @property
    def node_counts(self) -> Mapping[str, int]:
        return self._counts

    @property
    def relations(self) -> tuple[Relation, ...]:
        return tuple(self._adj)

    @property
    def features(self) -> Mapping[str, np.ndarray]:
        return self._features

    @property
    def dates(self) -> Mapping[str, np.ndarray]:
        return self._dates

    @property
    def meta(self) -> Mapping[str, Mapping[str, np.ndarray]]:
        return self._meta

    def type_index(self, name: str) -> int:
        try:
            return self.node_types.index(name)
        except ValueError:
            raise SchemaError(f"unknown node type {name!r}") from None

    def num_nodes(self, node_type: str) -> int:
        try:
            return self._counts[node_type]
        except KeyError:
            raise SchemaError(f"unknown node type {node_type!r}") from None

    def has_relation(self, r: Relation) -> bool:
        return r in self._adj

    def adjacency(self, r: Relation) -> CSR:
        try:
            return self._adj[r]
        except KeyError:
            raise SchemaError(f"unknown relation {r}") from None

    # -- topology -------------------------------------------------------
    def _row(self, r: Relation, src: int) -> tuple[CSR, int]:
        a = self.adjacency(r)
        n = self._counts[r.src]
        if not 0 <= src < n:
            raise GraphError(f"source {src} out of range for {r} with {n} {r.src} nodes")
        return a, src

    def neighbors(self, r: Relation, src: int) -> np.ndarray:
        a, i = self._row(r, src)
        return a.indices[a.indptr[i] : a.indptr[i + 1]]

    def degree(self, r: Relation, src: int) -> int:
        a, i = self._row(r, src)
        return int(a.indptr[i + 1] - a.indptr[i])

    def out_degrees(self, r: Relation) -> np.ndarray:
        return np.diff(self.adjacency(r).indptr)

    def in_degrees(self, r: Relation) -> np.ndarray:
        return np.bincount(self.adjacency(r).indices, minlength=self._counts[r.dst])

    def num_edges(self, r: Relation | None = None) -> int:
        if r is None:
            return sum(a.nnz for a in self._adj.values())
        return self.adjacency(r).nnz

    def edges(self, r: Relation) -> tuple[np.ndarray, np.ndarray]:
        a = self.adjacency(r)
        return a.row_ids(), np.array(a.indices)

    def edge_array(self, r: Relation) -> np.ndarray:
        s, d = self.edges(r)
        return np.stack([s, d], axis=1)

    def to_edge_list(self) -> dict[Relation, np.ndarray]:
        return {r: self.edge_array(r) for r in self._adj}

    def edge_keys(self, r: Relation) -> np.ndarray:
        """Sorted int64 keys ``src * n_dst + dst`` for fast membership tests."""
        s, d = self.edges(r)
        return s * self._counts[r.dst] + d

    def __repr__(self) -> str:
        nodes = ", ".join(f"{t}={n}" for t, n in self._counts.items())
        rels = ", ".join(f"{r}={a.nnz}" for r, a in self._adj.items())
        return f"HeteroGraph(nodes: {nodes}; edges: {rels})"

    # -- derivation -----------------------------------------------------
    def replace(self, *, node_counts=None, adjacency=None, features=None, dates=None, meta=None) -> "HeteroGraph":
        """Shallow copy with some components swapped; arrays are shared."""
        return HeteroGraph(
            self._counts if node_counts is None else node_counts,
            self._adj if adjacency is None else adjacency,
            self._features if features is None else features,
            self._dates if dates is None else dates,
            self._meta if meta is None else meta,
        )


def build_graph(
    node_specs: Mapping[str, int],
    edge_lists: Mapping[Relation | tuple, Iterable] | None = None,
    features: Mapping[str, np.ndarray] | None = None,
    dates: Mapping[str, Sequence[int]] | None = None,
    meta: Mapping[str, Mapping[str, Sequence]] | None = None,
) -> HeteroGraph:
    """Validate inputs and seal them into a :class:`HeteroGraph`.

    ``edge_lists`` maps relations to ``(E, 2)`` integer arrays of
    ``(src, dst)`` pairs.  Duplicate pairs are dropped and counted in
    ``graph.duplicates_dropped``.  Missing meta values are ``None``.
    """
    counts = {}
    for t, n in node_specs.items():
        if n < 0:
            raise GraphError(f"negative node count for {t!r}")
        counts[str(t)] = int(n)

    adjacency: dict[Relation, CSR] = {}
    dropped: dict[Relation, int] = {}
    for r, pairs in (edge_lists or {}).items():
        r = Relation(*r)
        for t in (r.src, r.dst):
            if t not in counts:
                raise GraphError(f"relation {r} references undeclared node type {t!r}")
        if r in adjacency:
            raise GraphError(f"relation {r} given twice")
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        s, d = arr[:, 0], arr[:, 1]
        bad = (s < 0) | (s >= counts[r.src]) | (d < 0) | (d >= counts[r.dst])
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise GraphError(
                f"edge ({s[i]}, {d[i]}) out of range for relation {r} "
                f"with {counts[r.src]} {r.src} and {counts[r.dst]} {r.dst} nodes"
            )
        adjacency[r], dropped[r] = csr_from_pairs(s, d, counts[r.src])
        if dropped[r]:
            log.info("dropped %d duplicate edges in %s", dropped[r], r)

    feats = {}
    for t, x in (features or {}).items():
        if t not in counts:
            raise SchemaError(f"features given for undeclared node type {t!r}")
        x = np.asarray(x, dtype=np.float32)
        if x.ndim != 2 or x.shape[0] != counts[t]:
            raise DimensionError(f"feature matrix for {t!r} has shape {x.shape}, expected ({counts[t]}, d)")
        feats[t] = _frozen(x)

    date_arrays = {}
    for t, d in (dates or {}).items():
        if t not in counts:
            raise SchemaError(f"dates given for undeclared node type {t!r}")
        d = np.asarray(d, dtype=np.int64)
        if d.shape != (counts[t],):
            raise DimensionError(f"date vector for {t!r} has shape {d.shape}, expected ({counts[t]},)")
        date_arrays[t] = _frozen(d)

    meta_cols: dict[str, dict[str, np.ndarray]] = {}
    for t, cols in (meta or {}).items():
        if t not in counts:
            raise SchemaError(f"meta given for undeclared node type {t!r}")
        meta_cols[t] = {}
        for c, values in cols.items():
            v = np.empty(counts[t], dtype=object)
            values = list(values)
            if len(values) != counts[t]:
                raise DimensionError(f"meta column {t}.{c} has {len(values)} rows, expected {counts[t]}")
            v[:] = [None if x is None else str(x) for x in values]
            meta_cols[t][str(c)] = _frozen(v)

    return HeteroGraph(counts, adjacency, feats, date_arrays, meta_cols, dropped)


def induce_node_subset(
    g: HeteroGraph, keep: Mapping[str, np.ndarray]
) -> tuple[HeteroGraph, dict[str, np.ndarray]]:
    """Restrict ``g`` to the kept nodes of each type.

    Types missing from ``keep`` are kept whole.  Returns the new graph and,
    per type, an old->new index map with ``-1`` for dropped nodes.
    """
    masks = {}
    for t in g.node_types:
        if t in keep:
            m = np.asarray(keep[t], dtype=bool)
            if m.shape != (g.num_nodes(t),):
                raise DimensionError(f"mask for {t!r} has shape {m.shape}, expected ({g.num_nodes(t)},)")
        else:
            m = np.ones(g.num_nodes(t), dtype=bool)
        masks[t] = m
    for t in keep:
        if t not in masks:
            raise SchemaError(f"unknown node type {t!r}")

    maps = {}
    for t, m in masks.items():
        idx = np.full(len(m), -1, dtype=np.int64)
        idx[m] = np.arange(int(m.sum()), dtype=np.int64)
        maps[t] = idx

    counts = {t: int(m.sum()) for t, m in masks.items()}
    adjacency = {}
    for r in g.relations:
        s, d = g.edges(r)
        ok = masks[r.src][s] & masks[r.dst][d]
        # relabeling is monotone, so rows stay sorted and duplicate-free
        adjacency[r], _ = csr_from_pairs(maps[r.src][s[ok]], maps[r.dst][d[ok]], counts[r.src])
    features = {t: _frozen(x[masks[t]]) for t, x in g.features.items()}
    dates = {t: _frozen(x[masks[t]]) for t, x in g.dates.items()}
    meta = {t: {c: _frozen(v[masks[t]]) for c, v in cols.items()} for t, cols in g.meta.items()}
    return HeteroGraph(counts, adjacency, features, dates, meta), maps
