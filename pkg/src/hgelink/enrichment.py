"""Graph enrichment: exposed meta-feature nodes, reverse relations, self-loops."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError, SchemaError
from .graph import CSR, HeteroGraph, Relation, csr_from_pairs

REVERSE_SUFFIX = "_rev"
SELF = "self"


@dataclass(frozen=True)
class MetaFeature:
    source_type: str
    column: str
    new_type_name: str = ""

    @property
    def node_type(self) -> str:
        return self.new_type_name or self.column

    @property
    def relation(self) -> Relation:
        return Relation(self.source_type, "has_" + self.column, self.node_type)


@dataclass(frozen=True)
class EnrichmentSpec:
    meta_features: tuple[MetaFeature, ...] = ()
    add_reverse: bool = True
    add_self_loops: bool = True

    def __post_init__(self):
        object.__setattr__(self, "meta_features", tuple(self.meta_features))
        names = [mf.node_type for mf in self.meta_features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate meta-feature node types {names}")

    @classmethod
    def none(cls) -> "EnrichmentSpec":
        return cls((), add_reverse=False, add_self_loops=False)

    def to_dict(self) -> dict:
        return {
            "meta_features": [[mf.source_type, mf.column, mf.new_type_name] for mf in self.meta_features],
            "add_reverse": self.add_reverse,
            "add_self_loops": self.add_self_loops,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnrichmentSpec":
        return cls(
            tuple(MetaFeature(*row) for row in d.get("meta_features", ())),
            add_reverse=bool(d.get("add_reverse", True)),
            add_self_loops=bool(d.get("add_self_loops", True)),
        )


def expose_meta_feature(g: HeteroGraph, mf: MetaFeature) -> tuple[HeteroGraph, dict[str, int]]:
    """Materialize one categorical column as nodes plus membership edges.

    One node is created per distinct non-missing value, numbered in
    lexicographic order; each node with a value gets exactly one edge to it.
    """
    cols = g.meta.get(mf.source_type, {})
    if mf.column not in cols:
        raise SchemaError(f"meta column {mf.column!r} not present on node type {mf.source_type!r}")
    new_type = mf.node_type
    if new_type in g.node_counts:
        raise SchemaError(f"node type {new_type!r} already exists")
    rel = mf.relation
    if g.has_relation(rel):
        raise GraphError(f"relation {rel} already exists")

    values = cols[mf.column]
    present = np.array([v is not None for v in values], dtype=bool)
    categories = sorted({v for v in values[present]})
    index = {c: i for i, c in enumerate(categories)}
    src = np.flatnonzero(present).astype(np.int64)
    dst = np.array([index[v] for v in values[present]], dtype=np.int64)

    counts = dict(g.node_counts)
    counts[new_type] = len(categories)
    adjacency = dict((r, g.adjacency(r)) for r in g.relations)
    adjacency[rel], _ = csr_from_pairs(src, dst, counts[mf.source_type])
    return g.replace(node_counts=counts, adjacency=adjacency), index


def _transpose(a: CSR, n_cols: int) -> CSR:
    rows = a.row_ids()
    t, _ = csr_from_pairs(a.indices, rows, n_cols)
    return t


def add_reverse_relations(g: HeteroGraph) -> HeteroGraph:
    """Add a transposed ``name + "_rev"`` relation for every relation."""
    adjacency = {r: g.adjacency(r) for r in g.relations}
    for r in g.relations:
        if r.name.endswith(REVERSE_SUFFIX):
            raise GraphError(f"relation {r} is already a reverse relation; reversal applied twice?")
        rev = Relation(r.dst, r.name + REVERSE_SUFFIX, r.src)
        if rev in adjacency:
            raise GraphError(f"reverse relation {rev} collides with an existing relation")
        adjacency[rev] = _transpose(g.adjacency(r), g.num_nodes(r.dst))
    return g.replace(adjacency=adjacency)


def add_self_loops(g: HeteroGraph) -> HeteroGraph:
    adjacency = {r: g.adjacency(r) for r in g.relations}
    for t, n in g.node_counts.items():
        r = Relation(t, SELF, t)
        if r in adjacency:
            raise GraphError(f"self-loop relation {r} already exists")
        ids = np.arange(n, dtype=np.int64)
        adjacency[r], _ = csr_from_pairs(ids, ids, n)
    return g.replace(adjacency=adjacency)


def enrich(g: HeteroGraph, spec: EnrichmentSpec) -> HeteroGraph:
    """Apply exposure (in spec order), then reverse relations, then self-loops."""
    for mf in spec.meta_features:
        g, _ = expose_meta_feature(g, mf)
    if spec.add_reverse:
        g = add_reverse_relations(g)
    if spec.add_self_loops:
        g = add_self_loops(g)
    return g


@dataclass(frozen=True)
class Homogenized:
    """All node types stacked into one index space with a single relation."""

    graph: HeteroGraph
    offsets: dict[str, int] = field(default_factory=dict)

    NODE = "node"
    EDGE = Relation("node", "edge", "node")


def homogenize(g: HeteroGraph, *, bidirected: bool = True, self_loops: bool = False) -> Homogenized:
    """Collapse ``g`` into one node type and one relation.

    Node ``i`` of type ``t`` becomes ``offsets[t] + i``.  Type information,
    features and meta columns are discarded.
    """
    offsets, total = {}, 0
    for t, n in g.node_counts.items():
        offsets[t] = total
        total += n
    src, dst = [], []
    for r in g.relations:
        s, d = g.edges(r)
        src.append(s + offsets[r.src])
        dst.append(d + offsets[r.dst])
        if bidirected:
            src.append(d + offsets[r.dst])
            dst.append(s + offsets[r.src])
    if self_loops:
        ids = np.arange(total, dtype=np.int64)
        src.append(ids)
        dst.append(ids)
    s = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    d = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
    adj, _ = csr_from_pairs(s, d, total)
    hg = HeteroGraph({Homogenized.NODE: total}, {Homogenized.EDGE: adj}, {}, {}, {})
    return Homogenized(hg, offsets)
