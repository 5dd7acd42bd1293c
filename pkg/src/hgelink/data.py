"""Dataset bundles on disk and a planted synthetic citation generator.

Bundle layout (all names relative to the bundle directory):

* ``nodes.jsonl``: one object per node, ``{"id", "type", "date", "meta"}``;
  ``type`` is ``case`` or ``law``, ``date`` is ``YYYY-MM-DD`` for cases.
* ``edges.csv``: header ``src_id,dst_id,relation`` with relation ``CC``
  (case cites case), ``CL`` (case cites law) or ``CCo`` (case decided by
  court).  Court ids become the ``court`` meta column of the case.
* ``features_<type>.hgef``: ``HGEF`` magic, u32 version, u64 rows, u64 cols,
  row-major little-endian float32; rows follow node file order per type.
* ``manifest.json``: file names, SHA-256 checksums, feature dims, date range.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .graph import CASE, CITES_CASE, CITES_LAW, LAW, HeteroGraph, build_graph

FEATURE_MAGIC = b"HGEF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
EPOCH = dt.date(1970, 1, 1)
COURT_COLUMN = "court"
RELATION_CODES = {"CC": CITES_CASE, "CL": CITES_LAW}


def day_to_iso(day: int) -> str:
    return (EPOCH + dt.timedelta(days=int(day))).isoformat()


def iso_to_day(text: str) -> int:
    return (dt.date.fromisoformat(text) - EPOCH).days


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- feature files ---------------------------------------------------------------


def write_features(path: str | Path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(np.asarray(x, dtype="<f4"))
    if x.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {x.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, *x.shape))
        f.write(x.tobytes())


def read_features(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: expected at least {_HEADER.size} header bytes, found {len(data)}")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported feature file version {version}")
    expected = _HEADER.size + rows * cols * 4
    if len(data) != expected:
        raise DataError(f"{path}: expected {expected} bytes for a {rows}x{cols} matrix, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).astype(np.float32)


# -- bundles ----------------------------------------------------------------------


@dataclass
class DatasetBundle:
    root: Path
    nodes: str = "nodes.jsonl"
    edges: str = "edges.csv"
    features: dict[str, str] = field(default_factory=dict)
    manifest: str = "manifest.json"

    def path(self, name: str) -> Path:
        return self.root / name

    def load(self) -> HeteroGraph:
        return load_dataset(self.root)


def save_dataset(g: HeteroGraph, out_dir: str | Path) -> DatasetBundle:
    """Write ``g`` (case and law nodes, CC/CL edges) as a dataset bundle."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for t in g.node_types:
        if t not in (CASE, LAW):
            raise DataError(f"bundles hold only case and law nodes, graph has {t!r}")
    for r in g.relations:
        if r not in RELATION_CODES.values():
            raise DataError(f"bundles hold only CC and CL edges, graph has {r}")
    bundle = DatasetBundle(root)
    offsets = {CASE: 0, LAW: g.node_counts.get(CASE, 0)}

    with open(bundle.path(bundle.nodes), "w", encoding="utf-8") as f:
        for t in (CASE, LAW):
            dates = g.dates.get(t)
            cols = g.meta.get(t, {})
            for i in range(g.node_counts.get(t, 0)):
                rec: dict = {"id": offsets[t] + i, "type": t}
                if dates is not None:
                    rec["date"] = day_to_iso(dates[i])
                rec["meta"] = {c: v[i] for c, v in cols.items() if v[i] is not None and c != COURT_COLUMN}
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    with open(bundle.path(bundle.edges), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["src_id", "dst_id", "relation"])
        for code, r in RELATION_CODES.items():
            if not g.has_relation(r):
                continue
            s, d = g.edges(r)
            for a, b in zip((s + offsets[r.src]).tolist(), (d + offsets[r.dst]).tolist()):
                w.writerow([a, b, code])
        courts = g.meta.get(CASE, {}).get(COURT_COLUMN)
        if courts is not None:
            for i, c in enumerate(courts):
                if c is not None:
                    w.writerow([i, c, "CCo"])

    for t, x in g.features.items():
        name = f"features_{t}.hgef"
        write_features(bundle.path(name), x)
        bundle.features[t] = name

    case_dates = g.dates.get(CASE)
    files = [bundle.nodes, bundle.edges, *bundle.features.values()]
    manifest = {
        "format": "hgelink-dataset",
        "version": 1,
        "nodes": bundle.nodes,
        "edges": bundle.edges,
        "features": bundle.features,
        "feature_dims": {t: int(x.shape[1]) for t, x in g.features.items()},
        "node_counts": {t: int(n) for t, n in g.node_counts.items()},
        "date_range": (
            [day_to_iso(case_dates.min()), day_to_iso(case_dates.max())]
            if case_dates is not None and len(case_dates)
            else None
        ),
        "checksums": {fn: _sha256(bundle.path(fn)) for fn in files},
    }
    bundle.path(bundle.manifest).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return bundle


def load_dataset(path: str | Path) -> HeteroGraph:
    """Load and validate a bundle directory (or its manifest file)."""
    path = Path(path)
    root = path.parent if path.is_file() else path
    manifest_path = path if path.is_file() else root / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise DataError(f"no manifest at {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path}: invalid JSON ({e})") from None

    for fn, digest in manifest.get("checksums", {}).items():
        p = root / fn
        if not p.exists():
            raise DataError(f"{p}: listed in manifest but missing")
        actual = _sha256(p)
        if actual != digest:
            raise DataError(f"{p}: checksum mismatch (manifest {digest[:12]}..., file {actual[:12]}...)")

    ids: dict[int, tuple[str, int]] = {}
    counts = {CASE: 0, LAW: 0}
    dates: list[int] = []
    meta: dict[str, list[dict]] = {CASE: [], LAW: []}
    with open(root / manifest["nodes"], encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                nid, t = int(rec["id"]), rec["type"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{manifest['nodes']}:{lineno}: malformed node record ({e})") from None
            if t not in counts:
                raise DataError(f"{manifest['nodes']}:{lineno}: unknown node type {t!r}")
            if nid in ids:
                raise DataError(f"{manifest['nodes']}:{lineno}: duplicate node id {nid}")
            ids[nid] = (t, counts[t])
            counts[t] += 1
            if t == CASE:
                if "date" not in rec:
                    raise DataError(f"{manifest['nodes']}:{lineno}: case {nid} has no date")
                try:
                    dates.append(iso_to_day(rec["date"]))
                except (TypeError, ValueError):
                    raise DataError(f"{manifest['nodes']}:{lineno}: bad date {rec['date']!r}") from None
            meta[t].append(dict(rec.get("meta") or {}))

    edges: dict = {CITES_CASE: [], CITES_LAW: []}
    courts: dict[int, str] = {}
    with open(root / manifest["edges"], newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["src_id", "dst_id", "relation"]:
            raise DataError(f"{manifest['edges']}:1: expected header src_id,dst_id,relation, got {header}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != 3:
                raise DataError(f"{manifest['edges']}:{lineno}: expected 3 fields, got {len(row)}")
            src, dst, code = row
            try:
                s = ids[int(src)]
            except (KeyError, ValueError):
                raise DataError(f"{manifest['edges']}:{lineno}: unknown source id {src!r}") from None
            if code == "CCo":
                if s[0] != CASE:
                    raise DataError(f"{manifest['edges']}:{lineno}: CCo edge must start at a case")
                courts[s[1]] = dst
                continue
            if code not in RELATION_CODES:
                raise DataError(f"{manifest['edges']}:{lineno}: unknown relation {code!r}")
            r = RELATION_CODES[code]
            try:
                d = ids[int(dst)]
            except (KeyError, ValueError):
                raise DataError(f"{manifest['edges']}:{lineno}: unknown destination id {dst!r}") from None
            if s[0] != r.src or d[0] != r.dst:
                raise DataError(f"{manifest['edges']}:{lineno}: {code} edge joins {s[0]} -> {d[0]}")
            edges[r].append((s[1], d[1]))

    features = {}
    for t, fn in manifest.get("features", {}).items():
        x = read_features(root / fn)
        if x.shape[0] != counts.get(t, -1):
            raise DataError(f"{fn}: {x.shape[0]} feature rows for {counts.get(t, 0)} {t} nodes")
        dim = manifest.get("feature_dims", {}).get(t)
        if dim is not None and dim != x.shape[1]:
            raise DataError(f"{fn}: feature dim {x.shape[1]} but manifest says {dim}")
        features[t] = x

    meta_cols: dict[str, dict[str, list]] = {}
    for t, rows in meta.items():
        names = sorted({k for row in rows for k in row})
        meta_cols[t] = {c: [row.get(c) for row in rows] for c in names}
    if courts:
        meta_cols[CASE][COURT_COLUMN] = [courts.get(i) for i in range(counts[CASE])]

    return build_graph(
        counts,
        {r: np.array(p, dtype=np.int64).reshape(-1, 2) for r, p in edges.items()},
        features,
        {CASE: dates},
        meta_cols,
    )


# -- synthetic data ---------------------------------------------------------------


@dataclass(frozen=True)
class Homophily:
    """Planted signal strengths of the synthetic generator.

    ``topic``: log-odds boost for citing a same-topic target.
    ``meta``: probability that a node's category follows its topic.
    ``popularity``: preferential-attachment exponent on ``in_degree + 1``.
    ``category``: log-odds boost for citing a target of the same category.
    """

    topic: float = 3.0
    meta: float = 0.9
    popularity: float = 1.0
    category: float = 1.0

    @classmethod
    def null(cls) -> "Homophily":
        return cls(0.0, 0.0, 0.0, 0.0)


def generate_synthetic_graph(
    n_cases: int = 5000,
    n_laws: int = 500,
    n_meta_categories: int = 10,
    feature_dim: int = 32,
    homophily: Homophily = Homophily(),
    seed: int = 0,
    *,
    n_topics: int | None = None,
    cc_per_case: float = 3.0,
    cl_per_case: float = 6.0,
    feature_noise: float = 3.0,
    start_day: int = 7300,
    span_days: int = 365 * 30,
) -> HeteroGraph:
    """Time-ordered citation graph with latent topics and categorical meta data.

    Each node draws a topic; its category (``court_type`` for cases,
    ``law_book`` for laws) equals ``topic % n_meta_categories`` with
    probability ``homophily.meta`` and is uniform otherwise.  Features are
    topic centroids plus Gaussian noise, scaled to unit length.

    Case ``i`` cites earlier cases and laws with probability proportional to
    ``(in_degree + 1) ** popularity * exp(topic * same_topic + category * same_category)``.
    """
    if n_cases < 2 or n_laws < 1 or n_meta_categories < 1 or feature_dim < 1:
        raise ConfigError("synthetic data needs >= 2 cases, >= 1 law, >= 1 category and feature_dim >= 1")
    if cl_per_case > n_laws:
        raise ConfigError(f"cl_per_case={cl_per_case} exceeds the {n_laws} available laws")
    if not 0 <= homophily.meta <= 1:
        raise ConfigError(f"meta homophily is a probability, got {homophily.meta}")
    rng = np.random.default_rng(seed)
    k = n_topics or n_meta_categories

    def categories(topics: np.ndarray) -> np.ndarray:
        follow = rng.random(len(topics)) < homophily.meta
        return np.where(follow, topics % n_meta_categories, rng.integers(0, n_meta_categories, len(topics)))

    case_topic = rng.integers(0, k, n_cases)
    law_topic = rng.integers(0, k, n_laws)
    case_cat = categories(case_topic)
    law_cat = categories(law_topic)
    centroids = rng.normal(size=(k, feature_dim))
    case_x = centroids[case_topic] + feature_noise * rng.normal(size=(n_cases, feature_dim))
    law_x = centroids[law_topic] + feature_noise * rng.normal(size=(n_laws, feature_dim))
    # unit rows, like sentence-embedding features
    case_x /= np.linalg.norm(case_x, axis=1, keepdims=True)
    law_x /= np.linalg.norm(law_x, axis=1, keepdims=True)
    dates = start_day + np.sort(rng.integers(0, span_days, n_cases))

    def affinity(topic: np.ndarray, cat: np.ndarray, i: int) -> np.ndarray:
        return np.exp(homophily.topic * (topic == case_topic[i]) + homophily.category * (cat == case_cat[i]))

    law_in = np.zeros(n_laws)
    case_in = np.zeros(n_cases)
    cl, cc = [], []
    for i in range(n_cases):
        n_cl = min(1 + rng.poisson(cl_per_case - 1), n_laws)
        w = (law_in + 1.0) ** homophily.popularity * affinity(law_topic, law_cat, i)
        for j in rng.choice(n_laws, size=n_cl, replace=False, p=w / w.sum()):
            cl.append((i, j))
            law_in[j] += 1
        if i == 0:
            continue
        n_cc = min(rng.poisson(cc_per_case), i)
        if n_cc:
            w = (case_in[:i] + 1.0) ** homophily.popularity * affinity(case_topic[:i], case_cat[:i], i)
            for j in rng.choice(i, size=n_cc, replace=False, p=w / w.sum()):
                cc.append((i, j))
                case_in[j] += 1

    return build_graph(
        {CASE: n_cases, LAW: n_laws},
        {CITES_CASE: np.array(cc, dtype=np.int64).reshape(-1, 2), CITES_LAW: np.array(cl, dtype=np.int64).reshape(-1, 2)},
        {CASE: case_x, LAW: law_x},
        {CASE: dates},
        {
            CASE: {"court_type": [f"court_{c:02d}" for c in case_cat]},
            LAW: {"law_book": [f"book_{c:02d}" for c in law_cat]},
        },
    )


def generate_synthetic(
    out_dir: str | Path,
    n_cases: int = 5000,
    n_laws: int = 500,
    n_meta_categories: int = 10,
    feature_dim: int = 32,
    homophily: Homophily = Homophily(),
    seed: int = 0,
    **kwargs,
) -> DatasetBundle:
    g = generate_synthetic_graph(n_cases, n_laws, n_meta_categories, feature_dim, homophily, seed, **kwargs)
    return save_dataset(g, out_dir)
