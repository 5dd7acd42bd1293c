"""Relational graph encoders (HGE, RGCN, GCN), bilinear decoder and joint loss.

All three encoders share one layer routine::

    out_t = relu( [H_t]              # general residual (HGE)
                + [H_t @ W0_t]       # learned self-transform (RGCN)
                + sum_{r: dst(r)=t} mean_r(H_src(r)) @ W_r )

GCN collapses the graph to one node type with symmetric normalization and
self-loops, keeping a single weight per layer.  Gradients are written out
by hand for this fixed composition.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .enrichment import Homogenized, homogenize
from .errors import BatchError, ConfigError, DataError, DimensionError, SchemaError
from .graph import TARGET_RELATIONS, HeteroGraph, Relation
from .numerics import (
    NormalizedAdjacency,
    bce_with_logits,
    dropout_mask,
    relu,
    spmm,
    spmm_backward,
)

VARIANTS = ("HGE", "RGCN", "GCN")


@dataclass(frozen=True)
class EncoderConfig:
    variant: str = "HGE"
    layer_sizes: tuple[int, ...] = (256, 256, 256)
    dropout_p: float = 0.2
    use_residual: bool = True
    # collapse node and relation types before propagation (ablation)
    homogeneous: bool = False
    # dropout only on the final representations instead of after every layer
    dropout_final_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown encoder variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.layer_sizes or any(s <= 0 for s in self.layer_sizes):
            raise ConfigError(f"layer sizes must be a non-empty list of positive ints, got {self.layer_sizes}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError(f"dropout probability must be in [0, 1), got {self.dropout_p}")

    @property
    def residual(self) -> bool:
        return self.variant == "HGE" and self.use_residual

    @property
    def self_weight(self) -> bool:
        return self.variant == "RGCN"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "layer_sizes": list(self.layer_sizes),
            "dropout_p": self.dropout_p,
            "use_residual": self.use_residual,
            "homogeneous": self.homogeneous,
            "dropout_final_only": self.dropout_final_only,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncoderConfig":
        return cls(**{k: (tuple(v) if k == "layer_sizes" else v) for k, v in d.items()})


@dataclass
class Propagation:
    """A graph prepared for message passing: normalized operators and inputs."""

    types: tuple[str, ...]
    counts: dict[str, int]
    relations: tuple[Relation, ...]
    adj: dict[Relation, NormalizedAdjacency]
    features: dict[str, np.ndarray]
    # original type -> row offset, when the graph was collapsed to one type
    offsets: dict[str, int] | None = None
    original_counts: dict[str, int] = field(default_factory=dict)

    @property
    def dtype(self):
        for x in self.features.values():
            return x.dtype
        return np.dtype(np.float32)


def prepare(g: HeteroGraph, cfg: EncoderConfig, dtype=np.float32) -> Propagation:
    features = {t: np.asarray(x, dtype=dtype) for t, x in g.features.items()}
    original = dict(g.node_counts)
    if cfg.variant == "GCN" or cfg.homogeneous:
        h = homogenize(g, bidirected=True, self_loops=cfg.variant == "GCN")
        a = h.graph.adjacency(Homogenized.EDGE)
        n = h.graph.num_nodes(Homogenized.NODE)
        if cfg.variant == "GCN":
            op = NormalizedAdjacency.symmetric(a.indptr, a.indices, n, dtype)
        else:
            op = NormalizedAdjacency.for_relation(h.graph, Homogenized.EDGE, dtype)
        return Propagation(
            (Homogenized.NODE,), {Homogenized.NODE: n}, (Homogenized.EDGE,), {Homogenized.EDGE: op},
            features, dict(h.offsets), original,
        )
    adj = {r: NormalizedAdjacency.for_relation(g, r, dtype) for r in g.relations}
    return Propagation(g.node_types, original, g.relations, adj, features, None, original)


# -- parameters ---------------------------------------------------------------


def _layer_dims(cfg: EncoderConfig) -> list[tuple[int, int]]:
    sizes = cfg.layer_sizes
    return [(sizes[max(l - 1, 0)], sizes[l]) for l in range(len(sizes))]


@dataclass
class ModelParams:
    """Named parameter tensors.

    ``proj/<type>``: input projection; ``conv/<layer>/<relation>``: relation
    weight; ``self/<layer>/<type>``: RGCN self-transform; ``dec/<relation>``:
    bilinear decoder form.
    """

    tensors: dict[str, np.ndarray]

    @property
    def input_proj(self) -> dict[str, np.ndarray]:
        return {k[5:]: v for k, v in self.tensors.items() if k.startswith("proj/")}

    @property
    def conv_weights(self) -> dict[tuple[int, Relation], np.ndarray]:
        out = {}
        for k, v in self.tensors.items():
            if k.startswith("conv/"):
                _, l, r = k.split("/", 2)
                out[int(l), Relation.parse(r)] = v
        return out

    @property
    def decoder_forms(self) -> dict[Relation, np.ndarray]:
        return {Relation.parse(k[4:]): v for k, v in self.tensors.items() if k.startswith("dec/")}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __len__(self) -> int:
        return len(self.tensors)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: np.array(v, dtype=dtype) for k, v in self.tensors.items()})

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(params_to_bytes(self))

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        return params_from_bytes(Path(path).read_bytes())


def param_shapes(
    prop: Propagation, cfg: EncoderConfig, targets=TARGET_RELATIONS
) -> dict[str, tuple[int, int]]:
    sizes = cfg.layer_sizes
    shapes: dict[str, tuple[int, int]] = {}
    for t, x in prop.features.items():
        shapes[f"proj/{t}"] = (x.shape[1], sizes[0])
    for l, (d_in, d_out) in enumerate(_layer_dims(cfg)):
        if cfg.residual and d_in != d_out:
            raise DimensionError(f"residual layer {l} needs equal sizes, got {d_in}->{d_out}")
        for r in prop.relations:
            shapes[f"conv/{l}/{r}"] = (d_in, d_out)
        if cfg.self_weight:
            for t in prop.types:
                shapes[f"self/{l}/{t}"] = (d_in, d_out)
    for r in targets:
        shapes[f"dec/{Relation(*r)}"] = (sizes[-1], sizes[-1])
    return shapes


def init_params(
    cfg: EncoderConfig,
    graph: HeteroGraph | Propagation,
    rng: np.random.Generator,
    targets=TARGET_RELATIONS,
    dtype=np.float32,
) -> ModelParams:
    """Glorot-uniform initialization, bound ``sqrt(6 / (fan_in + fan_out))``."""
    prop = graph if isinstance(graph, Propagation) else prepare(graph, cfg, dtype)
    tensors = {}
    for name, (fan_in, fan_out) in param_shapes(prop, cfg, targets).items():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
    return ModelParams(tensors)


def check_schema(params: ModelParams, prop: Propagation, cfg: EncoderConfig) -> None:
    targets = tuple(params.decoder_forms)
    expected = param_shapes(prop, cfg, targets)
    missing = sorted(set(expected) - set(params.tensors))
    extra = sorted(set(params.tensors) - set(expected))
    if missing or extra:
        raise SchemaError(f"parameters do not match graph schema (missing {missing}, unexpected {extra})")
    for k, shape in expected.items():
        if params.tensors[k].shape != shape:
            raise DimensionError(f"parameter {k} has shape {params.tensors[k].shape}, expected {shape}")


# -- encoder ------------------------------------------------------------------


@dataclass
class _LayerCache:
    inputs: dict[str, np.ndarray]
    aggregates: dict[Relation, np.ndarray]
    pre: dict[str, np.ndarray]
    masks: dict[str, np.ndarray | None]


@dataclass
class EncoderState:
    """Forward activations kept for the backward pass."""

    prop: Propagation
    cfg: EncoderConfig
    layers: list[_LayerCache]
    reps: dict[str, np.ndarray]


NodeRepresentations = dict  # node type -> (n_nodes, d) final embeddings


def _project(prop: Propagation, params: ModelParams, d0: int) -> dict[str, np.ndarray]:
    h = {}
    for t, n in prop.original_counts.items():
        if t in prop.features:
            h[t] = prop.features[t] @ params.tensors[f"proj/{t}"]
        else:
            # featureless (meta) nodes start from zero
            h[t] = np.zeros((n, d0), dtype=prop.dtype)
    if prop.offsets is not None:
        order = sorted(prop.offsets, key=prop.offsets.get)
        h = {Homogenized.NODE: np.concatenate([h[t] for t in order], axis=0)}
    return h


def conv_layer(
    prop: Propagation,
    h: Mapping[str, np.ndarray],
    params: ModelParams,
    layer: int,
    cfg: EncoderConfig,
) -> tuple[dict[str, np.ndarray], dict[Relation, np.ndarray], dict[str, np.ndarray]]:
    """One propagation step; returns (activations, aggregates, pre-activations)."""
    w = params.tensors
    aggregates = {}
    pre = {}
    d_out = _layer_dims(cfg)[layer][1]
    for t in prop.types:
        acc = h[t].copy() if cfg.residual else np.zeros((prop.counts[t], d_out), dtype=h[t].dtype)
        if cfg.self_weight:
            acc += h[t] @ w[f"self/{layer}/{t}"]
        pre[t] = acc
    for r in prop.relations:
        m = spmm(prop.adj[r], h[r.src])
        aggregates[r] = m
        pre[r.dst] += m @ w[f"conv/{layer}/{r}"]
    return {t: relu(p) for t, p in pre.items()}, aggregates, pre


def hge_layer(g: HeteroGraph | Propagation, h, params: ModelParams, layer: int = 0, cfg: EncoderConfig | None = None):
    """Residual relational convolution: ``relu(H + sum_r mean_r(H_src) W_r)``."""
    cfg = cfg or EncoderConfig(variant="HGE")
    if cfg.variant != "HGE":
        raise ConfigError("hge_layer needs an HGE config")
    prop = g if isinstance(g, Propagation) else prepare(g, cfg, next(iter(h.values())).dtype)
    return conv_layer(prop, h, params, layer, cfg)[0]


def rgcn_layer(g: HeteroGraph | Propagation, h, params: ModelParams, layer: int = 0, cfg: EncoderConfig | None = None):
    """Relational convolution with learned self-transform: ``relu(H W0 + sum_r mean_r(H_src) W_r)``."""
    cfg = cfg or EncoderConfig(variant="RGCN")
    if cfg.variant != "RGCN":
        raise ConfigError("rgcn_layer needs an RGCN config")
    prop = g if isinstance(g, Propagation) else prepare(g, cfg, next(iter(h.values())).dtype)
    return conv_layer(prop, h, params, layer, cfg)[0]


def encode_with_state(
    prop: Propagation,
    params: ModelParams,
    cfg: EncoderConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> EncoderState:
    use_dropout = training and cfg.dropout_p > 0
    if use_dropout and rng is None:
        raise ConfigError("training-mode encoding needs an rng for dropout")
    h = _project(prop, params, cfg.layer_sizes[0])
    layers = []
    n_layers = len(cfg.layer_sizes)
    for l in range(n_layers):
        out, aggregates, pre = conv_layer(prop, h, params, l, cfg)
        masks: dict[str, np.ndarray | None] = {t: None for t in prop.types}
        if use_dropout and (not cfg.dropout_final_only or l == n_layers - 1):
            for t in prop.types:
                masks[t] = dropout_mask(out[t].shape, cfg.dropout_p, rng, out[t].dtype)
                out[t] = out[t] * masks[t]
        layers.append(_LayerCache(h, aggregates, pre, masks))
        h = out
    if prop.offsets is not None:
        z = h[Homogenized.NODE]
        reps = {t: z[o : o + prop.original_counts[t]] for t, o in prop.offsets.items()}
    else:
        reps = dict(h)
    return EncoderState(prop, cfg, layers, reps)


def encode(
    g: HeteroGraph | Propagation,
    params: ModelParams,
    cfg: EncoderConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> NodeRepresentations:
    """Final-layer representations per node type."""
    dtype = next(iter(params.tensors.values())).dtype
    prop = g if isinstance(g, Propagation) else prepare(g, cfg, dtype)
    return encode_with_state(prop, params, cfg, training, rng).reps


def encode_backward(state: EncoderState, params: ModelParams, grad_reps: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Parameter gradients given gradients w.r.t. the final representations."""
    prop, cfg = state.prop, state.cfg
    w = params.tensors
    grads = {k: np.zeros_like(v) for k, v in w.items() if not k.startswith("dec/")}

    if prop.offsets is not None:
        z = state.reps[next(iter(state.reps))]
        total = prop.counts[Homogenized.NODE]
        g = np.zeros((total, z.shape[1]), dtype=z.dtype)
        for t, o in prop.offsets.items():
            if t in grad_reps:
                g[o : o + prop.original_counts[t]] += grad_reps[t]
        grad_h = {Homogenized.NODE: g}
    else:
        grad_h = {}
        for t in prop.types:
            z = state.reps[t]
            grad_h[t] = np.asarray(grad_reps[t], dtype=z.dtype) if t in grad_reps else np.zeros_like(z)

    for l in reversed(range(len(state.layers))):
        cache = state.layers[l]
        g_pre = {}
        for t in prop.types:
            g = grad_h[t]
            if cache.masks[t] is not None:
                g = g * cache.masks[t]
            g_pre[t] = g * (cache.pre[t] > 0)
        grad_in = {}
        for t in prop.types:
            grad_in[t] = g_pre[t].copy() if cfg.residual else np.zeros_like(cache.inputs[t])
            if cfg.self_weight:
                grads[f"self/{l}/{t}"] += cache.inputs[t].T @ g_pre[t]
                grad_in[t] += g_pre[t] @ w[f"self/{l}/{t}"].T
        for r in prop.relations:
            name = f"conv/{l}/{r}"
            grads[name] += cache.aggregates[r].T @ g_pre[r.dst]
            grad_in[r.src] += spmm_backward(prop.adj[r], g_pre[r.dst] @ w[name].T)
        grad_h = grad_in

    if prop.offsets is not None:
        g = grad_h[Homogenized.NODE]
        grad_h = {t: g[o : o + prop.original_counts[t]] for t, o in prop.offsets.items()}
    for t, x in prop.features.items():
        grads[f"proj/{t}"] += x.T @ grad_h[t]
    return grads


# -- decoder ------------------------------------------------------------------


def decode(z_src: np.ndarray, z_dst: np.ndarray, w_dec: np.ndarray) -> np.ndarray:
    """Bilinear logits ``z_src^T W z_dst``, row-wise for batches."""
    z_src = np.asarray(z_src)
    z_dst = np.asarray(z_dst)
    if z_src.shape[-1] != w_dec.shape[0] or z_dst.shape[-1] != w_dec.shape[1]:
        raise DimensionError(f"decoder form {w_dec.shape} does not fit {z_src.shape} x {z_dst.shape}")
    if z_src.shape != z_dst.shape:
        raise DimensionError(f"source batch {z_src.shape} and destination batch {z_dst.shape} differ")
    return np.sum((z_src @ w_dec) * z_dst, axis=-1)


def score_pairs(reps: NodeRepresentations, params: ModelParams, r: Relation, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return decode(reps[r.src][pairs[:, 0]], reps[r.dst][pairs[:, 1]], params.tensors[f"dec/{r}"])


@dataclass
class LossResult:
    loss: float
    grads: dict[str, np.ndarray]
    per_relation: dict[Relation, float]


def joint_loss(
    g: HeteroGraph | Propagation,
    params: ModelParams,
    cfg: EncoderConfig,
    batches: Mapping[Relation, tuple[np.ndarray, np.ndarray]],
    rng: np.random.Generator | None = None,
    *,
    training: bool = True,
    weights: Mapping[Relation, float] | None = None,
) -> LossResult:
    """Summed per-relation BCE over positive and negative pairs, with gradients.

    ``batches`` maps each included target relation to ``(pos, neg)`` pair
    arrays of equal length.  Relations absent from ``batches`` contribute
    nothing, which gives separate (single-relation) training.
    """
    dtype = next(iter(params.tensors.values())).dtype
    prop = g if isinstance(g, Propagation) else prepare(g, cfg, dtype)
    if not batches:
        raise BatchError("no relation batches given")
    state = encode_with_state(prop, params, cfg, training, rng)
    z = state.reps
    grad_z = {t: np.zeros_like(v) for t, v in z.items()}
    grads_dec = {k: np.zeros_like(v) for k, v in params.tensors.items() if k.startswith("dec/")}
    total = 0.0
    per_relation = {}
    for r, (pos, neg) in batches.items():
        r = Relation(*r)
        pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
        neg = np.asarray(neg, dtype=np.int64).reshape(-1, 2)
        if len(pos) == 0 or len(neg) == 0:
            raise BatchError(f"empty batch for relation {r}")
        if len(pos) != len(neg):
            raise BatchError(f"unbalanced batch for {r}: {len(pos)} positives, {len(neg)} negatives")
        weight = 1.0 if weights is None else float(weights.get(r, 1.0))
        pairs = np.concatenate([pos, neg])
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))]).astype(dtype)
        w_dec = params.tensors[f"dec/{r}"]
        zs, zd = z[r.src], z[r.dst]
        zs_w = zs @ w_dec
        logits = np.sum(zs_w[pairs[:, 0]] * zd[pairs[:, 1]], axis=1)
        loss, g_logit = bce_with_logits(logits, labels)
        per_relation[r] = loss
        total += weight * loss
        # coefficient matrix C[u, v] = dL/dlogit(u, v); duplicates are summed
        c = sp.csr_matrix(
            (g_logit * dtype.type(weight), (pairs[:, 0], pairs[:, 1])), shape=(len(zs), len(zd))
        )
        grad_zs_w = np.asarray(c @ zd, dtype=dtype)
        grads_dec[f"dec/{r}"] += zs.T @ grad_zs_w
        grad_z[r.src] += grad_zs_w @ w_dec.T
        grad_z[r.dst] += np.asarray(c.T @ zs_w, dtype=dtype)
    grads = encode_backward(state, params, grad_z)
    grads.update(grads_dec)
    return LossResult(total, grads, per_relation)


# -- checkpoint format ----------------------------------------------------------

CHECKPOINT_MAGIC = b"HGEP"
CHECKPOINT_VERSION = 1


def params_to_bytes(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    for name, t in params.tensors.items():
        raw = name.encode("utf-8")
        t = np.asarray(t, dtype="<f4")
        if t.ndim != 2:
            raise DimensionError(f"tensor {name} is not a matrix")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<QQ", *t.shape))
        buf.write(np.ascontiguousarray(t).tobytes())
    return buf.getvalue()


def params_from_bytes(data: bytes) -> ModelParams:
    if data[:4] != CHECKPOINT_MAGIC:
        raise DataError("not a parameter checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    pos = 8
    tensors = {}
    while pos < len(data):
        if pos + 2 > len(data):
            raise DataError(f"truncated checkpoint at offset {pos}")
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + n].decode("utf-8")
        pos += n
        if pos + 16 > len(data):
            raise DataError(f"truncated checkpoint header for {name!r} at offset {pos}")
        rows, cols = struct.unpack_from("<QQ", data, pos)
        pos += 16
        size = rows * cols * 4
        if pos + size > len(data):
            raise DataError(f"tensor {name!r}: expected {size} bytes at offset {pos}, found {len(data) - pos}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float32)
        pos += size
    return ModelParams(tensors)

