"""Numerical kernels with hand-written gradients, Adam, and a gradient checker.

Dense matrices are plain numpy arrays (float32 for training, float64 for
gradient checking); every kernel preserves the input dtype.  Sparse
aggregation is backed by ``scipy.sparse`` CSR products, which are
single-threaded and therefore bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError
from .graph import HeteroGraph, Relation


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Sparse aggregation operator ``out = matrix @ x`` plus its transpose.

    Built by :meth:`mean` each row ``i`` averages the columns listed in CSR
    row ``i`` (scale ``1/deg(i)``); empty rows yield zero vectors.
    """

    matrix: sp.csr_matrix
    transpose: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @classmethod
    def from_matrix(cls, m: sp.spmatrix) -> "NormalizedAdjacency":
        m = sp.csr_matrix(m)
        m.sort_indices()
        t = sp.csr_matrix(m.T)
        t.sort_indices()
        return cls(m, t)

    @classmethod
    def mean(cls, indptr, indices, n_cols: int, dtype=np.float32) -> "NormalizedAdjacency":
        indptr = np.asarray(indptr, dtype=np.int64)
        deg = np.diff(indptr)
        scale = np.zeros(len(deg), dtype=np.float64)
        scale[deg > 0] = 1.0 / deg[deg > 0]
        data = np.repeat(scale, deg).astype(dtype)
        m = sp.csr_matrix((data, np.asarray(indices, dtype=np.int64), indptr), shape=(len(deg), n_cols))
        return cls.from_matrix(m)

    @classmethod
    def for_relation(cls, g: HeteroGraph, r: Relation, dtype=np.float32) -> "NormalizedAdjacency":
        """Destination-side mean aggregation: row ``i`` of type ``r.dst``
        averages the ``r.src`` nodes with an edge into ``i``."""
        a = g.adjacency(r)
        n_src, n_dst = g.num_nodes(r.src), g.num_nodes(r.dst)
        m = sp.csr_matrix((np.ones(a.nnz), a.indices, a.indptr), shape=(n_src, n_dst)).T.tocsr()
        m.sort_indices()
        return cls.mean(m.indptr, m.indices, n_src, dtype)

    @classmethod
    def symmetric(cls, indptr, indices, n: int, dtype=np.float32) -> "NormalizedAdjacency":
        """``D^-1/2 A D^-1/2`` for a symmetric pattern (GCN propagation)."""
        indptr = np.asarray(indptr, dtype=np.int64)
        deg = np.diff(indptr).astype(np.float64)
        inv = np.zeros_like(deg)
        inv[deg > 0] = deg[deg > 0] ** -0.5
        rows = np.repeat(np.arange(n), np.diff(indptr))
        indices = np.asarray(indices, dtype=np.int64)
        data = (inv[rows] * inv[indices]).astype(dtype)
        return cls.from_matrix(sp.csr_matrix((data, indices, indptr), shape=(n, n)))

    def astype(self, dtype) -> "NormalizedAdjacency":
        return NormalizedAdjacency(self.matrix.astype(dtype), self.transpose.astype(dtype))


def spmm(a: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    if a.shape[1] != x.shape[0]:
        raise DimensionError(f"adjacency {a.shape} cannot aggregate {x.shape[0]} rows")
    if a.matrix.nnz == 0:
        return np.zeros((a.shape[0], x.shape[1]), dtype=x.dtype)
    return np.asarray(a.matrix @ x, dtype=x.dtype)


def spmm_backward(a: NormalizedAdjacency, grad_out: np.ndarray) -> np.ndarray:
    if a.shape[0] != grad_out.shape[0]:
        raise DimensionError(f"adjacency {a.shape} cannot take gradient with {grad_out.shape[0]} rows")
    if a.transpose.nnz == 0:
        return np.zeros((a.shape[1], grad_out.shape[1]), dtype=grad_out.dtype)
    return np.asarray(a.transpose @ grad_out, dtype=grad_out.dtype)


def matmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"cannot multiply {x.shape} by {w.shape}")
    return x @ w


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype if x.dtype.kind == "f" else np.float64)


def dropout_mask(shape, p: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Keep-mask scaled by ``1/(1-p)``; multiply activations and gradients by it."""
    if not 0 <= p < 1:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    dtype = np.dtype(dtype)
    if p == 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    return keep.astype(dtype) * dtype.type(1.0 / (1.0 - p))


def dropout(x: np.ndarray, p: float, training: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    if not 0 <= p < 1:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    return x * dropout_mask(x.shape, p, rng, x.dtype)


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on logits and its gradient w.r.t. the logits."""
    z = np.asarray(logits)
    y = np.asarray(labels, dtype=z.dtype)
    if z.shape != y.shape:
        raise DimensionError(f"logits {z.shape} and labels {y.shape} differ")
    n = z.size
    if n == 0:
        raise DimensionError("empty batch")
    # log(1 + exp(-(2y-1) z)) = max(z, 0) - z*y + log1p(exp(-|z|))
    losses = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(np.sum(losses, dtype=np.float64) / n)
    grad = (sigmoid(z) - y) / z.dtype.type(n)
    return loss, grad


@dataclass
class Adam:
    """Adam with bias correction; moments are created lazily per parameter name."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads.get(k)
            if g is None:
                continue
            if g.shape != p.shape:
                raise DimensionError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def adam_step(state: Adam, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> Adam:
    state.step(params, grads)
    return state


def grad_check(
    forward: Callable[[Mapping[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-6,
    *,
    floor: float = 1e-6,
    kink_tol: float = 1e-2,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``forward`` maps a parameter dict to ``(loss, grads)``.  Parameters are
    promoted to float64.  Entries whose one-sided slopes disagree by more
    than ``kink_tol`` (relative) sit on a non-differentiable point, such as
    a relu input at exactly zero, and are skipped.  ``max_entries`` limits
    the number of probed entries per tensor (sampled with ``rng``).
    """
    theta = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    f0, analytic = forward(theta)
    worst = 0.0
    for k, p in theta.items():
        ga = np.asarray(analytic.get(k, np.zeros_like(p)), dtype=np.float64)
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            fp, _ = forward(theta)
            flat[i] = old - eps
            fm, _ = forward(theta)
            flat[i] = old
            slope_p, slope_m = (fp - f0) / eps, (f0 - fm) / eps
            gap = abs(slope_p - slope_m)
            if gap > kink_tol * max(abs(slope_p), abs(slope_m)) and gap > 100 * eps:
                continue
            numeric = (fp - fm) / (2 * eps)
            a = ga.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
