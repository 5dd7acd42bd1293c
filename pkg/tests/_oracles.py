"""Definitional O(n^2) metric oracles."""

import numpy as np


def ap_oracle(scores, labels):
    n = len(scores)
    pos = [i for i in range(n) if labels[i]]
    total = 0.0
    for i in pos:
        # rank of i: strictly higher scores, then ties earlier in input order
        ahead = [j for j in range(n) if scores[j] > scores[i] or (scores[j] == scores[i] and j <= i)]
        total += sum(1 for j in ahead if labels[j]) / len(ahead)
    return total / len(pos)


def auc_oracle(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def ap_oracle_np(scores, labels):
    """Same definition as :func:`ap_oracle`, as an n x n comparison matrix."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    idx = np.arange(len(s))
    ahead = (s[None, :] > s[:, None]) | ((s[None, :] == s[:, None]) & (idx[None, :] <= idx[:, None]))
    prec = (ahead & y[None, :]).sum(1) / ahead.sum(1)
    return prec[y].mean()


def auc_oracle_np(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    p, q = s[y][:, None], s[~y][None, :]
    return ((p > q).sum() + 0.5 * (p == q).sum()) / (p.size * q.size)


def random_instance(rng, n_max=500):
    n = int(rng.integers(2, n_max + 1))
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 1, 0
    rng.shuffle(labels)
    mode = rng.integers(0, 3)
    if mode == 0:
        scores = rng.random(n)
    elif mode == 1:
        scores = rng.integers(0, 4, n).astype(float)  # heavy ties
    else:
        scores = np.full(n, 0.5)  # all tied
    return scores, labels

