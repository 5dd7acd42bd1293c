"""Small random graphs shared by the test modules."""

import numpy as np

from hgelink.graph import CASE, CITES_CASE, CITES_LAW, LAW, build_graph


def random_graph(rng, n_case=None, n_law=None, *, n_cat=4, p_missing=0.2, feat_dim=3, density=2.0, dated=True):
    n_case = int(rng.integers(2, 30)) if n_case is None else n_case
    n_law = int(rng.integers(1, 12)) if n_law is None else n_law

    def pairs(n_src, n_dst, k):
        return np.stack([rng.integers(0, n_src, k), rng.integers(0, n_dst, k)], axis=1)

    def column(n):
        vals = [f"c{int(v)}" for v in rng.integers(0, n_cat, n)]
        return [None if rng.random() < p_missing else v for v in vals]

    return build_graph(
        {CASE: n_case, LAW: n_law},
        {
            CITES_CASE: pairs(n_case, n_case, int(density * n_case)),
            CITES_LAW: pairs(n_case, n_law, int(density * n_case)),
        },
        {CASE: rng.normal(size=(n_case, feat_dim)), LAW: rng.normal(size=(n_law, feat_dim))},
        {CASE: rng.integers(0, 400, n_case)} if dated else None,
        {CASE: {"court_type": column(n_case)}, LAW: {"law_book": column(n_law)}},
    )


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(k: int, ok: bool, detail: str) -> None:
    """Print and remember one pass/fail line; the summary hook echoes them."""
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
