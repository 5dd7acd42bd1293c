"""Render metric reports as JSON, CSV, a markdown table or plot series.

Timings are the only non-deterministic fields of a report.  Every emitter
takes ``timing``; with ``timing=False`` the output depends only on the
metrics and tags, so repeated seeded runs produce identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .metrics import MetricReport

FORMATS = ("json", "csv", "markdown", "plot-data")
FILE_NAMES = {"json": "report.json", "csv": "report.csv", "markdown": "report.md", "plot-data": "plot.json"}
TAG_ORDER = ("variant", "cumulative_train", "cumulative_test", "test_ratio", "fold", "split")
CELL_KEYS = ("variant", "cumulative_train", "cumulative_test", "test_ratio")
METRICS = ("AP", "AUC")
TIMING = ("train_seconds", "test_seconds")


def _tag_columns(reports: Sequence[MetricReport]) -> list[str]:
    seen = {k for r in reports for k in r.tags}
    return [k for k in TAG_ORDER if k in seen] + sorted(seen - set(TAG_ORDER))


def _relations(reports: Sequence[MetricReport]) -> list[str]:
    out: list[str] = []
    for r in reports:
        out.extend(k for k in r.per_relation if k not in out)
    return out


def _metric_values(r: MetricReport, relations: Sequence[str]) -> dict[str, float]:
    row: dict[str, float] = {}
    for rel in relations:
        for m in METRICS:
            row[f"{rel}:{m}"] = r.per_relation.get(rel, {}).get(m, math.nan)
    for agg in ("micro", "macro"):
        for m in METRICS:
            row[f"{agg}:{m}"] = getattr(r, agg).get(m, math.nan)
    return row


def report_rows(reports: Sequence[MetricReport], timing: bool = True) -> tuple[list[str], list[dict]]:
    """One flat row per report; column order is tags, metrics, counts, timings."""
    tags = _tag_columns(reports)
    rels = _relations(reports)
    columns = list(tags)
    columns += [f"{rel}:{m}" for rel in rels for m in METRICS]
    columns += [f"{agg}:{m}" for agg in ("micro", "macro") for m in METRICS]
    columns += [f"{rel}:n" for rel in rels]
    if timing:
        columns += list(TIMING)
    rows = []
    for r in reports:
        row: dict = {k: r.tags.get(k) for k in tags}
        row.update(_metric_values(r, rels))
        row.update({f"{rel}:n": r.counts.get(rel, 0) for rel in rels})
        if timing:
            row.update(train_seconds=r.train_seconds, test_seconds=r.test_seconds)
        rows.append(row)
    return columns, rows


def summarize_cells(reports: Sequence[MetricReport], timing: bool = True) -> tuple[list[str], list[dict]]:
    """Mean and population std per sweep cell, cells in first-seen order."""
    groups: dict[tuple, list[MetricReport]] = {}
    for r in reports:
        groups.setdefault(tuple(r.tags.get(k) for k in CELL_KEYS), []).append(r)
    keys = [k for k in CELL_KEYS if any(r.tags.get(k) is not None for r in reports)]
    rels = _relations(reports)
    value_cols = [f"{rel}:{m}" for rel in rels for m in METRICS]
    value_cols += [f"{agg}:{m}" for agg in ("micro", "macro") for m in METRICS]
    if timing:
        value_cols += list(TIMING)
    rows = []
    for key, rs in groups.items():
        row: dict = {k: v for k, v in zip(CELL_KEYS, key) if k in keys}
        row["n"] = len(rs)
        for c in value_cols:
            if c in TIMING:
                vals = np.array([getattr(r, c) for r in rs])
            else:
                vals = np.array([_metric_values(r, rels)[c] for r in rs])
            vals = vals[~np.isnan(vals)]
            row[c] = float(vals.mean()) if len(vals) else math.nan
            row[c + "_std"] = float(vals.std()) if len(vals) else math.nan
        rows.append(row)
    columns = keys + ["n"] + [x for c in value_cols for x in (c, c + "_std")]
    return columns, rows


# -- renderers --------------------------------------------------------------------


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def render_json(reports: Sequence[MetricReport], timing: bool = True) -> str:
    docs = []
    for r in reports:
        d = r.to_dict()
        if not timing:
            for k in TIMING:
                d.pop(k)
        docs.append(d)
    return json.dumps(_json_safe({"reports": docs}), indent=2, sort_keys=True) + "\n"


def render_csv(reports: Sequence[MetricReport], timing: bool = True) -> str:
    columns, rows = report_rows(reports, timing)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def _pct(mean: float, std: float) -> str:
    if math.isnan(mean):
        return "n/a"
    return f"{100 * mean:.1f} ± {100 * std:.1f}"


def _md_label(rel: str, rels: Sequence[str]) -> str:
    """Relation name alone when unambiguous; markdown cells cannot hold a bare ``|``."""
    parts = rel.split("|")
    if len(parts) == 3 and sum(r.split("|")[1:2] == parts[1:2] for r in rels) == 1:
        return parts[1]
    return rel.replace("|", "\\|")


def render_markdown(reports: Sequence[MetricReport], timing: bool = True) -> str:
    """Cell table: AP and AUC-ROC in percent (mean ± std), then mean times."""
    columns, rows = summarize_cells(reports, timing)
    keys = [c for c in columns if c in CELL_KEYS]
    rels = _relations(reports)
    groups = rels + ["macro"]
    header = keys + ["n"] + [f"{_md_label(g, rels)} {lab}" for g in groups for lab in ("AP", "AUC-ROC")]
    if timing:
        header += ["test time (s)", "train time (s)"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in rows:
        cells = [str(row[k]) for k in keys] + [str(row["n"])]
        for g in groups:
            cells += [_pct(row[f"{g}:{m}"], row[f"{g}:{m}_std"]) for m in METRICS]
        if timing:
            cells += [f"{row['test_seconds']:.2f}", f"{row['train_seconds']:.2f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def plot_series(reports: Sequence[MetricReport], x: str = "test_ratio", metric: str = "macro:AP") -> list[dict]:
    """x/y/err series over one sweep axis, one series per remaining cell key."""
    _, rows = summarize_cells(reports, timing=False)
    others = [k for k in CELL_KEYS if k != x]
    series: dict[tuple, dict] = {}
    for row in rows:
        if metric not in row:
            raise ConfigError(f"unknown metric column {metric!r}")
        key = tuple(row.get(k) for k in others)
        s = series.setdefault(key, {"label": {k: row.get(k) for k in others if row.get(k) is not None}, "x": [], "y": [], "err": []})
        s["x"].append(row.get(x))
        s["y"].append(row[metric])
        s["err"].append(row[metric + "_std"])
    out = []
    for s in series.values():
        order = sorted(range(len(s["x"])), key=lambda i: (s["x"][i] is None, 0 if s["x"][i] is None else s["x"][i]))
        for k in ("x", "y", "err"):
            s[k] = [s[k][i] for i in order]
        out.append(s)
    return out


def render_plot_data(reports: Sequence[MetricReport], timing: bool = True) -> str:
    metrics = ["macro:AP", "macro:AUC", "micro:AP", "micro:AUC"]
    doc = {"x": "test_ratio", "metrics": {m: plot_series(reports, "test_ratio", m) for m in metrics}}
    return json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n"


_RENDERERS = {"json": render_json, "csv": render_csv, "markdown": render_markdown, "plot-data": render_plot_data}


def render(reports: Sequence[MetricReport], fmt: str, timing: bool = True) -> str:
    if fmt not in _RENDERERS:
        raise ConfigError(f"unknown report format {fmt!r}; expected one of {list(FORMATS)}")
    return _RENDERERS[fmt](list(reports), timing)


def emit_report(
    reports: Sequence[MetricReport],
    formats: str | Sequence[str],
    out_dir: str | Path,
    timing: bool = True,
) -> list[Path]:
    """Write one file per format into ``out_dir``; returns the paths written."""
    if isinstance(formats, str):
        formats = [formats]
    texts = {fmt: render(reports, fmt, timing) for fmt in formats}  # validate all first
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt, text in texts.items():
        p = out / FILE_NAMES[fmt]
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths


def write_timings(reports: Sequence[MetricReport], path: str | Path) -> None:
    doc = [{"tags": dict(r.tags), "train_seconds": r.train_seconds, "test_seconds": r.test_seconds} for r in reports]
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- readers ----------------------------------------------------------------------


def read_json_reports(path: str | Path) -> list[MetricReport]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return [MetricReport.from_dict(_nan_back(d)) for d in doc["reports"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataError(f"{path}: not a report file ({e})") from None


def _nan_back(d: dict) -> dict:
    d = dict(d)
    for agg in ("micro", "macro"):
        d[agg] = {k: math.nan if v is None else v for k, v in d[agg].items()}
    d["per_relation"] = {r: {k: math.nan if v is None else v for k, v in m.items()} for r, m in d["per_relation"].items()}
    return d


def _parse_cell(text: str):
    if text == "":
        return None
    if text in ("True", "False"):
        return text == "True"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_csv_reports(path: str | Path) -> list[MetricReport]:
    """Inverse of the CSV renderer; numeric fields come back bit-exact."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        columns = reader.fieldnames or []
        rels = [c[: -len(":n")] for c in columns if c.endswith(":n")]
        metric_cols = {f"{rel}:{m}" for rel in rels for m in METRICS}
        metric_cols |= {f"{agg}:{m}" for agg in ("micro", "macro") for m in METRICS}
        reserved = metric_cols | {f"{rel}:n" for rel in rels} | set(TIMING)
        out = []
        for row in reader:
            out.append(
                MetricReport(
                    per_relation={rel: {m: float(row[f"{rel}:{m}"]) for m in METRICS} for rel in rels},
                    micro={m: float(row[f"micro:{m}"]) for m in METRICS},
                    macro={m: float(row[f"macro:{m}"]) for m in METRICS},
                    counts={rel: int(row[f"{rel}:n"]) for rel in rels},
                    train_seconds=float(row.get("train_seconds") or 0.0),
                    test_seconds=float(row.get("test_seconds") or 0.0),
                    tags={k: _parse_cell(v) for k, v in row.items() if k not in reserved},
                )
            )
    return out
