import json
import math

import numpy as np
import pytest

from hgelink.errors import ConfigError
from hgelink.metrics import aggregate
from hgelink.report import (
    emit_report,
    plot_series,
    read_csv_reports,
    read_json_reports,
    render,
    render_markdown,
    summarize_cells,
)

CC, CL = "case|cites_case|case", "case|cites_law|law"


def fake_reports(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for variant in ("full", "gcn"):
        for ratio in (0.5, 1.0):
            for split in range(3):
                sets = {}
                for rel in (CC, CL):
                    y = rng.integers(0, 2, 40)
                    y[:2] = [0, 1]
                    sets[rel] = (rng.random(40) + 0.3 * y, y)
                r = aggregate(sets)
                r.tags = {"variant": variant, "cumulative_train": True, "cumulative_test": True, "test_ratio": ratio, "fold": 1, "split": split}
                r.train_seconds, r.test_seconds = float(rng.random()), float(rng.random())
                out.append(r)
    return out


def test_empty_reports_render_valid_tables():
    for fmt in ("json", "csv", "markdown", "plot-data"):
        text = render([], fmt)
        assert text.endswith("\n")
    assert json.loads(render([], "json")) == {"reports": []}
    assert render([], "markdown").splitlines()[0].startswith("| n |")


def test_unknown_format():
    with pytest.raises(ConfigError):
        render([], "xlsx")
    with pytest.raises(ConfigError):
        emit_report([], ["json", "pdf"], "unused")


def test_json_csv_json_round_trip(tmp_path):
    reps = fake_reports()
    emit_report(reps, ["json", "csv"], tmp_path)
    from_json = read_json_reports(tmp_path / "report.json")
    from_csv = read_csv_reports(tmp_path / "report.csv")
    assert from_json == reps
    assert from_csv == reps
    assert render(from_csv, "json") == (tmp_path / "report.json").read_text()


def test_column_order_is_stable():
    reps = fake_reports()
    header = render(reps, "csv").splitlines()[0].split(",")
    assert header[:6] == ["variant", "cumulative_train", "cumulative_test", "test_ratio", "fold", "split"]
    assert header[6:10] == [f"{CC}:AP", f"{CC}:AUC", f"{CL}:AP", f"{CL}:AUC"]
    assert header[-2:] == ["train_seconds", "test_seconds"]
    assert render(reps[::-1], "csv").splitlines()[0] == ",".join(header)
    assert "train_seconds" not in render(reps, "csv", timing=False)


def test_markdown_table_layout():
    md = render_markdown(fake_reports())
    lines = md.splitlines()
    head = [c.strip() for c in lines[0].strip("|").split("|")]
    assert "cites_case AP" in head and "macro AUC-ROC" in head
    assert head[-2:] == ["test time (s)", "train time (s)"]
    assert len(lines) == 2 + 4
    assert all(line.count("|") == lines[0].count("|") for line in lines)
    assert "±" in lines[2]


def test_summary_statistics():
    reps = fake_reports()
    _, rows = summarize_cells(reps)
    first = rows[0]
    vals = [r.macro["AP"] for r in reps[:3]]
    assert first["n"] == 3
    assert first["macro:AP"] == pytest.approx(np.mean(vals))
    assert first["macro:AP_std"] == pytest.approx(np.std(vals))


def test_plot_series():
    series = plot_series(fake_reports(), "test_ratio", "macro:AUC")
    assert [s["label"]["variant"] for s in series] == ["full", "gcn"]
    for s in series:
        assert s["x"] == [0.5, 1.0]
        assert len(s["y"]) == len(s["err"]) == 2
    with pytest.raises(ConfigError):
        plot_series(fake_reports(), metric="nope")


def test_nan_survives_json(tmp_path):
    r = fake_reports()[0]
    r.macro["AP"] = math.nan
    emit_report([r], "json", tmp_path)
    back = read_json_reports(tmp_path / "report.json")[0]
    assert math.isnan(back.macro["AP"])
