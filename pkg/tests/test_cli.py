import json

import pytest

from hgelink.cli import main
from hgelink.report import read_json_reports

CFG = {
    "split": {"n_folds": 3, "n_test_splits": 2},
    "train": {"epochs": 3, "learning_rate": 0.001, "encoder": {"layer_sizes": [8, 8]}},
    "sweeps": {"variants": ["full", "gcn"], "test_ratio": [0.5, 1.0]},
}


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["--out", str(root / "data"), "--seed", "2", "synth", "--cases", "200", "--laws", "20", "--categories", "3", "--feature-dim", "6"]) == 0
    (root / "cfg.json").write_text(json.dumps(CFG))
    return root


def test_enrich_summary(bundle):
    assert main(["--out", str(bundle / "enr"), "enrich", str(bundle / "data"), "--no-reverse"]) == 0
    doc = json.loads((bundle / "enr" / "enrichment.json").read_text())
    assert doc["enrichment"]["add_reverse"] is False
    assert doc["node_counts"]["court_type"] == 3
    assert "case|self|case" in doc["edge_counts"]


def test_split_writes_manifests(bundle):
    assert main(["--config", str(bundle / "cfg.json"), "--out", str(bundle / "folds"), "split", str(bundle / "data")]) == 0
    names = sorted(p.name for p in (bundle / "folds").glob("*.json"))
    assert names == ["fold1.json", "fold2.json"]


def test_train_then_evaluate(bundle):
    cfg = str(bundle / "cfg.json")
    assert main(["--config", cfg, "--out", str(bundle / "m"), "train", str(bundle / "data"), "--fold", "2"]) == 0
    meta = json.loads((bundle / "m" / "model.json").read_text())
    assert len(meta["history"]) == 3 and meta["fold"] == 2
    assert main(["--config", cfg, "--out", str(bundle / "ev"), "evaluate", str(bundle / "data"), "--model", str(bundle / "m")]) == 0
    reps = read_json_reports(bundle / "ev" / "report.json")
    assert [r.tags["split"] for r in reps] == [0, 1]


def test_run_is_byte_identical(bundle):
    args = ["--config", str(bundle / "cfg.json"), "--seed", "7"]
    assert main(args + ["--out", str(bundle / "r1"), "run", str(bundle / "data")]) == 0
    assert main(args + ["--out", str(bundle / "r2"), "run", str(bundle / "data")]) == 0
    for name in ("report.json", "report.csv", "report.md", "plot.json"):
        assert (bundle / "r1" / name).read_bytes() == (bundle / "r2" / name).read_bytes()
    assert len(read_json_reports(bundle / "r1" / "report.json")) == 2 * 2 * 2 * 2
    assert (bundle / "r1" / "timings.json").exists()


def test_report_rerenders(bundle):
    if not (bundle / "r1").exists():
        test_run_is_byte_identical(bundle)
    out = bundle / "rr"
    assert main(["--out", str(out), "report", str(bundle / "r1" / "report.csv"), "--format", "all", "--timings", str(bundle / "r1" / "timings.json")]) == 0
    assert "train time (s)" in (out / "report.md").read_text()
    assert (out / "report.md").read_text() != (bundle / "r1" / "report.md").read_text()


def test_exit_codes(bundle, tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert main(["--config", str(tmp_path / "none.json"), "run", str(bundle / "data")]) == 1
    (tmp_path / "bad.json").write_text('{"train": {"epochs": 0}}')
    assert main(["--config", str(tmp_path / "bad.json"), "run", str(bundle / "data")]) == 1
    assert main(["--out", str(tmp_path), "run", str(tmp_path / "nowhere")]) == 2
    assert main(["--out", str(tmp_path), "report", str(tmp_path / "nothing.json")]) == 2
    (tmp_path / "garbage.json").write_text("[1, 2")
    assert main(["--out", str(tmp_path), "report", str(tmp_path / "garbage.json")]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "data error" in err
