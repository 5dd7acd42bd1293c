"""Command-line entry point: ``hgelink <subcommand>``.

Exit status is 0 on success, 1 for configuration errors and 2 for data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .data import Homophily, generate_synthetic, load_dataset
from .enrichment import EnrichmentSpec, enrich
from .errors import ConfigError, DataError, GraphError, HGEError, SchemaError
from .experiment import VARIANTS, ExperimentConfig, run_experiment, summarize
from .graph import Relation
from .model import EncoderConfig, ModelParams
from .report import FORMATS, emit_report, read_csv_reports, read_json_reports, write_timings
from .splits import build_fold, make_test_split, save_fold_plan
from .training import TrainResult, evaluate, train

log = logging.getLogger("hgelink")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        raise ConfigError(f"{self.prog}: {message}")


def _load_config(path: str | None, seed: int | None) -> ExperimentConfig:
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    cfg = ExperimentConfig.from_dict(doc)
    if seed is not None:
        cfg = replace(cfg, split=replace(cfg.split, seed=seed), train=replace(cfg.train, seed=seed))
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- subcommands ------------------------------------------------------------------


def cmd_synth(args, cfg: ExperimentConfig) -> None:
    h = Homophily.null() if args.null else Homophily(args.topic, args.meta, args.popularity, args.category)
    seed = args.seed if args.seed is not None else 0
    bundle = generate_synthetic(_out(args), args.cases, args.laws, args.categories, args.feature_dim, h, seed)
    print(f"wrote synthetic bundle to {bundle.root}")


def _enrichment(args, cfg: ExperimentConfig, g) -> EnrichmentSpec:
    spec = cfg.train.enrichment_for(g)
    if getattr(args, "no_exposed", False):
        spec = replace(spec, meta_features=())
    if getattr(args, "no_reverse", False):
        spec = replace(spec, add_reverse=False)
    if getattr(args, "no_self_loops", False):
        spec = replace(spec, add_self_loops=False)
    return spec


def cmd_enrich(args, cfg: ExperimentConfig) -> None:
    g = load_dataset(args.data)
    spec = _enrichment(args, cfg, g)
    e = enrich(g, spec)
    doc = {
        "enrichment": spec.to_dict(),
        "node_counts": dict(e.node_counts),
        "edge_counts": {str(r): e.num_edges(r) for r in e.relations},
    }
    _write_json(_out(args) / "enrichment.json", doc)
    print(e)


def _folds(args, cfg: ExperimentConfig) -> list[int]:
    if args.fold is not None:
        return [args.fold]
    return list(cfg.folds or cfg.split.folds)


def cmd_split(args, cfg: ExperimentConfig) -> None:
    g = load_dataset(args.data)
    out = _out(args)
    for k in _folds(args, cfg):
        fold = build_fold(g, k, cfg.split)
        splits = [make_test_split(fold, i, cfg.split.test_ratio) for i in range(cfg.split.n_test_splits)]
        print(f"wrote {save_fold_plan(fold, splits, out, cfg.split)}")


def cmd_train(args, cfg: ExperimentConfig) -> None:
    g = load_dataset(args.data)
    tc = cfg.train
    if args.epochs is not None:
        tc = replace(tc, epochs=args.epochs)
    fold = build_fold(g, args.fold, cfg.split)
    tc = VARIANTS[args.variant](tc, fold.train_graph)
    targets = [Relation.parse(t) for t in args.target] if args.target else None
    res = train(fold, tc, targets)
    out = _out(args)
    res.params.save(out / "model.hgep")
    _write_json(
        out / "model.json",
        {
            "fold": fold.fold,
            "variant": args.variant,
            "train": tc.to_dict(),
            "encoder": res.encoder.to_dict(),
            "enrichment": res.enrichment.to_dict(),
            "targets": [str(r) for r in res.targets],
            "history": res.history,
        },
    )
    print(f"trained fold {fold.fold} in {res.seconds:.1f}s, final loss {res.history[-1]:.4f}")


def cmd_evaluate(args, cfg: ExperimentConfig) -> None:
    g = load_dataset(args.data)
    model_dir = Path(args.model)
    try:
        meta = json.loads((model_dir / "model.json").read_text())
    except FileNotFoundError:
        raise DataError(f"{model_dir}: no model.json (run `train` first)") from None
    params = ModelParams.load(model_dir / "model.hgep")
    fold = build_fold(g, meta["fold"], cfg.split)
    res = TrainResult(
        params,
        meta["history"],
        0.0,
        EnrichmentSpec.from_dict(meta["enrichment"]),
        EncoderConfig.from_dict(meta["encoder"]),
        tuple(Relation.parse(t) for t in meta["targets"]),
    )
    ratio = cfg.split.test_ratio if args.test_ratio is None else args.test_ratio
    indices = [args.split] if args.split is not None else range(cfg.split.n_test_splits)
    reports = []
    for i in indices:
        rep = evaluate(res, fold, make_test_split(fold, i, ratio))
        rep.tags = {"variant": meta.get("variant", "full"), **rep.tags}
        reports.append(rep)
    emit_report(reports, args.format, _out(args))
    for row in summarize(reports):
        print(f"macro AP {row['macro:AP']:.4f}  macro AUC {row['macro:AUC']:.4f}  (n={row['n']})")


def cmd_run(args, cfg: ExperimentConfig) -> None:
    g = load_dataset(args.data)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    result = run_experiment(g, cfg, progress)
    out = _out(args)
    # report files carry no timings so seeded runs are byte-identical
    emit_report(result.reports, FORMATS, out, timing=False)
    write_timings(result.reports, out / "timings.json")
    _write_json(out / "config.json", cfg.to_dict())
    _write_json(out / "failures.json", result.failures)
    print(f"{len(result.reports)} reports, {len(result.failures)} failures, written to {out}")


def cmd_report(args, cfg: ExperimentConfig) -> None:
    path = Path(args.input)
    if not path.exists():
        raise DataError(f"{path} does not exist")
    reports = read_csv_reports(path) if path.suffix == ".csv" else read_json_reports(path)
    if args.timings:
        timed = json.loads(Path(args.timings).read_text())
        if len(timed) != len(reports):
            raise DataError(f"{args.timings}: {len(timed)} timing rows for {len(reports)} reports")
        for r, t in zip(reports, timed):
            r.train_seconds, r.test_seconds = t["train_seconds"], t["test_seconds"]
    formats = FORMATS if args.format == "all" else [args.format]
    for p in emit_report(reports, formats, _out(args), timing=bool(args.timings)):
        print(f"wrote {p}")


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hgelink", description="Citation link prediction on enriched heterogeneous graphs.")
    p.add_argument("--seed", type=int, default=None, help="overrides split and training seeds")
    p.add_argument("--config", default=None, help="experiment config JSON file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a planted synthetic bundle")
    s.add_argument("--cases", type=int, default=5000)
    s.add_argument("--laws", type=int, default=500)
    s.add_argument("--categories", type=int, default=10)
    s.add_argument("--feature-dim", type=int, default=32)
    d = Homophily()
    s.add_argument("--topic", type=float, default=d.topic)
    s.add_argument("--meta", type=float, default=d.meta)
    s.add_argument("--popularity", type=float, default=d.popularity)
    s.add_argument("--category", type=float, default=d.category)
    s.add_argument("--null", action="store_true", help="no planted signal at all")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("enrich", help="summarize the enriched graph")
    s.add_argument("data")
    s.add_argument("--no-exposed", action="store_true")
    s.add_argument("--no-reverse", action="store_true")
    s.add_argument("--no-self-loops", action="store_true")
    s.set_defaults(func=cmd_enrich)

    s = sub.add_parser("split", help="write fold manifests and pair files")
    s.add_argument("data")
    s.add_argument("--fold", type=int, default=None)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train one model on one fold")
    s.add_argument("data")
    s.add_argument("--fold", type=int, default=4)
    s.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--target", action="append", help="relation src|name|dst; repeat for several")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score a trained model on test splits")
    s.add_argument("data")
    s.add_argument("--model", required=True, help="directory written by `train`")
    s.add_argument("--split", type=int, default=None)
    s.add_argument("--test-ratio", type=float, default=None)
    s.add_argument("--format", choices=FORMATS, default="json")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("run", help="run the full experiment grid")
    s.add_argument("data")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="re-render a report.json or report.csv")
    s.add_argument("input")
    s.add_argument("--format", choices=(*FORMATS, "all"), default="markdown")
    s.add_argument("--timings", default=None, help="timings.json to add time columns")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        cfg = _load_config(args.config, args.seed)
        args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (DataError, GraphError, SchemaError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except HGEError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
