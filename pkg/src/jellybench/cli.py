"""Command-line entry point: ``jellybench <command> [options]``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classical import CLASSICAL_KINDS, ClassifierError, ClassifierKind, canonical_kind
from .config import ConfigError, ExperimentConfig
from .dataset_io import DatasetError
from .evaluation import MetricsError, evaluate
from .experiment import FNN_NAMES, SOFTMAX, ResultGrid, Workspace, run_experiment
from .fnn import FnnKind

log = logging.getLogger("jellybench")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, DatasetError, ClassifierError, MetricsError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags with suppressed defaults so they never mask the top-level values
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, help="global seed (overrides the config)", **kw)
    p.add_argument("--output-dir", help="run directory (overrides the config)", **kw)
    p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   **(kw or {"default": "INFO"}))
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(defaults=False)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--config", help="experiment JSON config")
    data.add_argument("--dataset-root", help="dataset directory (overrides the config)")
    data.add_argument("--weights", choices=["imagenet", "random"], help="backbone initialisation")

    p = _Parser(prog="jellybench", description="Jellyfish species classification benchmark.",
                parents=[_global_flags(defaults=True)])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("ingest", parents=[common, data], help="scan the dataset, write manifest and split")
    s = sub.add_parser("extract", parents=[common, data], help="extract (or reuse cached) backbone features")
    s.add_argument("--backbone", required=True)
    s = sub.add_parser("train", parents=[common, data], help="fit one model on one backbone's features")
    s.add_argument("--model", required=True, help=f"Softmax, {', '.join(CLASSICAL_KINDS)}, ANN, RBFNN or Autoencoder")
    s.add_argument("--backbone", required=True)
    s = sub.add_parser("evaluate", parents=[common], help="print the metrics of finished cells")
    s.add_argument("--backbone")
    s.add_argument("--model")
    s = sub.add_parser("run-all", parents=[common, data], help="run the whole grid and write the report")
    s.add_argument("--no-plots", action="store_true")
    s = sub.add_parser("report", parents=[common], help="rebuild tables and figures from a finished run")
    s.add_argument("--from", dest="source", required=True, help="run directory containing grid.json")
    s.add_argument("--no-plots", action="store_true")
    return p


def load_config(args) -> ExperimentConfig:
    overrides = {"dataset_root": args.dataset_root, "seed": args.seed, "output_dir": args.output_dir,
                 "weights": args.weights}
    if args.config:
        return ExperimentConfig.load(args.config, **overrides)
    if not args.dataset_root:
        raise ConfigError("pass --config or --dataset-root")
    return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def _run_dir(args) -> Path:
    return Path(args.output_dir or "runs/latest")


def cmd_ingest(args) -> int:
    cfg = load_config(args)
    ws = Workspace(cfg)
    m, split = ws.manifest, ws.split
    counts = {f"{s}/{c}": n for (c, s), n in m.counts.items()}
    print(json.dumps({"images": len(m), "excluded": len(m.excluded), "counts": counts,
                      "train": len(split.train_indices), "test": len(split.test_indices)}, indent=1))
    return EXIT_OK


def cmd_extract(args) -> int:
    ws = Workspace(load_config(args))
    fm, hit = ws.features(args.backbone)
    print(f"{fm.backbone}: {len(fm)} x {fm.feature_dim} features "
          f"({'cache hit' if hit else 'extracted'}, cache {ws.cfg.cache_root})")
    return EXIT_OK


def _resolve_model(cfg: ExperimentConfig, name: str):
    if name.lower() == SOFTMAX.lower():
        return SOFTMAX
    try:
        kind = canonical_kind(name)
        return next((c for c in cfg.classifiers if c.kind == kind), ClassifierKind(kind))
    except ClassifierError:
        pass
    try:
        spec = FnnKind(name)
    except ValueError:
        raise ConfigError(f"unknown model {name!r}") from None
    return next((f for f in cfg.fnns if f.kind == spec.kind), spec)


def cmd_train(args) -> int:
    cfg = load_config(args)
    spec = _resolve_model(cfg, args.model)
    cfg = replace(cfg, backbones=(args.backbone,))
    ws = Workspace(cfg)
    name = cfg.backbones[0]
    fm, _ = ws.features(name)
    aug_fm, _ = ws.augmented_features(name)
    if spec == SOFTMAX:
        cell = ws.softmax_cell(name, fm, aug_fm)
    elif isinstance(spec, ClassifierKind):
        cell = ws.classical_cell(name, spec, fm, aug_fm)
    else:
        cell = ws.fnn_cell(name, spec, fm, aug_fm)
    m = cell.evaluation.metrics
    print(f"{name}/{cell.model_name}: accuracy {m.accuracy:.3f}, macro F1 {m.f1_macro:.3f} "
          f"-> {ws.cell_dir(name, cell.model_name)}")
    return EXIT_OK


def _cell_dirs(run: Path, backbone: str | None, model: str | None):
    for d in sorted((run / "cells").glob("*/*")):
        if (backbone is None or d.parent.name.lower() == backbone.lower()) and \
                (model is None or d.name.lower() in {model.lower(), FNN_NAMES.get(model, model).lower()}):
            yield d


def cmd_evaluate(args) -> int:
    run = _run_dir(args)
    split_path = run / "split.json"
    manifest_path = run / "manifest.json"
    if not split_path.exists() or not manifest_path.exists():
        raise ConfigError(f"{run} holds no ingested run (missing split.json or manifest.json)")
    labels = np.array([e["label"] for e in json.loads(manifest_path.read_text())["entries"]])
    test = np.asarray(json.loads(split_path.read_text())["test_indices"], dtype=np.int64)
    found = False
    for d in _cell_dirs(run, args.backbone, args.model):
        proba_path = d / "test_proba.npy"
        if not proba_path.exists():
            continue
        found = True
        ev = evaluate(labels[test], np.load(proba_path))
        m = ev.metrics
        print(f"{d.parent.name:<18} {d.name:<22} A={m.accuracy:.3f} P={m.precision_macro:.3f} "
              f"R={m.recall_macro:.3f} F1={m.f1_macro:.3f} AUC={ev.roc.macro_auc:.3f}")
    if not found:
        raise ConfigError(f"no trained cells found under {run / 'cells'}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    from .report import emit_report, summary_line

    cfg = load_config(args)
    grid = run_experiment(cfg)
    emit_report(grid, Path(cfg.output_dir) / "report", plots=not args.no_plots)
    print(f"{len(grid)} cells written to {cfg.output_dir}")
    print(summary_line(grid))
    return EXIT_OK if all(c.ok for c in grid) else EXIT_RUNTIME


def cmd_report(args) -> int:
    from .report import emit_report, summary_line

    src = Path(args.source)
    if not (src / "grid.json").exists():
        raise ConfigError(f"{src} has no grid.json")
    grid = ResultGrid.load(src / "grid.json")
    out = emit_report(grid, Path(args.output_dir) if args.output_dir else src / "report", plots=not args.no_plots)
    print(f"report written to {out}")
    print(summary_line(grid))
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "extract": cmd_extract, "train": cmd_train, "evaluate": cmd_evaluate,
            "run-all": cmd_run_all, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except VALIDATION_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc, exc_info=args.log_level == "DEBUG")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
