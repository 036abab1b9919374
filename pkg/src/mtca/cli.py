"""Command-line entry point: ``mtca {generate,train,eval,ablate,report,gradcheck}``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import config as C
from .channel import Condition, Scenario
from .dataset import DatasetFormatError, build_dataset, read_dataset, write_dataset
from .experiment import (AblationResult, NumericError, emit_report, evaluate, run_ablation, run_experiment)
from .model import build_mtca
from .nn import CheckpointError, load_checkpoint, restore_parameters
from .tasks import ABLATION_ROWS, TaskConfig, parse_tasks

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("mtca")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    cfg = C.load_config(args.config, preset=args.preset)
    if overrides:
        cfg = C.resolve_config({k: v for k, v in cfg.items() if k != "preset"} | overrides, preset=cfg["preset"])
    return cfg


def _write_config(out_dir: Path, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(C.dump_config(cfg))


def _report_context(dataset, cfg) -> dict:
    return {"data_seed": dataset.manifest["split"]["seed"], "train_seed": cfg["seed"],
            "normalization": dataset.manifest["normalization"],
            "denormalization_scale": [s * s for s in dataset.manifest["normalization"]["std"]],
            "preset": cfg["preset"]}


def cmd_generate(args) -> int:
    cfg = _load(args)
    out = Path(args.out_dir)
    dataset = build_dataset(C.generation_config(cfg), workers=args.workers)
    write_dataset(out, dataset)
    _write_config(out, cfg)
    m = dataset.manifest
    print(f"wrote {m['sample_count']} windows ({m['train_count']} train / {m['test_count']} test) to {out}")
    counts = Counter()
    for ws in (dataset.train, dataset.test):
        counts.update(zip(ws.label_scenario.tolist(), ws.label_condition.tolist()))
    for (s, c), k in sorted(counts.items()):
        print(f"  {Scenario(s).name:>3} {Condition(c).name:<4} {k}")
    return EXIT_OK


def _check_dataset_geometry(dataset, cfg) -> None:
    want = {k: cfg["geometry"][k] for k in ("p_time", "l_time", "p_ant", "l_ant")}
    have = dataset.manifest["task_geometry"]
    want_dims = {"subcarriers": cfg["geometry"]["num_subcarriers"]}
    have_dims = {"subcarriers": dataset.manifest["dims"]["subcarriers"]}
    if want != have or want_dims != have_dims:
        raise DatasetFormatError(f"geometry mismatch: dataset {have | have_dims} vs config {want | want_dims}")


def cmd_train(args) -> int:
    cfg = _load(args)
    tasks = parse_tasks(args.tasks) if args.tasks else parse_tasks(cfg["task"]["tasks"])
    cfg["task"]["tasks"] = [t for t in ("prediction", "extrapolation", "nlos", "scenario") if t in tasks]
    dataset = read_dataset(args.data_dir)
    _check_dataset_geometry(dataset, cfg)
    out = Path(args.out_dir)
    _write_config(out, cfg)
    model, metrics = run_experiment(dataset, tasks, C.arch_config(cfg), C.train_config(cfg), out,
                                    C.task_options(cfg))
    row = AblationResult(tuple(cfg["task"]["tasks"]), model.task.label(), metrics, model.param_count(),
                         "single-run")
    (out / "metrics.json").write_text(json.dumps({k: v for k, v in metrics.to_dict().items() if k != "wall_time"},
                                                 sort_keys=True, indent=1) + "\n")
    (out / "model_summary.txt").write_text(model.summary() + "\n")
    ctx = _report_context(dataset, cfg)
    (out / "report.md").write_text(emit_report([row], "markdown", ctx))
    (out / "report.csv").write_text(emit_report([row], "csv", ctx))
    print(model.summary())
    print(emit_report([row], "markdown", ctx))
    return EXIT_OK


def cmd_eval(args) -> int:
    stored, meta = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data_dir)
    task = TaskConfig.from_dict(meta["task"])
    if task.geometry() != dataset.manifest["task_geometry"]:
        raise DatasetFormatError(f"geometry mismatch: dataset {dataset.manifest['task_geometry']} "
                                 f"vs checkpoint {task.geometry()}")
    from .model import ArchConfig
    model = build_mtca(ArchConfig(**meta["arch"]), task, seed=0)
    restore_parameters(model.parameters(), stored)
    metrics = evaluate(model, dataset.test.samples(task))
    print(json.dumps({k: v for k, v in metrics.to_dict().items() if k not in ("loss_history", "wall_time")},
                     sort_keys=True, indent=1))
    return EXIT_OK


def _write_reports(out: Path, results, ctx) -> None:
    (out / "ablation.csv").write_text(emit_report(results, "csv", ctx))
    (out / "ablation.md").write_text(emit_report(results, "markdown", ctx))


def cmd_ablate(args) -> int:
    cfg = _load(args)
    dataset = read_dataset(args.data_dir)
    _check_dataset_geometry(dataset, cfg)
    out = Path(args.out_dir)
    _write_config(out, cfg)
    results = run_ablation(dataset, ABLATION_ROWS, C.arch_config(cfg), C.train_config(cfg), out, C.task_options(cfg),
                           workers=args.workers)
    ctx = _report_context(dataset, cfg)
    (out / "context.json").write_text(json.dumps(ctx, sort_keys=True, indent=1) + "\n")
    _write_reports(out, results, ctx)
    print((out / "ablation.md").read_text())
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.run_dir)
    rows = sorted((out / "rows").glob("*.json")) if (out / "rows").is_dir() else []
    if not rows:
        raise DatasetFormatError(f"no finished ablation rows under {out}")
    results = [AblationResult.from_dict(json.loads(p.read_text())) for p in rows]
    order = {tuple(r): i for i, r in enumerate(ABLATION_ROWS)}
    results.sort(key=lambda r: order.get(r.tasks, len(order)))
    ctx_file = out / "context.json"
    ctx = json.loads(ctx_file.read_text()) if ctx_file.exists() else {}
    text = emit_report(results, args.format, ctx)
    if args.output:
        Path(args.output).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import TOLERANCE, gradcheck_suite

    results = gradcheck_suite(seed=args.seed or 0)
    worst = max(results.values())
    for name, err in results.items():
        print(f"{name:<20} max rel error {err:.3e}  {'ok' if err < TOLERANCE else 'FAIL'}")
    print(f"worst {worst:.3e} (tolerance {TOLERANCE:g})")
    return EXIT_OK if worst < TOLERANCE else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtca", description="Multi-task channel analysis workbench")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True, workers=False):
        p.add_argument("--config", help="YAML config file (sections: preset, seed, scenario, geometry, "
                                        "model, task, train, paths)")
        p.add_argument("--preset", choices=sorted(C.PRESETS), help="preset to expand (default: desk)")
        if seed:
            p.add_argument("--seed", type=int, help="master seed (data generation and training)")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")

    p = sub.add_parser("generate", help="simulate channels and write a dataset directory")
    common(p, workers=True)
    p.add_argument("--out-dir", required=True, help="dataset directory to create")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and evaluate one task combination")
    common(p)
    p.add_argument("--data-dir", required=True, help="dataset directory")
    p.add_argument("--tasks", help="comma-separated tasks: pred, extra, nlos, sce (default: config)")
    p.add_argument("--out-dir", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    p.add_argument("--data-dir", required=True, help="dataset directory")
    p.add_argument("--checkpoint", required=True, help="checkpoint file written by train")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the ten task-combination rows")
    common(p, workers=True)
    p.add_argument("--data-dir", required=True, help="dataset directory")
    p.add_argument("--out-dir", required=True, help="ablation directory (finished rows are reused)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render an ablation directory as csv or markdown")
    p.add_argument("--run-dir", required=True, help="directory written by ablate")
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown", help="output format")
    p.add_argument("--output", help="also write the report to this file")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of every trainable composite")
    p.add_argument("--seed", type=int, default=0, help="seed for the random toy problems")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (C.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        if "unknown task" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        raise
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
