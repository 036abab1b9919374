"""Training loop, evaluation, task-combination ablation and reports."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, SampleSet
from .model import ArchConfig, MtcaModel, batch_targets, build_mtca, forward, model_metadata, total_loss
from .nn import AdamWState, adamw_step, backward, save_checkpoint, softmax, step_lr
from .tasks import ABLATION_ROWS, TASKS

log = logging.getLogger(__name__)

LOSS_CONVENTION = "per-element MSE over real and imaginary parts; joint regression term is the mean of both MSEs"


class NumericError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    base_lr: float = 0.0012
    lr_step: int = 30
    lr_gamma: float = 0.5
    weight_decay: float = 0.01
    seed: int = 7
    eval_every: int = 0  # 0: only at the end

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr_step < 1 or self.eval_every < 0:
            raise ValueError(f"invalid training config {self}")


@dataclass
class Metrics:
    mse_prediction: float | None = None
    mse_extrapolation: float | None = None
    acc_nlos: float | None = None
    acc_scenario: float | None = None
    loss_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def accuracy(predicted, labels) -> float:
    predicted, labels = np.asarray(predicted), np.asarray(labels)
    if predicted.ndim == 2:
        predicted = predicted.argmax(axis=1)
    return float(np.mean(predicted == labels))


def compute_metrics(outputs: dict, targets: dict) -> Metrics:
    """Metrics from arrays: regression outputs in model layout, logits for classes."""
    m = Metrics()
    if outputs.get("pred") is not None:
        m.mse_prediction = float(np.mean((outputs["pred"] - targets["pred"]) ** 2))
    if outputs.get("extra") is not None:
        m.mse_extrapolation = float(np.mean((outputs["extra"] - targets["extra"]) ** 2))
    if outputs.get("nlos") is not None:
        m.acc_nlos = accuracy(outputs["nlos"], targets["nlos"])
    if outputs.get("sce") is not None:
        m.acc_scenario = accuracy(outputs["sce"], targets["sce"])
    return m


def predict(model: MtcaModel, samples: SampleSet, chunk: int = 512) -> dict:
    parts = {"pred": [], "extra": [], "nlos": [], "sce": []}
    for start in range(0, len(samples), chunk):
        out = forward(model, samples.inputs[start:start + chunk])
        for key, attr in (("pred", "pred_csi"), ("extra", "extra_csi"), ("nlos", "nlos_logits"),
                          ("sce", "sce_logits")):
            t = getattr(out, attr)
            if t is not None:
                parts[key].append(t.data)
    return {k: np.concatenate(v) if v else None for k, v in parts.items()}


def evaluate(model: MtcaModel, testset: SampleSet) -> Metrics:
    """MSE (normalised units) per active regression task, accuracy per classifier."""
    if len(testset) == 0:
        raise ValueError("empty test set")
    return compute_metrics(predict(model, testset), batch_targets(testset))


def _check_geometry(model: MtcaModel, samples: SampleSet):
    expected = (model.task.seq_len, model.arch.in_dim)
    if samples.inputs.shape[1:] != expected:
        raise ValueError(f"dataset geometry {samples.inputs.shape[1:]} does not match model {expected}")


def train(model: MtcaModel, samples: SampleSet, cfg: TrainConfig, run_dir=None) -> tuple[MtcaModel, Metrics]:
    """Mini-batch AdamW with a step learning-rate schedule.

    The shuffle order is drawn from ``cfg.seed`` so the result is a pure
    function of (initial model, samples, cfg).  Per-epoch records go to
    ``run_dir/epochs.jsonl`` and checkpoints to ``run_dir`` when given.
    """
    _check_geometry(model, samples)
    n = len(samples)
    if cfg.epochs and cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds the {n} training samples")
    params = model.parameters()
    state = AdamWState(lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    run_dir = Path(run_dir) if run_dir is not None else None
    epoch_log = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        epoch_log = (run_dir / "epochs.jsonl").open("w")
    metrics = Metrics()
    started = time.perf_counter()
    try:
        for epoch in range(cfg.epochs):
            state.lr = step_lr(cfg.base_lr, epoch, cfg.lr_step, cfg.lr_gamma)
            order = rng.permutation(n)
            seen, running = 0, 0.0
            parts_sum: dict[str, float] = {}
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, parts = total_loss(forward(model, samples.inputs[idx]), batch_targets(samples, idx),
                                         model.task.loss_weights)
                if not np.isfinite(loss.item()):
                    raise NumericError(f"non-finite loss at epoch {epoch}, batch starting {start}: {parts}")
                backward(loss, params)
                adamw_step(params, [p.grad for p in params], state)
                seen += len(idx)
                running += loss.item() * len(idx)
                for k, v in parts.items():
                    parts_sum[k] = parts_sum.get(k, 0.0) + v * len(idx)
            epoch_loss = running / seen
            metrics.loss_history.append(epoch_loss)
            record = {"epoch": epoch, "lr": state.lr, "train_loss": epoch_loss,
                      **{f"train_{k}": v / seen for k, v in sorted(parts_sum.items()) if k != "total"}}
            log.info("epoch %d lr %.3g loss %.5f", epoch, state.lr, epoch_loss)
            if epoch_log is not None:
                epoch_log.write(json.dumps(record, sort_keys=True) + "\n")
                if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
                    save_checkpoint(run_dir / f"checkpoint_epoch{epoch + 1:04d}.bin", params,
                                    model_metadata(model) | {"epoch": epoch + 1})
    finally:
        if epoch_log is not None:
            epoch_log.close()
    if run_dir is not None:
        save_checkpoint(run_dir / "checkpoint.bin", params, model_metadata(model) | {"epoch": cfg.epochs})
    metrics.wall_time = time.perf_counter() - started
    return model, metrics


def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class AblationResult:
    tasks: tuple[str, ...]
    label: str
    metrics: Metrics
    param_count: int
    fingerprint: str

    def to_dict(self) -> dict:
        return {"tasks": list(self.tasks), "label": self.label, "metrics": self.metrics.to_dict(),
                "param_count": self.param_count, "fingerprint": self.fingerprint}

    @classmethod
    def from_dict(cls, d: dict) -> "AblationResult":
        return cls(tuple(d["tasks"]), d["label"], Metrics(**d["metrics"]), d["param_count"], d["fingerprint"])


def run_experiment(dataset: Dataset, tasks, arch: ArchConfig, cfg: TrainConfig, run_dir=None,
                   task_options: dict | None = None) -> tuple[MtcaModel, Metrics]:
    """Build, train and evaluate one task combination on ``dataset``."""
    task = dataset.task_config(tasks, **(task_options or {}))
    train_set, test_set = dataset.train.samples(task), dataset.test.samples(task)
    model = build_mtca(arch, task, seed=cfg.seed)
    model, history = train(model, train_set, cfg, run_dir)
    metrics = evaluate(model, test_set)
    metrics.loss_history, metrics.wall_time = history.loss_history, history.wall_time
    return model, metrics


def _ablation_row(dataset: Dataset, tasks, arch: ArchConfig, cfg: TrainConfig, out: Path | None,
                  task_options: dict | None, key: str) -> AblationResult:
    task = dataset.task_config(tasks, **(task_options or {}))
    run_dir = out / "runs" / task.label() if out else None
    model, metrics = run_experiment(dataset, tasks, arch, cfg, run_dir, task_options)
    row = AblationResult(tuple(t for t in TASKS if t in task.active_tasks), task.label(), metrics,
                         model.param_count(), key)
    if out is not None:
        row_file = out / "rows" / f"{task.label()}-{key}.json"
        row_file.parent.mkdir(parents=True, exist_ok=True)
        row_file.write_text(json.dumps(row.to_dict(), sort_keys=True, indent=1) + "\n")
    return row


def run_ablation(dataset: Dataset, grid, arch: ArchConfig, cfg: TrainConfig, out_dir=None,
                 task_options: dict | None = None, workers: int = 1) -> list[AblationResult]:
    """Train one model per task combination with shared data and seeds.

    With ``out_dir``, finished rows are stored under ``rows/`` keyed by a
    fingerprint of (dataset, architecture, training config, tasks) and are
    skipped when the ablation is re-run.  Rows are independent, so
    ``workers > 1`` trains them in separate processes without changing any
    result.
    """
    grid = list(grid) if grid is not None else list(ABLATION_ROWS)
    out = Path(out_dir) if out_dir is not None else None
    results: list[AblationResult | None] = [None] * len(grid)
    pending = []
    for i, tasks in enumerate(grid):
        task = dataset.task_config(tasks, **(task_options or {}))
        key = fingerprint({"dataset": dataset.manifest, "arch": arch.to_dict(), "train": asdict(cfg),
                           "task": task.to_dict()})
        row_file = out / "rows" / f"{task.label()}-{key}.json" if out else None
        if row_file is not None and row_file.exists():
            log.info("skipping finished row %s", task.label())
            results[i] = AblationResult.from_dict(json.loads(row_file.read_text()))
        else:
            pending.append((i, tasks, key))
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(_ablation_row, dataset, tasks, arch, cfg, out, task_options, key)
                       for i, tasks, key in pending}
            for i, fut in futures.items():
                results[i] = fut.result()
    else:
        for i, tasks, key in pending:
            log.info("training row %s", grid[i])
            results[i] = _ablation_row(dataset, tasks, arch, cfg, out, task_options, key)
    return results


REPORT_COLUMNS = ("tasks", "mse_prediction", "mse_extrapolation", "acc_nlos", "acc_scenario",
                  "params_M", "final_train_loss")


def _fmt(value, kind: str) -> str:
    if value is None:
        return "/"
    if kind == "mse":
        return f"{value:.4e}"
    if kind == "acc":
        return f"{100 * value:.2f}%"
    if kind == "params":
        return f"{value / 1e6:.4f}"
    return f"{value:.6g}"


def report_rows(results) -> list[list[str]]:
    rows = []
    for r in results:
        m = r.metrics
        rows.append([r.label, _fmt(m.mse_prediction, "mse"), _fmt(m.mse_extrapolation, "mse"),
                     _fmt(m.acc_nlos, "acc"), _fmt(m.acc_scenario, "acc"), _fmt(r.param_count, "params"),
                     _fmt(m.loss_history[-1] if m.loss_history else None, "loss")])
    return rows


def emit_report(results, fmt: str = "markdown", context: dict | None = None) -> str:
    """Render ablation results; ``context`` (seeds, normalisation, ...) is fingerprinted into the output."""
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    context = dict(context or {})
    context.setdefault("loss_normalization", LOSS_CONVENTION)
    fp = fingerprint({"context": context, "rows": [r.fingerprint for r in results]})
    rows = report_rows(results)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS + ("config_fingerprint",))
        for row in rows:
            writer.writerow(row + [fp])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = ["# Task-combination ablation", "", f"config fingerprint: `{fp}`", ""]
    for k in sorted(context):
        lines.append(f"- {k}: {json.dumps(context[k], sort_keys=True)}")
    lines += ["", "| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def class_probabilities(logits) -> np.ndarray:
    return softmax(np.asarray(logits, dtype=np.float64))
