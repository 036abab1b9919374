"""From CSI blocks to training samples, and the on-disk dataset format.

Directory layout (``format_version`` 1)::

    manifest.json   dimensions, task geometry, normalisation stats, split
                    seed, label encoding, scenario snapshot, payload CRC-32s
    train.bin       float32 LE, [window][antenna][time][subcarrier][re, im]
    test.bin        same layout
    labels.train    one "sample_index,scenario,condition" record per line
    labels.test

Stored windows are already normalised; the manifest keeps the statistics so
values can be mapped back to channel units.
"""
from __future__ import annotations

import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import (ArrayGeometry, Condition, CsiTensor, Scenario, ScenarioConfig, Trajectory,
                      generate_csi_block, make_scenario_config)
from .tasks import TaskConfig

FORMAT_VERSION = 1
LABEL_ENCODING = {"condition": {c.name: int(c) for c in Condition},
                  "scenario": {s.name: int(s) for s in Scenario}}


class DatasetFormatError(ValueError):
    pass


def temporal_subsample(block: CsiTensor, stride: int) -> CsiTensor:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return CsiTensor(values=block.values[:, ::stride].copy(), scenario_label=block.scenario_label,
                     condition_label=block.condition_label, seed=block.seed,
                     sample_rate=block.sample_rate / stride)


def extract_windows(values: np.ndarray, window_len: int, window_stride: int) -> np.ndarray:
    """Non-wrapping time windows: (n_windows, N_a, window_len, N_s)."""
    n_t = values.shape[1]
    if window_len > n_t:
        raise ValueError(f"window_len {window_len} exceeds {n_t} time steps")
    if window_len < 1 or window_stride < 1:
        raise ValueError("window_len and window_stride must be >= 1")
    starts = range(0, n_t - window_len + 1, window_stride)
    return np.stack([values[:, s:s + window_len] for s in starts])


def reshape_to_model_input(csi: np.ndarray) -> np.ndarray:
    """A x T x N_s complex -> (A*T) x (2*N_s) real.

    Rows run antenna-major then time; each row holds all real parts followed
    by all imaginary parts.  Leading batch axes are preserved.
    """
    csi = np.asarray(csi)
    *lead, a, t, s = csi.shape
    flat = csi.reshape(*lead, a * t, s)
    return np.concatenate([flat.real, flat.imag], axis=-1)


def reshape_from_model_input(x: np.ndarray, num_antennas: int) -> np.ndarray:
    """Inverse of :func:`reshape_to_model_input`."""
    x = np.asarray(x)
    *lead, rows, feat = x.shape
    s = feat // 2
    if feat != 2 * s or rows % num_antennas:
        raise ValueError(f"cannot split {x.shape} into {num_antennas} antennas")
    out = np.empty((*lead, rows, s), dtype=np.result_type(x.dtype, np.complex64))
    out.real, out.imag = x[..., :s], x[..., s:]  # keeps signed zeros, unlike re + 1j*im
    return out.reshape(*lead, num_antennas, rows // num_antennas, s)


@dataclass
class Sample:
    input: np.ndarray  # seq_len x 2*N_s
    target_pred: np.ndarray | None  # complex block
    target_extra: np.ndarray | None  # complex block
    label_condition: int
    label_scenario: int
    window_index: int = 0


@dataclass
class SampleSet:
    """Column-wise store of samples; regression targets in model (real) layout."""

    inputs: np.ndarray  # n x seq x feat
    target_pred: np.ndarray | None  # n x rows x feat
    target_extra: np.ndarray | None
    label_condition: np.ndarray
    label_scenario: np.ndarray
    window_index: np.ndarray
    pred_antennas: int = 1
    extra_antennas: int = 1

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "SampleSet":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return SampleSet(self.inputs[idx], pick(self.target_pred), pick(self.target_extra),
                         self.label_condition[idx], self.label_scenario[idx], self.window_index[idx],
                         self.pred_antennas, self.extra_antennas)

    def to_list(self) -> list[Sample]:
        out = []
        for i in range(len(self)):
            tp = None if self.target_pred is None else reshape_from_model_input(self.target_pred[i], self.pred_antennas)
            te = None if self.target_extra is None else reshape_from_model_input(self.target_extra[i], self.extra_antennas)
            out.append(Sample(self.inputs[i], tp, te, int(self.label_condition[i]),
                              int(self.label_scenario[i]), int(self.window_index[i])))
        return out


def build_samples(windows: np.ndarray, label_condition, label_scenario, task: TaskConfig) -> SampleSet:
    """Turn (n, N_a, T, N_s) complex windows into model samples for ``task.mode``.

    * prediction: one sample per antenna per window, first ``p_time`` steps
      in, next ``l_time`` steps out.
    * extrapolation: one sample per known time step, the first ``p_ant``
      antennas form the sequence, the next ``l_ant`` are the target.
    * joint: one sample per window over the ``p_ant`` x ``p_time`` known
      grid; targets are the known antennas' future and the unknown antennas
      over the known steps (or, with ``single_head_joint``, the unknown
      antennas' future).
    """
    windows = np.asarray(windows)
    n, n_a, n_t, n_s = windows.shape
    lc = np.asarray(label_condition, dtype=np.int64)
    ls = np.asarray(label_scenario, dtype=np.int64)
    p_t, l_t, p_a, l_a = task.p_time, task.l_time, task.p_ant, task.l_ant
    mode = task.mode
    if mode in ("prediction", "joint") and n_t < p_t + l_t:
        raise ValueError(f"windows have {n_t} steps, task needs {p_t + l_t}")
    if mode == "extrapolation" and n_t < p_t:
        raise ValueError(f"windows have {n_t} steps, task needs {p_t}")
    if mode in ("extrapolation", "joint") and n_a < p_a + l_a:
        raise ValueError(f"windows have {n_a} antennas, task needs {p_a + l_a}")
    win = np.arange(n)
    if mode == "prediction":
        known = windows[:, :, :p_t].reshape(n * n_a, 1, p_t, n_s)
        future = windows[:, :, p_t:p_t + l_t].reshape(n * n_a, 1, l_t, n_s)
        rep = lambda a: np.repeat(a, n_a)  # noqa: E731
        return SampleSet(reshape_to_model_input(known), reshape_to_model_input(future), None,
                         rep(lc), rep(ls), rep(win))
    if mode == "extrapolation":
        # n x T x A x S -> one (A, 1, S) block per time step
        known = windows[:, :p_a, :p_t].transpose(0, 2, 1, 3).reshape(n * p_t, p_a, 1, n_s)
        unknown = windows[:, p_a:p_a + l_a, :p_t].transpose(0, 2, 1, 3).reshape(n * p_t, l_a, 1, n_s)
        rep = lambda a: np.repeat(a, p_t)  # noqa: E731
        return SampleSet(reshape_to_model_input(known), None, reshape_to_model_input(unknown),
                         rep(lc), rep(ls), rep(win), extra_antennas=l_a)
    inputs = reshape_to_model_input(windows[:, :p_a, :p_t])
    target_pred = target_extra = None
    if task.single_head_joint:
        target_pred = reshape_to_model_input(windows[:, p_a:p_a + l_a, p_t:p_t + l_t])
        pred_ant = l_a
    else:
        pred_ant = p_a
        if "prediction" in task.active_tasks:
            target_pred = reshape_to_model_input(windows[:, :p_a, p_t:p_t + l_t])
        if "extrapolation" in task.active_tasks:
            target_extra = reshape_to_model_input(windows[:, p_a:p_a + l_a, :p_t])
    return SampleSet(inputs, target_pred, target_extra, lc, ls, win,
                     pred_antennas=pred_ant, extra_antennas=l_a)


def window_samples(block: CsiTensor, window_len: int, window_stride: int, task: TaskConfig) -> list[Sample]:
    windows = extract_windows(block.values, window_len, window_stride)
    n = windows.shape[0]
    return build_samples(windows, np.full(n, int(block.condition_label)),
                         np.full(n, int(block.scenario_label)), task).to_list()


def split_train_test(samples, ratio: float, seed: int):
    """Seeded shuffle, then the first ``round(ratio * n)`` go to training."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n = len(samples)
    if n == 0:
        raise ValueError("cannot split an empty sample list")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratio * n))
    pick = (lambda idx: samples[np.sort(idx)]) if isinstance(samples, np.ndarray) else (
        lambda idx: [samples[i] for i in sorted(idx)])
    return pick(order[:n_train]), pick(order[n_train:])


@dataclass(frozen=True)
class NormStats:
    mean: tuple[float, float]  # (real, imag)
    std: tuple[float, float]

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}


def fit_normalizer(train) -> NormStats:
    """Global mean/std of the real and imaginary parts of complex training data."""
    data = np.asarray(train)
    if data.size == 0:
        raise ValueError("cannot fit a normaliser on empty data")
    parts = (data.real, data.imag) if np.iscomplexobj(data) else (data, data)
    mean = tuple(float(p.mean()) for p in parts)
    std = tuple(float(p.std()) for p in parts)
    if not all(np.isfinite(mean + std)):
        raise ValueError("non-finite normalisation statistics")
    if min(std) == 0.0:
        raise ValueError("zero variance: cannot normalise constant data")
    return NormStats(mean, std)


def apply_normalizer(x, stats: NormStats):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return (x.real - stats.mean[0]) / stats.std[0] + 1j * ((x.imag - stats.mean[1]) / stats.std[1])
    return (x - stats.mean[0]) / stats.std[0]


def invert_normalizer(x, stats: NormStats):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return (x.real * stats.std[0] + stats.mean[0]) + 1j * (x.imag * stats.std[1] + stats.mean[1])
    return x * stats.std[0] + stats.mean[0]


@dataclass
class WindowSet:
    """Complex windows (n, N_a, T, N_s) with their labels."""

    windows: np.ndarray
    label_condition: np.ndarray
    label_scenario: np.ndarray

    def __len__(self) -> int:
        return self.windows.shape[0]

    def samples(self, task: TaskConfig) -> SampleSet:
        return build_samples(self.windows, self.label_condition, self.label_scenario, task)


@dataclass
class GenerationConfig:
    """Everything that determines a generated corpus."""

    rows: int = 2
    cols: int = 3
    num_subcarriers: int = 16
    block_steps: int = 400
    blocks_per_combination: int = 30
    subsample_stride: int = 2
    window_stride: int = 10
    p_time: int = 30
    l_time: int = 5
    p_ant: int = 4
    l_ant: int = 2
    split_ratio: float = 0.8
    master_seed: int = 2024
    scenario_overrides: dict = field(default_factory=dict)

    @property
    def window_len(self) -> int:
        return self.p_time + self.l_time

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.rows, self.cols)

    def scenario_configs(self) -> list[ScenarioConfig]:
        return [make_scenario_config(s, num_subcarriers=self.num_subcarriers,
                                     **self.scenario_overrides.get(s.name, {})) for s in Scenario]


def block_seed(master_seed: int, scenario: int, condition: int, block: int) -> int:
    return int(np.random.SeedSequence([master_seed, scenario, condition, block]).generate_state(1, np.uint64)[0])


def _block_windows(cfg: GenerationConfig, sc_cfg: ScenarioConfig, cond: Condition, b: int):
    geometry = cfg.geometry()
    traj = Trajectory.for_transmitter(sc_cfg.tx_position)
    span = traj.num_steps - cfg.block_steps + 1
    if span < 1:
        raise ValueError(f"block_steps {cfg.block_steps} exceed the {traj.num_steps}-step trajectory")
    seed = block_seed(cfg.master_seed, int(sc_cfg.scenario_id), int(cond), b)
    t0 = ((b * cfg.block_steps) % span) / traj.sample_rate
    block = generate_csi_block(sc_cfg, cond, geometry, traj, seed, cfg.block_steps, t0=t0)
    block = temporal_subsample(block, cfg.subsample_stride)
    w = extract_windows(block.values, cfg.window_len, cfg.window_stride)
    info = {"scenario": sc_cfg.scenario_id.name, "condition": cond.name, "block": b, "seed": seed,
            "t0": t0, "windows": len(w)}
    return w, info


def generate_windows(cfg: GenerationConfig, workers: int = 1) -> tuple[WindowSet, list[dict]]:
    """Simulate every scenario x condition x block and cut it into windows.

    Blocks are independent and seeded individually, so ``workers > 1``
    produces exactly the same windows.
    """
    jobs = [(sc_cfg, cond, b) for sc_cfg in cfg.scenario_configs() for cond in Condition
            for b in range(cfg.blocks_per_combination)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_block_windows, *zip(*[(cfg, *j) for j in jobs])))
    else:
        done = [_block_windows(cfg, *j) for j in jobs]
    windows = [w for w, _ in done]
    conds = [np.full(len(w), int(cond)) for (w, _), (_, cond, _) in zip(done, jobs)]
    scens = [np.full(len(w), int(sc.scenario_id)) for (w, _), (sc, _, _) in zip(done, jobs)]
    return (WindowSet(np.concatenate(windows), np.concatenate(conds), np.concatenate(scens)),
            [info for _, info in done])


@dataclass
class Dataset:
    train: WindowSet
    test: WindowSet
    manifest: dict

    @property
    def stats(self) -> NormStats:
        n = self.manifest["normalization"]
        return NormStats(tuple(n["mean"]), tuple(n["std"]))

    def task_config(self, tasks, **kwargs) -> TaskConfig:
        return TaskConfig(active_tasks=tasks, **self.manifest["task_geometry"], **kwargs)


def _scenario_snapshot(cfg: GenerationConfig) -> dict:
    snap = {}
    for s in cfg.scenario_configs():
        d = {k: getattr(s, k) for k in s.__dataclass_fields__ if k != "scenario_id"}
        d["tx_position"] = list(d["tx_position"])
        snap[s.scenario_id.name] = d
    return snap


def build_dataset(cfg: GenerationConfig, workers: int = 1) -> Dataset:
    """Generate, split 8:2 at window level, and normalise with training statistics."""
    allw, _ = generate_windows(cfg, workers)
    idx_train, idx_test = split_train_test(np.arange(len(allw)), cfg.split_ratio, cfg.master_seed)
    stats = fit_normalizer(allw.windows[idx_train])

    def part(idx):
        w = apply_normalizer(allw.windows[idx], stats).astype(np.complex64)
        return WindowSet(w, allw.label_condition[idx], allw.label_scenario[idx])

    train, test = part(idx_train), part(idx_test)
    n_a, n_t, n_s = allw.windows.shape[1:]
    manifest = {
        "format_version": FORMAT_VERSION,
        "sample_count": len(allw),
        "train_count": len(train),
        "test_count": len(test),
        "dims": {"antennas": n_a, "time_steps": n_t, "subcarriers": n_s},
        "task_geometry": {"p_time": cfg.p_time, "l_time": cfg.l_time, "p_ant": cfg.p_ant, "l_ant": cfg.l_ant},
        "normalization": {**stats.to_dict(), "convention": "per-component global standardisation over training windows"},
        "split": {"ratio": cfg.split_ratio, "seed": cfg.master_seed, "unit": "window"},
        "label_encoding": LABEL_ENCODING,
        "generation": {k: v for k, v in cfg.__dict__.items() if k != "scenario_overrides"},
        "scenarios": _scenario_snapshot(cfg),
    }
    return Dataset(train, test, manifest)


def _encode_windows(ws: WindowSet) -> bytes:
    w = np.asarray(ws.windows, dtype=np.complex64)
    return np.stack([w.real, w.imag], axis=-1).astype("<f4").tobytes()


def _encode_labels(ws: WindowSet) -> str:
    cond = {v: k for k, v in LABEL_ENCODING["condition"].items()}
    scen = {v: k for k, v in LABEL_ENCODING["scenario"].items()}
    return "".join(f"{i},{scen[int(s)]},{cond[int(c)]}\n"
                   for i, (s, c) in enumerate(zip(ws.label_scenario, ws.label_condition)))


def write_dataset(directory, dataset: Dataset) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest = dict(dataset.manifest)
    checksums = {}
    for name, ws in (("train", dataset.train), ("test", dataset.test)):
        payload = _encode_windows(ws)
        (out / f"{name}.bin").write_bytes(payload)
        (out / f"labels.{name}").write_text(_encode_labels(ws))
        checksums[f"{name}.bin"] = zlib.crc32(payload)
    manifest["checksums"] = checksums
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _decode_labels(text: str, expected: int) -> tuple[np.ndarray, np.ndarray]:
    lines = text.splitlines()
    if len(lines) != expected:
        raise DatasetFormatError(f"label file has {len(lines)} records, expected {expected}")
    scen, cond = np.empty(expected, np.int64), np.empty(expected, np.int64)
    for i, line in enumerate(lines):
        idx, s, c = line.split(",")
        if int(idx) != i:
            raise DatasetFormatError(f"label record {i} has index {idx}")
        scen[i] = LABEL_ENCODING["scenario"][s]
        cond[i] = LABEL_ENCODING["condition"][c]
    return cond, scen


def read_dataset(directory) -> Dataset:
    src = Path(directory)
    try:
        manifest = json.loads((src / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise DatasetFormatError(f"no manifest.json in {src}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset format_version {manifest.get('format_version')}")
    dims = manifest["dims"]
    shape = (dims["antennas"], dims["time_steps"], dims["subcarriers"])
    parts = {}
    for name in ("train", "test"):
        payload = (src / f"{name}.bin").read_bytes()
        if zlib.crc32(payload) != manifest["checksums"][f"{name}.bin"]:
            raise DatasetFormatError(f"checksum mismatch in {name}.bin")
        count = manifest[f"{name}_count"]
        raw = np.frombuffer(payload, dtype="<f4")
        if raw.size != count * int(np.prod(shape)) * 2:
            raise DatasetFormatError(f"{name}.bin holds {raw.size} floats, manifest implies {count}")
        raw = raw.reshape(count, *shape, 2)
        windows = np.ascontiguousarray(raw.astype(np.float32)).view(np.complex64)[..., 0]
        cond, scen = _decode_labels((src / f"labels.{name}").read_text(), count)
        parts[name] = WindowSet(windows, cond, scen)
    manifest.pop("checksums")
    return Dataset(parts["train"], parts["test"], manifest)
