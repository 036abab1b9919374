"""Multi-task network: one shared GRU encoder, one dense head per task."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (DenseParams, GruLayerParams, Tensor, cross_entropy_loss, dense_forward, gru_forward,
                 mse_loss, reshape, take, transpose, weighted_sum)
from .tasks import NUM_CLASSES, TaskConfig

HEAD_ORDER = ("pred", "extra", "nlos", "sce")


@dataclass(frozen=True)
class ArchConfig:
    hidden: int = 512
    num_layers: int = 6
    num_subcarriers: int = 100

    @property
    def in_dim(self) -> int:
        return 2 * self.num_subcarriers

    def to_dict(self) -> dict:
        return {"hidden": self.hidden, "num_layers": self.num_layers, "num_subcarriers": self.num_subcarriers}


def head_shapes(arch: ArchConfig, task: TaskConfig) -> dict[str, int]:
    """Output width of every head the task set needs."""
    feat = arch.in_dim
    mode, aligned = task.mode, task.reg_readout == "aligned"
    out = {}
    if task.single_head_joint and task.joint:
        out["pred"] = task.l_ant * task.l_time * feat
    else:
        if "prediction" in task.active_tasks:
            per_ant = task.l_time * feat
            out["pred"] = per_ant if (mode == "prediction" or aligned) else task.p_ant * per_ant
        if "extrapolation" in task.active_tasks:
            per_step = task.l_ant * feat
            out["extra"] = per_step if (mode == "extrapolation" or aligned) else task.p_time * per_step
    for name, key in (("nlos", "nlos"), ("scenario", "sce")):
        if name in task.active_tasks:
            out[key] = NUM_CLASSES[name]
    return out


@dataclass
class MtcaModel:
    arch: ArchConfig
    task: TaskConfig
    encoder: list[GruLayerParams]
    heads: dict[str, DenseParams]

    def parameters(self) -> list[Tensor]:
        params = [p for layer in self.encoder for p in layer.parameters()]
        for name in HEAD_ORDER:
            if name in self.heads:
                params.extend(self.heads[name].parameters())
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def summary(self) -> str:
        lines = [f"MTCA model  tasks={self.task.label()}  mode={self.task.mode}",
                 f"encoder: GRU {self.arch.num_layers} x {self.arch.hidden}, in_dim {self.arch.in_dim}, "
                 f"seq_len {self.task.seq_len}"]
        for name in HEAD_ORDER:
            if name in self.heads:
                w = self.heads[name].weight
                lines.append(f"head {name}: dense {w.shape[1]} -> {w.shape[0]}")
        lines.append(f"readout: regression={self.task.reg_readout} classification={self.task.cls_readout}")
        lines.append(f"trainable parameters: {self.param_count()}")
        return "\n".join(lines)


def build_mtca(arch: ArchConfig, task: TaskConfig, seed: int) -> MtcaModel:
    if arch.hidden < 1 or arch.num_layers < 1 or arch.num_subcarriers < 1:
        raise ValueError(f"inconsistent architecture {arch}")
    rng = np.random.default_rng(seed)
    encoder = []
    for i in range(arch.num_layers):
        d = arch.in_dim if i == 0 else arch.hidden
        encoder.append(GruLayerParams.init(d, arch.hidden, rng, prefix=f"encoder.{i}"))
    heads = {name: DenseParams.init(arch.hidden, width, rng, prefix=f"head_{name}")
             for name, width in head_shapes(arch, task).items()}
    return MtcaModel(arch, task, encoder, heads)


@dataclass
class TaskOutputs:
    """Regression outputs are in the real (rows x 2*N_s) layout of the targets."""

    pred_csi: Tensor | None = None
    extra_csi: Tensor | None = None
    nlos_logits: Tensor | None = None
    sce_logits: Tensor | None = None

    def as_complex(self, name: str, num_antennas: int) -> np.ndarray:
        from .dataset import reshape_from_model_input
        return reshape_from_model_input(getattr(self, name).data, num_antennas)


def select_classification_feature(encoder_out: Tensor) -> Tensor:
    """Encoder features at sequence position 0: batch x hidden."""
    return take(encoder_out, 0, axis=1)


def forward(model: MtcaModel, inputs) -> TaskOutputs:
    """Run the encoder over batch x seq x 2*N_s inputs and apply every head."""
    x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    task, feat = model.task, model.arch.in_dim
    if x.data.ndim != 3 or x.shape[1:] != (task.seq_len, feat):
        raise ValueError(f"input geometry {x.shape[1:]} does not match task ({task.seq_len}, {feat})")
    enc = gru_forward(model.encoder, x)
    batch, seq = x.shape[0], x.shape[1]
    final = take(enc, seq - 1, axis=1)
    out = TaskOutputs()
    aligned = task.reg_readout == "aligned" and task.mode == "joint" and not task.single_head_joint
    if "pred" in model.heads:
        if aligned:
            # last known step of each known antenna
            pos = np.arange(task.p_ant) * task.p_time + task.p_time - 1
            y = dense_forward(model.heads["pred"], take(enc, pos, axis=1))
        else:
            y = dense_forward(model.heads["pred"], final)
        out.pred_csi = reshape(y, (batch, -1, feat))
    if "extra" in model.heads:
        if aligned:
            # every known step of the last known antenna
            pos = (task.p_ant - 1) * task.p_time + np.arange(task.p_time)
            y = dense_forward(model.heads["extra"], take(enc, pos, axis=1))
            y = reshape(y, (batch, task.p_time, task.l_ant, feat))
            y = transpose(y, (0, 2, 1, 3))
        else:
            y = dense_forward(model.heads["extra"], final)
        out.extra_csi = reshape(y, (batch, -1, feat))
    if "nlos" in model.heads or "sce" in model.heads:
        cls_feat = final if task.cls_readout == "last" else select_classification_feature(enc)
        if "nlos" in model.heads:
            out.nlos_logits = dense_forward(model.heads["nlos"], cls_feat)
        if "sce" in model.heads:
            out.sce_logits = dense_forward(model.heads["sce"], cls_feat)
    return out


def combine_losses(components: dict[str, Tensor], weights: dict[str, float]) -> Tensor:
    """Weighted sum over the present components ``extra``, ``nlos``, ``sce``."""
    terms = [(float(weights[k]), components[k]) for k in ("extra", "nlos", "sce") if k in components]
    return weighted_sum(terms)


def total_loss(outputs: TaskOutputs, targets: dict, weights: dict[str, float]) -> tuple[Tensor, dict[str, float]]:
    """Multi-task objective and its per-task breakdown.

    ``targets`` holds ``pred``/``extra`` arrays in model layout and
    ``nlos``/``sce`` class indices.  The regression term is the mean of the
    prediction and extrapolation MSEs when both are active.
    """
    regression = []
    breakdown = {}
    for key, attr in (("pred", "pred_csi"), ("extra", "extra_csi")):
        y = getattr(outputs, attr)
        if y is None:
            continue
        if targets.get(key) is None:
            raise KeyError(f"missing target for {key!r}")
        loss = mse_loss(y, targets[key])
        regression.append(loss)
        breakdown[key] = loss.item()
    components = {}
    if regression:
        components["extra"] = regression[0] if len(regression) == 1 else weighted_sum(
            [(0.5, regression[0]), (0.5, regression[1])])
    for key, attr in (("nlos", "nlos_logits"), ("sce", "sce_logits")):
        logits = getattr(outputs, attr)
        if logits is None:
            continue
        if targets.get(key) is None:
            raise KeyError(f"missing target for {key!r}")
        components[key] = cross_entropy_loss(logits, targets[key])
        breakdown[key] = components[key].item()
    total = combine_losses(components, weights)
    breakdown["total"] = total.item()
    return total, breakdown


def batch_targets(samples, idx=None) -> dict:
    """Target dict for :func:`total_loss` from a ``SampleSet`` (optionally a subset)."""
    pick = (lambda a: a) if idx is None else (lambda a: a[idx])
    return {"pred": None if samples.target_pred is None else pick(samples.target_pred),
            "extra": None if samples.target_extra is None else pick(samples.target_extra),
            "nlos": pick(samples.label_condition), "sce": pick(samples.label_scenario)}


def model_metadata(model: MtcaModel) -> dict:
    return {"arch": model.arch.to_dict(), "task": model.task.to_dict(), "param_count": model.param_count()}
