from __future__ import annotations

import warnings
from dataclasses import dataclass, field

TASKS = ("prediction", "extrapolation", "nlos", "scenario")
TASK_ALIASES = {"pred": "prediction", "extra": "extrapolation", "sce": "scenario",
                "los": "nlos", "prediction": "prediction", "extrapolation": "extrapolation",
                "nlos": "nlos", "scenario": "scenario"}
NUM_CLASSES = {"nlos": 2, "scenario": 3}


def parse_tasks(spec) -> frozenset[str]:
    """Accept ``"pred,extra"`` or an iterable of task names/aliases."""
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    out = set()
    for raw in items:
        name = raw.strip().lower()
        if not name:
            continue
        if name not in TASK_ALIASES:
            raise ValueError(f"unknown task {raw!r}; valid names: {', '.join(sorted(TASK_ALIASES))}")
        out.add(TASK_ALIASES[name])
    return frozenset(out)


@dataclass(frozen=True)
class TaskConfig:
    """Which tasks are trained and the known/unknown extents of each domain.

    ``p_time``/``l_time`` are the known and predicted time steps,
    ``p_ant``/``l_ant`` the known and extrapolated antennas.
    """

    active_tasks: frozenset[str]
    p_time: int = 90
    l_time: int = 10
    p_ant: int = 4
    l_ant: int = 2
    loss_weights: dict = field(default_factory=lambda: {"extra": 9.0, "nlos": 1.0, "sce": 1.0})
    # literal reading of the joint geometry: one head for unknown antennas x future steps
    single_head_joint: bool = False
    # encoder position read by the classification heads: "last" or "first"
    cls_readout: str = "last"
    # encoder positions read by the regression heads: "final" or "aligned"
    reg_readout: str = "aligned"

    def __post_init__(self):
        object.__setattr__(self, "active_tasks", parse_tasks(self.active_tasks))
        if not self.active_tasks:
            raise ValueError("at least one task must be active")
        if min(self.p_time, self.l_time, self.p_ant, self.l_ant) < 1:
            raise ValueError("P/L extents must be >= 1")
        if set(self.loss_weights) != {"extra", "nlos", "sce"} or min(self.loss_weights.values()) <= 0:
            raise ValueError("loss_weights needs positive 'extra', 'nlos' and 'sce' entries")
        if self.cls_readout not in ("last", "first"):
            raise ValueError("cls_readout must be 'last' or 'first'")
        if self.reg_readout not in ("final", "aligned"):
            raise ValueError("reg_readout must be 'final' or 'aligned'")
        if not self.regression_tasks:
            warnings.warn("classification-only task set; using the joint input geometry", stacklevel=2)

    @property
    def regression_tasks(self) -> frozenset[str]:
        return self.active_tasks & {"prediction", "extrapolation"}

    @property
    def joint(self) -> bool:
        return {"prediction", "extrapolation"} <= self.active_tasks

    @property
    def mode(self) -> str:
        """Sample geometry: 'prediction', 'extrapolation' or 'joint'."""
        if self.joint or not self.regression_tasks:
            return "joint"
        return "prediction" if "prediction" in self.active_tasks else "extrapolation"

    @property
    def window_len(self) -> int:
        return self.p_time + self.l_time

    @property
    def seq_len(self) -> int:
        return {"prediction": self.p_time, "extrapolation": self.p_ant,
                "joint": self.p_ant * self.p_time}[self.mode]

    def label(self) -> str:
        short = {"prediction": "pred", "extrapolation": "extra", "nlos": "nlos", "scenario": "sce"}
        return "+".join(short[t] for t in TASKS if t in self.active_tasks)

    def geometry(self) -> dict:
        return {"p_time": self.p_time, "l_time": self.l_time, "p_ant": self.p_ant, "l_ant": self.l_ant}

    def to_dict(self) -> dict:
        return {"active_tasks": [t for t in TASKS if t in self.active_tasks], **self.geometry(),
                "loss_weights": dict(sorted(self.loss_weights.items())),
                "single_head_joint": self.single_head_joint, "cls_readout": self.cls_readout,
                "reg_readout": self.reg_readout}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskConfig":
        return cls(**{**d, "active_tasks": frozenset(d["active_tasks"])})


# Rows of the task-combination ablation, in reporting order.
ABLATION_ROWS = (
    ("prediction",),
    ("prediction", "nlos"),
    ("prediction", "scenario"),
    ("prediction", "nlos", "scenario"),
    ("extrapolation",),
    ("extrapolation", "nlos"),
    ("extrapolation", "scenario"),
    ("extrapolation", "nlos", "scenario"),
    ("prediction", "extrapolation"),
    ("prediction", "extrapolation", "nlos", "scenario"),
)
