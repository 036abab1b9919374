"""Finite-difference verification of every trainable composite."""
from __future__ import annotations

import numpy as np

from .dataset import build_samples
from .model import ArchConfig, batch_targets, build_mtca, forward, total_loss
from .nn import grad_check

TOLERANCE = 1e-4

# (component name, active tasks, task options)
COMPOSITES = (
    ("gru+pred+mse", ("prediction",), {}),
    ("gru+extra+mse", ("extrapolation",), {}),
    ("gru+nlos+ce", ("prediction", "nlos"), {}),
    ("gru+sce+ce", ("extrapolation", "scenario"), {}),
    ("gru+nlos+sce@pos0", ("prediction", "nlos", "scenario"), {"cls_readout": "first"}),
    ("joint-final", ("prediction", "extrapolation", "nlos", "scenario"), {"reg_readout": "final"}),
    ("joint-aligned", ("prediction", "extrapolation", "nlos", "scenario"), {"reg_readout": "aligned"}),
    ("joint-single-head", ("prediction", "extrapolation"), {"single_head_joint": True}),
)


def _toy_windows(rng, n=3, antennas=3, steps=5, subcarriers=2):
    w = rng.normal(size=(n, antennas, steps, subcarriers)) + 1j * rng.normal(size=(n, antennas, steps, subcarriers))
    return w, rng.integers(0, 2, n), rng.integers(0, 3, n)


def gradcheck_suite(seed: int = 0, eps: float = 1e-5, max_coords: int = 25) -> dict[str, float]:
    """Worst relative gradient error per composite (2-layer GRU, hidden 8)."""
    from .tasks import TaskConfig

    rng = np.random.default_rng(seed)
    windows, cond, scen = _toy_windows(rng)
    arch = ArchConfig(hidden=8, num_layers=2, num_subcarriers=windows.shape[-1])
    results = {}
    for name, tasks, opts in COMPOSITES:
        task = TaskConfig(active_tasks=frozenset(tasks), p_time=3, l_time=2, p_ant=2, l_ant=1, **opts)
        samples = build_samples(windows, cond, scen, task)
        model = build_mtca(arch, task, seed=seed)
        # non-zero biases so every gate path is exercised
        for p in model.parameters():
            if p.name.endswith(("b_ih", "b_hh", "bias")):
                p.data[...] = rng.normal(scale=0.3, size=p.shape)
        targets = batch_targets(samples)

        def loss_fn():
            return total_loss(forward(model, samples.inputs), targets, task.loss_weights)[0]

        results[name] = grad_check(loss_fn, model.parameters(), eps=eps, max_coords=max_coords, seed=seed)
    return results
