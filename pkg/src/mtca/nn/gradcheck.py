from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def grad_check(model_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               max_coords: int | None = 40, seed: int = 0) -> float:
    """Largest relative disagreement between backprop and central differences.

    ``model_fn`` must rebuild the scalar loss from the current parameter
    values.  For parameters larger than ``max_coords`` a seeded random subset
    of coordinates is checked.  The error per coordinate is
    ``|a - n| / max(1, |a|, |n|)``.
    """
    rng = np.random.default_rng(seed)
    backward(model_fn())
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        if max_coords is None or flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = model_fn().item()
            flat[i] = orig - eps
            down = model_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = grad.reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
