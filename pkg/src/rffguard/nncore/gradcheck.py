from __future__ import annotations

import numpy as np


def grad_check(model, x, loss_fn, eps: float = 1e-5, mode: str = "train", seed: int = 0,
               max_per_tensor: int | None = None, check_rng=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(output) -> (loss, dloss/doutput)``. Every forward pass uses a
    fresh generator seeded with ``seed`` so dropout masks are identical across
    evaluations. Error per entry is ``|fd - an| / max(|fd|, |an|, 1e-8)``;
    ``max_per_tensor`` checks a random subset of entries of large tensors.
    """

    def total_loss():
        out, _ = model.forward(x, mode, np.random.default_rng(seed))
        return loss_fn(out)[0] + model.l2_penalty()

    out, cache = model.forward(x, mode, np.random.default_rng(seed))
    _, dout = loss_fn(out)
    _, grads = model.backward(cache, dout)

    pick = check_rng or np.random.default_rng(seed + 1)
    worst = 0.0
    for i, name, param in model.trainable():
        analytic = grads[i][name]
        flat_idx = np.arange(param.size)
        if max_per_tensor is not None and param.size > max_per_tensor:
            flat_idx = pick.choice(param.size, max_per_tensor, replace=False)
        for j in flat_idx:
            idx = np.unravel_index(j, param.shape)
            orig = param[idx]
            param[idx] = orig + eps
            up = total_loss()
            param[idx] = orig - eps
            down = total_loss()
            param[idx] = orig
            fd = (up - down) / (2 * eps)
            an = float(analytic[idx])
            err = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            worst = max(worst, err)
    return worst
