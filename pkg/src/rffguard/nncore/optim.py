from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(model, grads, state: AdamState):
    """One bias-corrected Adam update applied in place to ``model``'s parameters.

    ``grads`` is the per-layer list of dicts returned by ``Sequential.backward``.
    """
    slots = list(model.trainable())
    if not state.m:
        state.m = [np.zeros_like(a) for _, _, a in slots]
        state.v = [np.zeros_like(a) for _, _, a in slots]
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    step_size = state.lr * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
    eps_hat = state.eps * np.sqrt(1 - b2 ** t)
    for k, (i, name, param) in enumerate(slots):
        g = grads[i][name]
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        # m_hat / (sqrt(v_hat) + eps) rewritten to keep a single division
        param -= (step_size * m / (np.sqrt(v) + eps_hat)).astype(param.dtype)
    model.touch()
    return model, state
