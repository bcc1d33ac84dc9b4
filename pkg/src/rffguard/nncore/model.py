from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument, InvalidState, ShapeError
from .layers import LayerSpec


@dataclass
class Cache:
    """Per-layer caches of one train-mode forward pass, tied to a parameter version."""

    entries: list
    version: int
    start: int
    stop: int
    train: bool


class Sequential:
    """An ordered stack of layers with owned parameters.

    ``params[i]`` and ``state[i]`` hold layer ``i``'s trainable tensors and
    non-trainable buffers (BatchNorm running statistics). ``version`` is
    bumped whenever parameters change so stale caches can be detected.
    """

    def __init__(self, specs: list[LayerSpec], input_shape, seed: int = 0, dtype=np.float32):
        self.specs = list(specs)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.shapes = [self.input_shape]
        for i, spec in enumerate(self.specs):
            try:
                self.shapes.append(tuple(spec.out_shape(self.shapes[-1])))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({spec.kind}): {exc}") from None
        rng = np.random.default_rng(seed)
        self.params, self.state = [], []
        for spec, shape in zip(self.specs, self.shapes):
            p, s = spec.init(shape, rng, self.dtype)
            self.params.append(p)
            self.state.append(s)
        self.version = 0

    @property
    def output_shape(self):
        return self.shapes[-1]

    def n_params(self) -> int:
        return sum(a.size for p in self.params for a in p.values())

    def trainable(self):
        """Yield ``(layer_index, name, array)`` for every learnable tensor in order."""
        for i, (spec, p) in enumerate(zip(self.specs, self.params)):
            for name in spec.trainable:
                yield i, name, p[name]

    def l2_penalty(self) -> float:
        return sum(spec.l2_terms(p) for spec, p in zip(self.specs, self.params))

    def touch(self):
        self.version += 1

    def forward(self, x, mode: str = "infer", rng=None, start: int = 0, stop: int | None = None):
        """Run layers ``start:stop``; returns ``(output, cache)``.

        ``mode`` is ``"train"`` or ``"infer"``. Dropout needs ``rng`` in train mode.
        """
        if mode not in ("train", "infer"):
            raise InvalidArgument(f"mode must be 'train' or 'infer', got {mode!r}")
        stop = len(self.specs) if stop is None else stop
        x = np.asarray(x, dtype=self.dtype)
        expected = self.shapes[start]
        if x.shape[1:] != expected:
            where = f"layer {start} ({self.specs[start].kind})" if start < len(self.specs) else "output"
            raise ShapeError(f"input to {where} must have shape (batch, {expected}), got {x.shape}")
        train = mode == "train"
        entries = []
        for i in range(start, stop):
            x, c = self.specs[i].forward(self.params[i], self.state[i], x, train, rng)
            entries.append(c)
        return x, Cache(entries, self.version, start, stop, train)

    def predict(self, x, batch_size: int = 256):
        x = np.asarray(x)
        outs = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        if not outs:
            return np.zeros((0, *self.output_shape), self.dtype)
        return np.concatenate(outs)

    def backward(self, cache: Cache, grad, need_param_grads: bool = True):
        """Backpropagate ``grad`` through the cached layers.

        Returns ``(input_grad, grads)`` where ``grads[i]`` is a dict of
        gradients for layer ``i`` (empty for layers outside the cache range).
        L2 terms are included for layers that declare ``l2 > 0``.
        """
        if not cache.train:
            raise InvalidState("backward needs a cache from a train-mode forward pass")
        if cache.version != self.version:
            raise InvalidState(
                f"stale cache: parameters changed (cache v{cache.version}, model v{self.version})"
            )
        grads: list[dict] = [{} for _ in self.specs]
        dy = np.asarray(grad, dtype=self.dtype)
        for i in reversed(range(cache.start, cache.stop)):
            dy, grads[i] = self.specs[i].backward(
                self.params[i], cache.entries[i - cache.start], dy, need_param_grads
            )
        return dy, grads

    def get_weights(self) -> list[np.ndarray]:
        return [a.copy() for _, _, a in self.trainable()]

    def set_weights(self, arrays) -> None:
        slots = list(self.trainable())
        if len(slots) != len(arrays):
            raise ShapeError(f"expected {len(slots)} arrays, got {len(arrays)}")
        for (i, name, old), new in zip(slots, arrays):
            new = np.asarray(new, dtype=self.dtype)
            if new.shape != old.shape:
                raise ShapeError(f"layer {i} {name}: shape {new.shape} != {old.shape}")
            self.params[i][name] = new.copy()
        self.touch()

    def astype(self, dtype) -> "Sequential":
        """Copy of this model with parameters cast to ``dtype``."""
        clone = Sequential(self.specs, self.input_shape, self.seed, dtype)
        for i, p in enumerate(self.params):
            clone.params[i] = {k: v.astype(dtype) for k, v in p.items()}
            clone.state[i] = {k: v.copy() for k, v in self.state[i].items()}
        return clone
