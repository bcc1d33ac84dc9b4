"""Layer specs and their forward/backward kernels.

A spec is a frozen dataclass. ``init`` creates its parameters and
non-trainable state for a given input shape (batch axis excluded);
``forward`` returns the output plus a cache; ``backward`` maps the upstream
gradient to the input gradient and a dict of parameter gradients.
Shapes follow the channels-last convention.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgument, ShapeError

ACTIVATIONS = ("linear", "relu", "leaky_relu")


def _check_activation(name: str):
    if name not in ACTIVATIONS:
        raise InvalidArgument(f"unknown activation {name!r}")


def activate(z, name: str, alpha: float):
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0)
    return np.where(z > 0, z, alpha * z)


def activate_grad(z, dy, name: str, alpha: float):
    if name == "linear":
        return dy
    if name == "relu":
        return dy * (z > 0)
    return dy * np.where(z > 0, 1.0, alpha).astype(dy.dtype)


def glorot_uniform(rng, shape, fan_in: int, fan_out: int, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def conv1d_forward(x, w, b):
    """Valid, stride-1 convolution. x: (N, L, C), w: (k, C, F) -> (N, L-k+1, F)."""
    k, c, f = w.shape
    windows = sliding_window_view(x, k, axis=1)  # (N, Lo, C, k)
    cols = windows.transpose(0, 1, 3, 2).reshape(-1, k * c)
    y = cols @ w.reshape(k * c, f) + b
    return y.reshape(x.shape[0], -1, f), cols


def conv1d_backward(dy, cols, w, x_shape, need_param_grads=True):
    k, c, f = w.shape
    n, lo = dy.shape[0], dy.shape[1]
    dy2 = dy.reshape(-1, f)
    grads = {}
    if need_param_grads:
        grads = {"w": (cols.T @ dy2).reshape(k, c, f), "b": dy2.sum(axis=0)}
    dcols = (dy2 @ w.reshape(k * c, f).T).reshape(n, lo, k, c)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for j in range(k):
        dx[:, j:j + lo] += dcols[:, :, j]
    return dx, grads


@dataclass(frozen=True)
class LayerSpec:
    kind: ClassVar[str] = ""
    trainable: ClassVar[tuple[str, ...]] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def init(self, in_shape, rng, dtype):
        return {}, {}

    def forward(self, params, state, x, train, rng):
        raise NotImplementedError

    def backward(self, params, cache, dy, need_param_grads=True):
        raise NotImplementedError

    def l2_terms(self, params) -> float:
        l2 = getattr(self, "l2", 0.0)
        if not l2:
            return 0.0
        return float(l2 * np.sum(params["w"].astype(np.float64) ** 2))


@dataclass(frozen=True)
class Conv2D(LayerSpec):
    """2-D convolution with a ``(k, 1)`` kernel over ``(H, W, C)`` inputs."""

    filters: int
    kernel: tuple[int, int] = (5, 1)
    activation: str = "relu"
    alpha: float = 0.2
    l2: float = 0.0
    kind: ClassVar[str] = "conv2d"
    trainable: ClassVar[tuple[str, ...]] = ("w", "b")

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.kernel[1] != 1:
            raise InvalidArgument("only (k, 1) kernels are supported")
        _check_activation(self.activation)

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (H, W, C) input, got {in_shape}")
        h, w, _ = in_shape
        if h < self.kernel[0]:
            raise ShapeError(f"conv2d kernel {self.kernel} longer than input height {h}")
        return (h - self.kernel[0] + 1, w, self.filters)

    def init(self, in_shape, rng, dtype):
        k, c = self.kernel[0], in_shape[-1]
        w = glorot_uniform(rng, (k, c, self.filters), k * c, k * self.filters, dtype)
        return {"w": w, "b": np.zeros(self.filters, dtype)}, {}

    def forward(self, params, state, x, train, rng):
        n, h, wd, c = x.shape
        x1 = x.transpose(0, 2, 1, 3).reshape(n * wd, h, c)
        z, cols = conv1d_forward(x1, params["w"], params["b"])
        ho = z.shape[1]
        z = z.reshape(n, wd, ho, self.filters).transpose(0, 2, 1, 3)
        return activate(z, self.activation, self.alpha), (x.shape, cols, z)

    def backward(self, params, cache, dy, need_param_grads=True):
        x_shape, cols, z = cache
        n, h, wd, c = x_shape
        dz = activate_grad(z, dy, self.activation, self.alpha)
        dz1 = dz.transpose(0, 2, 1, 3).reshape(n * wd, z.shape[1], self.filters)
        dx1, grads = conv1d_backward(dz1, cols, params["w"], (n * wd, h, c), need_param_grads)
        dx = dx1.reshape(n, wd, h, c).transpose(0, 2, 1, 3)
        if need_param_grads and self.l2:
            grads["w"] = grads["w"] + 2 * self.l2 * params["w"]
        return dx, grads


@dataclass(frozen=True)
class Conv1D(LayerSpec):
    """1-D convolution over ``(L, C)`` inputs."""

    filters: int
    kernel: int = 7
    activation: str = "linear"
    alpha: float = 0.2
    l2: float = 0.0
    kind: ClassVar[str] = "conv1d"
    trainable: ClassVar[tuple[str, ...]] = ("w", "b")

    def __post_init__(self):
        _check_activation(self.activation)

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"conv1d expects (L, C) input, got {in_shape}")
        if in_shape[0] < self.kernel:
            raise ShapeError(f"conv1d kernel {self.kernel} longer than input length {in_shape[0]}")
        return (in_shape[0] - self.kernel + 1, self.filters)

    def init(self, in_shape, rng, dtype):
        k, c = self.kernel, in_shape[-1]
        w = glorot_uniform(rng, (k, c, self.filters), k * c, k * self.filters, dtype)
        return {"w": w, "b": np.zeros(self.filters, dtype)}, {}

    def forward(self, params, state, x, train, rng):
        z, cols = conv1d_forward(x, params["w"], params["b"])
        return activate(z, self.activation, self.alpha), (x.shape, cols, z)

    def backward(self, params, cache, dy, need_param_grads=True):
        x_shape, cols, z = cache
        dz = activate_grad(z, dy, self.activation, self.alpha)
        dx, grads = conv1d_backward(dz, cols, params["w"], x_shape, need_param_grads)
        if need_param_grads and self.l2:
            grads["w"] = grads["w"] + 2 * self.l2 * params["w"]
        return dx, grads


@dataclass(frozen=True)
class Dense(LayerSpec):
    """Fully connected layer. ``use_bias=False`` suits layers feeding BatchNorm."""

    units: int
    activation: str = "linear"
    alpha: float = 0.2
    l2: float = 0.0
    use_bias: bool = True
    kind: ClassVar[str] = "dense"

    def __post_init__(self):
        _check_activation(self.activation)

    @property
    def trainable(self):
        return ("w", "b") if self.use_bias else ("w",)

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {in_shape}")
        return (self.units,)

    def init(self, in_shape, rng, dtype):
        w = glorot_uniform(rng, (in_shape[0], self.units), in_shape[0], self.units, dtype)
        if not self.use_bias:
            return {"w": w}, {}
        return {"w": w, "b": np.zeros(self.units, dtype)}, {}

    def forward(self, params, state, x, train, rng):
        z = x @ params["w"]
        if self.use_bias:
            z = z + params["b"]
        return activate(z, self.activation, self.alpha), (x, z)

    def backward(self, params, cache, dy, need_param_grads=True):
        x, z = cache
        dz = activate_grad(z, dy, self.activation, self.alpha)
        grads = {}
        if need_param_grads:
            grads = {"w": x.T @ dz}
            if self.use_bias:
                grads["b"] = dz.sum(axis=0)
            if self.l2:
                grads["w"] = grads["w"] + 2 * self.l2 * params["w"]
        return dz @ params["w"].T, grads


@dataclass(frozen=True)
class Activation(LayerSpec):
    activation: str = "relu"
    alpha: float = 0.2
    kind: ClassVar[str] = "activation"

    def __post_init__(self):
        _check_activation(self.activation)

    def forward(self, params, state, x, train, rng):
        return activate(x, self.activation, self.alpha), x

    def backward(self, params, cache, dy, need_param_grads=True):
        return activate_grad(cache, dy, self.activation, self.alpha), {}


@dataclass(frozen=True)
class BatchNorm(LayerSpec):
    """Normalizes over every axis except the last (feature/channel) axis.

    Running statistics are an exponential moving average with a bias
    correction (divided by ``1 - momentum**count``), so the zero/one
    initial values carry no weight after the first update.
    """

    momentum: float = 0.99
    eps: float = 1e-3
    kind: ClassVar[str] = "batchnorm"
    trainable: ClassVar[tuple[str, ...]] = ("gamma", "beta")

    def init(self, in_shape, rng, dtype):
        c = in_shape[-1]
        params = {"gamma": np.ones(c, dtype), "beta": np.zeros(c, dtype)}
        state = {
            "ema_mean": np.zeros(c, np.float64),
            "ema_var": np.zeros(c, np.float64),
            "count": np.zeros(1, np.float64),
        }
        return params, state

    @staticmethod
    def running_stats(state, momentum):
        count = state["count"][0]
        if count == 0:
            return np.zeros_like(state["ema_mean"]), np.ones_like(state["ema_var"])
        debias = 1.0 - momentum ** count
        return state["ema_mean"] / debias, state["ema_var"] / debias

    def forward(self, params, state, x, train, rng):
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            state["ema_mean"] = m * state["ema_mean"] + (1 - m) * mean
            state["ema_var"] = m * state["ema_var"] + (1 - m) * var
            state["count"] = state["count"] + 1
        else:
            mean, var = self.running_stats(state, self.momentum)
            mean, var = mean.astype(x.dtype), var.astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        y = xhat * params["gamma"] + params["beta"]
        return y, (xhat, inv_std.astype(x.dtype), train)

    def backward(self, params, cache, dy, need_param_grads=True):
        xhat, inv_std, train = cache
        axes = tuple(range(dy.ndim - 1))
        grads = {}
        if need_param_grads:
            grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * params["gamma"]
        if not train:
            return dxhat * inv_std, grads
        m = dy.size // dy.shape[-1]
        dx = (inv_std / m) * (
            m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
        )
        return dx, grads


@dataclass(frozen=True)
class MaxPool2D(LayerSpec):
    """Non-overlapping max pooling with a ``(p, 1)`` window; ties go to the first index."""

    pool: tuple[int, int] = (2, 1)
    kind: ClassVar[str] = "maxpool2d"

    def __post_init__(self):
        object.__setattr__(self, "pool", tuple(int(p) for p in self.pool))
        if self.pool[1] != 1 or self.pool[0] < 1:
            raise InvalidArgument("only (p, 1) pools are supported")

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2d expects (H, W, C) input, got {in_shape}")
        h = in_shape[0] // self.pool[0]
        if h == 0:
            raise ShapeError(f"input height {in_shape[0]} smaller than pool {self.pool}")
        return (h, *in_shape[1:])

    def forward(self, params, state, x, train, rng):
        p = self.pool[0]
        n, h, w, c = x.shape
        ho = h // p
        blocks = x[:, : ho * p].reshape(n, ho, p, w, c)
        idx = blocks.argmax(axis=2)
        y = np.take_along_axis(blocks, idx[:, :, None], axis=2)[:, :, 0]
        return y, (x.shape, idx)

    def backward(self, params, cache, dy, need_param_grads=True):
        (n, h, w, c), idx = cache
        p = self.pool[0]
        ho = h // p
        blocks = np.zeros((n, ho, p, w, c), dy.dtype)
        np.put_along_axis(blocks, idx[:, :, None], dy[:, :, None], axis=2)
        dx = np.zeros((n, h, w, c), dy.dtype)
        dx[:, : ho * p] = blocks.reshape(n, ho * p, w, c)
        return dx, {}


@dataclass(frozen=True)
class Dropout(LayerSpec):
    """Inverted dropout: scales kept units by ``1/(1-rate)`` at train time only."""

    rate: float = 0.3
    kind: ClassVar[str] = "dropout"

    def __post_init__(self):
        if not 0 <= self.rate < 1:
            raise InvalidArgument(f"dropout rate must be in [0, 1), got {self.rate}")

    def forward(self, params, state, x, train, rng):
        if not train or self.rate == 0:
            return x, None
        if rng is None:
            raise InvalidArgument("train-mode dropout needs a random generator")
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1 - self.rate)
        return x * mask, mask

    def backward(self, params, cache, dy, need_param_grads=True):
        return (dy if cache is None else dy * cache), {}


@dataclass(frozen=True)
class Flatten(LayerSpec):
    kind: ClassVar[str] = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, state, x, train, rng):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, cache, dy, need_param_grads=True):
        return dy.reshape(cache), {}


@dataclass(frozen=True)
class Reshape(LayerSpec):
    shape: tuple[int, ...] = ()
    kind: ClassVar[str] = "reshape"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {in_shape} to {self.shape}")
        return self.shape

    def forward(self, params, state, x, train, rng):
        return x.reshape(x.shape[0], *self.shape), x.shape

    def backward(self, params, cache, dy, need_param_grads=True):
        return dy.reshape(cache), {}


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Conv2D, Conv1D, Dense, Activation, BatchNorm, MaxPool2D, Dropout, Flatten, Reshape)
}


def spec_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    kind = d.pop("kind")
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise InvalidArgument(f"unknown layer kind {kind!r}") from None
    return cls(**d)
