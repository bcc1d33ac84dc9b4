"""Feature-matching GAN that forges genuine-looking frames for the attack scenario.

One training "epoch" is one discriminator update followed by one
generator update on a freshly sampled minibatch.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import nncore
from .errors import InvalidArgument, ShapeError
from .iqdata import DeviceCapture, Role
from .nncore import checkpoint
from .nncore.layers import Activation, BatchNorm, Conv1D, Dense, Dropout, Flatten, Reshape

log = logging.getLogger(__name__)

SYNTHETIC_DEVICE_ID = 0xFFFF


@dataclass
class GanConfig:
    noise_dim: int = 100
    lr: float = 0.001
    beta1: float = 0.5  # first-moment decay for both Adam optimizers
    epochs: int = 300
    batch_size: int = 64
    seed: int = 0
    gen_widths: tuple[int, int] = (2048, 4096)
    disc_filters: tuple[int, int] = (64, 128)
    disc_kernels: tuple[int, int] = (7, 5)
    disc_dense: int = 128
    dropout: float = 0.3
    fd_every: int = 0  # 0: FD only before and after training

    def __post_init__(self):
        if self.noise_dim < 1:
            raise InvalidArgument("noise_dim must be >= 1")
        if self.epochs < 1:
            raise InvalidArgument("epochs must be >= 1")
        if self.batch_size < 2:
            raise InvalidArgument("batch_size must be >= 2 (BatchNorm needs batch statistics)")
        for name in ("gen_widths", "disc_filters", "disc_kernels"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def build_generator(noise_dim: int = 100, frame_len: int = 720, widths=(2048, 4096),
                    seed: int = 0, dtype=np.float32) -> nncore.Sequential:
    """noise -> [Dense -> BatchNorm -> ReLU] x 2 -> Dense(2*frame_len) -> (frame_len, 2)."""
    if noise_dim < 1:
        raise InvalidArgument("noise_dim must be >= 1")
    specs = []
    for w in widths:
        # the bias would be cancelled by BatchNorm's centering; beta plays its role
        specs += [Dense(w, use_bias=False), BatchNorm(), Activation("relu")]
    specs += [Dense(2 * frame_len), Reshape((frame_len, 2))]
    return nncore.Sequential(specs, (noise_dim,), seed=seed, dtype=dtype)


def build_discriminator(frame_len: int = 720, filters=(64, 128), kernels=(7, 5), dense: int = 128,
                        dropout: float = 0.3, seed: int = 0, dtype=np.float32) -> nncore.Sequential:
    """Two Conv1D+LeakyReLU(0.2)+Dropout blocks, Dense+LeakyReLU feature layer, one logit."""
    specs = []
    for f, k in zip(filters, kernels):
        specs += [Conv1D(f, k, "leaky_relu", alpha=0.2), Dropout(dropout)]
    specs += [Flatten(), Dense(dense, "leaky_relu", alpha=0.2), Dense(1)]
    return nncore.Sequential(specs, (frame_len, 2), seed=seed, dtype=dtype)


def feature_layer_stop(discriminator: nncore.Sequential) -> int:
    """Layer count up to and including the feature (penultimate dense) layer."""
    return len(discriminator.specs) - 1


@dataclass
class GanPair:
    generator: nncore.Sequential
    discriminator: nncore.Sequential
    config: GanConfig
    history: list[dict] = field(default_factory=list)

    @property
    def frame_len(self) -> int:
        return self.generator.output_shape[0]


def discriminator_loss(pair: GanPair, real, fake, rng):
    """MSE of D's logit against 1 on real and 0 on generated frames (mean of the two)."""
    d = pair.discriminator
    x = np.concatenate([real, fake])
    target = np.concatenate([np.ones((len(real), 1)), np.zeros((len(fake), 1))])
    out, cache = d.forward(x, "train", rng)
    loss, grad = nncore.mse_loss(out, target.astype(out.dtype))
    return loss, cache, grad


def generator_loss(pair: GanPair, real, noise, rng):
    """Feature matching on D's feature layer; returns loss and gradients for G only."""
    g, d = pair.generator, pair.discriminator
    stop = feature_layer_stop(d)
    fake, g_cache = g.forward(noise, "train", rng)
    real_feats, _ = d.forward(real, "train", rng, stop=stop)
    fake_feats, d_cache = d.forward(fake, "train", rng, stop=stop)
    loss, dfeats = nncore.feature_matching_loss(real_feats, fake_feats)
    dfake, _ = d.backward(d_cache, dfeats, need_param_grads=False)
    _, g_grads = g.backward(g_cache, dfake)
    return loss, g_grads


def train_gan(frames, config: GanConfig,
              fd_monitor: Callable[[GanPair], float] | None = None) -> GanPair:
    """Alternate D (MSE) and G (feature matching) Adam steps on standardized ``(N, L, 2)`` frames."""
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 3 or frames.shape[2] != 2:
        raise ShapeError(f"expected frames (N, L, 2), got {frames.shape}")
    if len(frames) == 0:
        raise InvalidArgument("GAN training data is empty")
    frame_len = frames.shape[1]
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    g = build_generator(config.noise_dim, frame_len, config.gen_widths,
                        seed=int(seeds[0].generate_state(1)[0]))
    d = build_discriminator(frame_len, config.disc_filters, config.disc_kernels, config.disc_dense,
                            config.dropout, seed=int(seeds[1].generate_state(1)[0]))
    pair = GanPair(g, d, config)
    rng = np.random.default_rng(seeds[2])
    g_state = nncore.AdamState(lr=config.lr, beta1=config.beta1)
    d_state = nncore.AdamState(lr=config.lr, beta1=config.beta1)
    batch = min(config.batch_size, len(frames))

    if fd_monitor is not None:
        pair.history.append({"epoch": 0, "d_loss": float("nan"), "g_loss": float("nan"),
                             "fd": fd_monitor(pair)})
    for epoch in range(1, config.epochs + 1):
        real = frames[rng.integers(0, len(frames), batch)]
        noise = rng.standard_normal((batch, config.noise_dim)).astype(np.float32)
        fake, _ = g.forward(noise, "train", rng)
        d_loss, d_cache, d_grad = discriminator_loss(pair, real, fake, rng)
        _, d_grads = d.backward(d_cache, d_grad)
        nncore.adam_step(d, d_grads, d_state)

        real = frames[rng.integers(0, len(frames), batch)]
        noise = rng.standard_normal((batch, config.noise_dim)).astype(np.float32)
        g_loss, g_grads = generator_loss(pair, real, noise, rng)
        nncore.adam_step(g, g_grads, g_state)

        entry = {"epoch": epoch, "d_loss": d_loss, "g_loss": g_loss, "fd": float("nan")}
        if fd_monitor is not None and (
            epoch == config.epochs or (config.fd_every and epoch % config.fd_every == 0)
        ):
            entry["fd"] = fd_monitor(pair)
        pair.history.append(entry)
        if epoch % 25 == 0 or epoch == config.epochs:
            log.info("gan epoch %d d_loss %.4f g_loss %.4f fd %s", epoch, d_loss, g_loss, entry["fd"])
    return pair


def sample_frames(generator: nncore.Sequential, n: int, seed: int, batch: int = 256) -> np.ndarray:
    noise_dim = generator.input_shape[0]
    noise = np.random.default_rng(seed).standard_normal((n, noise_dim)).astype(generator.dtype)
    return generator.predict(noise, batch)


def generate_samples(pair: GanPair, n: int, seed: int) -> DeviceCapture:
    """``n`` inference-mode generator frames as a synthetic (rogue ground truth) capture."""
    if n < 0:
        raise InvalidArgument("n must be >= 0")
    frames = sample_frames(pair.generator, n, seed)
    return DeviceCapture(SYNTHETIC_DEVICE_ID, Role.SYNTHETIC, frames.reshape(n, pair.frame_len, 2))


def save_pair(gen_path, disc_path, pair: GanPair, meta: dict | None = None) -> tuple[str, str]:
    meta = {"kind": "gan", "config": pair.config.to_dict(), **(meta or {})}
    return (checkpoint.save(gen_path, pair.generator, {**meta, "role": "generator"}),
            checkpoint.save(disc_path, pair.discriminator, {**meta, "role": "discriminator"}))


def load_pair(gen_path, disc_path) -> GanPair:
    g, meta = checkpoint.load(gen_path)
    d, _ = checkpoint.load(disc_path)
    return GanPair(g, d, GanConfig(**meta["config"]))
