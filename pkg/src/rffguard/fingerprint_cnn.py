"""The fingerprinting CNN: construction, training, logits and the random hyperparameter search."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nncore
from .errors import InvalidArgument, InvalidState, ShapeError
from .iqdata import DatasetSplit, Role, SplitPart, StandardizationStats
from .nncore import checkpoint
from .nncore.layers import BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool2D

log = logging.getLogger(__name__)

FILTER_CHOICES = (32, 64, 96, 128)
KERNEL_CHOICES = (3, 5, 7)
DENSE_UNIT_CHOICES = (32, 96, 160, 224, 288, 352, 416, 480, 544)
DROPOUT_CHOICES = (0.3, 0.4, 0.5, 0.6, 0.7)
L2_RANGE = (1e-5, 1e-2)
LR_RANGE = (1e-4, 1e-2)


@dataclass(frozen=True)
class CnnHyperparams:
    filters: tuple[int, ...] = (32,)
    kernels: tuple[int, ...] = (5,)
    l2: float = 1e-4
    dense_units: tuple[int, ...] = (352,)
    dropout: float = 0.3
    lr: float = 0.00036
    batch_size: int = 128
    epochs: int = 10

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        object.__setattr__(self, "dense_units", tuple(int(u) for u in self.dense_units))
        if len(self.filters) != len(self.kernels) or not self.filters:
            raise InvalidArgument("filters and kernels need one entry per conv layer")
        if not self.dense_units:
            raise InvalidArgument("at least one dense layer is required")

    @property
    def n_conv_layers(self) -> int:
        return len(self.filters)

    @property
    def n_dense(self) -> int:
        return len(self.dense_units)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "CnnHyperparams":
        return cls(**d)


REFERENCE_HYPERPARAMS = CnnHyperparams()


def in_table_domain(hp: CnnHyperparams) -> bool:
    """Whether every field lies inside the tuner's search domain."""
    return (
        hp.n_conv_layers in (1, 2, 3)
        and all(f in FILTER_CHOICES for f in hp.filters)
        and all(k in KERNEL_CHOICES for k in hp.kernels)
        and L2_RANGE[0] <= hp.l2 <= L2_RANGE[1]
        and hp.n_dense in (1, 2)
        and all(u in DENSE_UNIT_CHOICES for u in hp.dense_units)
        and any(math.isclose(hp.dropout, d) for d in DROPOUT_CHOICES)
        and LR_RANGE[0] <= hp.lr <= LR_RANGE[1]
        and hp.batch_size == 128
        and hp.epochs == 10
    )


def build_cnn(hp: CnnHyperparams, n_classes: int = 7, frame_len: int = 720,
              seed: int = 0, dtype=np.float32) -> nncore.Sequential:
    """Conv blocks (conv+ReLU+L2, BatchNorm, (2,1) max-pool), then dense+dropout blocks and a logit layer."""
    if n_classes < 2:
        raise InvalidArgument("need at least two classes")
    specs = []
    for f, k in zip(hp.filters, hp.kernels):
        specs += [Conv2D(f, (k, 1), "relu", l2=hp.l2), BatchNorm(), MaxPool2D((2, 1))]
    specs.append(Flatten())
    for units in hp.dense_units:
        specs += [Dense(units, "relu", l2=hp.l2), Dropout(hp.dropout)]
    specs.append(Dense(n_classes))
    return nncore.Sequential(specs, (frame_len, 2, 1), seed=seed, dtype=dtype)


def build_reference_cnn(n_classes: int = 7, frame_len: int = 720, seed: int = 0,
                    dtype=np.float32) -> nncore.Sequential:
    return build_cnn(REFERENCE_HYPERPARAMS, n_classes, frame_len, seed, dtype)


@dataclass
class TrainedCnn:
    model: nncore.Sequential
    stats: StandardizationStats | None
    class_ids: tuple[int, ...]
    hyperparams: CnnHyperparams = REFERENCE_HYPERPARAMS
    history: list[dict] = field(default_factory=list)
    temperature: float | None = None
    threshold: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @property
    def calibrated(self) -> bool:
        return self.temperature is not None and self.threshold is not None


def class_labels(part: SplitPart, class_ids) -> np.ndarray:
    """Class index per frame; -1 for devices outside the genuine set."""
    lookup = {d: i for i, d in enumerate(class_ids)}
    return np.array([lookup.get(int(d), -1) for d in part.device_ids], dtype=np.int64)


def _as_input(frames) -> np.ndarray:
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[..., None]
    if frames.ndim != 4 or frames.shape[2:] != (2, 1):
        raise ShapeError(f"expected frames (N, L, 2), got {frames.shape}")
    return frames


def _batch_step(model, xb, yb, rng):
    out, cache = model.forward(xb, "train", rng)
    loss, dlogits = nncore.sparse_ce_loss(out, yb, model.l2_penalty())
    return out, cache, loss, dlogits


def train_cnn(model: nncore.Sequential, split: DatasetSplit, stats: StandardizationStats,
              lr: float = 0.00036, epochs: int = 10, batch_size: int = 128, seed: int = 0,
              hyperparams: CnnHyperparams | None = None) -> TrainedCnn:
    """Minibatch Adam on sparse cross-entropy + L2 over the (standardized) train split.

    Genuine device ids map to class indices in sorted order. Each epoch
    reshuffles with a generator derived from ``(seed, epoch)``.
    """
    train = split.train
    if len(train) == 0:
        raise InvalidArgument("training split is empty")
    if not train.standardized:
        raise InvalidState("training frames must be standardized first")
    if np.any(train.roles != Role.GENUINE):
        raise InvalidArgument("training split must contain genuine frames only")
    class_ids = tuple(sorted(split.genuine_ids or set(train.device_ids.tolist())))
    labels = class_labels(train, class_ids)
    n_out = model.output_shape[0]
    if np.any(labels < 0) or np.any(labels >= n_out):
        raise InvalidArgument(f"labels outside [0, {n_out})")
    x = _as_input(train.frames).astype(model.dtype)
    state = nncore.AdamState(lr=lr)
    history = []
    n = len(train)
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        drop_rng = np.random.default_rng([seed, epoch, 1])
        loss_sum, correct = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out, cache, loss, dlogits = _batch_step(model, x[idx], labels[idx], drop_rng)
            _, grads = model.backward(cache, dlogits)
            nncore.adam_step(model, grads, state)
            loss_sum += loss * len(idx)
            correct += int(np.sum(out.argmax(axis=1) == labels[idx]))
        history.append({"epoch": epoch + 1, "loss": loss_sum / n, "accuracy": correct / n})
        log.info("epoch %d loss %.4f acc %.4f", epoch + 1, loss_sum / n, correct / n)
    hp = hyperparams or replace(REFERENCE_HYPERPARAMS, lr=lr, epochs=epochs, batch_size=batch_size)
    return TrainedCnn(model, stats, class_ids, hp, history)


def logits(trained: TrainedCnn, frames, batch_size: int = 256) -> np.ndarray:
    """Inference-mode logits for standardized frames (a ``SplitPart`` or an ``(N, L, 2)`` array)."""
    if trained.stats is None:
        raise InvalidState("model carries no standardization stats; inputs cannot be trusted")
    if isinstance(frames, SplitPart):
        if not frames.standardized:
            raise InvalidState("frames are not standardized; apply the checkpoint's stats first")
        frames = frames.frames
    return trained.model.predict(_as_input(frames), batch_size).astype(np.float64)


def tempered_softmax(z, T: float) -> np.ndarray:
    """Softmax of ``z / T`` along the last axis, shifted by the max for stability."""
    if not T > 0:
        raise InvalidArgument(f"temperature must be positive, got {T}")
    z = np.asarray(z, dtype=np.float64) / T
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def accuracy_on_genuine(trained: TrainedCnn, part: SplitPart) -> float:
    labels = class_labels(part, trained.class_ids)
    keep = labels >= 0
    if not np.any(keep):
        return float("nan")
    z = logits(trained, part.select(keep))
    return float(np.mean(z.argmax(axis=1) == labels[keep]))


# -- hyperparameter search ----------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    conv_layers: tuple[int, ...] = (1, 2, 3)
    filters: tuple[int, ...] = FILTER_CHOICES
    kernels: tuple[int, ...] = KERNEL_CHOICES
    l2: tuple[float, float] = L2_RANGE
    dense_layers: tuple[int, ...] = (1, 2)
    dense_units: tuple[int, ...] = DENSE_UNIT_CHOICES
    dropout: tuple[float, ...] = DROPOUT_CHOICES
    lr: tuple[float, float] = LR_RANGE
    batch_size: int = 128
    epochs: int = 10

    def sample(self, rng: np.random.Generator) -> CnnHyperparams:
        def log_uniform(lo, hi):
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))

        n_conv = int(rng.choice(self.conv_layers))
        n_dense = int(rng.choice(self.dense_layers))
        return CnnHyperparams(
            filters=tuple(int(rng.choice(self.filters)) for _ in range(n_conv)),
            kernels=tuple(int(rng.choice(self.kernels)) for _ in range(n_conv)),
            l2=log_uniform(*self.l2),
            dense_units=tuple(int(rng.choice(self.dense_units)) for _ in range(n_dense)),
            dropout=float(rng.choice(self.dropout)),
            lr=log_uniform(*self.lr),
            batch_size=self.batch_size,
            epochs=self.epochs,
        )


@dataclass
class Trial:
    index: int
    hyperparams: CnnHyperparams
    seed: int
    val_accuracy: float
    trained: TrainedCnn | None = None

    def record(self) -> dict:
        return {
            "trial": self.index,
            "seed": self.seed,
            "val_accuracy": self.val_accuracy,
            "hyperparams": self.hyperparams.to_dict(),
        }


def random_search(space: SearchSpace, n_trials: int, split: DatasetSplit,
                  stats: StandardizationStats, seed: int = 0, keep_top: int = 5,
                  frame_len: int | None = None) -> list[Trial]:
    """Independent uniform draws from ``space``; trials ranked by genuine validation accuracy.

    Only the ``keep_top`` best trials keep their trained models.
    """
    if n_trials < 1:
        raise InvalidArgument("n_trials must be >= 1")
    frame_len = frame_len or split.train.frames.shape[1]
    n_classes = len(split.genuine_ids)
    trials = []
    for t in range(n_trials):
        rng = np.random.default_rng([seed, t])
        hp = space.sample(rng)
        trial_seed = int(rng.integers(2**31))
        try:
            model = build_cnn(hp, n_classes, frame_len, seed=trial_seed)
        except ShapeError as exc:
            log.warning("trial %d skipped: %s", t, exc)
            trials.append(Trial(t, hp, trial_seed, float("-inf")))
            continue
        trained = train_cnn(model, split, stats, hp.lr, hp.epochs, hp.batch_size,
                            trial_seed, hyperparams=hp)
        acc = accuracy_on_genuine(trained, split.validation)
        log.info("trial %d val_acc %.4f %s", t, acc, hp)
        trials.append(Trial(t, hp, trial_seed, acc, trained))
        trials.sort(key=lambda tr: (-tr.val_accuracy, tr.index))
        for dropped in trials[keep_top:]:
            dropped.trained = None
    return sorted(trials, key=lambda tr: (-tr.val_accuracy, tr.index))


# -- checkpoints --------------------------------------------------------------

def save_trained(path, trained: TrainedCnn) -> str:
    meta = {
        "kind": "fingerprint_cnn",
        "stats": trained.stats.to_dict() if trained.stats else None,
        "class_ids": list(trained.class_ids),
        "hyperparams": trained.hyperparams.to_dict(),
        "history": trained.history,
        "calibration": (
            {"temperature": trained.temperature, "threshold": trained.threshold}
            if trained.calibrated else None
        ),
        **trained.meta,
    }
    return checkpoint.save(path, trained.model, meta)


def load_trained(path) -> TrainedCnn:
    model, meta = checkpoint.load(Path(path))
    meta = dict(meta)
    if meta.pop("kind", None) != "fingerprint_cnn":
        raise InvalidArgument(f"{path} is not a fingerprint CNN checkpoint")
    stats = meta.pop("stats")
    calib = meta.pop("calibration") or {}
    return TrainedCnn(
        model=model,
        stats=StandardizationStats(**stats) if stats else None,
        class_ids=tuple(meta.pop("class_ids")),
        hyperparams=CnnHyperparams.from_dict(meta.pop("hyperparams")),
        history=meta.pop("history"),
        temperature=calib.get("temperature"),
        threshold=calib.get("threshold"),
        meta=meta,
    )
