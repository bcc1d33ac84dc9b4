"""Max-softmax rogue rejection: decision rule, F1-driven threshold calibration, temperature choice."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, InvalidArgument
from .fingerprint_cnn import tempered_softmax

ROGUE = -1
DEFAULT_TEMPERATURES = (1.0, 1.5, 2.0, 2.5, 3.0)


def max_prob(p) -> np.ndarray | float:
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0 or p.shape[-1] == 0:
        raise InvalidArgument("empty probability vector")
    out = p.max(axis=-1)
    return float(out) if out.ndim == 0 else out


def decide(p, theta: float):
    """Rogue (-1) iff ``max(p) < theta``; otherwise the first index attaining the max.

    Works on a single vector or a ``(N, k)`` batch.
    """
    p = np.asarray(p, dtype=np.float64)
    pmax = p.max(axis=-1)
    labels = np.where(pmax < theta, ROGUE, p.argmax(axis=-1))
    return int(labels) if labels.ndim == 0 else labels


def f1_rogue(tp: int, fp: int, fn: int) -> float:
    """F1 with rogue as the positive class; 0 when nothing is positive or predicted."""
    if min(tp, fp, fn) < 0:
        raise InvalidArgument("counts must be nonnegative")
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def threshold_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` equally spaced candidates from ``lo`` to ``hi``, both endpoints exact."""
    if n == 1:
        return np.array([lo], dtype=np.float64)
    grid = lo + (hi - lo) * np.arange(n, dtype=np.float64) / (n - 1)
    grid[-1] = hi
    return grid


@dataclass
class CalibrationResult:
    theta_star: float
    best_f1: float
    sweep: list[tuple[float, float]]
    temperature_star: float | None = None
    model_rank: int = 0
    table: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "theta_star": self.theta_star,
            "temperature_star": self.temperature_star,
            "best_f1": self.best_f1,
            "model_rank": self.model_rank,
            "sweep": [[t, f] for t, f in self.sweep],
            "table": self.table,
        }


def calibrate_threshold(val_pmax, val_is_rogue, n_candidates: int = 100) -> CalibrationResult:
    """Sweep thresholds over ``[min p_max, max p_max]`` and keep the best rogue F1.

    Ties go to the smallest threshold.
    """
    pmax = np.asarray(val_pmax, dtype=np.float64)
    is_rogue = np.asarray(val_is_rogue, dtype=bool)
    if pmax.shape != is_rogue.shape or pmax.ndim != 1:
        raise InvalidArgument("p_max and labels must be equal-length vectors")
    if n_candidates < 1:
        raise InvalidArgument("n_candidates must be positive")
    if is_rogue.all() or not is_rogue.any():
        raise CalibrationError("validation set needs both genuine and rogue samples")
    grid = threshold_grid(pmax.min(), pmax.max(), n_candidates)
    pred = pmax[None, :] < grid[:, None]
    tp = np.sum(pred & is_rogue, axis=1)
    fp = np.sum(pred & ~is_rogue, axis=1)
    fn = np.sum(~pred & is_rogue, axis=1)
    f1 = [f1_rogue(int(a), int(b), int(c)) for a, b, c in zip(tp, fp, fn)]
    best = int(np.argmax(f1))
    return CalibrationResult(float(grid[best]), f1[best], list(zip(grid.tolist(), f1)))


def select_temperature_from_logits(val_logits: list, val_is_rogue,
                                   temperatures=DEFAULT_TEMPERATURES,
                                   n_candidates: int = 100) -> CalibrationResult:
    """Calibrate every (model, T) pair and return the best by rogue F1.

    ``val_logits[r]`` are the validation logits of the model ranked ``r``.
    Ties prefer lower T, then better-ranked model.
    """
    if not val_logits:
        raise InvalidArgument("need at least one model")
    best = None
    table = []
    for T in sorted(temperatures):
        for rank, z in enumerate(val_logits):
            pmax = max_prob(tempered_softmax(z, T))
            res = calibrate_threshold(pmax, val_is_rogue, n_candidates)
            table.append({"model_rank": rank, "temperature": T,
                          "theta": res.theta_star, "f1": res.best_f1})
            if best is None or res.best_f1 > best.best_f1:
                res.temperature_star, res.model_rank = T, rank
                best = res
    best.table = table
    return best


def select_temperature(trained_models: list, validation, temperatures=DEFAULT_TEMPERATURES,
                       n_candidates: int = 100):
    """Pick ``(model, T*, theta*)`` over the top-ranked models on the validation split.

    The validation-only device stands in for rogue transmitters.
    Returns ``(model, CalibrationResult)``.
    """
    from .fingerprint_cnn import logits

    all_logits = [logits(m, validation) for m in trained_models]
    result = select_temperature_from_logits(all_logits, validation.is_rogue(),
                                            temperatures, n_candidates)
    return trained_models[result.model_rank], result
