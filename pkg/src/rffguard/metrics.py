"""Fréchet distance, confusion matrices and the CSV/SVG plot exports."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, NumericalError, ShapeError
from .openset import ROGUE, f1_rogue

log = logging.getLogger(__name__)

FD_EPS = 1e-6


@dataclass
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray
    n_samples: int = 0

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def rank_deficient(self) -> bool:
        return self.n_samples <= self.dim


def flatten_frames(frames) -> np.ndarray:
    """``(N, L, 2)`` frames to ``(N, 2L)`` vectors, (i, q) interleaved in sample order."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr.reshape(arr.shape[0], -1)


def summarize_gaussian(frames, eps: float = FD_EPS) -> GaussianSummary:
    """Empirical mean and (N-1)-normalized covariance plus ``eps * I``."""
    x = flatten_frames(frames)
    if x.shape[0] < 2:
        raise InvalidArgument("need at least two frames for a covariance estimate")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = (cov + cov.T) / 2
    cov[np.diag_indices_from(cov)] += eps
    return GaussianSummary(mean, cov, x.shape[0])


def _psd_sqrt(mat):
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The trace of the product root is taken from the eigenvalues of the
    symmetric matrix ``S_a^(1/2) S_b S_a^(1/2)``, clamping round-off
    negatives to zero.
    """
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: {a.dim} vs {b.dim}")
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2)
    if vals.min() < -1e-6:
        warnings.warn(f"covariance product has eigenvalue {vals.min():.3g}; clamped to 0",
                      RuntimeWarning, stacklevel=2)
    tr_root = np.sum(np.sqrt(np.clip(vals, 0, None)))
    diff = a.mean - b.mean
    fd = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2 * tr_root)
    if not np.isfinite(fd):
        cond = np.linalg.cond(a.cov), np.linalg.cond(b.cov)
        raise NumericalError(f"non-finite Fréchet distance (covariance condition numbers {cond})")
    return max(fd, 0.0)


def fd_between(frames_a, frames_b, eps: float = FD_EPS) -> float:
    return frechet_distance(summarize_gaussian(frames_a, eps), summarize_gaussian(frames_b, eps))


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rows > 0, self.counts / np.where(rows == 0, 1, rows), 0.0)
        return out

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "counts": self.counts.astype(int).tolist(),
            "row_percent": np.round(100 * self.normalized, 4).tolist(),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\predicted", *self.labels])
            for name, row in zip(self.labels, self.counts.astype(int)):
                w.writerow([name, *row.tolist()])


def binary_confusion(true_is_rogue, predicted) -> ConfusionMatrix:
    """Rows/cols ``[genuine, rogue]``; a prediction is rogue iff it is -1."""
    truth = np.asarray(true_is_rogue, dtype=bool)
    pred = np.asarray(predicted)
    if truth.shape != pred.shape:
        raise InvalidArgument(f"length mismatch: {truth.shape} vs {pred.shape}")
    counts = np.zeros((2, 2), np.int64)
    np.add.at(counts, (truth.astype(int), (pred == ROGUE).astype(int)), 1)
    return ConfusionMatrix(["genuine", "rogue"], counts)


def binary_f1(cm: ConfusionMatrix) -> float:
    (_, fp), (fn, tp) = cm.counts
    return f1_rogue(int(tp), int(fp), int(fn))


def overall_confusion(true_labels, predicted, class_names) -> ConfusionMatrix:
    """``k`` genuine classes plus a trailing rogue row/column; -1 means rogue on either axis."""
    truth = np.asarray(true_labels)
    pred = np.asarray(predicted)
    if truth.shape != pred.shape:
        raise InvalidArgument(f"length mismatch: {truth.shape} vs {pred.shape}")
    k = len(class_names)
    for name, arr in (("true", truth), ("predicted", pred)):
        bad = (arr != ROGUE) & ((arr < 0) | (arr >= k))
        if np.any(bad):
            raise InvalidArgument(f"unknown {name} label {arr[bad][0]}")
    rows = np.where(truth == ROGUE, k, truth)
    cols = np.where(pred == ROGUE, k, pred)
    counts = np.zeros((k + 1, k + 1), np.int64)
    np.add.at(counts, (rows, cols), 1)
    return ConfusionMatrix([*class_names, "rogue"], counts)


def _plot_svg(path, series, title, xlabel, ylabel, threshold=None, kind="scatter"):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "rffguard", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        for label, color, data in series:
            if kind == "scatter":
                ax.scatter(data[:, 0], data[:, 1], s=4, alpha=0.6, color=color, label=label)
            else:
                edges, counts = data
                ax.stairs(counts, edges, color=color, label=label, fill=True, alpha=0.5)
        if threshold is not None:
            ax.axvline(threshold, color="red", linestyle="--", label=f"threshold {threshold:.4f}")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def export_constellation(real_frames, synthetic_frames, path, n_points: int = 1000,
                         seed: int = 0, svg: bool = True) -> None:
    """CSV of ``n_points`` (i, q) pairs per source drawn without replacement, plus an SVG scatter."""
    path = Path(path)
    rng = np.random.default_rng(seed)
    picked = []
    for source, frames in (("real", real_frames), ("synthetic", synthetic_frames)):
        pairs = np.asarray(frames, dtype=np.float64).reshape(-1, 2)
        take = min(n_points, len(pairs))
        idx = np.sort(rng.choice(len(pairs), take, replace=False)) if take else np.zeros(0, int)
        picked.append((source, pairs[idx]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "q", "source"])
        for source, pairs in picked:
            for i, q in pairs:
                w.writerow([repr(float(i)), repr(float(q)), source])
    if svg:
        _plot_svg(path.with_suffix(".svg"),
                  [("real", "tab:blue", picked[0][1]), ("synthetic", "tab:red", picked[1][1])],
                  "Real vs generated I/Q constellation", "I", "Q")


def pmax_histogram(val_pmax, val_is_rogue, bins: int = 50):
    pmax = np.asarray(val_pmax, dtype=np.float64)
    rogue = np.asarray(val_is_rogue, dtype=bool)
    edges = np.linspace(0.0, 1.0, bins + 1)
    genuine_counts, _ = np.histogram(pmax[~rogue], edges)
    rogue_counts, _ = np.histogram(pmax[rogue], edges)
    return edges, genuine_counts, rogue_counts


def export_pmax_histogram(val_pmax, val_is_rogue, theta: float, path, bins: int = 50,
                          svg: bool = True) -> None:
    """CSV rows ``bin_lo, bin_hi, genuine, rogue, threshold`` over 50 uniform bins on [0, 1]."""
    path = Path(path)
    edges, gen, rog = pmax_histogram(val_pmax, val_is_rogue, bins)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "genuine", "rogue", "threshold"])
        for k in range(bins):
            w.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(gen[k]), int(rog[k]),
                        repr(float(theta))])
    if svg:
        _plot_svg(path.with_suffix(".svg"),
                  [("genuine", "tab:blue", (edges, gen)), ("rogue", "tab:orange", (edges, rog))],
                  "Max softmax probability (validation)", "p_max", "count",
                  threshold=theta, kind="hist")
