"""Independent reference computations, written without the package's code paths."""
import math

import numpy as np
from scipy import linalg


def brute_force_calibration(pmax, is_rogue, n=100):
    """Loop every grid candidate in plain Python; first strict improvement wins (smallest theta)."""
    pmax = [float(v) for v in pmax]
    rogue = [bool(v) for v in is_rogue]
    lo, hi = min(pmax), max(pmax)
    best_theta, best_f1 = None, -1.0
    for k in range(n):
        theta = hi if k == n - 1 else lo + (hi - lo) * k / (n - 1)
        tp = fp = fn = 0
        for p, r in zip(pmax, rogue):
            flagged = p < theta
            tp += flagged and r
            fp += flagged and not r
            fn += (not flagged) and r
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else 0.0
        if f1 > best_f1:
            best_theta, best_f1 = theta, f1
    return best_theta, best_f1


def frechet_scipy(x, y, eps=1e-6):
    """FD through scipy's general matrix square root."""
    x = np.asarray(x, np.float64).reshape(len(x), -1)
    y = np.asarray(y, np.float64).reshape(len(y), -1)
    d = x.shape[1]
    ca = np.cov(x, rowvar=False).reshape(d, d) + eps * np.eye(d)
    cb = np.cov(y, rowvar=False).reshape(d, d) + eps * np.eye(d)
    root = linalg.sqrtm(ca @ cb).real
    diff = x.mean(0) - y.mean(0)
    return float(diff @ diff + np.trace(ca + cb - 2 * root))


def gaussian_1d_fd(mu1, var1, mu2, var2):
    return (mu1 - mu2) ** 2 + (math.sqrt(var1) - math.sqrt(var2)) ** 2


def softmax_py(z, T=1.0):
    m = max(z)
    e = [math.exp((v - m) / T) for v in z]
    s = sum(e)
    return [v / s for v in e]


def dense_mse_grads(w, b, x, y):
    """Hand chain rule for yhat = x @ w + b, L = mean((yhat - y)^2)."""
    yhat = x @ w + b
    dy = 2.0 * (yhat - y) / yhat.size
    return x.T @ dy, dy.sum(axis=0)
