import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rffguard import metrics
from rffguard.errors import InvalidArgument, ShapeError
from rffguard.openset import ROGUE

from frozen import FD_1D_UNIT_VS_WIDE
from oracles import frechet_scipy, gaussian_1d_fd


def g1(mu, var):
    return metrics.GaussianSummary(np.array([mu]), np.array([[var]]))


def test_summary_hand_values():
    s = metrics.summarize_gaussian(np.array([0.0, 2.0]))
    assert s.mean.tolist() == [1.0]
    assert s.cov[0, 0] == pytest.approx(2.0 + 1e-6, abs=1e-15)
    with pytest.raises(InvalidArgument):
        metrics.summarize_gaussian(np.zeros((1, 3, 2)))


def test_fd_closed_form_1d():
    assert metrics.frechet_distance(g1(0, 1), g1(1, 4)) == pytest.approx(FD_1D_UNIT_VS_WIDE, abs=1e-9)


@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(-5, 5), st.floats(0.01, 10))
def test_fd_1d_matches_closed_form(m1, v1, m2, v2):
    assert metrics.frechet_distance(g1(m1, v1), g1(m2, v2)) == pytest.approx(
        gaussian_1d_fd(m1, v1, m2, v2), abs=1e-9)


@given(st.integers(0, 2**31), st.integers(1, 6))
def test_fd_matches_scipy_and_is_symmetric(seed, d):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((40, d)) @ rng.standard_normal((d, d))
    y = rng.standard_normal((30, d)) * 2 + 1
    ab, ba = metrics.fd_between(x, y), metrics.fd_between(y, x)
    assert ab == pytest.approx(ba, abs=1e-6)
    assert ab == pytest.approx(frechet_scipy(x, y), rel=1e-6, abs=1e-6)
    assert metrics.fd_between(x, x) <= 1e-6


def test_fd_shifted_clouds():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((2000, 4))
    assert metrics.fd_between(a, rng.standard_normal((2000, 4)) + 3.0) >= 8


def test_fd_rank_deficient_is_finite():
    rng = np.random.default_rng(0)
    a = metrics.summarize_gaussian(rng.standard_normal((5, 20, 2)))
    assert a.rank_deficient
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fd = metrics.frechet_distance(a, metrics.summarize_gaussian(rng.standard_normal((5, 20, 2))))
    assert np.isfinite(fd) and fd > 0


def test_fd_dimension_mismatch():
    with pytest.raises(ShapeError):
        metrics.frechet_distance(g1(0, 1), metrics.summarize_gaussian(np.zeros((3, 2)) + np.arange(3)[:, None]))


def test_binary_confusion_and_f1():
    truth = np.array([False, False, True, True, True])
    pred = np.array([0, ROGUE, ROGUE, ROGUE, 2])
    cm = metrics.binary_confusion(truth, pred)
    assert cm.counts.tolist() == [[1, 1], [1, 2]]
    assert metrics.binary_f1(cm) == pytest.approx(4 / 6)
    np.testing.assert_allclose(cm.normalized, [[0.5, 0.5], [1 / 3, 2 / 3]])


def test_overall_confusion_rogue_last_and_reconciles():
    truth = np.array([0, 1, 1, ROGUE, ROGUE])
    pred = np.array([0, ROGUE, 0, 1, ROGUE])
    cm = metrics.overall_confusion(truth, pred, ["a", "b"])
    assert cm.labels == ["a", "b", "rogue"]
    assert cm.counts.tolist() == [[1, 0, 0], [1, 0, 1], [0, 1, 1]]
    binary = metrics.binary_confusion(truth == ROGUE, pred)
    assert binary.counts[0, 0] == cm.counts[:2, :2].sum()
    with pytest.raises(InvalidArgument):
        metrics.overall_confusion(np.array([5]), np.array([0]), ["a"])


def test_confusion_csv(tmp_path):
    cm = metrics.binary_confusion(np.array([True, False]), np.array([ROGUE, 0]))
    cm.write_csv(tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows == [["true\\predicted", "genuine", "rogue"], ["genuine", "1", "0"], ["rogue", "0", "1"]]


def test_constellation_export(tmp_path):
    rng = np.random.default_rng(0)
    metrics.export_constellation(rng.standard_normal((10, 200, 2)), rng.standard_normal((3, 200, 2)),
                                 tmp_path / "c.csv", n_points=1000)
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert sum(r["source"] == "real" for r in rows) == 1000
    assert sum(r["source"] == "synthetic" for r in rows) == 600
    svg = (tmp_path / "c.svg").read_bytes()
    metrics.export_constellation(rng.standard_normal((1, 5, 2)), rng.standard_normal((1, 5, 2)),
                                 tmp_path / "d.csv", n_points=3)
    assert svg.startswith(b"<?xml")


def test_pmax_histogram_export_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    p = rng.random(100)
    rogue = p < 0.4
    for name in ("a.csv", "b.csv"):
        metrics.export_pmax_histogram(p, rogue, 0.4, tmp_path / name)
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert len(rows) == 50
    assert sum(int(r["genuine"]) for r in rows) == int((~rogue).sum())
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
