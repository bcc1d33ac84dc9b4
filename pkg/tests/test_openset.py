import numpy as np
import pytest
from hypothesis import given, strategies as st

from rffguard import openset
from rffguard.errors import CalibrationError
from rffguard.fingerprint_cnn import tempered_softmax

from frozen import F1_8_2_4
from oracles import brute_force_calibration

pmax_values = st.floats(0.0, 1.0, allow_nan=False)


def test_decide_is_strict():
    p = np.array([0.6, 0.3, 0.1])
    assert openset.decide(p, 0.6) == 0
    assert openset.decide(p, 0.6000001) == openset.ROGUE
    np.testing.assert_array_equal(openset.decide(np.array([p, p[::-1]]), 0.5), [0, 2])


def test_f1_hand_value():
    assert openset.f1_rogue(8, 2, 4) == pytest.approx(F1_8_2_4)
    assert openset.f1_rogue(0, 0, 0) == 0.0


def test_threshold_grid_endpoints_exact():
    g = openset.threshold_grid(0.1, 0.7, 100)
    assert len(g) == 100 and g[0] == 0.1 and g[-1] == 0.7
    assert np.all(np.diff(g) > 0)


def test_separable_case_picks_smallest_perfect_candidate():
    val = np.array([0.9, 0.8, 0.3, 0.4])
    rogue = np.array([False, False, True, True])
    res = openset.calibrate_threshold(val, rogue)
    assert res.best_f1 == 1.0
    grid = openset.threshold_grid(0.3, 0.9, 100)
    assert res.theta_star == grid[grid > 0.4][0]
    assert len(res.sweep) == 100


def test_crossed_case_cannot_reach_one():
    res = openset.calibrate_threshold(np.array([0.2, 0.3, 0.8, 0.9]), np.array([False, False, True, True]))
    assert res.best_f1 < 1.0


def test_single_class_rejected():
    with pytest.raises(CalibrationError):
        openset.calibrate_threshold(np.array([0.5, 0.6]), np.array([False, False]))


@given(st.lists(st.tuples(pmax_values, st.booleans()), min_size=2, max_size=200)
       .filter(lambda xs: 0 < sum(r for _, r in xs) < len(xs)))
def test_calibration_matches_brute_force(items):
    pmax, rogue = map(np.array, zip(*items))
    res = openset.calibrate_threshold(pmax, rogue)
    assert (res.theta_star, res.best_f1) == brute_force_calibration(pmax, rogue)


@given(st.lists(st.sampled_from([0.2, 0.5, 0.9]), min_size=4, max_size=40), st.integers(0, 2**31))
def test_calibration_ties(values, seed):
    rogue = np.random.default_rng(seed).random(len(values)) < 0.5
    if rogue.all() or not rogue.any():
        return
    res = openset.calibrate_threshold(np.array(values), rogue)
    assert (res.theta_star, res.best_f1) == brute_force_calibration(values, rogue)


def test_temperature_selection_matches_exhaustive_table():
    rng = np.random.default_rng(2)
    rogue = np.r_[np.zeros(60, bool), np.ones(30, bool)]
    logits = [rng.standard_normal((90, 7)) * s + np.where(rogue, 0, 4)[:, None] * np.eye(7)[rng.integers(0, 7, 90)]
              for s in (1.0, 2.0, 0.5)]
    res = openset.select_temperature_from_logits(logits, rogue)
    best = None
    for T in openset.DEFAULT_TEMPERATURES:
        for rank, z in enumerate(logits):
            theta, f1 = brute_force_calibration(tempered_softmax(z, T).max(1), rogue)
            if best is None or f1 > best[0]:
                best = (f1, T, rank, theta)
    assert (res.best_f1, res.temperature_star, res.model_rank, res.theta_star) == best
    assert len(res.table) == 3 * len(openset.DEFAULT_TEMPERATURES)


def test_temperature_ties_prefer_lower_T():
    z = np.array([[5.0, 0, 0], [5.0, 0, 0], [0.1, 0, 0], [0.0, 0.1, 0]])
    res = openset.select_temperature_from_logits([z], np.array([False, False, True, True]))
    assert res.best_f1 == 1.0 and res.temperature_star == 1.0


@given(st.lists(st.floats(-20, 20), min_size=7, max_size=7))
def test_tempered_softmax_properties(z):
    z = np.array(z)
    prev = 1.0
    for T in openset.DEFAULT_TEMPERATURES:
        p = tempered_softmax(z, T)
        assert abs(p.sum() - 1) < 1e-9
        assert p.argmax() == tempered_softmax(z, 1.0).argmax()
        np.testing.assert_allclose(tempered_softmax(z + 3.7, T), p, atol=1e-9)
        assert p.max() <= prev + 1e-12
        prev = p.max()
