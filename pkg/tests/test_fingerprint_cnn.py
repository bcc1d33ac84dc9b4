from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rffguard import fingerprint_cnn as fcnn, iqdata
from rffguard.errors import InvalidArgument, InvalidState
from rffguard.fingerprint_cnn import CnnHyperparams, SearchSpace

from conftest import small_fleet
from frozen import CNN_DENSE_PARAMS, CNN_SHAPES

TINY = CnnHyperparams(filters=(4,), kernels=(3,), dense_units=(16,), dropout=0.3, lr=0.003,
                      batch_size=16, epochs=6)


def test_reference_cnn_shape_chain():
    model = fcnn.build_reference_cnn()
    assert model.input_shape == (720, 2, 1)
    assert model.shapes[1:] == CNN_SHAPES
    dense = model.params[4]
    assert dense["w"].size + dense["b"].size == CNN_DENSE_PARAMS


def test_reference_hyperparams_in_table():
    assert fcnn.in_table_domain(fcnn.REFERENCE_HYPERPARAMS)
    assert not fcnn.in_table_domain(TINY)


@given(st.integers(0, 2**31))
def test_search_space_samples_in_domain(seed):
    hp = SearchSpace().sample(np.random.default_rng(seed))
    assert fcnn.in_table_domain(hp)
    assert len(hp.filters) == len(hp.kernels) and 1 <= len(hp.filters) <= 3
    assert hp == CnnHyperparams.from_dict(hp.to_dict())


def test_training_fits_separable_fleet():
    merged = [iqdata.merge_frames(c, 2) for c in small_fleet(200, 36)]
    split = iqdata.split_dataset(merged)
    stats = iqdata.fit_standardizer(split.train.frames)
    split = iqdata.standardize_split(split, stats)
    hp = replace(TINY, filters=(8,), dense_units=(32,), epochs=10)
    model = fcnn.build_cnn(hp, 7, 72, seed=0)
    trained = fcnn.train_cnn(model, split, stats, hp.lr, hp.epochs, hp.batch_size, seed=0, hyperparams=hp)
    assert len(trained.history) == hp.epochs
    assert trained.history[-1]["loss"] < trained.history[0]["loss"]
    assert fcnn.accuracy_on_genuine(trained, split.train) > 0.95
    z = fcnn.logits(trained, split.train)
    labels = fcnn.class_labels(split.train, trained.class_ids)
    assert np.mean(z.argmax(1) == labels) > 0.95


def test_training_is_deterministic(std_split):
    split, stats = std_split
    runs = []
    for _ in range(2):
        model = fcnn.build_cnn(TINY, 7, split.train.frames.shape[1], seed=3)
        runs.append(fcnn.train_cnn(model, split, stats, TINY.lr, 2, TINY.batch_size, seed=3))
    for a, b in zip(runs[0].model.get_weights(), runs[1].model.get_weights()):
        np.testing.assert_array_equal(a, b)


def test_training_guards(std_split, fleet):
    split, stats = std_split
    model = fcnn.build_cnn(TINY, 7, split.train.frames.shape[1])
    raw = split.__class__(split.train.__class__(**{**split.train.__dict__, "standardized": False}),
                          split.validation, split.test, split.genuine_ids)
    with pytest.raises(InvalidState):
        fcnn.train_cnn(model, raw, stats)
    rogue_in_train = split.__class__(split.test, split.validation, split.test, split.genuine_ids)
    with pytest.raises(InvalidArgument):
        fcnn.train_cnn(model, rogue_in_train, stats)


def test_logits_refuse_raw_frames(std_split):
    split, stats = std_split
    trained = fcnn.TrainedCnn(fcnn.build_cnn(TINY, 7, split.train.frames.shape[1]), stats, tuple(range(7)))
    raw = split.test.__class__(**{**split.test.__dict__, "standardized": False})
    with pytest.raises(InvalidState):
        fcnn.logits(trained, raw)
    trained.stats = None
    with pytest.raises(InvalidState):
        fcnn.logits(trained, split.test)


def test_tempered_softmax_closed_form():
    p = fcnn.tempered_softmax(np.array([1.0, 0.0]), 1.0)
    np.testing.assert_allclose(p, [0.7310585786300049, 0.2689414213699951], atol=1e-5)
    np.testing.assert_allclose(fcnn.tempered_softmax(np.array([1.0, 0.0]), 1e9), [0.5, 0.5], atol=1e-8)
    with pytest.raises(InvalidArgument):
        fcnn.tempered_softmax(np.array([1.0, 0.0]), 0.0)


def test_random_search_keeps_top_models(std_split):
    split, stats = std_split
    space = SearchSpace(conv_layers=(1,), filters=(4,), kernels=(3,), dense_layers=(1,), dense_units=(8,),
                        epochs=1, batch_size=32)
    trials = fcnn.random_search(space, 3, split, stats, seed=5, keep_top=2)
    assert [t.trained is not None for t in trials] == [True, True, False]
    accs = [t.val_accuracy for t in trials]
    assert accs == sorted(accs, reverse=True)
    again = fcnn.random_search(space, 3, split, stats, seed=5, keep_top=2)
    assert [t.record() for t in trials] == [t.record() for t in again]


def test_trained_checkpoint_round_trip(tmp_path, std_split):
    split, stats = std_split
    trained = fcnn.TrainedCnn(fcnn.build_cnn(TINY, 7, split.train.frames.shape[1]), stats, (1, 2, 5, 6, 7, 8, 9),
                              TINY, [{"epoch": 1, "loss": 1.0, "accuracy": 0.5}], 2.5, 0.4, {"tag": "t"})
    fcnn.save_trained(tmp_path / "c.ckpt", trained)
    back = fcnn.load_trained(tmp_path / "c.ckpt")
    assert back.calibrated and (back.temperature, back.threshold) == (2.5, 0.4)
    assert back.stats == stats and back.class_ids == trained.class_ids and back.meta == {"tag": "t"}
    np.testing.assert_array_equal(fcnn.logits(back, split.test), fcnn.logits(trained, split.test))
