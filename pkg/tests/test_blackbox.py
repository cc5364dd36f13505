"""Black-box classifier tests: predictions, confidence, MC dropout, MI."""

import numpy as np
import pytest

from restlearn.blackbox import (
    ClassifierModel,
    TrainConfig,
    build_network,
    confidence_max,
    confidence_target,
    evaluate_accuracy,
    load_model,
    mc_dropout_predict,
    mc_dropout_predict_batch,
    mutual_information,
    mutual_information_batch,
    predict,
    predict_probs,
    save_model,
    train_classifier,
)
from restlearn.data import DatasetError, LabeledImages
from restlearn.modelio import ModelFormatError

LN2 = 0.6931471805599453


def fresh_model(seed=0, shape=(12, 12, 1), n_classes=4, dropout=0.5):
    rng = np.random.default_rng(seed)
    net = build_network(shape, n_classes, rng, dropout)
    return ClassifierModel(net=net, input_shape=shape, n_classes=n_classes)


def blob_dataset(n=500, seed=0):
    """Two linearly separable blob classes on an 8x8 canvas."""
    rng = np.random.default_rng(seed)
    images = np.zeros((n, 8, 8, 1))
    labels = rng.integers(0, 2, size=n)
    for i, lab in enumerate(labels):
        corner = (slice(0, 4), slice(0, 4)) if lab == 0 else (slice(4, 8), slice(4, 8))
        images[i, corner[0], corner[1], 0] = 0.6 + 0.4 * rng.random((4, 4))
        images[i, ..., 0] += rng.random((8, 8)) * 0.1
    return LabeledImages(np.clip(images, 0, 1), labels, n_classes=2)


class TestPredict:
    def test_untrained_zero_head_gives_uniform_probs(self):
        model = fresh_model()
        rng = np.random.default_rng(1)
        pred = predict(model, rng.random((12, 12, 1)))
        np.testing.assert_allclose(pred.probs, 0.25, atol=1e-15)
        assert pred.label == 0  # tie broken toward the lowest index
        assert pred.confidence == pytest.approx(0.25)

    def test_probs_sum_to_one_for_random_weights_and_inputs(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            model = fresh_model(seed=seed)
            probs = predict_probs(model, rng.random((10, 12, 12, 1)))
            assert np.all(probs >= 0)
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_predict_is_deterministic(self):
        model = fresh_model(seed=3)
        img = np.random.default_rng(3).random((12, 12, 1))
        p1, p2 = predict(model, img), predict(model, img)
        assert np.array_equal(p1.probs, p2.probs)

    def test_shape_mismatch_raises(self):
        model = fresh_model()
        with pytest.raises(DatasetError):
            predict(model, np.zeros((9, 9, 1)))

    def test_confidence_helpers(self):
        model = fresh_model(seed=4)
        img = np.random.default_rng(4).random((12, 12, 1))
        probs = predict_probs(model, img)
        assert confidence_target(model, img, 2) == pytest.approx(float(probs[2]))
        assert confidence_max(model, img) == pytest.approx(float(probs.max()))


class TestMcDropout:
    def test_zero_rate_dropout_matches_predict(self):
        model = fresh_model(seed=5, dropout=0.0)
        img = np.random.default_rng(5).random((12, 12, 1))
        samples = mc_dropout_predict(model, img, t=4, seed=0)
        base = predict_probs(model, img)
        for row in samples:
            np.testing.assert_allclose(row, base, atol=1e-15)

    def test_fixed_seed_reproduces_samples(self):
        model = fresh_model(seed=6)
        # randomize the zero-initialized head so dropout masks reach the output
        head = model.net.layers[-1]
        head.w[...] = np.random.default_rng(60).normal(scale=0.5, size=head.w.shape)
        img = np.random.default_rng(6).random((12, 12, 1))
        a = mc_dropout_predict(model, img, t=7, seed=123)
        b = mc_dropout_predict(model, img, t=7, seed=123)
        assert np.array_equal(a, b)
        assert a.shape == (7, 4)
        # dropout actually perturbs the output across samples
        assert not np.allclose(a[0], a[1])

    def test_batch_variant_agrees_with_scalar_loop_shape(self):
        model = fresh_model(seed=7)
        imgs = np.random.default_rng(7).random((3, 12, 12, 1))
        s = mc_dropout_predict_batch(model, imgs, t=5, seed=9)
        assert s.shape == (5, 3, 4)
        np.testing.assert_allclose(s.sum(axis=2), 1.0, atol=1e-6)

    def test_rejects_nonpositive_sample_count(self):
        model = fresh_model()
        with pytest.raises(ValueError):
            mc_dropout_predict(model, np.zeros((12, 12, 1)), t=0, seed=0)


class TestMutualInformation:
    def test_identical_samples_give_exactly_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        mi, predictive, aleatoric = mutual_information([p, p, p])
        assert mi == 0.0
        assert predictive == pytest.approx(aleatoric, abs=1e-15)

    def test_two_point_disagreement_equals_ln2(self):
        mi, predictive, aleatoric = mutual_information([[1.0, 0.0], [0.0, 1.0]])
        assert mi == pytest.approx(LN2, abs=1e-12)
        assert predictive == pytest.approx(LN2, abs=1e-12)
        assert aleatoric == 0.0

    def test_uniform_samples_over_k_classes(self):
        k = 5
        mi, predictive, _ = mutual_information([np.full(k, 1 / k)] * 3)
        assert mi == 0.0
        assert predictive == pytest.approx(np.log(k), abs=1e-12)

    def test_information_ordering_on_random_sample_sets(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            k = int(rng.integers(2, 6))
            t = int(rng.integers(1, 8))
            raw = rng.random((t, k)) + 1e-3
            samples = raw / raw.sum(axis=1, keepdims=True)
            mi, predictive, aleatoric = mutual_information(samples)
            assert 0.0 <= mi <= predictive + 1e-12
            assert predictive <= np.log(k) + 1e-12
            assert aleatoric >= 0.0

    def test_batch_variant_matches_scalar(self):
        rng = np.random.default_rng(9)
        raw = rng.random((6, 4, 3)) + 1e-3
        samples = raw / raw.sum(axis=2, keepdims=True)
        batch = mutual_information_batch(samples)
        for i in range(4):
            mi, _, _ = mutual_information(samples[:, i, :])
            assert batch[i] == pytest.approx(mi, abs=1e-12)

    def test_empty_sample_list_raises(self):
        with pytest.raises(ValueError):
            mutual_information(np.zeros((0, 3)))


class TestTraining:
    def test_separable_blobs_reach_high_holdout_accuracy(self):
        data = blob_dataset()
        model = train_classifier(data, TrainConfig(epochs=30, lr=1e-3, seed=0))
        assert model.meta["holdout_accuracy"] >= 0.95

    def test_single_class_dataset_converges_to_that_class(self):
        rng = np.random.default_rng(10)
        data = LabeledImages(rng.random((40, 8, 8, 1)), np.ones(40, dtype=int), n_classes=2)
        model = train_classifier(data, TrainConfig(epochs=40, lr=1e-3, seed=1))
        probs = predict_probs(model, data.images)
        assert probs[:, 1].mean() > 0.9

    def test_training_is_reproducible_under_seed(self):
        data = blob_dataset(n=60, seed=3)
        cfg = TrainConfig(epochs=2, seed=7)
        m1 = train_classifier(data, cfg)
        m2 = train_classifier(data, cfg)
        for p1, p2 in zip(m1.net.params, m2.net.params):
            assert np.array_equal(p1, p2)


class TestPersistence:
    def test_save_load_roundtrip_is_bit_exact(self, tmp_path):
        data = blob_dataset(n=60, seed=4)
        model = train_classifier(data, TrainConfig(epochs=1, seed=2))
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        for p1, p2 in zip(model.net.params, loaded.net.params):
            assert np.array_equal(p1, p2)
        img = data.images[0]
        assert np.array_equal(predict(model, img).probs, predict(loaded, img).probs)
        assert loaded.meta["holdout_accuracy"] == model.meta["holdout_accuracy"]

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_wrong_kind_rejected(self, tmp_path):
        from restlearn.modelio import save_arrays

        path = tmp_path / "agent.bin"
        save_arrays(path, "agent", {}, [np.zeros(3)])
        with pytest.raises(ModelFormatError):
            load_model(path)


def test_evaluate_accuracy_counts_argmax_hits():
    model = fresh_model(seed=11, shape=(8, 8, 1), n_classes=2)
    data = blob_dataset(n=30, seed=5)
    acc = evaluate_accuracy(model, data)
    assert 0.0 <= acc <= 1.0
