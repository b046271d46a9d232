import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tamperdet.checkpoint import save_checkpoint
from tamperdet.errors import InputError
from tamperdet.estimator import ManipulationDetector
from tamperdet.forge import ManipulationSpec, forge, synthesize_base_image
from tamperdet.validation import validate_images, validate_masks


def toy_training_set(n=8, size=64, seed=0):
    rng = np.random.default_rng(seed)
    images, masks = [], []
    for i in range(n):
        base = synthesize_base_image(rng, size)
        if i % 4 == 3:
            images.append(base)
            masks.append(np.zeros((size, size), np.uint8))
        else:
            forged, mask = forge(
                ManipulationSpec("splice", (8, 8, 24, 24)),
                base,
                donor=synthesize_base_image(rng, size),
                rng=rng,
            )
            images.append(forged)
            masks.append(mask)
    return np.stack(images), np.stack(masks)


@pytest.fixture(scope="module")
def fitted():
    X, y = toy_training_set()
    det = ManipulationDetector(
        input_size=64,
        backbone_channels=(4, 8, 8, 8),
        erb_channels=4,
        attention_channels=4,
        max_steps=30,
        batch_size=4,
        seed=1,
    )
    return det.fit(X, y), X, y


class TestSklearnProtocol:
    def test_get_set_params_round_trip(self):
        det = ManipulationDetector(max_steps=7, alpha=0.2)
        params = det.get_params()
        assert params["max_steps"] == 7 and params["alpha"] == 0.2
        det.set_params(max_steps=9)
        assert det.max_steps == 9

    def test_clone_preserves_params(self):
        det = ManipulationDetector(input_size=64, seed=4, augment=True)
        cloned = clone(det)
        assert cloned.get_params() == det.get_params()

    def test_unfitted_predict_raises(self):
        X = np.zeros((1, 64, 64, 3), np.float32)
        with pytest.raises(NotFittedError):
            ManipulationDetector().predict(X)


class TestValidationHelpers:
    def test_accepts_valid_stack(self):
        X = np.random.default_rng(0).random((2, 32, 32, 3)).astype(np.float32)
        out = validate_images(X)
        assert out.dtype == np.float32 and out.shape == (2, 32, 32, 3)

    @pytest.mark.parametrize(
        "bad",
        [
            np.zeros((32, 32, 3), np.float32),  # missing batch dim
            np.zeros((0, 32, 32, 3), np.float32),  # empty
            np.zeros((2, 32, 32, 1), np.float32),  # wrong channels
            np.full((1, 32, 32, 3), 2.0, np.float32),  # out of range
            np.full((1, 32, 32, 3), np.nan, np.float32),  # non-finite
        ],
    )
    def test_rejects_bad_images(self, bad):
        with pytest.raises(InputError):
            validate_images(bad)

    def test_rejects_mismatched_masks(self):
        X = np.zeros((2, 32, 32, 3), np.float32)
        with pytest.raises(InputError):
            validate_masks(np.zeros((2, 16, 16)), X)
        with pytest.raises(InputError):
            validate_masks(np.zeros((2, 32, 32, 3)), X)

    def test_masks_binarized(self):
        X = np.zeros((1, 8, 8, 3), np.float32)
        y = np.zeros((1, 8, 8))
        y[0, 2, 2] = 255
        out = validate_masks(y, X)
        assert set(np.unique(out)) <= {0, 1}


class TestFittedDetector:
    def test_predict_shapes_and_types(self, fitted):
        det, X, _ = fitted
        labels = det.predict(X)
        assert labels.shape == (len(X),)
        assert set(np.unique(labels)) <= {0, 1}

    def test_predict_proba_is_distribution(self, fitted):
        det, X, _ = fitted
        proba = det.predict_proba(X)
        assert proba.shape == (len(X), 2)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-6)
        assert (proba >= 0).all()

    def test_transform_probability_maps(self, fitted):
        det, X, _ = fitted
        maps = det.transform(X)
        assert maps.shape == X.shape[:3]
        assert maps.min() >= 0.0 and maps.max() <= 1.0

    def test_threshold_contract(self, fitted):
        det, X, _ = fitted
        scores = det.image_scores(X)
        assert np.array_equal(det.predict(X), (scores >= det.threshold).astype(np.int64))

    def test_predict_masks_binary(self, fitted):
        det, X, _ = fitted
        masks = det.predict_masks(X)
        assert masks.shape == X.shape[:3]
        assert set(np.unique(masks)) <= {0, 1}
        strict = det.predict_masks(X, threshold=0.9)
        assert strict.sum() <= masks.sum()

    def test_resizes_inputs_of_other_sizes(self, fitted):
        det, _, _ = fitted
        X = np.random.default_rng(1).random((2, 48, 80, 3)).astype(np.float32)
        maps = det.transform(X)
        assert maps.shape == (2, 48, 80)

    def test_classes_attribute(self, fitted):
        det, _, _ = fitted
        assert list(det.classes_) == [0, 1]

    def test_from_checkpoint_round_trip(self, fitted, tmp_path):
        det, X, _ = fitted
        path = tmp_path / "est.ckpt"
        save_checkpoint(det.checkpoint_, path)
        restored = ManipulationDetector.from_checkpoint(path)
        assert np.array_equal(restored.transform(X), det.transform(X))

    def test_fit_deterministic(self):
        X, y = toy_training_set(n=4, size=48, seed=3)
        kwargs = dict(
            input_size=48,
            backbone_channels=(4, 8, 8, 8),
            erb_channels=4,
            attention_channels=4,
            max_steps=5,
            batch_size=2,
            seed=9,
        )
        a = ManipulationDetector(**kwargs).fit(X, y)
        b = ManipulationDetector(**kwargs).fit(X, y)
        assert np.array_equal(a.transform(X), b.transform(X))
