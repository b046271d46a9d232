"""Scikit-learn style estimator wrapping the two-branch detector."""
from __future__ import annotations

import cv2
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, net_from_checkpoint, restore_net
from .data import AugmentPolicy
from .inference import predict_arrays
from .losses import LossWeights
from .model import ModelConfig, TwoBranchNet
from .trainer import ArraySource, TrainConfig, train
from .validation import validate_images, validate_masks


class ManipulationDetector(ClassifierMixin, BaseEstimator):
    """Image manipulation detector with a fit/predict interface.

    Training data are RGB image stacks with per-pixel binary masks; an
    all-zero mask marks an authentic image. After fitting, `predict` returns
    image-level labels, `predict_proba` the two-class probabilities and
    `transform` per-pixel manipulation probability maps, so the detector
    drops into sklearn pipelines and model-selection utilities.

    Parameters
    ----------
    input_size : int, default=128
        Side length (multiple of 16) images are resized to internally.
    backbone_channels : tuple of 4 ints
        Channel widths of the four backbone stages.
    erb_channels : int
        Width of the edge-stream residual blocks.
    attention_channels : int
        Query/key reduction width of the position attention.
    alpha, beta : float
        Weights of the pixel and image loss terms; the edge term gets
        1 - alpha - beta.
    lr, lr_floor, decay_factor, decay_period : float/int
        Step-decay learning-rate schedule of the Adam optimizer.
    batch_size, max_steps : int
        Optimization batch size and step budget.
    grad_clip : float
        Global gradient-norm clip.
    augment : bool, default=False
        Enable flip/blur/JPEG training augmentation.
    threshold : float, default=0.5
        Decision threshold for image-level labels and binary masks.
    seed : int, default=0
        Seed for weight init, batch sampling and augmentation.

    Examples
    --------
    >>> det = ManipulationDetector(max_steps=50, input_size=64)
    >>> det.fit(images, masks)                      # doctest: +SKIP
    >>> labels = det.predict(images)                # doctest: +SKIP
    >>> prob_maps = det.transform(images)           # doctest: +SKIP
    """

    def __init__(
        self,
        input_size: int = 128,
        backbone_channels: tuple[int, int, int, int] = (16, 32, 64, 64),
        erb_channels: int = 16,
        attention_channels: int = 8,
        alpha: float = 0.16,
        beta: float = 0.04,
        lr: float = 1e-4,
        lr_floor: float = 1e-7,
        decay_factor: float = 0.1,
        decay_period: int = 1000,
        batch_size: int = 8,
        max_steps: int = 200,
        grad_clip: float = 5.0,
        augment: bool = False,
        threshold: float = 0.5,
        seed: int = 0,
    ):
        self.input_size = input_size
        self.backbone_channels = backbone_channels
        self.erb_channels = erb_channels
        self.attention_channels = attention_channels
        self.alpha = alpha
        self.beta = beta
        self.lr = lr
        self.lr_floor = lr_floor
        self.decay_factor = decay_factor
        self.decay_period = decay_period
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.grad_clip = grad_clip
        self.augment = augment
        self.threshold = threshold
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        model = ModelConfig(
            backbone_stage_channels=tuple(self.backbone_channels),
            erb_channels=self.erb_channels,
            da_reduced_channels=self.attention_channels,
            input_size=self.input_size,
            seed=self.seed,
        )
        return TrainConfig(
            model=model,
            loss_weights=LossWeights(alpha=self.alpha, beta=self.beta),
            lr_start=self.lr,
            lr_floor=self.lr_floor,
            decay_factor=self.decay_factor,
            decay_period=self.decay_period,
            batch_size=self.batch_size,
            max_steps=self.max_steps,
            seed=self.seed,
            grad_clip=self.grad_clip,
            augment=AugmentPolicy() if self.augment else None,
        )

    def fit(self, X, y):
        """Train on images X of shape (n, H, W, 3) and pixel masks y of shape (n, H, W).

        Returns
        -------
        self : ManipulationDetector
        """
        X = validate_images(X)
        y = validate_masks(y, X)
        config = self._train_config()
        config.validate()
        checkpoint = train(config, ArraySource(X, y))
        self.config_ = config
        self.checkpoint_ = checkpoint
        self.model_ = TwoBranchNet(config.model)
        restore_net(self.model_, checkpoint.params)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    @classmethod
    def from_checkpoint(cls, path) -> "ManipulationDetector":
        """Build a fitted detector from a trainer/CLI checkpoint file."""
        checkpoint = load_checkpoint(path)
        model_cfg = checkpoint.config["model"]
        est = cls(
            input_size=model_cfg["input_size"],
            backbone_channels=tuple(model_cfg["backbone_stage_channels"]),
            erb_channels=model_cfg["erb_channels"],
            attention_channels=model_cfg["da_reduced_channels"],
            seed=model_cfg["seed"],
        )
        est.checkpoint_ = checkpoint
        est.model_ = net_from_checkpoint(checkpoint)
        est.config_ = None
        est.classes_ = np.array([0, 1])
        return est

    def _forward(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Seg probability maps at the input's own resolution plus image scores."""
        check_is_fitted(self, "model_")
        X = validate_images(X)
        n, h, w = X.shape[:3]
        size = self.input_size
        if (h, w) != (size, size):
            resized = np.stack(
                [cv2.resize(img, (size, size), interpolation=cv2.INTER_LINEAR) for img in X]
            )
        else:
            resized = X
        segs, _, scores = predict_arrays(self.model_, resized, batch_size=self.batch_size)
        if (h, w) != (size, size):
            segs = np.stack(
                [cv2.resize(m, (w, h), interpolation=cv2.INTER_LINEAR) for m in segs]
            )
        return segs, scores

    def transform(self, X) -> np.ndarray:
        """Per-pixel manipulation probability maps, shape (n, H, W)."""
        segs, _ = self._forward(X)
        return segs

    def image_scores(self, X) -> np.ndarray:
        """Image-level manipulation scores in [0, 1] (max over the seg map)."""
        _, scores = self._forward(X)
        return scores

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities [P(authentic), P(manipulated)], shape (n, 2)."""
        scores = self.image_scores(X)
        return np.stack([1.0 - scores, scores], axis=1)

    def predict(self, X) -> np.ndarray:
        """Image-level labels: 1 if the score reaches the decision threshold."""
        return (self.image_scores(X) >= self.threshold).astype(np.int64)

    def predict_masks(self, X, threshold: float | None = None) -> np.ndarray:
        """Binary localization masks at the given (or configured) threshold."""
        thr = self.threshold if threshold is None else threshold
        return (self.transform(X) >= thr).astype(np.uint8)
