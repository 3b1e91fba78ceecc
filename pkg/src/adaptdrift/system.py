"""A trained drift system: normalizer, embedding network and calibrated detector."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, Normalizer, fit_normalizer
from .detector import DetectorState, WindowScores, build_detector, score_embeddings
from .embedding import Architecture, ClassRepresentations, EmbeddingModel, TrainConfig, encode, init_model, train


@dataclass(frozen=True)
class DetectorConfig:
    lambda1: float = 0.1
    k_local: int = 10
    drift_z: float = 3.0
    use_group: bool = True
    calib_window: int | None = None


@dataclass
class DriftSystem:
    model: EmbeddingModel
    reps: ClassRepresentations
    detector: DetectorState
    normalizer: Normalizer
    label_map: dict[str, int] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list, repr=False)

    def embed(self, X: np.ndarray) -> np.ndarray:
        return encode(self.model, self.normalizer.transform(X))

    def score(self, X: np.ndarray) -> WindowScores:
        return score_embeddings(self.embed(X), self.detector)


def fit_system(train_set: Dataset, hidden: tuple[int, ...], train_cfg: TrainConfig,
               det_cfg: DetectorConfig = DetectorConfig(), normalize: bool = True,
               model: EmbeddingModel | None = None, normalizer: Normalizer | None = None,
               reps: ClassRepresentations | None = None) -> DriftSystem:
    """Train the embedding on ``train_set`` then fit and calibrate prototypes.

    ``hidden`` lists the layer sizes after the input, ending with the embedding
    size, e.g. ``(64, 32)``. Passing ``model``/``normalizer`` continues from an
    existing system instead of starting fresh.
    """
    if normalizer is None:
        normalizer = fit_normalizer(train_set) if normalize else Normalizer(
            np.zeros(train_set.dim), np.ones(train_set.dim))
    Xn = normalizer.transform(train_set.X)
    if model is None:
        model = init_model(Architecture((train_set.dim,) + tuple(hidden)), seed=train_cfg.seed)
    model, reps, history = train(model, Xn, train_set.y, train_cfg, reps)
    H = encode(model, Xn)
    det = build_detector(H, train_set.y, det_cfg.lambda1, det_cfg.k_local, det_cfg.drift_z,
                         det_cfg.use_group, det_cfg.calib_window, train_cfg.seed)
    return DriftSystem(model, reps, det, normalizer, dict(train_set.label_map), history)


def recalibrate(system: DriftSystem, train_set: Dataset, det_cfg: DetectorConfig, seed: int = 0) -> DriftSystem:
    """Same embedding, new detector settings (e.g. the Euclidean-only ablation)."""
    H = system.embed(train_set.X)
    det = build_detector(H, train_set.y, det_cfg.lambda1, det_cfg.k_local, det_cfg.drift_z,
                         det_cfg.use_group, det_cfg.calib_window, seed)
    return replace(system, detector=det)
