"""New-concept discovery from accumulated drifted samples.

Drifted embeddings are grouped into pending concepts. Each window, a pending
concept's centroid displacement ``delta = centroid_t - centroid_{t-1}`` is
added to its accumulated drift vector. A concept becomes a new class once it
has enough members and ``||sum delta|| + min_c D(centroid, prototype_c)``
exceeds the promotion threshold ``T``; the embedding is then retrained on the
original data plus the promoted members.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, WindowedStream
from .detector import DetectorState, WindowScores, jeffreys, local_variances
from .embedding import TrainConfig
from .errors import ConfigError, EmptyInput
from .system import DetectorConfig, DriftSystem, fit_system

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscoveryConfig:
    """``assign_radius=None`` means the median calibrated class threshold."""

    T: float = 3.5
    N_min: int = 50
    assign_radius: float | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if self.N_min < 2:
            raise ConfigError("N_min must be >= 2")
        if self.assign_radius is not None and not self.assign_radius > 0:
            raise ConfigError("assign_radius must be positive")


@dataclass
class PendingConcept:
    concept_id: int
    X: np.ndarray  # raw features of members
    H: np.ndarray  # member embeddings
    windows: np.ndarray
    accumulated_delta: np.ndarray
    last_centroid: np.ndarray
    refs: np.ndarray  # (window, sample_index) of each member

    @property
    def centroid(self) -> np.ndarray:
        return self.H.mean(axis=0)

    @property
    def count(self) -> int:
        return len(self.H)

    def copy(self) -> "PendingConcept":
        return PendingConcept(self.concept_id, self.X.copy(), self.H.copy(), self.windows.copy(),
                              self.accumulated_delta.copy(), self.last_centroid.copy(), self.refs.copy())


@dataclass(frozen=True)
class PromotionRecord:
    window: int
    new_class_id: int
    member_count: int
    centroid_norm: float
    accumulated_delta_norm: float


@dataclass
class DiscoveryState:
    pending: list[PendingConcept] = field(default_factory=list)
    next_class_id: int = 0
    history: list[PromotionRecord] = field(default_factory=list)
    next_concept_id: int = 0

    @classmethod
    def for_detector(cls, detector: DetectorState) -> "DiscoveryState":
        return cls(next_class_id=int(max(detector.prototypes)) + 1 if detector.prototypes else 0)

    def copy(self) -> "DiscoveryState":
        return DiscoveryState([p.copy() for p in self.pending], self.next_class_id,
                              list(self.history), self.next_concept_id)


def reference_variance(detector: DetectorState) -> np.ndarray:
    """Element-wise median of the known class variances.

    Pending concepts are scored as if they had this spread, so a freshly
    seeded singleton is comparable to a known class.
    """
    return np.median(np.stack([p.sigma2 for p in detector.prototypes.values()]), axis=0)


def default_radius(detector: DetectorState) -> float:
    return float(np.median([p.theta for p in detector.prototypes.values()]))


def _pending_distance(H, local_var, centroids, ref_var, detector: DetectorState) -> np.ndarray:
    """D from each row of ``H`` to each pending centroid, shape (n, m)."""
    diff = H[:, None, :] - centroids[None, :, :]
    dE = np.sqrt(np.sum(diff * diff, axis=2))
    if not detector.use_group:
        return detector.lambda1 * dE
    lv = ref_var[None, None, :] if local_var is None else local_var[:, None, :]
    dR = jeffreys(H[:, None, :], lv, centroids[None, :, :], ref_var[None, None, :])
    return dR + detector.lambda1 * dE


def accumulate(state: DiscoveryState, scores: WindowScores, X_window: np.ndarray, window: int,
               detector: DetectorState, config: DiscoveryConfig) -> tuple[DiscoveryState, np.ndarray]:
    """Assign the window's drifted samples to pending concepts.

    Returns the new state and, per sample, the pending concept id it joined
    (-1 if not drifted). Drifted samples are visited densest-first so that
    new concepts are seeded from cluster cores rather than stragglers.
    """
    drifted = np.flatnonzero(scores.drifted)
    assigned = np.full(len(scores.D), -1, dtype=np.int64)
    if len(drifted) == 0:
        return state, assigned
    state = state.copy()
    radius = config.assign_radius if config.assign_radius is not None else default_radius(detector)
    ref_var = reference_variance(detector)
    H_all = np.asarray(scores.embeddings, dtype=np.float64)
    lv_all = local_variances(H_all, detector.k_local, detector.var_floor) if detector.use_group else None
    H = H_all[drifted]
    lv = None if lv_all is None else lv_all[drifted]
    X = np.asarray(X_window, dtype=np.float64)[drifted]

    pair = _pending_distance(H, lv, H, ref_var, detector)
    density = np.sum(pair <= radius, axis=1)
    order = np.argsort(-density, kind="stable")

    sums = [p.H.sum(axis=0) for p in state.pending]
    counts = [p.count for p in state.pending]
    new_members: list[list[int]] = [[] for _ in state.pending]
    touched_before = len(state.pending)
    seeds: dict[int, int] = {}
    for i in order:
        if state.pending:
            cents = np.stack([s / c for s, c in zip(sums, counts)])
            d = _pending_distance(H[i:i + 1], None if lv is None else lv[i:i + 1], cents, ref_var, detector)[0]
            j = int(np.argmin(d))
            if d[j] <= radius:
                sums[j] = sums[j] + H[i]
                counts[j] += 1
                new_members[j].append(i)
                continue
        h = H[i]
        state.pending.append(PendingConcept(state.next_concept_id, X[i:i + 1].copy(), h[None, :].copy(),
                                            np.array([window]), np.zeros_like(h), h.copy(),
                                            np.array([[window, drifted[i]]], dtype=np.int64)))
        state.next_concept_id += 1
        sums.append(h.copy())
        counts.append(1)
        new_members.append([])
        seeds[len(state.pending) - 1] = i

    for j, p in enumerate(state.pending):
        if new_members[j]:
            idx = np.asarray(new_members[j])
            p.X = np.vstack([p.X, X[idx]])
            p.H = np.vstack([p.H, H[idx]])
            p.windows = np.concatenate([p.windows, np.full(len(idx), window)])
            p.refs = np.vstack([p.refs, np.column_stack([np.full(len(idx), window), drifted[idx]])])
        c = p.centroid
        if j < touched_before:
            # centroid displacement since the previous window
            p.accumulated_delta = p.accumulated_delta + (c - p.last_centroid)
        p.last_centroid = c
    for j, p in enumerate(state.pending):
        for i in new_members[j]:
            assigned[drifted[i]] = p.concept_id
    for j, i in seeds.items():
        assigned[drifted[i]] = state.pending[j].concept_id
    return state, assigned


def promotion_score(concept: PendingConcept, detector: DetectorState) -> float:
    """||accumulated delta|| + min over classes of D(concept, class) (distribution to distribution)."""
    ids, means, sig, _ = detector.stacked()
    c = concept.centroid
    dE = np.sqrt(np.sum((means - c) ** 2, axis=1))
    if detector.use_group:
        var = np.maximum(concept.H.var(axis=0), detector.var_floor)
        D = jeffreys(c[None, :], var[None, :], means, sig) + detector.lambda1 * dE
    else:
        D = detector.lambda1 * dE
    return float(np.linalg.norm(concept.accumulated_delta) + D.min())


def check_promotion(state: DiscoveryState, detector: DetectorState, config: DiscoveryConfig,
                    window: int = 0) -> tuple[DiscoveryState, list[tuple[int, PendingConcept]]]:
    promoted = []
    keep = []
    state = state.copy()
    for p in state.pending:
        if p.count >= config.N_min and promotion_score(p, detector) > config.T:
            cid = state.next_class_id
            state.next_class_id += 1
            promoted.append((cid, p))
            state.history.append(PromotionRecord(window, cid, p.count, float(np.linalg.norm(p.centroid)),
                                                 float(np.linalg.norm(p.accumulated_delta))))
        else:
            keep.append(p)
    state.pending = keep
    return state, promoted


def integrate(system: DriftSystem, promoted: list[tuple[int, PendingConcept]], train_set: Dataset,
              train_cfg: TrainConfig, det_cfg: DetectorConfig = DetectorConfig()) -> tuple[DriftSystem, Dataset]:
    """Retrain from the current parameters on ``train_set`` plus the promoted
    members, then refit and recalibrate all prototypes.

    Returns the new system and the grown training set.
    """
    if not promoted:
        raise EmptyInput("nothing to integrate")
    label_map = dict(train_set.label_map)
    parts = [train_set]
    for cid, p in promoted:
        label_map.setdefault(f"discovered_{cid}", cid)
        parts.append(replace(train_set, X=p.X, y=np.full(p.count, cid, dtype=np.int64), window=p.windows.copy()))
    grown = replace(Dataset.concat(parts), label_map=label_map)
    new = fit_system(grown, (), train_cfg, det_cfg, model=system.model, normalizer=system.normalizer,
                     reps=system.reps)
    new.label_map = label_map
    new.history = system.history + new.history
    return new, grown


@dataclass
class StreamResult:
    system: DriftSystem
    verdicts: list[tuple]  # (window, sample_index, predicted_class, D, d_R, d_E, drifted, pending_id)
    promotions: list[PromotionRecord]
    state: DiscoveryState
    train_set: Dataset
    promoted_refs: dict[int, np.ndarray] = field(default_factory=dict)


def run_stream(stream: WindowedStream, system: DriftSystem, train_set: Dataset,
               config: DiscoveryConfig = DiscoveryConfig(), train_cfg: TrainConfig = TrainConfig(),
               det_cfg: DetectorConfig = DetectorConfig()) -> StreamResult:
    """detect -> accumulate -> check_promotion -> integrate, window by window."""
    state = DiscoveryState.for_detector(system.detector)
    verdicts = []
    refs = {}
    for t, win in enumerate(stream):
        if len(win) == 0:
            continue
        scores = system.score(win.X)
        state, assigned = accumulate(state, scores, win.X, t, system.detector, config)
        for i in range(len(win)):
            verdicts.append((t, i, int(scores.predicted[i]), float(scores.D[i]), float(scores.d_R[i]),
                             float(scores.d_E[i]), bool(scores.drifted[i]), int(assigned[i])))
        state, promoted = check_promotion(state, system.detector, config, t)
        refs.update({cid: p.refs for cid, p in promoted})
        if promoted:
            logger.info("window %d: promoting %s", t, [cid for cid, _ in promoted])
            system, train_set = integrate(system, promoted, train_set, train_cfg, det_cfg)
    return StreamResult(system, verdicts, list(state.history), state, train_set, refs)
