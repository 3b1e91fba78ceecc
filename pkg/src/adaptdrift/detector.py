"""Nearest-class-mean drift detection in embedding space.

The distance between an embedding ``h`` and class ``c`` is

    D = d_R + lambda1 * d_E

where ``d_E`` is the Euclidean distance to the class mean and ``d_R`` is the
Jeffreys (symmetric KL) divergence between two diagonal Gaussians: one fitted
to the k nearest neighbours of ``h`` inside the current window, the other to
the training embeddings of class ``c``. A sample is drifted when its smallest
D exceeds the calibrated threshold of the winning class.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, EmptyClass, NonPositiveVariance, NoPrototypes

VAR_FLOOR = 1e-6


@dataclass(frozen=True)
class ClassPrototype:
    class_id: int
    mean: np.ndarray
    sigma2: np.ndarray
    count: int
    theta: float = float("nan")


@dataclass(frozen=True)
class DetectorState:
    """Prototypes plus scoring settings.

    ``use_group=False`` drops the divergence term, leaving a Euclidean-only NCM.
    """

    prototypes: dict[int, ClassPrototype]
    lambda1: float = 0.1
    k_local: int = 10
    drift_z: float = 3.0
    use_group: bool = True
    var_floor: float = VAR_FLOOR

    @property
    def class_ids(self) -> np.ndarray:
        return np.array(sorted(self.prototypes), dtype=np.int64)

    def stacked(self):
        ids = self.class_ids
        protos = [self.prototypes[int(c)] for c in ids]
        means = np.stack([p.mean for p in protos])
        sig = np.stack([p.sigma2 for p in protos])
        theta = np.array([p.theta for p in protos])
        return ids, means, sig, theta


@dataclass(frozen=True)
class DriftVerdict:
    predicted_class: int
    D: float
    d_R: float
    d_E: float
    drifted: bool
    window: int = 0
    sample_index: int = 0


def fit_prototypes(H: np.ndarray, y: np.ndarray, var_floor: float = VAR_FLOOR) -> dict[int, ClassPrototype]:
    """Per-class mean, floored population variance and count."""
    H = np.asarray(H, dtype=np.float64)
    y = np.asarray(y)
    if len(H) == 0:
        raise EmptyClass("no samples to fit prototypes on")
    protos = {}
    for c in np.unique(y):
        Hc = H[y == c]
        protos[int(c)] = ClassPrototype(
            int(c), Hc.mean(axis=0), np.maximum(Hc.var(axis=0), var_floor), len(Hc)
        )
    return protos


def d_E(h: np.ndarray, h_c: np.ndarray) -> float:
    h = np.asarray(h, dtype=np.float64)
    h_c = np.asarray(h_c, dtype=np.float64)
    if h.shape != h_c.shape:
        raise DimensionMismatch(f"shapes {h.shape} and {h_c.shape} differ")
    return float(np.linalg.norm(h - h_c))


def jeffreys(mu_p, var_p, mu_q, var_q) -> np.ndarray:
    """Symmetric KL between diagonal Gaussians, summed over the last axis.

    Broadcasts over leading axes.
    """
    delta2 = (np.asarray(mu_p) - np.asarray(mu_q)) ** 2
    return np.sum((var_p + delta2) / (2.0 * var_q) + (var_q + delta2) / (2.0 * var_p) - 1.0, axis=-1)


def d_R(h: np.ndarray, local_sigma2: np.ndarray, prototype: ClassPrototype) -> float:
    local_sigma2 = np.asarray(local_sigma2, dtype=np.float64)
    if np.any(local_sigma2 <= 0) or np.any(prototype.sigma2 <= 0):
        raise NonPositiveVariance("variances must be positive")
    h = np.asarray(h, dtype=np.float64)
    if h.shape != prototype.mean.shape or local_sigma2.shape != h.shape:
        raise DimensionMismatch("embedding, variance and prototype dimensions differ")
    return float(jeffreys(h, local_sigma2, prototype.mean, prototype.sigma2))


def local_variances(H: np.ndarray, k_local: int, var_floor: float = VAR_FLOOR) -> np.ndarray | None:
    """Variance over each point's k nearest neighbours (itself included).

    Returns ``None`` when the window holds fewer than two points, in which case
    callers fall back to the class variance.
    """
    H = np.asarray(H, dtype=np.float64)
    n = len(H)
    if n < 2:
        return None
    k = min(k_local, n)
    if k < 2:
        return None
    _, idx = cKDTree(H).query(H, k=k)
    return np.maximum(H[idx].var(axis=1), var_floor)


def local_covariance(h: np.ndarray, window_embeddings: np.ndarray, k_local: int,
                     fallback: np.ndarray, var_floor: float = VAR_FLOOR) -> np.ndarray:
    """Variance over the ``k_local`` window points nearest to ``h`` (h included)."""
    h = np.asarray(h, dtype=np.float64)
    W = np.asarray(window_embeddings, dtype=np.float64).reshape(-1, len(h))
    pts = np.vstack([h[None, :], W]) if not np.any(np.all(W == h, axis=1)) else W
    k = min(k_local, len(pts))
    if k < 2:
        return np.asarray(fallback, dtype=np.float64)
    d2 = np.sum((pts - h) ** 2, axis=1)
    nn = np.argsort(d2, kind="stable")[:k]
    return np.maximum(pts[nn].var(axis=0), var_floor)


def combined_distance(h: np.ndarray, local_sigma2: np.ndarray | None, prototype: ClassPrototype,
                      lambda1: float, use_group: bool = True) -> tuple[float, float, float]:
    """Return (D, d_R, d_E). ``local_sigma2=None`` uses the prototype's own variance."""
    if local_sigma2 is None:
        local_sigma2 = prototype.sigma2
    dr = d_R(h, local_sigma2, prototype) if use_group else 0.0
    de = d_E(h, prototype.mean)
    return dr + lambda1 * de, dr, de


def distance_table(H: np.ndarray, local_var: np.ndarray | None, state: DetectorState):
    """D, d_R and d_E for every (sample, class) pair, classes in ascending id order."""
    ids, means, sig, _ = state.stacked()
    H = np.asarray(H, dtype=np.float64)
    if H.shape[-1] != means.shape[1]:
        raise DimensionMismatch(f"embedding dim {H.shape[-1]} != prototype dim {means.shape[1]}")
    diff = H[:, None, :] - means[None, :, :]
    dE = np.sqrt(np.sum(diff * diff, axis=2))
    if state.use_group:
        lv = sig[None, :, :] if local_var is None else local_var[:, None, :]
        dR = jeffreys(H[:, None, :], lv, means[None, :, :], sig[None, :, :])
    else:
        dR = np.zeros_like(dE)
    return dR + state.lambda1 * dE, dR, dE


@dataclass
class WindowScores:
    """Vectorized detection output for one window."""

    predicted: np.ndarray
    D: np.ndarray
    d_R: np.ndarray
    d_E: np.ndarray
    theta: np.ndarray
    embeddings: np.ndarray = field(repr=False, default=None)

    @property
    def drifted(self) -> np.ndarray:
        return self.D > self.theta

    @property
    def score(self) -> np.ndarray:
        """Distance relative to the predicted class threshold (higher = more drifted)."""
        return np.where(self.theta > 0, self.D / np.where(self.theta > 0, self.theta, 1.0), self.D)

    def verdicts(self, window: int = 0) -> list[DriftVerdict]:
        return [
            DriftVerdict(int(c), float(D), float(r), float(e), bool(D > t), window, i)
            for i, (c, D, r, e, t) in enumerate(zip(self.predicted, self.D, self.d_R, self.d_E, self.theta))
        ]


def score_embeddings(H: np.ndarray, state: DetectorState, local_var: np.ndarray | None = None,
                     window_context: bool = True) -> WindowScores:
    """Classify embeddings of one window. Local variances come from the window
    itself unless given explicitly."""
    if not state.prototypes:
        raise NoPrototypes("detector has no prototypes")
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if local_var is None and window_context and state.use_group:
        local_var = local_variances(H, state.k_local, state.var_floor)
    D, dR, dE = distance_table(H, local_var, state)
    ids, _, _, theta = state.stacked()
    # argmin returns the first minimum; columns are in ascending class id
    j = np.argmin(D, axis=1)
    rows = np.arange(len(H))
    return WindowScores(ids[j], D[rows, j], dR[rows, j], dE[rows, j], theta[j], H)


def classify(h: np.ndarray, window_embeddings: np.ndarray | None, state: DetectorState) -> DriftVerdict:
    """Nearest-prototype argmin of D for one sample; ``drifted`` is left False."""
    if not state.prototypes:
        raise NoPrototypes("detector has no prototypes")
    h = np.asarray(h, dtype=np.float64)
    best = None
    for cid in sorted(state.prototypes):
        proto = state.prototypes[cid]
        lv = None
        if state.use_group and window_embeddings is not None and len(window_embeddings):
            lv = local_covariance(h, window_embeddings, state.k_local, proto.sigma2, state.var_floor)
        D, dr, de = combined_distance(h, lv, proto, state.lambda1, state.use_group)
        if best is None or D < best[1]:
            best = (cid, D, dr, de)
    return DriftVerdict(best[0], best[1], best[2], best[3], False)


def calibrate_thresholds(state: DetectorState, H: np.ndarray, y: np.ndarray,
                         calib_window: int | None = None, seed: int = 0) -> DetectorState:
    """theta_c = mean + z * std of own-class training distances.

    With ``calib_window=None`` the local variance of a training sample comes
    from k-NN within its whole class. Otherwise the training set is cut into
    class-balanced windows of about that size and each sample's local variance
    is taken from its window, as ``score_embeddings`` does at detection time.
    k-NN variances shrink as a class gets denser, so this keeps calibration
    density close to what a mixed detection window shows, independent of how
    many training samples each class happens to have.
    """
    H = np.asarray(H, dtype=np.float64)
    y = np.asarray(y)
    protos = dict(state.prototypes)
    occ = _balanced_windows(y, calib_window, seed) if (state.use_group and calib_window is not None) else None
    for cid, proto in state.prototypes.items():
        mask = y == cid
        Hc = H[mask]
        if len(Hc) == 0:
            raise EmptyClass(f"no training samples for class {cid}")
        single = replace(state, prototypes={cid: proto})
        if not state.use_group:
            D = distance_table(Hc, None, single)[0][:, 0]
        elif occ is None:
            D = distance_table(Hc, local_variances(Hc, state.k_local, state.var_floor), single)[0][:, 0]
        else:
            parts = []
            for win in occ:
                own = win[y[win] == cid]
                if len(own) == 0:
                    continue
                lv = local_variances(H[win], state.k_local, state.var_floor)
                lv = proto.sigma2[None, :].repeat(len(win), 0) if lv is None else lv
                parts.append(distance_table(H[own], lv[y[win] == cid], single)[0][:, 0])
            D = np.concatenate(parts)
        protos[cid] = replace(proto, theta=float(D.mean() + state.drift_z * D.std()))
    return replace(state, prototypes=protos)


def _balanced_windows(y: np.ndarray, size: int, seed: int) -> list[np.ndarray]:
    """Index windows holding an equal share of every class.

    Each window takes ``size // K`` samples per class without repeats. The
    largest class is walked once in shuffled order; smaller classes are
    redrawn for every window, so they recur across windows.
    """
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    per = max(1, size // len(classes))
    pools = {c: np.flatnonzero(y == c) for c in classes}
    n_windows = max(int(np.ceil(len(p) / per)) for p in pools.values())
    walks = {c: rng.permutation(p) for c, p in pools.items() if len(p) >= n_windows * per}
    windows = []
    for w in range(n_windows):
        chunk = []
        for c in classes:
            pool = pools[c]
            if c in walks:
                chunk.append(walks[c][w * per:(w + 1) * per])
            elif len(pool) <= per:
                chunk.append(pool)
            else:
                chunk.append(rng.choice(pool, size=per, replace=False))
        windows.append(np.concatenate(chunk))
    return windows


def build_detector(H: np.ndarray, y: np.ndarray, lambda1: float = 0.1, k_local: int = 10,
                   drift_z: float = 3.0, use_group: bool = True, calib_window: int | None = None,
                   seed: int = 0) -> DetectorState:
    state = DetectorState(fit_prototypes(H, y), lambda1, k_local, drift_z, use_group)
    return calibrate_thresholds(state, H, y, calib_window, seed)


def detect(window: np.ndarray, encoder: Callable[[np.ndarray], np.ndarray], state: DetectorState,
           window_index: int = 0) -> list[DriftVerdict]:
    """Encode a window of raw samples and emit one verdict per sample."""
    return score_embeddings(encoder(np.asarray(window)), state).verdicts(window_index)
