from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptdrift.data import SynthConfig, WindowedStream, synth_drift_stream, synth_labeled
from adaptdrift.detector import build_detector, score_embeddings
from adaptdrift.discovery import (
    DiscoveryConfig, DiscoveryState, PendingConcept, accumulate, check_promotion, default_radius, integrate,
    promotion_score, run_stream,
)
from adaptdrift.embedding import TrainConfig
from adaptdrift.errors import ConfigError, EmptyInput
from adaptdrift.system import DetectorConfig, fit_system

CFG = DiscoveryConfig()


def _detector(seed=0):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((400, 2))
    return build_detector(H, np.zeros(400, dtype=int), calib_window=100)


def _window(H, det):
    return score_embeddings(np.asarray(H, dtype=float), det)


def _cluster(center, n, seed, spread=0.5):
    return np.asarray(center) + spread * np.random.default_rng(seed).standard_normal((n, 2))


def test_config_validation():
    with pytest.raises(ConfigError):
        DiscoveryConfig(T=0)
    with pytest.raises(ConfigError):
        DiscoveryConfig(N_min=1)


def test_no_drift_is_noop():
    det = _detector()
    state = DiscoveryState.for_detector(det)
    H = _cluster([0, 0], 50, 1)
    s = _window(H, det)
    H = H[~s.drifted]
    s = _window(H, det)
    assert not s.drifted.any()
    new, assigned = accumulate(state, s, H, 0, det, CFG)
    assert new is state and np.all(assigned == -1)


def test_two_far_clusters_make_two_concepts():
    det = _detector()
    r = default_radius(det)
    far = 10 * np.sqrt(r)
    H = np.vstack([_cluster([far, 0], 30, 2), _cluster([-far, 0], 30, 3)])
    s = _window(H, det)
    assert s.drifted.all()
    state, assigned = accumulate(DiscoveryState.for_detector(det), s, H, 0, det, CFG)
    assert len(state.pending) == 2
    # brute-force oracle: each sample belongs to the concept whose centroid is nearest
    cents = np.stack([p.centroid for p in state.pending])
    nearest = np.argmin(((H[:, None] - cents[None]) ** 2).sum(-1), axis=1)
    ids = np.array([p.concept_id for p in state.pending])
    assert np.array_equal(assigned, ids[nearest])


def test_stationary_centroid_adds_nothing():
    det = _detector()
    H1 = _cluster([30, 0], 40, 4, spread=1.0)
    state, _ = accumulate(DiscoveryState.for_detector(det), _window(H1, det), H1, 0, det, CFG)
    p = max(state.pending, key=lambda q: q.count)
    c = p.centroid
    # a symmetric pair around the current centroid leaves it unchanged
    H2 = np.vstack([c + [0.3, 0.1], c - [0.3, 0.1]])
    before = p.accumulated_delta.copy()
    state2, assigned = accumulate(state, _window(H2, det), H2, 1, det, CFG)
    assert assigned.tolist() == [p.concept_id] * 2
    q = next(x for x in state2.pending if x.concept_id == p.concept_id)
    assert q.count == p.count + 2
    assert np.abs(q.accumulated_delta - before).max() <= 1e-12


def test_accumulated_delta_tracks_centroid_shift():
    det = _detector()
    H1 = _cluster([30, 0], 40, 5)
    state, _ = accumulate(DiscoveryState.for_detector(det), _window(H1, det), H1, 0, det, CFG)
    c0 = state.pending[0].centroid
    H2 = _cluster([31, 0], 40, 6)
    state, _ = accumulate(state, _window(H2, det), H2, 1, det, CFG)
    p = state.pending[0]
    assert np.abs(p.accumulated_delta - (p.centroid - c0)).max() <= 1e-12


@settings(max_examples=25)
@given(st.lists(st.tuples(st.floats(-40, 40), st.floats(-40, 40), st.integers(1, 20)), min_size=1, max_size=4),
       st.integers(0, 1000))
def test_centroid_is_member_mean(clusters, seed):
    det = _detector()
    state = DiscoveryState.for_detector(det)
    for t, (cx, cy, n) in enumerate(clusters):
        H = _cluster([cx, cy], n, seed + t)
        s = _window(H, det)
        before = state
        state, _ = accumulate(state, s, H, t, det, CFG)
        for p in state.pending:
            assert np.abs(p.centroid - p.H.mean(axis=0)).max() <= 1e-9
            assert p.count == len(p.refs) == len(p.X)
        if not s.drifted.any():
            assert state is before


def _pending(cid, n, center):
    H = _cluster(center, n, cid)
    return PendingConcept(cid, H.copy(), H, np.zeros(n, dtype=int), np.zeros(2), H.mean(axis=0),
                          np.zeros((n, 2), dtype=int))


def test_count_gate():
    det = _detector()
    state = DiscoveryState([_pending(0, CFG.N_min - 1, [1000, 0])], next_class_id=1)
    state2, promoted = check_promotion(state, det, CFG)
    assert promoted == [] and len(state2.pending) == 1


def test_far_concepts_promote_with_consecutive_ids():
    det = _detector()
    far = 10 * CFG.T
    state = DiscoveryState([_pending(0, 60, [far, 0]), _pending(1, 55, [0, far]), _pending(2, 5, [far, far])],
                           next_class_id=1)
    state2, promoted = check_promotion(state, det, CFG, window=3)
    assert [cid for cid, _ in promoted] == [1, 2]
    assert state2.next_class_id == 3
    assert [p.concept_id for p in state2.pending] == [2]
    assert [(r.window, r.new_class_id, r.member_count) for r in state2.history] == [(3, 1, 60), (3, 2, 55)]
    assert promotion_score(promoted[0][1], det) > CFG.T


def test_integrate_requires_promotions():
    with pytest.raises(EmptyInput):
        integrate(None, [], None, TrainConfig())


TRAIN = TrainConfig(lr=1e-3, epochs=30, batch_size=64)
DET = DetectorConfig(calib_window=300)


def _sudden(seed, n_classes=5, drift_fraction=0.3):
    cfg = SynthConfig("sudden", n_classes, 16, 8, 300, 6.0, seed, switch_window=4, drift_fraction=drift_fraction)
    known = list(range(n_classes - 1))
    train_set = synth_labeled(cfg, known, 500, seed)
    tc = TrainConfig(**{**TRAIN.__dict__, "seed": seed})
    return cfg, synth_drift_stream(cfg), train_set, tc, fit_system(train_set, (64, 32), tc, DET)


def test_empty_stream():
    cfg, _, train_set, tc, system = _sudden(0)
    res = run_stream(WindowedStream([]), system, train_set, CFG, tc, DET)
    assert res.verdicts == [] and res.promotions == [] and res.system is system


@pytest.mark.parametrize("seed", range(5))
def test_known_only_stream_promotes_nothing(seed):
    cfg, _, train_set, tc, system = _sudden(seed)
    stream = synth_drift_stream(SynthConfig("sudden", 5, 16, 8, 300, 6.0, seed, switch_window=99))
    res = run_stream(stream, system, train_set, CFG, tc, DET)
    assert res.promotions == []


def test_sudden_stream_discovers_one_class():
    cfg, stream, train_set, tc, system = _sudden(1)
    res = run_stream(stream, system, train_set, CFG, tc, DET)
    assert len(res.promotions) == 1
    rec = res.promotions[0]
    assert rec.window == cfg.switch_window and rec.new_class_id == 4
    refs = res.promoted_refs[4]
    truth = np.array([stream.windows[t].y[i] for t, i in refs])
    assert np.mean(truth == 4) >= 0.8
    # promoted members now sit nearest to their new prototype
    members = res.train_set.X[res.train_set.y == 4]
    assert np.mean(res.system.score(members).predicted == 4) >= 0.9
    # verdict log covers every sample once and is ordered by window
    assert len(res.verdicts) == 8 * 300
    assert [v[0] for v in res.verdicts] == sorted(v[0] for v in res.verdicts)


def test_raising_T_never_adds_promotions():
    cfg, stream, train_set, tc, system = _sudden(2)
    counts = [len(run_stream(stream, system, train_set, DiscoveryConfig(T=T), tc, DET).promotions)
              for T in (3.5, 10.0, 1e6)]
    assert counts[0] >= counts[1] >= counts[2] == 0
