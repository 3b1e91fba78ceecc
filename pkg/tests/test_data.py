from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from adaptdrift.data import (
    Dataset, FeatureSchema, SynthConfig, drop_classes, fit_normalizer, gaussian_blobs, load_csv, network_schema,
    schema_from_csv, split_train_test, synth_drift_stream, synth_labeled, synth_means, url_schema, windowize,
    write_annotations, write_csv,
)
from adaptdrift.errors import ClassTooSmall, ConfigError, MissingColumn, NonNumericCell, TooManyDropped

SCHEMA2 = FeatureSchema("fixture", ("a", "b"))


def _write(tmp_path, text):
    p = tmp_path / "f.csv"
    p.write_text(text)
    return p


def test_load_csv_fixture(tmp_path):
    p = _write(tmp_path, "a,b,label\n1,2,benign\n3,4,dos\n5,6,benign\n")
    d = load_csv(p, SCHEMA2)
    assert len(d) == 3
    assert d.label_map == {"benign": 0, "dos": 1}
    assert d.y.tolist() == [0, 1, 0]
    assert d[1].x.tolist() == [3.0, 4.0]


def test_load_csv_missing_label(tmp_path):
    with pytest.raises(MissingColumn):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), SCHEMA2)


def test_load_csv_nan_row(tmp_path):
    with pytest.raises(NonNumericCell) as e:
        load_csv(_write(tmp_path, "a,b,label\n1,2,x\n3,NaN,y\n"), SCHEMA2)
    assert e.value.row == 2 and e.value.column == "b"


def test_csv_round_trip(tmp_path):
    d = gaussian_blobs(3, 4, 5, 6.0, 0)
    p = tmp_path / "d.csv"
    write_csv(p, d)
    back = load_csv(p, schema_from_csv(p))
    assert np.array_equal(back.X, d.X)
    # labels are remapped by first appearance but the partition is preserved
    pairs = set(zip(d.y.tolist(), back.y.tolist()))
    assert len(pairs) == 3


def test_builtin_schemas():
    assert network_schema().dim == 72
    assert url_schema().dim == 134


def test_normalizer_constant_feature():
    n = fit_normalizer(np.array([[2.0], [2.0], [2.0]]))
    assert n.mean[0] == 2.0 and n.std[0] == 1e-6
    assert n.transform(np.array([[2.0]]))[0, 0] == 0.0


def test_normalizer_two_points():
    n = fit_normalizer(np.array([[0.0], [2.0]]))
    assert n.mean[0] == 1.0 and n.std[0] == 1.0
    assert n.transform(np.array([[0.0], [2.0]]))[:, 0].tolist() == [-1.0, 1.0]


def test_normalized_moments():
    X = np.random.default_rng(0).standard_normal((100, 5)) * 3 + 7
    Z = fit_normalizer(X).transform(X)
    assert np.abs(Z.mean(axis=0)).max() < 1e-9
    assert np.abs(Z.std(axis=0) - 1).max() < 1e-9


@given(arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)))
def test_normalizer_round_trip(X):
    n = fit_normalizer(X)
    keep = n.std > 1e-6
    back = n.inverse(n.transform(X))
    assert np.allclose(back[:, keep], X[:, keep], atol=1e-9, rtol=0)


def test_split_75_25():
    d = Dataset(np.arange(100.0)[:, None], np.repeat([0, 1], 50))
    tr, te = split_train_test(d, 0.75, seed=1)
    assert len(tr) == 75 and len(te) == 25
    assert abs(np.sum(tr.y == 0) - 37.5) <= 1
    tr2, _ = split_train_test(d, 0.75, seed=1)
    assert np.array_equal(tr.X, tr2.X)


def test_split_class_too_small():
    with pytest.raises(ClassTooSmall):
        split_train_test(Dataset(np.zeros((3, 1)), [0, 0, 1]))


@given(st.lists(st.integers(2, 30), min_size=1, max_size=5), st.integers(0, 100))
def test_split_preserves_proportions(counts, seed):
    y = np.concatenate([np.full(c, i) for i, c in enumerate(counts)])
    d = Dataset(np.zeros((len(y), 1)), y)
    tr, te = split_train_test(d, 0.75, seed)
    for i, c in enumerate(counts):
        assert abs(np.sum(tr.y == i) - 0.75 * c) <= 1
    assert len(tr) + len(te) == len(y)


def test_drop_classes():
    d = gaussian_blobs(6, 3, 10, 6.0, 0)
    red, dropped = drop_classes(d, 2, seed=3)
    assert len(red.classes) == 4 and len(dropped) == 2
    assert not set(red.y.tolist()) & set(dropped)
    same, none = drop_classes(d, 0)
    assert same is d and none == ()
    with pytest.raises(TooManyDropped):
        drop_classes(d, 6)


def test_windowize_sizes():
    d = Dataset(np.zeros((10, 1)), np.zeros(10))
    assert [len(w) for w in windowize(d, 4)] == [4, 4, 2]
    assert len(windowize(d, 50)) == 1
    a = windowize(d.with_features(np.arange(10.0)[:, None]), 3, "shuffled", seed=5)
    b = windowize(d.with_features(np.arange(10.0)[:, None]), 3, "shuffled", seed=5)
    assert all(np.array_equal(x.X, y.X) for x, y in zip(a, b))
    with pytest.raises(ConfigError):
        windowize(d, 0)


def test_sudden_stream():
    s = synth_drift_stream(SynthConfig("sudden", 3, 4, 10, 50, 6.0, 0, switch_window=5))
    for t, c in enumerate(s.concept):
        assert np.all(c == (1 if t >= 5 else 0))


def test_incremental_stream_fraction():
    cfg = SynthConfig("incremental", 3, 4, 10, 400, 6.0, 1)
    s = synth_drift_stream(cfg)
    n = cfg.samples_per_window
    for t, c in enumerate(s.concept):
        p_old = 1 - t / 9
        sd = np.sqrt(n * p_old * (1 - p_old))
        assert abs(np.sum(c == 0) - n * p_old) <= 3 * sd + 1e-9


def test_recurring_stream():
    s = synth_drift_stream(SynthConfig("recurring", 3, 4, 12, 20, 6.0, 0, period=4))
    old = [t for t, c in enumerate(s.concept) if np.all(c == 0)]
    assert old == [0, 1, 2, 3, 8, 9, 10, 11]


def test_gradual_stream_whole_windows():
    s = synth_drift_stream(SynthConfig("gradual", 3, 4, 10, 20, 6.0, 2))
    assert all(np.all(c == c[0]) for c in s.concept)
    assert np.all(s.concept[0] == 0)


def test_zero_separation_is_indistinguishable():
    cfg = SynthConfig("sudden", 2, 4, 10, 200, 0.0, 0, switch_window=5, drift_fraction=0.5)
    s = synth_drift_stream(cfg)
    X = np.vstack([w.X for w in s])
    c = np.concatenate(s.concept)
    # brute-force nearest mean fitted on ground truth
    m = np.stack([X[c == k].mean(axis=0) for k in (0, 1)])
    pred = np.argmin(((X[:, None, :] - m[None]) ** 2).sum(-1), axis=1)
    n = len(c)
    assert np.mean(pred == c) <= 0.5 + 3 * np.sqrt(0.25 / n) + 0.02


def test_synth_labeled_shares_means():
    cfg = SynthConfig("sudden", 3, 5, 2, 10, 6.0, 4)
    d = synth_labeled(cfg, [0, 2], 2000, seed=1)
    assert np.allclose(d.X[d.y == 2].mean(axis=0), synth_means(cfg)[2], atol=0.1)
    assert abs(np.linalg.norm(synth_means(cfg)[0] - synth_means(cfg)[1]) - 6.0) < 1e-9


def test_annotations_sidecar(tmp_path):
    s = synth_drift_stream(SynthConfig("sudden", 3, 2, 4, 5, 6.0, 0, switch_window=2))
    write_annotations(tmp_path / "a.csv", s)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "window,sample_index,concept_id,is_drifted"
    assert len(lines) == 21


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(kind="nope").validate()
