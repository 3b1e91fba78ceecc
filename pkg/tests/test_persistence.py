from __future__ import annotations

import csv

import numpy as np
import pytest

from adaptdrift.data import gaussian_blobs
from adaptdrift.discovery import PromotionRecord
from adaptdrift.embedding import TrainConfig
from adaptdrift.errors import FormatError
from adaptdrift.persistence import (MAGIC, load_system, save_system, write_manifest, write_promotions,
                                    write_verdicts)
from adaptdrift.system import DetectorConfig, fit_system


@pytest.fixture(scope="module")
def system():
    data = gaussian_blobs(3, 5, 80, 5.0, 0)
    return fit_system(data, (8, 4), TrainConfig(lr=1e-3, epochs=3, batch_size=32), DetectorConfig(calib_window=60))


def test_round_trip_is_bit_exact(system, tmp_path):
    save_system(system, tmp_path / "a.bin")
    back = load_system(tmp_path / "a.bin")
    for (W, b), (W2, b2) in zip(system.model.encoder + system.model.decoder, back.model.encoder + back.model.decoder):
        assert np.array_equal(W, W2) and np.array_equal(b, b2)
    for c, p in system.detector.prototypes.items():
        q = back.detector.prototypes[c]
        assert np.array_equal(p.mean, q.mean) and np.array_equal(p.sigma2, q.sigma2) and p.theta == q.theta
    X = np.random.default_rng(1).standard_normal((50, 5))
    a, b = system.score(X), back.score(X)
    assert np.array_equal(a.D, b.D) and np.array_equal(a.predicted, b.predicted)
    save_system(back, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_corrupt_files_raise_format_error(system, tmp_path):
    p = tmp_path / "m.bin"
    save_system(system, p)
    raw = p.read_bytes()
    (tmp_path / "bad_magic.bin").write_bytes(b"XXXXXXXX" + raw[len(MAGIC):])
    (tmp_path / "short.bin").write_bytes(raw[:-16])
    (tmp_path / "long.bin").write_bytes(raw + b"\0" * 8)
    for name in ("bad_magic.bin", "short.bin", "long.bin"):
        with pytest.raises(FormatError):
            load_system(tmp_path / name)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_csv_logs(system, tmp_path):
    s = system.score(np.zeros((3, 5)))
    write_verdicts(tmp_path / "v.csv", s.verdicts(7))
    rows = _read(tmp_path / "v.csv")
    assert rows[0] == ["window", "sample_index", "predicted_class", "D", "d_R", "d_E", "drifted"]
    assert len(rows) == 4 and rows[1][0] == "7" and float(rows[1][3]) == s.D[0]
    write_promotions(tmp_path / "p.csv", [PromotionRecord(3, 9, 60, 1.5, 0.25)])
    assert _read(tmp_path / "p.csv")[1] == ["3", "9", "60", "1.5", "0.25"]
    write_manifest(tmp_path / "m.csv", [(0, 4), (1, 2)])
    assert _read(tmp_path / "m.csv") == [["window", "sample_index"], ["0", "4"], ["1", "2"]]
