"""Loading, normalizing, splitting and windowing labeled feature data.

Datasets are array-backed (``Dataset.X`` is ``(n, dim)``) and can be viewed
as a sequence of :class:`FeatureRecord`. Synthetic drift streams cover the
four drift kinds: sudden, incremental, gradual and recurring.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    ClassTooSmall,
    ConfigError,
    EmptyFile,
    EmptyTrainingSet,
    MissingColumn,
    NonNumericCell,
    TooManyDropped,
)

STD_FLOOR = 1e-6
NETWORK_DIM = 72
URL_DIM = 134
DRIFT_KINDS = ("sudden", "incremental", "gradual", "recurring")


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    feature_names: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not self.feature_names:
            raise ConfigError("schema needs at least one feature")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ConfigError("duplicate feature names")
        if self.bounds is not None:
            if len(self.bounds) != len(self.feature_names):
                raise ConfigError("bounds length differs from feature count")
            for lo, hi in self.bounds:
                if lo > hi:
                    raise ConfigError(f"bound min {lo} exceeds max {hi}")

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    @classmethod
    def generic(cls, name: str, dim: int, prefix: str = "f") -> "FeatureSchema":
        if dim < 1:
            raise ConfigError("dim must be positive")
        return cls(name, tuple(f"{prefix}{i}" for i in range(dim)))


def network_schema() -> FeatureSchema:
    """72 bidirectional-flow features (CICFlowMeter-style export)."""
    return FeatureSchema.generic("network", NETWORK_DIM, prefix="flow_")


def url_schema() -> FeatureSchema:
    """134 lexical and host-based URL features."""
    return FeatureSchema.generic("url", URL_DIM, prefix="url_")


@dataclass(frozen=True)
class FeatureRecord:
    x: np.ndarray
    label: int | None
    window: int = 0


@dataclass
class Dataset:
    """Labeled samples. ``y`` holds -1 for unlabeled rows."""

    X: np.ndarray
    y: np.ndarray
    window: np.ndarray | None = None
    label_map: dict[str, int] = field(default_factory=dict)
    schema: FeatureSchema | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if len(self.y) != len(self.X):
            raise ValueError("X and y lengths differ")
        if self.window is None:
            self.window = np.zeros(len(self.X), dtype=np.int64)
        else:
            self.window = np.asarray(self.window, dtype=np.int64).reshape(-1)

    def __len__(self) -> int:
        return len(self.X)

    def __getitem__(self, i: int) -> FeatureRecord:
        label = int(self.y[i])
        return FeatureRecord(self.X[i], None if label < 0 else label, int(self.window[i]))

    def __iter__(self) -> Iterator[FeatureRecord]:
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.y[self.y >= 0])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], y=self.y[idx], window=self.window[idx])

    def with_features(self, X: np.ndarray) -> "Dataset":
        return replace(self, X=np.asarray(X, dtype=np.float64), y=self.y.copy(), window=self.window.copy())

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        first = parts[0]
        return replace(
            first,
            X=np.concatenate([p.X for p in parts]),
            y=np.concatenate([p.y for p in parts]),
            window=np.concatenate([p.window for p in parts]),
        )

    @classmethod
    def from_records(cls, records: Sequence[FeatureRecord], **kwargs) -> "Dataset":
        X = np.stack([np.asarray(r.x, dtype=np.float64) for r in records])
        y = np.array([-1 if r.label is None else r.label for r in records])
        w = np.array([r.window for r in records])
        return cls(X, y, w, **kwargs)


def load_csv(path: str | Path, schema: FeatureSchema) -> Dataset:
    """Read a feature CSV whose header is the schema's features then ``label``.

    String labels map to dense ids in order of first appearance; the mapping
    is returned as ``dataset.label_map``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        expected = list(schema.feature_names) + ["label"]
        header = [h.strip() for h in header]
        if header != expected:
            missing = [c for c in expected if c not in header]
            raise MissingColumn(
                f"header mismatch in {path}: missing {missing}" if missing
                else f"header mismatch in {path}: expected column order {expected}"
            )
        rows, labels = [], []
        label_map: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(expected):
                raise MissingColumn(f"row {lineno} has {len(row)} cells, expected {len(expected)}")
            values = []
            for name, cell in zip(schema.feature_names, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(lineno, name, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCell(lineno, name, cell)
                values.append(v)
            rows.append(values)
            labels.append(label_map.setdefault(row[-1].strip(), len(label_map)))
    if not rows:
        raise EmptyFile(f"{path} has no data rows")
    return Dataset(np.array(rows), np.array(labels), label_map=label_map, schema=schema)


def schema_from_csv(path: str | Path, name: str | None = None) -> FeatureSchema:
    """Schema taken from a CSV header: every column before the final ``label``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        try:
            header = [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
    if not header or header[-1] != "label":
        raise MissingColumn(f"{path}: last column must be 'label'")
    return FeatureSchema(name or path.stem, tuple(header[:-1]))


def write_csv(path: str | Path, data: Dataset) -> None:
    names = data.schema.feature_names if data.schema else tuple(f"f{i}" for i in range(data.dim))
    inverse = {v: k for k, v in data.label_map.items()}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ["label"])
        for x, lab in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in x] + [inverse.get(int(lab), str(int(lab)))])


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def apply(self, data: Dataset) -> Dataset:
        return data.with_features(self.transform(data.X))


def fit_normalizer(train: Dataset | np.ndarray, std_floor: float = STD_FLOOR) -> Normalizer:
    X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if len(X) == 0:
        raise EmptyTrainingSet("cannot fit a normalizer on zero samples")
    return Normalizer(X.mean(axis=0), np.maximum(X.std(axis=0), std_floor))


def apply_normalizer(n: Normalizer, rec: FeatureRecord) -> FeatureRecord:
    return FeatureRecord(n.transform(rec.x), rec.label, rec.window)


def split_train_test(data: Dataset, train_fraction: float = 0.75, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split. Per-class train counts use largest-remainder rounding
    so the overall train size is ``round(train_fraction * n)``."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(data.y, return_counts=True)
    if np.any(counts < 2):
        raise ClassTooSmall(f"classes {classes[counts < 2].tolist()} have fewer than 2 samples")
    exact = train_fraction * counts
    n_train = np.floor(exact).astype(int)
    short = int(round(train_fraction * len(data))) - n_train.sum()
    order = np.lexsort((classes, -(exact - n_train)))
    n_train[order[:max(short, 0)]] += 1
    n_train = np.clip(n_train, 1, counts - 1)
    train_idx, test_idx = [], []
    for c, k in zip(classes, n_train):
        idx = rng.permutation(np.flatnonzero(data.y == c))
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return data.subset(train_idx), data.subset(test_idx)


def drop_classes(train: Dataset, n_drop: int, seed: int = 0) -> tuple[Dataset, tuple[int, ...]]:
    classes = train.classes
    if n_drop < 0 or n_drop >= len(classes):
        raise TooManyDropped(f"cannot drop {n_drop} of {len(classes)} classes")
    if n_drop == 0:
        return train, ()
    rng = np.random.default_rng(seed)
    dropped = tuple(sorted(int(c) for c in rng.choice(classes, size=n_drop, replace=False)))
    keep = ~np.isin(train.y, dropped)
    return train.subset(np.flatnonzero(keep)), dropped


@dataclass
class WindowedStream:
    windows: list[Dataset]
    schema: FeatureSchema | None = None
    provenance: str = ""
    concept: list[np.ndarray] | None = None  # per-window ground-truth concept ids

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    def annotations(self) -> list[tuple[int, int, int, bool]]:
        """Rows of (window, sample_index, concept_id, is_drifted)."""
        if self.concept is None:
            return []
        rows = []
        for t, cids in enumerate(self.concept):
            rows.extend((t, i, int(c), bool(c != 0)) for i, c in enumerate(cids))
        return rows

    def flatten(self) -> Dataset:
        return Dataset.concat(self.windows)


def windowize(data: Dataset, window_size: int, order: str = "given", seed: int = 0) -> WindowedStream:
    """Cut ``data`` into contiguous windows. ``order`` is ``"given"`` or ``"shuffled"``."""
    if window_size < 1:
        raise ConfigError("window_size must be >= 1")
    if order == "given":
        idx = np.arange(len(data))
    elif order == "shuffled":
        idx = np.random.default_rng(seed).permutation(len(data))
    else:
        raise ConfigError(f"unknown order {order!r}")
    windows = []
    for t, start in enumerate(range(0, len(idx), window_size)):
        w = data.subset(idx[start:start + window_size])
        w.window = np.full(len(w), t, dtype=np.int64)
        windows.append(w)
    return WindowedStream(windows, data.schema, f"windowize(size={window_size}, order={order}, seed={seed})")


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic stream settings.

    Concept 0 ("old") is a mixture of classes ``0..n_classes-new_classes-1``;
    concept 1 ("new") covers the last ``new_classes`` classes. ``drift_fraction``
    is the share of a window drawn from the new concept once it is active.
    """

    kind: str = "sudden"
    n_classes: int = 2
    dim: int = 2
    n_windows: int = 10
    samples_per_window: int = 100
    class_separation: float = 6.0
    seed: int = 0
    switch_window: int | None = None
    period: int = 4
    new_classes: int = 1
    drift_fraction: float = 1.0

    def validate(self):
        if self.kind not in DRIFT_KINDS:
            raise ConfigError(f"unknown drift kind {self.kind!r}")
        if self.n_classes < 2 or self.dim < 2:
            raise ConfigError("need n_classes >= 2 and dim >= 2")
        if not 1 <= self.new_classes < self.n_classes:
            raise ConfigError("new_classes must be in [1, n_classes)")
        if self.n_windows < 1 or self.samples_per_window < 1 or self.period < 1:
            raise ConfigError("n_windows, samples_per_window and period must be positive")
        if not 0.0 <= self.drift_fraction <= 1.0:
            raise ConfigError("drift_fraction must be in [0, 1]")


def class_means(n_classes: int, dim: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """Class means with pairwise distance ``separation`` (exact when n_classes <= dim)."""
    if n_classes <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return separation / math.sqrt(2.0) * q[:, :n_classes].T
    dirs = rng.standard_normal((n_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return separation / math.sqrt(2.0) * dirs


def gaussian_blobs(n_classes: int, dim: int, n_per_class: int, separation: float, seed: int) -> Dataset:
    """Balanced isotropic unit-variance Gaussian classes."""
    rng = np.random.default_rng(seed)
    means = class_means(n_classes, dim, separation, rng)
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = means[y] + rng.standard_normal((len(y), dim))
    perm = rng.permutation(len(y))
    return Dataset(X[perm], y[perm], schema=FeatureSchema.generic("synthetic", dim))


def _new_fraction(cfg: SynthConfig, t: int, rng: np.random.Generator) -> float:
    switch = cfg.switch_window if cfg.switch_window is not None else cfg.n_windows // 2
    if cfg.kind == "sudden":
        return cfg.drift_fraction if t >= switch else 0.0
    if cfg.kind == "incremental":
        return t / (cfg.n_windows - 1) if cfg.n_windows > 1 else 0.0
    if cfg.kind == "gradual":
        # whole windows flip to the new concept with rising probability
        p_old = 1.0 - t / (cfg.n_windows - 1) if cfg.n_windows > 1 else 1.0
        return 0.0 if (t == 0 or rng.random() < p_old) else 1.0
    return 0.0 if (t // cfg.period) % 2 == 0 else 1.0


def synth_drift_stream(cfg: SynthConfig) -> WindowedStream:
    """Gaussian-blob stream with per-sample ground-truth concept ids."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    means = class_means(cfg.n_classes, cfg.dim, cfg.class_separation, rng)
    old = np.arange(cfg.n_classes - cfg.new_classes)
    new = np.arange(cfg.n_classes - cfg.new_classes, cfg.n_classes)
    schema = FeatureSchema.generic("synthetic", cfg.dim)
    windows, concepts = [], []
    n = cfg.samples_per_window
    for t in range(cfg.n_windows):
        frac = _new_fraction(cfg, t, rng)
        if cfg.kind in ("incremental",):
            concept = (rng.random(n) < frac).astype(np.int64)
        else:
            concept = np.zeros(n, dtype=np.int64)
            concept[: int(round(frac * n))] = 1
            concept = rng.permutation(concept)
        y = np.where(concept == 1, rng.choice(new, size=n), rng.choice(old, size=n))
        X = means[y] + rng.standard_normal((n, cfg.dim))
        windows.append(Dataset(X, y, np.full(n, t), schema=schema))
        concepts.append(concept)
    return WindowedStream(windows, schema, f"synth_drift_stream({cfg})", concepts)


def write_annotations(path: str | Path, stream: WindowedStream) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "sample_index", "concept_id", "is_drifted"])
        for t, i, c, d in stream.annotations():
            w.writerow([t, i, c, int(d)])


def synth_means(cfg: SynthConfig) -> np.ndarray:
    """The class means used by ``synth_drift_stream(cfg)``."""
    return class_means(cfg.n_classes, cfg.dim, cfg.class_separation, np.random.default_rng(cfg.seed))


def synth_labeled(cfg: SynthConfig, classes: Sequence[int], n_per_class: int, seed: int) -> Dataset:
    """Labeled samples of ``classes`` drawn around the stream's own class means,
    e.g. to build the initial training set for a stream."""
    means = synth_means(cfg)
    rng = np.random.default_rng([cfg.seed, seed, 1])
    y = np.repeat(np.asarray(classes, dtype=np.int64), n_per_class)
    X = means[y] + rng.standard_normal((len(y), cfg.dim))
    perm = rng.permutation(len(y))
    return Dataset(X[perm], y[perm], schema=FeatureSchema.generic("synthetic", cfg.dim))
