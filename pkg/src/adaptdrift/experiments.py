"""Experiment protocols, baselines and deterministic line-delimited reports.

Protocols: ``dropped_class`` (unseen-class detection), ``incremental``
(class-incremental discovery), ``robustness`` (poisoning sweep) and
``binary`` (plain two-class classification). Baselines: ``proposed``,
``ae_only`` (no contrastive term) and ``euclidean_only`` (no divergence term).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .adversarial import INSTANCE_GRID, CONCEPT_GRID, PgdConfig, PoisonPlan, robustness_sweep
from .data import (Dataset, SynthConfig, drop_classes, gaussian_blobs, load_csv, schema_from_csv,
                   split_train_test, synth_drift_stream, windowize)
from .discovery import DiscoveryConfig, run_stream
from .embedding import TrainConfig
from .errors import ConfigError, ProtocolError
from .metrics import accuracy, auroc, avg_incremental_accuracy, precision_recall_f1
from .system import DetectorConfig, DriftSystem, fit_system

PROTOCOLS = ("dropped_class", "incremental", "robustness", "binary")
BASELINES = ("proposed", "ae_only", "euclidean_only")
SCHEMA = "adaptdrift.report"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DataSpec:
    """Synthetic Gaussian blobs, or a labeled CSV file when ``path`` is set."""

    kind: str = "synthetic"
    n_classes: int = 6
    dim: int = 16
    n_per_class: int = 1000
    separation: float = 6.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"unknown data kind {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ConfigError("csv data needs a path")

    def load(self, seed: int) -> Dataset:
        if self.kind == "csv":
            return load_csv(self.path, schema_from_csv(self.path))
        return gaussian_blobs(self.n_classes, self.dim, self.n_per_class, self.separation, seed)


@dataclass(frozen=True)
class IncrementalSpec:
    """Class-incremental schedule: start with ``initial_classes`` classes, then
    reveal one class per stage through a sudden-drift stream."""

    initial_classes: int = 1
    stage_windows: int = 4
    drift_fraction: float = 0.3


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "dropped_class"
    baseline: str = "proposed"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    data: DataSpec = DataSpec()
    hidden: tuple[int, ...] = (64, 32)
    train: TrainConfig = TrainConfig(lr=1e-3, epochs=50, batch_size=64)
    detector: DetectorConfig = DetectorConfig()
    discovery: DiscoveryConfig = DiscoveryConfig()
    pgd: PgdConfig = PgdConfig()
    plan: PoisonPlan = PoisonPlan()
    incremental: IncrementalSpec = IncrementalSpec()
    n_drop: int = 2
    train_fraction: float = 0.75
    eval_window: int = 300
    poison_window: int = 100
    flip_labels: bool = False
    compare: tuple[str, ...] = ("proposed", "euclidean_only", "ae_only")
    binary_classes: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.baseline not in BASELINES or any(b not in BASELINES for b in self.compare):
            raise ConfigError(f"baselines must be among {BASELINES}")
        if len(self.seeds) == 0:
            raise ConfigError("seeds must be non-empty")
        if self.eval_window < 2 or self.poison_window < 1:
            raise ConfigError("eval_window must be >= 2 and poison_window >= 1")

    @property
    def detector_config(self) -> DetectorConfig:
        # calibrate at the window size used for scoring unless set explicitly
        if self.detector.calib_window is None:
            return dataclasses.replace(self.detector, calib_window=self.eval_window)
        return self.detector

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        nested = {"data": DataSpec, "train": TrainConfig, "detector": DetectorConfig,
                  "discovery": DiscoveryConfig, "pgd": PgdConfig, "plan": PoisonPlan,
                  "incremental": IncrementalSpec}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw: dict[str, Any] = {}
        for k, v in d.items():
            if k in nested:
                if not isinstance(v, dict):
                    raise ConfigError(f"{k} must be a mapping")
                kw[k] = _build(nested[k], {**dataclasses.asdict(getattr(cls(), k)), **v}, k)
            elif k in ("seeds", "hidden", "compare", "binary_classes"):
                kw[k] = tuple(v)
            else:
                kw[k] = v
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def _build(kind, values: dict, name: str):
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    values = {k: (tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v)
              for k, v in values.items()}
    try:
        return kind(**values)
    except TypeError as e:
        raise ConfigError(f"{name}: {e}") from None


def build_system(cfg: ExperimentConfig, train_set: Dataset, seed: int, baseline: str | None = None) -> DriftSystem:
    baseline = baseline or cfg.baseline
    tc = dataclasses.replace(cfg.train, seed=seed)
    dc = dataclasses.replace(cfg.detector_config)
    if baseline == "ae_only":
        tc = dataclasses.replace(tc, beta_contrastive=0.0)
    elif baseline == "euclidean_only":
        dc = dataclasses.replace(dc, use_group=False)
    return fit_system(train_set, cfg.hidden, tc, dc)


def score_in_windows(system: DriftSystem, data: Dataset, window: int, seed: int):
    """Score ``data`` in shuffled windows; returns (predicted, drifted, score, y) in window order."""
    stream = windowize(data, window, "shuffled", seed)
    pred, drift, score, y = [], [], [], []
    for w in stream:
        s = system.score(w.X)
        pred.append(s.predicted)
        drift.append(s.drifted)
        score.append(s.score)
        y.append(w.y)
    return np.concatenate(pred), np.concatenate(drift), np.concatenate(score), np.concatenate(y)


def dropped_class_eval(system: DriftSystem, test: Dataset, dropped, window: int, seed: int) -> dict:
    pred, drift, score, y = score_in_windows(system, test, window, seed)
    truth = np.isin(y, dropped)
    m = precision_recall_f1(drift, truth)
    return {"precision": m.precision, "recall": m.recall, "f1": m.f1, "auroc": auroc(score, truth),
            "accuracy": accuracy(pred[~truth], y[~truth]), "tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn}


def _dropped_split(cfg: ExperimentConfig, seed: int):
    if cfg.n_drop < 1:
        raise ProtocolError("n_drop = 0 leaves no positives to detect")
    data = cfg.data.load(seed)
    train_set, test = split_train_test(data, cfg.train_fraction, seed)
    train_set, dropped = drop_classes(train_set, cfg.n_drop, seed)
    return train_set, test, dropped


def run_dropped_class_seed(cfg: ExperimentConfig, seed: int, baseline: str | None = None) -> dict:
    train_set, test, dropped = _dropped_split(cfg, seed)
    system = build_system(cfg, train_set, seed, baseline)
    row = {"seed": seed, "baseline": baseline or cfg.baseline, "dropped": list(dropped)}
    row.update(dropped_class_eval(system, test, dropped, cfg.eval_window, seed))
    return row


def run_robustness_seed(cfg: ExperimentConfig, seed: int) -> list[dict]:
    train_set, test, dropped = _dropped_split(cfg, seed)
    rows = []
    for baseline in cfg.compare:
        def builder(ts, b=baseline):
            return build_system(cfg, ts, seed, b)

        def evaluate(system):
            r = dropped_class_eval(system, test, dropped, cfg.eval_window, seed)
            return r["f1"], r["accuracy"]

        plan = dataclasses.replace(cfg.plan, seed=seed)
        for r in robustness_sweep(builder, train_set, evaluate, plan, cfg.pgd, cfg.poison_window, seed,
                                  cfg.flip_labels):
            rows.append({"baseline": baseline, **dataclasses.asdict(r)})
    return rows


def _stage_accuracy(system: DriftSystem, test: Dataset, seen: list[int], mapping: dict[int, int],
                    window: int, seed: int) -> float:
    sub = test.subset(np.flatnonzero(np.isin(test.y, seen)))
    pred, _, _, y = score_in_windows(system, sub, window, seed)
    mapped = np.array([mapping.get(int(p), -1) for p in pred])
    return accuracy(mapped, y)


def run_incremental_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """Reveal classes one stage at a time; discovered classes are mapped to the
    true class holding the majority of their promoted members."""
    spec = cfg.incremental
    data = cfg.data.load(seed)
    classes = [int(c) for c in data.classes]
    if len(classes) < 3:
        raise ProtocolError("incremental protocol needs at least 3 classes")
    if not 1 <= spec.initial_classes <= len(classes):
        raise ProtocolError("initial_classes out of range")
    rng = np.random.default_rng(seed)
    order = [int(c) for c in rng.permutation(classes)]
    train_set, test = split_train_test(data, cfg.train_fraction, seed)
    seen = order[:spec.initial_classes]
    pool = {c: rng.permutation(np.flatnonzero(train_set.y == c)) for c in classes}
    used = {c: len(pool[c]) if c in seen else 0 for c in classes}
    current = train_set.subset(np.flatnonzero(np.isin(train_set.y, seen)))
    system = build_system(cfg, current, seed)
    mapping = {c: c for c in seen}
    tc = dataclasses.replace(cfg.train, seed=seed)
    dc = cfg.detector_config
    curve = [_stage_accuracy(system, test, seen, mapping, cfg.eval_window, seed)]
    promotions = []
    for new in order[spec.initial_classes:]:
        # stream of known-class samples mixed with the newly revealed class
        n_new = int(round(spec.drift_fraction * cfg.eval_window))
        windows = []
        for t in range(spec.stage_windows):
            take = pool[new][used[new]:used[new] + n_new]
            used[new] += len(take)
            known_idx = rng.choice(np.flatnonzero(np.isin(train_set.y, seen)), size=cfg.eval_window - len(take),
                                   replace=False)
            idx = rng.permutation(np.concatenate([take, known_idx]))
            w = train_set.subset(idx)
            w.window = np.full(len(w), t, dtype=np.int64)
            windows.append(w)
        stream = windowize(Dataset.concat(windows), cfg.eval_window)
        res = run_stream(stream, system, current, cfg.discovery, tc, dc)
        system, current = res.system, res.train_set
        for cid, refs in res.promoted_refs.items():
            truth = np.array([stream.windows[t].y[i] for t, i in refs])
            vals, counts = np.unique(truth, return_counts=True)
            mapping[cid] = int(vals[np.argmax(counts)])
            promotions.append({"class_id": cid, "maps_to": mapping[cid], "members": int(len(refs)),
                               "purity": float(counts.max() / counts.sum())})
        seen = seen + [new]
        curve.append(_stage_accuracy(system, test, seen, mapping, cfg.eval_window, seed))
    return {"seed": seed, "order": order, "curve": curve,
            "avg_incremental_accuracy": avg_incremental_accuracy(curve), "promotions": promotions}


def run_binary_seed(cfg: ExperimentConfig, seed: int) -> dict:
    if len(cfg.binary_classes) != 2:
        raise ProtocolError("binary protocol needs exactly 2 classes")
    data = cfg.data.load(seed)
    neg, pos = cfg.binary_classes
    data = data.subset(np.flatnonzero(np.isin(data.y, [neg, pos])))
    if len(data.classes) != 2:
        raise ProtocolError(f"classes {cfg.binary_classes} not both present")
    train_set, test = split_train_test(data, cfg.train_fraction, seed)
    system = build_system(cfg, train_set, seed)
    pred, _, _, y = score_in_windows(system, test, cfg.eval_window, seed)
    m = precision_recall_f1(pred == pos, y == pos)
    return {"seed": seed, "precision": m.precision, "recall": m.recall, "f1": m.f1,
            "accuracy": accuracy(pred, y), "tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn}


# ---- reports -------------------------------------------------------------

def _round(v):
    """Canonical JSON values: reals at 9 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.9g}")
    if isinstance(v, dict):
        return {str(k): _round(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_round(x) for x in v]
    if v is None or isinstance(v, str):
        return v
    return str(v)


def _dumps(obj) -> str:
    return json.dumps(_round(obj), sort_keys=True, separators=(",", ":"))


@dataclass
class ExperimentReport:
    protocol: str
    config: dict
    rows: list[dict]
    aggregate: dict
    runtime_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def content_lines(self) -> list[str]:
        lines = [_dumps({"record": "header", "schema": SCHEMA, "version": SCHEMA_VERSION,
                         "protocol": self.protocol, "config": self.config})]
        lines += [_dumps({"record": "row", **r}) for r in self.rows]
        lines.append(_dumps({"record": "aggregate", **self.aggregate}))
        return lines

    @property
    def content_hash(self) -> str:
        return hashlib.sha256("\n".join(self.content_lines()).encode("utf-8")).hexdigest()

    def to_jsonl(self) -> str:
        meta = _dumps({"record": "meta", "runtime_s": self.runtime_s, "content_hash": self.content_hash})
        return "\n".join(self.content_lines() + [meta]) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def read_report(path: str | Path) -> ExperimentReport:
    from .errors import FormatError

    lines = [json.loads(s) for s in Path(path).read_text(encoding="utf-8").splitlines() if s.strip()]
    if not lines or lines[0].get("record") != "header" or lines[0].get("schema") != SCHEMA:
        raise FormatError(f"{path} is not an {SCHEMA} file")
    if lines[0].get("version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported report version {lines[0].get('version')}")
    rows = [{k: v for k, v in r.items() if k != "record"} for r in lines if r.get("record") == "row"]
    agg = next(({k: v for k, v in r.items() if k != "record"} for r in lines if r.get("record") == "aggregate"), {})
    meta = next((r for r in lines if r.get("record") == "meta"), {})
    return ExperimentReport(lines[0]["protocol"], lines[0]["config"], rows, agg, meta.get("runtime_s", 0.0))


def _mean_numeric(rows: list[dict], keys) -> dict:
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}


def aggregate_rows(protocol: str, rows: list[dict]) -> dict:
    """Means over seeds (grouped by baseline and grid point where relevant)."""
    if protocol == "dropped_class":
        out = {}
        for b in sorted({r["baseline"] for r in rows}):
            sel = [r for r in rows if r["baseline"] == b]
            out[b] = _mean_numeric(sel, ("precision", "recall", "f1", "auroc", "accuracy"))
        return out
    if protocol == "binary":
        return _mean_numeric(rows, ("precision", "recall", "f1", "accuracy"))
    if protocol == "incremental":
        curves = np.array([r["curve"] for r in rows])
        return {"curve": curves.mean(axis=0).tolist(),
                "avg_incremental_accuracy": float(np.mean([r["avg_incremental_accuracy"] for r in rows]))}
    out = {}
    for r in rows:
        key = f"{r['baseline']}/{r['attack_kind']}/{r['L_inst']:g}/{r['L_conc']}"
        out.setdefault(key, []).append(r)
    return {k: {**_mean_numeric(v, ("f1_drop", "acc_drop", "poisoned_f1", "poisoned_acc")),
                "median_f1_drop": float(np.median([x["f1_drop"] for x in v]))} for k, v in out.items()}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    rows: list[dict] = []
    for seed in cfg.seeds:
        if cfg.protocol == "dropped_class":
            rows.append(run_dropped_class_seed(cfg, seed))
        elif cfg.protocol == "robustness":
            rows.extend(run_robustness_seed(cfg, seed))
        elif cfg.protocol == "incremental":
            rows.append(run_incremental_seed(cfg, seed))
        else:
            rows.append(run_binary_seed(cfg, seed))
    agg = aggregate_rows(cfg.protocol, rows)
    return ExperimentReport(cfg.protocol, cfg.to_dict(), rows, agg, time.perf_counter() - t0)


def run_dropped_class_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(dataclasses.replace(cfg, protocol="dropped_class"))


def run_incremental_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(dataclasses.replace(cfg, protocol="incremental"))


def run_robustness_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(dataclasses.replace(cfg, protocol="robustness"))


def run_binary_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return run_experiment(dataclasses.replace(cfg, protocol="binary"))


def plot_rows(report: ExperimentReport) -> list[tuple[Any, str, float]]:
    """(x, series, value) triples ready for any plotting tool."""
    out = []
    if report.protocol == "robustness":
        for key, v in sorted(report.aggregate.items()):
            baseline, kind, L_inst, L_conc = key.split("/")
            if kind == "clean":
                continue
            x = float(L_inst) if kind == "instance" else int(L_conc)
            out.append((x, f"{baseline}/{kind}/f1_drop", v["f1_drop"]))
            out.append((x, f"{baseline}/{kind}/acc_drop", v["acc_drop"]))
    elif report.protocol == "incremental":
        for i, a in enumerate(report.aggregate["curve"], start=1):
            out.append((i, "accuracy", a))
        for r in report.rows:
            for i, a in enumerate(r["curve"], start=1):
                out.append((i, f"seed{r['seed']}", a))
    elif report.protocol == "dropped_class":
        for b, v in sorted(report.aggregate.items()):
            for k in ("precision", "recall", "f1", "auroc"):
                out.append((k, b, v[k]))
    else:
        for k in ("precision", "recall", "f1", "accuracy"):
            out.append((k, "binary", report.aggregate[k]))
    return out
