"""Command-line entry point: ``adaptdrift <command> ...``.

Every command reads one JSON config file (all sections optional). Exit codes:
0 success, 1 configuration or usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .adversarial import bagged_instance_injection, concept_injection
from .data import (Dataset, SynthConfig, load_csv, schema_from_csv, synth_drift_stream, synth_labeled, windowize,
                   write_annotations, write_csv)
from .discovery import run_stream
from .errors import ConfigError, DataError
from .experiments import ExperimentConfig, build_system, plot_rows, read_report, run_experiment
from .persistence import load_system, save_system, write_manifest, write_promotions, write_rows, write_verdicts

PROTOCOL_ALIASES = {"dropped": "dropped_class", "dropped_class": "dropped_class", "incremental": "incremental",
                    "robustness": "robustness", "binary": "binary"}
CLI_KEYS = ("synth", "window_size", "n_train_per_class")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _experiment(doc: dict, seed: int | None, seeds: int | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict({k: v for k, v in doc.items() if k not in CLI_KEYS})
    base = seed if seed is not None else (cfg.seeds[0] if seeds is not None else None)
    if seeds is not None:
        if seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        cfg = dataclasses.replace(cfg, seeds=tuple(range(base, base + seeds)))
    elif seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(seed,))
    return cfg


def _read_data(path: str) -> Dataset:
    try:
        return load_csv(path, schema_from_csv(path))
    except FileNotFoundError:
        raise DataError(f"data file {path} not found") from None


def _window_size(args, doc: dict) -> int:
    w = args.window_size if args.window_size is not None else doc.get("window_size", 300)
    if not isinstance(w, int) or w < 1:
        raise ConfigError("window_size must be a positive integer")
    return w


def cmd_synth(args, doc):
    s = dict(doc.get("synth", {}))
    if args.seed is not None:
        s["seed"] = args.seed
    try:
        cfg = SynthConfig(**s)
    except TypeError as e:
        raise ConfigError(f"synth: {e}") from None
    stream = synth_drift_stream(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "stream.csv", stream.flatten())
    write_annotations(out / "annotations.csv", stream)
    old = range(cfg.n_classes - cfg.new_classes)
    write_csv(out / "train.csv", synth_labeled(cfg, list(old), int(doc.get("n_train_per_class", 500)), 0))
    print(f"wrote {len(stream)} windows to {out}")


def cmd_train(args, doc):
    cfg = _experiment(doc, args.seed)
    data = _read_data(args.data)
    system = build_system(cfg, data, cfg.seeds[0] if args.seed is None else args.seed)
    save_system(system, args.out)
    print(f"trained on {len(data)} samples, {len(system.detector.prototypes)} classes -> {args.out}")


def cmd_detect(args, doc):
    system = load_system(args.model)
    data = _read_data(args.data)
    rows = []
    for t, w in enumerate(windowize(data, _window_size(args, doc))):
        rows.extend(system.score(w.X).verdicts(t))
    write_verdicts(args.out, rows)
    print(f"{sum(v.drifted for v in rows)} of {len(rows)} samples drifted -> {args.out}")


def cmd_discover(args, doc):
    cfg = _experiment(doc, args.seed)
    system = load_system(args.model)
    train_set = _read_data(args.train)
    stream = windowize(_read_data(args.data), _window_size(args, doc))
    tc = dataclasses.replace(cfg.train, seed=cfg.seeds[0])
    res = run_stream(stream, system, train_set, cfg.discovery, tc, cfg.detector_config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_verdicts(out / "decisions.csv", res.verdicts)
    write_promotions(out / "promotions.csv", res.promotions)
    save_system(res.system, out / "model.bin")
    print(f"{len(res.promotions)} promotions over {len(stream)} windows -> {out}")


def cmd_attack(args, doc):
    cfg = _experiment(doc, args.seed)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    data = _read_data(args.data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "instance":
        system = load_system(args.model) if args.model else build_system(cfg, data, seed)
        L = args.l_inst if args.l_inst is not None else max(cfg.plan.L_inst)
        stream = windowize(data, cfg.poison_window)
        poisoned, manifest = bagged_instance_injection(stream, system, L, cfg.pgd, cfg.plan.bags, seed,
                                                       cfg.flip_labels)
        write_csv(out / "poisoned.csv", poisoned.flatten())
        write_manifest(out / "manifest.csv", manifest)
        print(f"corrupted {len(manifest)} of {len(data)} samples -> {out}")
    else:
        k = args.l_conc if args.l_conc is not None else max(cfg.plan.L_conc)
        poison = concept_injection(data, k, cfg.plan.concept_size, seed=seed)
        write_csv(out / "poisoned.csv", Dataset.concat([data, poison]))
        write_rows(out / "manifest.csv", ("row",), [(len(data) + i,) for i in range(len(poison))])
        print(f"appended {len(poison)} poisoned samples -> {out}")


def cmd_eval(args, doc):
    protocol = PROTOCOL_ALIASES.get(args.protocol)
    if protocol is None:
        raise ConfigError(f"unknown protocol {args.protocol!r}; choose from {sorted(PROTOCOL_ALIASES)}")
    doc = {**doc, "protocol": protocol}
    cfg = _experiment(doc, args.seed, args.seeds)
    report = run_experiment(cfg)
    report.write(args.out)
    print(json.dumps({"aggregate": report.aggregate, "content_hash": report.content_hash}, sort_keys=True))


def cmd_report(args, doc):
    rows = []
    for path in args.inputs:
        rows.extend(plot_rows(read_report(path)))
    write_rows(args.out, ("x", "series", "value"), rows)
    print(f"{len(rows)} plot rows -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adaptdrift", description="Contrastive NCM drift detection toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="override the seed")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("synth", cmd_synth, "emit a synthetic drift stream")
    sp.add_argument("--out", required=True, help="output directory")
    sp = add("train", cmd_train, "train a model on a labeled CSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp = add("detect", cmd_detect, "score a CSV window by window")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--window-size", type=int)
    sp = add("discover", cmd_discover, "run detection and new-class discovery over a stream")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--train", required=True, help="original training CSV")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--window-size", type=int)
    sp = add("attack", cmd_attack, "poison a CSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--kind", choices=("instance", "concept"), default="instance")
    sp.add_argument("--model", help="attacked model (instance kind); trained from --data if omitted")
    sp.add_argument("--l-inst", type=float)
    sp.add_argument("--l-conc", type=int)
    sp = add("eval", cmd_eval, "run an experiment protocol")
    sp.add_argument("protocol", help="dropped | incremental | robustness | binary")
    sp.add_argument("--seeds", type=int, help="number of consecutive seeds")
    sp.add_argument("--out", required=True, help="report file (JSON lines)")
    sp = add("report", cmd_report, "turn report files into (x, series, value) CSV")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.fn(args, _load_config(args.config))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
