"""Model files and CSV logs.

A model file is ``MAGIC``, an 8-byte little-endian header length, a UTF-8
JSON header, then every tensor as little-endian float64 in row-major order,
in the order the header lists them. Floats that live in the header are
written with ``repr`` so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Normalizer
from .detector import ClassPrototype, DetectorState
from .discovery import PromotionRecord
from .embedding import AdamState, Architecture, ClassRepresentations, EmbeddingModel
from .errors import FormatError
from .system import DriftSystem

MAGIC = b"ADRIFTM1"
FORMAT_VERSION = 1


def _tensors(system: DriftSystem):
    m = system.model
    out = []
    for part, layers in (("encoder", m.encoder), ("decoder", m.decoder)):
        for i, (W, b) in enumerate(layers):
            out += [(f"{part}.{i}.W", W), (f"{part}.{i}.b", b)]
    for i, (a, v) in enumerate(zip(m.opt_state.m, m.opt_state.v)):
        out += [(f"adam.m.{i}", a), (f"adam.v.{i}", v)]
    for c in sorted(system.reps.v):
        out.append((f"rep.{c}", system.reps.v[c]))
    for c in sorted(system.detector.prototypes):
        p = system.detector.prototypes[c]
        out += [(f"proto.{c}.mean", p.mean), (f"proto.{c}.sigma2", p.sigma2)]
    out += [("norm.mean", system.normalizer.mean), ("norm.std", system.normalizer.std)]
    return out


def save_system(system: DriftSystem, path: str | Path) -> None:
    tensors = _tensors(system)
    det = system.detector
    header = {
        "format": FORMAT_VERSION,
        "architecture": {"layer_dims": list(system.model.arch.layer_dims),
                         "activation": system.model.arch.activation},
        "rng_seed": system.model.rng_seed,
        "adam_step": system.model.opt_state.step,
        "momentum": system.reps.momentum,
        "detector": {"lambda1": det.lambda1, "k_local": det.k_local, "drift_z": det.drift_z,
                     "use_group": det.use_group, "var_floor": det.var_floor,
                     "classes": [{"id": c, "count": det.prototypes[c].count, "theta": det.prototypes[c].theta}
                                 for c in sorted(det.prototypes)]},
        "label_map": system.label_map,
        "tensors": [{"name": n, "shape": list(np.shape(t))} for n, t in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_system(path: str | Path) -> DriftSystem:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path} is not a model file")
    (n,) = struct.unpack("<Q", raw[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"corrupt model header: {e}") from None
    if header.get("format") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format {header.get('format')}")
    offset = start + n
    t = {}
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise FormatError("model file truncated")
        t[spec["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(spec["shape"])
        offset = end
    if offset != len(raw):
        raise FormatError("trailing bytes in model file")

    arch = Architecture(tuple(header["architecture"]["layer_dims"]), header["architecture"]["activation"])
    n_layers = len(arch.layer_dims) - 1
    enc = [(t[f"encoder.{i}.W"], t[f"encoder.{i}.b"]) for i in range(n_layers)]
    dec = [(t[f"decoder.{i}.W"], t[f"decoder.{i}.b"]) for i in range(n_layers)]
    n_params = 4 * n_layers
    opt = AdamState([t[f"adam.m.{i}"] for i in range(n_params)], [t[f"adam.v.{i}"] for i in range(n_params)],
                    header["adam_step"])
    model = EmbeddingModel(arch, enc, dec, opt, header["rng_seed"])
    reps = ClassRepresentations({int(k.split(".")[1]): v for k, v in t.items() if k.startswith("rep.")},
                                header["momentum"])
    d = header["detector"]
    protos = {c["id"]: ClassPrototype(c["id"], t[f"proto.{c['id']}.mean"], t[f"proto.{c['id']}.sigma2"],
                                      c["count"], c["theta"]) for c in d["classes"]}
    det = DetectorState(protos, d["lambda1"], d["k_local"], d["drift_z"], d["use_group"], d["var_floor"])
    return DriftSystem(model, reps, det, Normalizer(t["norm.mean"], t["norm.std"]),
                       {str(k): int(v) for k, v in header["label_map"].items()})


VERDICT_COLUMNS = ("window", "sample_index", "predicted_class", "D", "d_R", "d_E", "drifted")
DECISION_COLUMNS = VERDICT_COLUMNS + ("pending_id",)
PROMOTION_COLUMNS = ("window", "new_class_id", "member_count", "centroid_norm", "accumulated_delta_norm")
MANIFEST_COLUMNS = ("window", "sample_index")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_rows(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_verdicts(path: str | Path, verdicts) -> None:
    """DriftVerdict objects or plain tuples in VERDICT_COLUMNS order."""
    rows = [(v.window, v.sample_index, v.predicted_class, v.D, v.d_R, v.d_E, v.drifted)
            if hasattr(v, "predicted_class") else v for v in verdicts]
    write_rows(path, VERDICT_COLUMNS if not rows or len(rows[0]) == 7 else DECISION_COLUMNS, rows)


def write_promotions(path: str | Path, records: Sequence[PromotionRecord]) -> None:
    write_rows(path, PROMOTION_COLUMNS, [tuple(asdict(r).values()) for r in records])


def write_manifest(path: str | Path, manifest: Sequence[tuple[int, int]]) -> None:
    write_rows(path, MANIFEST_COLUMNS, manifest)
