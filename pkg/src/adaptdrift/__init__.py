"""Drift detection and new-class discovery with a contrastive embedding and a
nearest-class-mean detector, plus an adversarial poisoning harness."""

from .data import Dataset, FeatureSchema, SynthConfig, WindowedStream, load_csv, synth_drift_stream, windowize
from .detector import DetectorState, DriftVerdict, classify, detect
from .discovery import DiscoveryConfig, run_stream
from .embedding import Architecture, TrainConfig, encode, init_model, train
from .errors import AdaptDriftError, ConfigError, DataError
from .system import DetectorConfig, DriftSystem, fit_system

__all__ = [
    "AdaptDriftError", "Architecture", "ConfigError", "DataError", "Dataset", "DetectorConfig", "DetectorState",
    "DiscoveryConfig", "DriftSystem", "DriftVerdict", "FeatureSchema", "SynthConfig", "TrainConfig",
    "WindowedStream", "classify", "detect", "encode", "fit_system", "init_model", "load_csv", "run_stream",
    "synth_drift_stream", "train", "windowize",
]
