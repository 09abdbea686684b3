"""Quarter-car road simulation and road/vehicle latent separation from cabin acceleration."""

import json as _json
import os as _os

from ._core import (
    Model,
    TirelevelError,
    Vehicle,
    linearized_modes,
    load_dataset,
    pearson,
    psd,
    reference_vehicle,
    reference_vehicles,
    road_input,
    run_cli,
    simulate,
    spearman,
    synthesize_profile,
    transfer_function,
)
from . import _core

__all__ = [
    "Model",
    "TirelevelError",
    "Vehicle",
    "default_generation_config",
    "default_train_config",
    "evaluate",
    "fit",
    "generate",
    "generate_sample",
    "linearized_modes",
    "load_dataset",
    "pearson",
    "psd",
    "reference_vehicle",
    "reference_vehicles",
    "road_input",
    "run_cli",
    "simulate",
    "spearman",
    "synthesize_profile",
    "transfer_function",
]


def _merge(base, overrides):
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def default_generation_config():
    """Generation settings as a dict (psd, speed, sample_rate, signal_length, preroll, ...)."""
    return _json.loads(_core._default_generation_config())


def default_train_config():
    """Training settings as a dict (epochs, batch_size, lr, K, architecture, ...)."""
    return _json.loads(_core._default_train_config())


def generate_sample(vehicle, seed, **generation):
    """Simulates one record; returns the profile, road input, full trajectory and recorded channels."""
    cfg = _merge(default_generation_config(), generation)
    return _core._trace_sample(vehicle, seed, _json.dumps(cfg))


def generate(path, n_per_class, seed, classes=(1, 2, 3, 4, 5), threads=1, **generation):
    """Generates a dataset of the reference classes and saves it to `path`; returns the sample count."""
    cfg = _merge(default_generation_config(), generation)
    return _core._generate(_os.fspath(path), list(classes), n_per_class, seed, _json.dumps(cfg), threads)


def fit(dataset, checkpoint, **train):
    """Trains on a saved dataset and writes the best checkpoint; returns best_epoch and per-epoch history."""
    cfg = _merge(default_train_config(), train)
    return _json.loads(_core._fit(_os.fspath(dataset), _os.fspath(checkpoint), _json.dumps(cfg)))


def evaluate(model, dataset, probe_steps=2000, probe_seed=123):
    """Test-split report: per-class correlations, CL accuracy and latent probe accuracies."""
    if not isinstance(model, Model):
        model = Model.load(_os.fspath(model))
    return _json.loads(model._evaluate(_os.fspath(dataset), probe_steps, probe_seed))
