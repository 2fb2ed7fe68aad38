"""Uncertainty-estimation benchmark: metrics, selective prediction and the synthetic experiment."""

import json

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    IoError,
    NumericalError,
    ParameterError,
    ParseError,
    PredictionSet,
    StateError,
    UndefinedMetricError,
    UqlabError,
    VersionError,
    auroc_ood,
    average_precision,
    derive_seed,
    ece,
    entropy,
    load_predictions,
    mce,
    save_predictions,
    softmax,
    two_moons,
    youden_threshold,
)
from ._core import default_config as _default_config
from ._core import run_experiment as _run_experiment


def default_config():
    return json.loads(_default_config())


def run(config=None, report_dir=None):
    """Runs the experiment described by `config` (a dict, a JSON string, or None for defaults)."""
    if config is None:
        config = _default_config()
    elif not isinstance(config, str):
        config = json.dumps(config)
    return _run_experiment(config, None if report_dir is None else str(report_dir))


__all__ = [name for name in dir() if not name.startswith("_")]
