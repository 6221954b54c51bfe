"""Latent-action reinforcement learning for slate recommendation."""

import json

from . import _core
from ._core import (
    DivergenceError,
    EmptyLogError,
    Environment,
    NumericError,
    SessionLog,
    Worlds,
    binarize_feedback,
    generate_synthetic,
    inverse_pool,
    kcore_filter,
    load_session_log,
    slate_reward,
    temper_update,
    temporal_split,
)

__all__ = [
    "Agent",
    "DivergenceError",
    "EmptyLogError",
    "Environment",
    "NumericError",
    "SessionLog",
    "Worlds",
    "binarize_feedback",
    "default_config",
    "generate_synthetic",
    "inverse_pool",
    "kcore_filter",
    "load_session_log",
    "prepare_worlds",
    "run_experiment",
    "slate_reward",
    "temper_update",
    "temporal_split",
    "train_and_evaluate",
]


def _text(config):
    return json.dumps(config or {})


def default_config():
    return json.loads(_core.default_config())


def normalize_config(config):
    return json.loads(_core.normalize_config(_text(config)))


def prepare_worlds(config=None):
    return _core.prepare_worlds(_text(config))


def train_and_evaluate(config, worlds, write=False):
    return _core.train_and_evaluate(_text(config), worlds, write)


def run_experiment(config=None):
    return _core.run_experiment(_text(config))


def Agent(config, log):
    return _core.Agent(_text(config), log)
