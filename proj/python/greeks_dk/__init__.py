"""Monte Carlo Greeks by double-kernel score estimation (Python bindings)."""

import json
import os

from . import _core
from ._core import (
    ArgumentError,
    ConfigError,
    EstimationError,
    GreeksError,
    kernel_constants,
    set_threads,
    thread_count,
    verify_kernel,
)

__version__ = _core.__version__

__all__ = [
    "ArgumentError",
    "ConfigError",
    "EstimationError",
    "GreeksError",
    "load_config",
    "experiment_info",
    "draw_sample",
    "beta_tilde",
    "beta_bar_oracle",
    "baseline",
    "run",
    "sweep",
    "clt",
    "kernel_constants",
    "set_threads",
    "thread_count",
    "verify_kernel",
]


def _text(config):
    # a dict, a JSON string, or a path to a JSON file
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, (str, os.PathLike)) and os.path.exists(config):
        with open(config, encoding="utf-8") as fh:
            return fh.read()
    return str(config)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def experiment_info(config, n):
    return json.loads(_core.experiment_info(_text(config), int(n)))


def draw_sample(config, n, seed):
    """(lambdas, zs) as float64 arrays of shape (n, d) and (n, state_dim)."""
    return _core.draw_sample(_text(config), int(n), int(seed))


def beta_tilde(config, lambdas, zs, h=None):
    return json.loads(_core.beta_tilde(_text(config), lambdas, zs, h))


def beta_bar_oracle(config, lambdas, zs, h=None):
    return json.loads(_core.beta_bar_oracle(_text(config), lambdas, zs, h))


def baseline(config, which, n, seed):
    """which is one of 'fd', 'lr', 'pathwise'."""
    return json.loads(_core.baseline(_text(config), which, int(n), int(seed)))


def run(config, n=None, seed=None):
    return json.loads(_core.run(_text(config), n, seed))


def sweep(config, out_dir=""):
    return json.loads(_core.sweep(_text(config), str(out_dir)))


def clt(config, n, h, reps=200, oracle=False):
    return json.loads(_core.clt(_text(config), int(n), float(h), int(reps), bool(oracle)))
