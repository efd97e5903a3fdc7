"""Experiment configuration, multi-trial runs and learning-curve CSV files."""
from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .algorithms import ALGORITHMS, HyperParams, run_algorithm
from .environments import make_env
from .exceptions import ConfigurationError
from .mdp import rng_stream

CSV_HEADER = ("trial", "generation", "best_return", "mean_return", "wallclock_ms")

# key -> (type, help); every key accepted in a config file or via --set
CONFIG_KEYS = {
    "algorithm": (str, "one of zoo, poga, arl"),
    "env": (str, "one of two_state, cartpole, quadratic"),
    "beta": (float, "selection strength"),
    "alpha": (float, "learning rate (ZOO step, ancestral-learning step)"),
    "sigma": (float, "perturbation / mutation noise scale"),
    "pop_size": (int, "number of agents per generation"),
    "generations": (int, "generations per trial"),
    "trials": (int, "independent trials, seeded from the master seed"),
    "seed": (int, "master seed"),
    "lifted_plan": (bool, "share one sampled transition plan per generation"),
    "arl_mutation": (bool, "extension: add Gaussian mutation to ARL"),
    "init_scale": (float, "std of initial linear-policy weights"),
    "gamma": (float, "discount factor override"),
    "horizon": (int, "episode length override"),
    "window": (int, "moving-average window used by aggregate"),
    "jobs": (int, "worker threads for agent evaluation"),
    "out": (str, "output CSV path"),
    "record_wallclock": (bool, "write measured wall-clock ms instead of 0"),
}

DEFAULT_GENERATIONS = {"two_state": 200, "cartpole": 300, "quadratic": 200}


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "arl"
    env: str = "two_state"
    hyper: HyperParams = field(default_factory=HyperParams)
    trials: int = 1
    master_seed: int = 0
    lifted_plan: bool = False
    output: Optional[str] = None
    moving_average_window: int = 5
    gamma: Optional[float] = None
    horizon: Optional[int] = None
    jobs: int = 1
    record_wallclock: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}", key="algorithm")
        if self.env not in DEFAULT_GENERATIONS:
            raise ConfigurationError(f"unknown env {self.env!r}", key="env")
        if self.env == "quadratic" and self.algorithm != "zoo":
            raise ConfigurationError("the quadratic black box only supports zoo", key="algorithm")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1", key="trials")
        if self.moving_average_window < 1:
            raise ConfigurationError("window must be >= 1", key="window")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1", key="jobs")


@dataclass(frozen=True)
class CurveRecord:
    trial: int
    generation: int
    best_return: float
    mean_return: float
    wallclock: float = 0.0


def _parse_value(key, raw):
    kind = CONFIG_KEYS[key][0]
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {raw!r}", key=key) from None


def parse_config_text(text):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}", key=key)
        values[key] = _parse_value(key, raw)
    return values


def config_from_dict(values):
    for key in values:
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}", key=key)
    env = values.get("env", "two_state")
    hp_kwargs = {k: values[k] for k in ("beta", "alpha", "sigma", "pop_size", "arl_mutation", "init_scale") if k in values}
    hp_kwargs["generations"] = values.get("generations", DEFAULT_GENERATIONS.get(env, 200))
    return ExperimentConfig(
        algorithm=values.get("algorithm", "arl"),
        env=env,
        hyper=HyperParams(**hp_kwargs),
        trials=values.get("trials", 1),
        master_seed=values.get("seed", 0),
        lifted_plan=values.get("lifted_plan", False),
        output=values.get("out"),
        moving_average_window=values.get("window", 5),
        gamma=values.get("gamma"),
        horizon=values.get("horizon"),
        jobs=values.get("jobs", 1),
        record_wallclock=values.get("record_wallclock", False),
    )


def config_text(source):
    """Text of a config given a file path or the name of a shipped config."""
    path = Path(source)
    if path.is_file():
        return path.read_text()
    if source in shipped_config_names():
        return resources.files("ancestral_rl").joinpath("configs", f"{source}.cfg").read_text()
    raise ConfigurationError(f"no config file or shipped config named {source!r}", key="config")


def load_config(source=None, overrides=None):
    """Read a config (file path or shipped name, optional) and apply ``overrides``.

    Override values may be strings (parsed like file values) or already typed.
    """
    values = parse_config_text(config_text(source)) if source else {}
    for key, value in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}", key=key)
        values[key] = _parse_value(key, value) if isinstance(value, str) else value
    return config_from_dict(values)


def shipped_config(name):
    """Load one of the configs bundled with the package, e.g. ``"two_state_arl"``."""
    return config_from_dict(parse_config_text(config_text(name)))


def shipped_config_names():
    return sorted(p.name[:-4] for p in resources.files("ancestral_rl").joinpath("configs").iterdir() if p.name.endswith(".cfg"))


def _seed_schedule(master_seed, trial):
    def rng_for(generation):
        if generation == "init":
            return rng_stream(master_seed, trial, 0, "init")
        return rng_stream(master_seed, trial, generation + 1)

    return rng_for


def run_trial(config, trial):
    env = make_env(config.env, gamma=config.gamma, horizon=config.horizon)
    records = []
    start = time.perf_counter()
    for res in run_algorithm(
        config.algorithm, env, config.hyper, _seed_schedule(config.master_seed, trial), config.lifted_plan, config.jobs
    ):
        elapsed = (time.perf_counter() - start) * 1e3 if config.record_wallclock else 0.0
        records.append(CurveRecord(trial, res.generation, res.best_return, res.mean_return, elapsed))
    return records


def run_experiment(config):
    """Run every trial of ``config``; write the CSV to ``config.output`` when set."""
    records = [r for trial in range(config.trials) for r in run_trial(config, trial)]
    if config.output:
        Path(config.output).write_text(records_to_csv(records))
    return records


def _fmt(x):
    return format(float(x), ".17g")


def records_to_csv(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([r.trial, r.generation, _fmt(r.best_return), _fmt(r.mean_return), _fmt(r.wallclock)])
    return buf.getvalue()


def read_records(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ConfigurationError(f"unexpected CSV header {reader.fieldnames}")
        return [
            CurveRecord(int(row["trial"]), int(row["generation"]), float(row["best_return"]),
                        float(row["mean_return"]), float(row["wallclock_ms"]))
            for row in reader
        ]


def moving_average(series, window):
    """Trailing moving average; the first ``window - 1`` points average the available prefix."""
    if window < 1:
        raise ConfigurationError("window must be >= 1", key="window")
    s = np.asarray(series, dtype=float)
    return np.array([s[max(0, i - window + 1): i + 1].mean() for i in range(len(s))])


def best_return_curves(records, include_trials=None):
    """Per-trial best-return series keyed by trial index."""
    curves = {}
    for r in sorted(records, key=lambda r: (r.trial, r.generation)):
        curves.setdefault(r.trial, []).append(r.best_return)
    if include_trials is not None:
        curves = {t: c for t, c in curves.items() if t in set(include_trials)}
    return {t: np.asarray(c) for t, c in curves.items()}


def aggregate_trials(records, window=1, include_trials=None):
    """Mean and population standard deviation of the (smoothed) best return per generation.

    Returns a dict with ``generation``, ``mean``, ``std`` and ``trials``.
    Trials of different lengths are truncated to the shortest with a warning.
    """
    curves = best_return_curves(records, include_trials)
    if not curves:
        raise ConfigurationError("no trials to aggregate")
    lengths = {len(c) for c in curves.values()}
    n = min(lengths)
    if len(lengths) > 1:
        warnings.warn(f"trial lengths differ {sorted(lengths)}; truncating to {n}", stacklevel=2)
    stacked = np.array([moving_average(c[:n], window) for c in curves.values()])
    return {
        "generation": np.arange(n),
        "mean": stacked.mean(axis=0),
        "std": stacked.std(axis=0),
        "trials": sorted(curves),
    }


def aggregate_to_csv(agg):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("generation", "mean_best_return", "std_best_return"))
    for g, m, s in zip(agg["generation"], agg["mean"], agg["std"]):
        writer.writerow([int(g), _fmt(m), _fmt(s)])
    return buf.getvalue()


def config_help():
    return "\n".join(f"  {key:<17} {kind.__name__:<6} {text}" for key, (kind, text) in CONFIG_KEYS.items())


__all__ = [
    "CONFIG_KEYS",
    "CSV_HEADER",
    "CurveRecord",
    "ExperimentConfig",
    "aggregate_trials",
    "config_text",
    "load_config",
    "moving_average",
    "read_records",
    "records_to_csv",
    "run_experiment",
    "shipped_config",
]
