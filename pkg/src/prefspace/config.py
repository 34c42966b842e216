"""Run configuration: one hierarchical document holding every default.

A config file (YAML) and `--set key=value` overrides are merged onto the
defaults; unknown keys are rejected so typos fail loudly. The resolved
document is written alongside every artifact, which makes any output
regenerable from its embedded config plus seed.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

import yaml

OUTPUT_ROOT_ENV = "PREFSPACE_OUTPUT_ROOT"

DEFAULTS = {
    "seed": 0,
    "output_root": "runs",
    "db": {
        "modality": "visual",
        "n": 500,
        "k": 6,
        "clusters": 8,
        "sigma_obs": None,
        "utility_dims": 3,
        "utility_scale": 1.5,
        "nuisance_scale": 3.0,
        "within_cluster_std": 0.5,
        "mixing_hidden": 32,
    },
    "simulate": {
        "users": 25,
        "pages": 6,
        "page_size": 60,
        "explore_temp": 0.3,
        "explore_frac": 0.2,
        "rank_temp": 0.1,
        "rankings_per_user": 10,
        "query_size": 5,
    },
    "train": {
        "objective": "clea",
        "dim": 8,
        "alpha": None,
        "beta": None,
        "lr": 1e-3,
        "batch": 128,
        "epochs": 50,
        "weighting": "uniform",
        "hidden_dims": [64, 64],
    },
    "reward": {
        "hidden_dims": [64, 64],
        "epochs": 60,
        "batch": 16,
        "lr": 1e-3,
        "l2_output": 0.01,
    },
    "sampler": {
        "proposal_scale": None,
        "burn_in": 200,
        "thinning": 5,
        "n_samples": 100,
        "n_chains": 25,
    },
    "evaluate": {
        "objectives": ["random", "pretrained", "ae", "vae", "clea", "clea_ae", "clea_vae"],
        "dims": [2, 4, 8, 16, 32],
        "split": 0.7,
        "seeds": [0, 1],
        "train_pop": 25,
        "eval_pop": 42,
        "noise_trials": 3,
        "eps": [0.0, 0.01, 0.05, 0.1, 0.2, 0.3],
    },
    "serve": {
        "host": "127.0.0.1",
        "port": 8000,
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be a mapping")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def _parse_set(expr: str) -> dict:
    if "=" not in expr:
        raise ConfigError(f"--set expects key=value, got {expr!r}")
    key, _, raw = expr.partition("=")
    value = yaml.safe_load(raw)
    node: dict = value
    for part in reversed(key.strip().split(".")):
        node = {part: node}
    return node


def load_config(path: str | None = None, sets: tuple[str, ...] = ()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        cfg = _merge(cfg, doc)
    for expr in sets:
        cfg = _merge(cfg, _parse_set(expr))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        cfg["output_root"] = root
    return cfg


def write_resolved(cfg: dict, out_dir: Path, name: str = "config.resolved.json"):
    """Drop the resolved config next to the artifacts it produced."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
    return path


def fresh_path(out_dir: Path, filename: str) -> Path:
    """Output directories are append-only: refuse to clobber."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / filename
    if path.exists():
        raise FileExistsError(f"refusing to overwrite existing artifact: {path}")
    return path
