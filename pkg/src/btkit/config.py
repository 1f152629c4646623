"""Experiment configuration: a single YAML file with documented flat keys.

Unknown keys, wrong types, and out-of-range values raise ConfigError naming
the offending key path. See configs/toy.yaml for the full schema with
defaults.
"""

from __future__ import annotations

import copy
import hashlib
import json
from typing import Any

import yaml

from btkit.corpus import FilterConfig
from btkit.decode import METHODS, GenerationConfig
from btkit.errors import ConfigError
from btkit.noise import NoiseConfig

DEFAULTS: dict[str, Any] = {
    "seed": 13,
    "paths": {
        "bitext": None,
        "mono": None,
        "dev": None,
        "test": None,
    },
    "prep": {
        "tokenize_raw": False,
    },
    "filter": {
        "max_len": 250,
        "max_ratio": 1.5,
    },
    "bpe": {
        "num_ops": 500,
    },
    "model": {
        "lambda_lex": 0.5,
        "lambda_lm": 0.5,
        "lm_order": 3,
        "lm_discount": 0.75,
        "em_iterations": 8,
        "heldout_tol": 1e-4,
        "heldout_patience": 3,
    },
    "gen": {
        "method": "beam",
        "beam_size": 5,
        "topk_k": 10,
        "max_len": None,
        "temperature": 1.0,
    },
    "noise": {
        "p_del": 0.1,
        "p_blank": 0.1,
        "swap_window": 3,
    },
    "augment": {
        "upsample_rate": 1.0,
        "copy_filter": False,
        "copy_threshold": 0.5,
        "drop_flagged": False,
    },
    "sweep": {
        "methods": ["beam", "sampling"],
        "synthetic_amounts": [0, 20000],
        "bitext_sizes": [],  # empty: use the full prepared bitext
        "upsample_rates": [1.0],
    },
    "analysis": {
        "split_fractions": [0.2, 0.6, 0.2],
        "methods": ["beam", "top10", "sampling", "beam_noise"],
        "lm_order": 5,
        "lm_discount": 0.75,
        "loss_sample": 1000,
        "loss_epochs": 8,
        "loss_synth_amount": 8000,
        "loss_methods": ["beam", "sampling", "top10", "beam_noise"],
    },
    "toy": {
        "n_bitext": 10000,
        "n_mono": 50000,
        "n_dev": 1000,
        "n_test": 1000,
        "target_vocab": 900,
        "branching": 5,
        "jump_prob": 0.12,
        "ambig_fraction": 0.55,
        "max_group": 3,
        "swap_prob": 0.15,
        "min_len": 5,
        "max_len": 14,
    },
}

_ALLOW_NONE = {"paths.bitext", "paths.mono", "paths.dev", "paths.test", "gen.max_len"}


def _type_name(v) -> str:
    return type(v).__name__


def _merge(defaults, given, path=""):
    out = {}
    for key, default in defaults.items():
        key_path = f"{path}.{key}" if path else key
        if key not in given:
            out[key] = copy.deepcopy(default)
            continue
        value = given[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{key_path}': expected a mapping")
            out[key] = _merge(default, value, key_path)
        else:
            out[key] = _check_value(key_path, default, value)
    for key in given:
        if key not in defaults:
            key_path = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key '{key_path}'")
    return out


def _check_value(key_path, default, value):
    if value is None:
        if key_path in _ALLOW_NONE:
            return None
        raise ConfigError(f"config key '{key_path}': null is not allowed")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{key_path}': expected bool, got {_type_name(value)}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{key_path}': expected int, got {_type_name(value)}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{key_path}': expected number, got {_type_name(value)}")
        return float(value)
    if isinstance(default, str) or default is None:
        if not isinstance(value, str):
            raise ConfigError(f"config key '{key_path}': expected string, got {_type_name(value)}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"config key '{key_path}': expected list, got {_type_name(value)}")
        elem = default[0] if default else None
        out = []
        for i, item in enumerate(value):
            if elem is None:
                out.append(item)
            else:
                out.append(_check_value(f"{key_path}[{i}]", elem, item))
        return out
    raise ConfigError(f"config key '{key_path}': unsupported value")


def _semantic_checks(cfg):
    for m in cfg["sweep"]["methods"]:
        if m not in ("greedy", "beam", "sampling", "topk", "top10", "beam_noise"):
            raise ConfigError(f"config key 'sweep.methods': unknown method {m!r}")
    if cfg["gen"]["method"] not in METHODS:
        raise ConfigError(f"config key 'gen.method': unknown method {cfg['gen']['method']!r}")
    fr = cfg["analysis"]["split_fractions"]
    if len(fr) != 3 or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError("config key 'analysis.split_fractions': three fractions summing to 1")
    if abs(cfg["model"]["lambda_lex"] + cfg["model"]["lambda_lm"] - 1.0) > 1e-9:
        raise ConfigError("config key 'model.lambda_lex': lambdas must sum to 1")
    if cfg["model"]["em_iterations"] < 1:
        raise ConfigError("config key 'model.em_iterations': must be >= 1")
    for key in ("p_del", "p_blank"):
        if not (0.0 <= cfg["noise"][key] <= 1.0):
            raise ConfigError(f"config key 'noise.{key}': probability out of range")
    if cfg["augment"]["upsample_rate"] <= 0:
        raise ConfigError("config key 'augment.upsample_rate': must be positive")
    for i, a in enumerate(cfg["sweep"]["synthetic_amounts"]):
        if a < 0:
            raise ConfigError(f"config key 'sweep.synthetic_amounts[{i}]': must be >= 0")


class Config:
    """Validated experiment configuration with dict-style section access."""

    def __init__(self, data: dict):
        self.data = data

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def filter_config(self) -> FilterConfig:
        f = self.data["filter"]
        return FilterConfig(max_len=f["max_len"], max_ratio=f["max_ratio"])

    def noise_config(self, seed: int | None = None) -> NoiseConfig:
        n = self.data["noise"]
        return NoiseConfig(
            p_del=n["p_del"],
            p_blank=n["p_blank"],
            swap_window=n["swap_window"],
            seed=self.seed if seed is None else seed,
        )

    def gen_config(self, method: str | None = None, seed: int | None = None) -> GenerationConfig:
        g = self.data["gen"]
        method = method or g["method"]
        topk_k = g["topk_k"]
        if method.startswith("top") and method not in ("topk",):
            topk_k = int(method[3:])  # top10/top5/... name the cutoff
            method = "topk"
        return GenerationConfig(
            method=method,
            beam_size=g["beam_size"],
            topk_k=topk_k,
            max_len=g["max_len"],
            seed=self.seed if seed is None else seed,
            temperature=g["temperature"],
        )


def validate_config(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    merged = _merge(DEFAULTS, raw)
    _semantic_checks(merged)
    return Config(merged)


def load_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    return validate_config(raw or {})


def config_hash(cfg: Config | dict, *extra) -> str:
    data = cfg.data if isinstance(cfg, Config) else cfg
    payload = json.dumps({"config": data, "extra": list(extra)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
