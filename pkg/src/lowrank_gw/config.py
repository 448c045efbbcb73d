"""JSON run configuration.

Every key is optional; missing keys take the defaults below. Unknown keys
are rejected so that typos fail loudly.

    {
      "system":   {"seed": 1, "dims": [8, 8, 8], "cell": [10.26, 10.26, 10.26],
                   "n_v": 16, "n_c": 16, "gap": 0.2, "bandwidth": 1.8,
                   "envelope": 0.1, "wavefunction_file": null},
      "coulomb":  "reciprocal_diagonal",
      "isdf":     {"k_vc": 8.0, "k_vn": 8.0, "k_nn": 8.0,
                   "method": "qrcp_direct", "seed": 0},
      "contour":  {"method": "contour", "delta_rel": 1e-7, "max_nodes": 1025},
      "pipeline": "lowrank",
      "threads":  1,
      "output":   "results",
      "validation_seeds": [1, 2, 3, 4, 5],
      "experiments": {"k_sweep": [4, 6, 8, 10, 12], "k_sensitivity": true,
                      "nodes_sweep": [5, 9, 13, ...], "delta_sweep": [1e-2, ..., 1e-6],
                      "singular_values": 128},
      "scale":    {"sizes": [4, 8, 16, 32, 64], "repeats": 3, "points_per_electron": 16,
                   "spacing": 1.2825},
      "test_hooks": {"flip_sex_x_sign": false}
    }
"""
import copy
import json
import os
from dataclasses import dataclass

from .errors import LowRankGWError

DEFAULTS = {
    "system": {
        "seed": 1,
        "dims": [8, 8, 8],
        "cell": [10.26, 10.26, 10.26],
        "n_v": 16,
        "n_c": 16,
        "gap": 0.2,
        "bandwidth": 1.8,
        "envelope": 0.1,
        "wavefunction_file": None,
    },
    "coulomb": "reciprocal_diagonal",
    "isdf": {"k_vc": 8.0, "k_vn": 8.0, "k_nn": 8.0, "method": "qrcp_direct", "seed": 0},
    "contour": {"method": "contour", "delta_rel": 1e-7, "max_nodes": 1025},
    "pipeline": "lowrank",
    "threads": 1,
    "output": "results",
    "validation_seeds": [1, 2, 3, 4, 5],
    "experiments": None,
    "scale": {"sizes": [4, 8, 16, 32, 64], "repeats": 3, "points_per_electron": 16, "spacing": 1.2825},
    "test_hooks": {"flip_sex_x_sign": False},
}

EXPERIMENT_DEFAULTS = {
    "k_sweep": [4.0, 6.0, 8.0, 10.0, 12.0],
    "k_sensitivity": True,
    "nodes_sweep": [5, 9, 13, 17, 21, 25, 29, 33, 41, 49, 65],
    "delta_sweep": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
    "singular_values": 128,
}


class ConfigError(LowRankGWError):
    """The configuration file is unreadable or violates its schema."""


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: str = "."

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def system(self):
        return self.raw["system"]

    @property
    def isdf(self):
        return self.raw["isdf"]

    @property
    def contour(self):
        return self.raw["contour"]

    @property
    def experiments(self):
        return self.raw["experiments"]

    @property
    def scale(self):
        return self.raw["scale"]

    @property
    def flip_sex_x(self):
        return bool(self.raw["test_hooks"]["flip_sex_x_sign"])

    def with_updates(self, **blocks):
        """Copy with whole blocks or nested keys replaced, e.g. ``isdf={"k_vc": 6.0}``."""
        raw = copy.deepcopy(self.raw)
        for key, value in blocks.items():
            if isinstance(value, dict) and isinstance(raw.get(key), dict):
                raw[key].update(value)
            else:
                raw[key] = value
        return validate_config(raw, self.base_dir)

    def wavefunction_path(self):
        path = self.system["wavefunction_file"]
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def _merge(defaults, given, where):
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(defaults[key], dict) and value is not None:
            out[key] = _merge(defaults[key], value, f"{where}.{key}".lstrip("."))
        else:
            out[key] = value
    return out


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_config(raw, base_dir="."):
    merged = _merge(DEFAULTS, raw, "")
    if merged["experiments"] is not None:
        merged["experiments"] = _merge(EXPERIMENT_DEFAULTS, merged["experiments"], "experiments")
    s = merged["system"]
    _require(
        isinstance(s["dims"], list) and len(s["dims"]) == 3 and all(isinstance(d, int) and d >= 2 for d in s["dims"]),
        "system.dims must be three integers >= 2",
    )
    _require(
        isinstance(s["cell"], list) and len(s["cell"]) == 3 and all(_is_num(c) and c > 0 for c in s["cell"]),
        "system.cell must be three positive numbers",
    )
    for key in ("n_v", "n_c", "seed"):
        _require(isinstance(s[key], int) and s[key] >= (0 if key == "seed" else 1), f"system.{key} must be a positive integer")
    # the gap is a physical precondition, checked when the system is built
    _require(_is_num(s["gap"]), "system.gap must be a number")
    _require(_is_num(s["bandwidth"]) and s["bandwidth"] > 0, "system.bandwidth must be positive")
    _require(_is_num(s["envelope"]) and s["envelope"] > 0, "system.envelope must be positive")
    if s["wavefunction_file"] is not None:
        path = s["wavefunction_file"]
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        _require(os.path.isfile(full), f"wavefunction file not found: {path}")
    _require(merged["coulomb"] in ("reciprocal_diagonal", "dense"), "coulomb must be reciprocal_diagonal or dense")
    i = merged["isdf"]
    for key in ("k_vc", "k_vn", "k_nn"):
        _require(_is_num(i[key]) and i[key] > 0, f"isdf.{key} must be positive")
    _require(i["method"] in ("qrcp_direct", "qrcp_sketched"), "isdf.method must be qrcp_direct or qrcp_sketched")
    c = merged["contour"]
    _require(c["method"] in ("contour", "direct"), "contour.method must be contour or direct")
    _require(_is_num(c["delta_rel"]) and 0 < c["delta_rel"] < 0.5, "contour.delta_rel must lie in (0, 0.5)")
    _require(isinstance(c["max_nodes"], int) and c["max_nodes"] >= 33, "contour.max_nodes must be an integer >= 33")
    _require(merged["pipeline"] in ("lowrank", "isdf_conventional", "bruteforce"), "unknown pipeline")
    _require(isinstance(merged["threads"], int) and merged["threads"] >= 1, "threads must be a positive integer")
    _require(isinstance(merged["output"], str) and merged["output"], "output must be a directory name")
    seeds = merged["validation_seeds"]
    _require(isinstance(seeds, list) and seeds and all(isinstance(x, int) for x in seeds), "validation_seeds must list integers")
    sc = merged["scale"]
    _require(isinstance(sc["sizes"], list) and all(isinstance(n, int) and n >= 2 and n % 2 == 0 for n in sc["sizes"]), "scale.sizes must list even integers >= 2")
    _require(sc["sizes"] == sorted(sc["sizes"]), "scale.sizes must be ascending")
    _require(isinstance(sc["repeats"], int) and sc["repeats"] >= 1, "scale.repeats must be >= 1")
    _require(isinstance(merged["test_hooks"]["flip_sex_x_sign"], bool), "test_hooks.flip_sex_x_sign must be boolean")
    return RunConfig(raw=merged, base_dir=base_dir)


def load_config(path=None):
    """Read and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return validate_config({})
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw, os.path.dirname(os.path.abspath(path)))
