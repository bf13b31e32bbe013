"""Experiment configuration: defaults, presets, validation, hashing.

A configuration is a plain nested dict with sections mirroring the module
layout. Unknown keys are hard errors so a typo in an exponent list cannot
silently fall back to a default. Infinite exponents are written as the
string "inf" in config files and JSON records.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

from .discretize import cosine_potential
from .impurity import AnisotropyProfile, ImpurityPotential
from .measures import MeasureConfig, WeightLaw

__all__ = [
    "DEFAULTS",
    "PRESETS",
    "load_config",
    "resolve_config",
    "validate_config",
    "apply_overrides",
    "config_hash",
    "build_measure",
    "build_potential",
    "build_u_per",
]

DEFAULTS = {
    "measure": {
        "family": "poisson",
        "intensity": 1.0,
        "weights": {"law": "constant", "params": [1.0]},
        "displacement": "uniform",
    },
    "potential": {
        "family": "algebraic",
        "f0": 1.0,
        "alpha": [4.0],
        "dims": [1],
        "radius": 0.5,
        "truncation": 6.0,
    },
    "operator": {
        "u_per": "zero",
        "amplitude": 1.0,
        "n_per_cell": 4,
        "bc": "mezincescu",
    },
    "experiment": {
        "energies": [0.1, 0.2, 0.4],
        "box_cells": 8,
        "n_realizations": 20,
        "r0": 1.0,
        "prefactor": 1.0,
        "mode": "plain",          # plain | qm | qc | classical (bounds cutoff)
        "n_sandwich": 0,
        "sandwich_box_cells": 4,
        "k_eigs": 2,
        "bench_sizes": [4, 8, 12],
        "n_draws": 2000,          # statistical test sample size
        "eps": 0.05,              # small-mass threshold
        "lag": [2],
        "fit_window": None,
        "min_decades": 0.5,
    },
    "seed": 1,
    "output": {"results": "results.jsonl", "summary": "summary.csv",
               "lock": "config.lock"},
}

# Named presets. Each entry is a partial config merged over the defaults.
PRESETS = {
    # 2D anisotropic regime studies, d = (1, 1). The shared geometric
    # energy schedule covers both the quantum and classical fit windows
    # so the two presets run on matched budgets with matched seeds.
    "qm-poisson": {
        "measure": {"intensity": 0.3},
        "potential": {"alpha": [10.0, 10.0], "dims": [1, 1], "truncation": 3.0},
        "experiment": {"energies": [0.35 * (1.2 ** i) for i in range(17)],
                       "box_cells": 16, "n_realizations": 200, "mode": "qm"},
        "operator": {"n_per_cell": 3},
    },
    "cl-poisson": {
        "measure": {"intensity": 0.3},
        "potential": {"alpha": [2.5, 2.5], "dims": [1, 1], "truncation": 6.0},
        "experiment": {"energies": [0.35 * (1.2 ** i) for i in range(17)],
                       "box_cells": 16, "n_realizations": 200,
                       "mode": "classical"},
        "operator": {"n_per_cell": 3},
    },
    "qc-poisson": {
        "measure": {"intensity": 0.3},
        "potential": {"alpha": ["inf", 2.5], "dims": [1, 1], "truncation": 6.0},
        "experiment": {"energies": [0.35 * (1.2 ** i) for i in range(17)],
                       "box_cells": 16, "n_realizations": 200, "mode": "qc"},
        "operator": {"n_per_cell": 3},
    },
    # bracketing check on a 16^2-cell box
    "sandwich-small": {
        "potential": {"alpha": [4.0, 4.0], "dims": [1, 1], "truncation": 4.0},
        "experiment": {"energies": [0.02, 0.05, 0.1], "box_cells": 16,
                       "n_realizations": 200, "n_sandwich": 200,
                       "sandwich_box_cells": 16},
        "operator": {"n_per_cell": 3},
    },
    # exact synthetic decay exp(-E^{-1}); for exercising the fit path
    "eta-synthetic": {
        "experiment": {"energies": [0.02 * (1.25 ** i) for i in range(16)],
                       "n_realizations": 0},
    },
    # 1D quick demonstration preset
    "poisson-1d": {
        "potential": {"alpha": [4.0], "dims": [1], "truncation": 6.0},
        "experiment": {"energies": [0.05, 0.1, 0.2, 0.4], "box_cells": 12,
                       "n_realizations": 40},
    },
}


def _merge(base: dict, overlay: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in overlay.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise KeyError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate_config(cfg: dict) -> dict:
    """Merge over the defaults, rejecting unknown keys, and sanity-check."""
    cfg = _merge(DEFAULTS, cfg)
    m = cfg["measure"]
    if m["family"] not in ("poisson", "displacement", "compound_poisson",
                           "compound_displacement", "periodic"):
        raise ValueError(f"unknown measure family: {m['family']}")
    if m["intensity"] < 0:
        raise ValueError("intensity must be nonnegative")
    alphas = [_parse_alpha(a) for a in cfg["potential"]["alpha"]]
    dims = cfg["potential"]["dims"]
    if len(alphas) != len(dims):
        raise ValueError("alpha and dims must have the same length")
    AnisotropyProfile(tuple(int(d) for d in dims), tuple(alphas),
                      strict=False)
    op = cfg["operator"]
    if op["bc"] not in ("mezincescu", "dirichlet"):
        raise ValueError(f"unknown boundary condition: {op['bc']}")
    if op["u_per"] not in ("zero", "cosine") and not isinstance(
            op["u_per"], (int, float)):
        raise ValueError(f"unknown periodic background: {op['u_per']}")
    ex = cfg["experiment"]
    if any(e <= 0 for e in ex["energies"]):
        raise ValueError("energies must be positive")
    if ex["mode"] not in ("plain", "qm", "qc", "classical"):
        raise ValueError(f"unknown cutoff mode: {ex['mode']}")
    return cfg


def _parse_alpha(a) -> float:
    if isinstance(a, str):
        if a.lower() in ("inf", "infinity"):
            return math.inf
        raise ValueError(f"bad exponent: {a!r}")
    a = float(a)
    if a <= 0:
        raise ValueError("exponents must be positive")
    return a


def load_config(path) -> dict:
    with open(path) as fh:
        return validate_config(json.load(fh))


def resolve_config(preset: str = None, path=None, overrides=(),
                   seed: int = None) -> dict:
    """Preset base, optional file overlay, then key=value overrides."""
    cfg = {}
    if preset is not None:
        if preset not in PRESETS:
            raise KeyError(f"unknown preset: {preset!r} "
                           f"(have {sorted(PRESETS)})")
        cfg = copy.deepcopy(PRESETS[preset])
    if path is not None:
        with open(path) as fh:
            file_cfg = json.load(fh)
        cfg = _nested_update(cfg, file_cfg)
    cfg = validate_config(cfg)
    cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def _nested_update(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in overlay.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _nested_update(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply dotted key=value pairs; values parse as JSON, else strings."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must be key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise KeyError(f"unknown config key: {key}")
            node = node[p]
        if parts[-1] not in node:
            raise KeyError(f"unknown config key: {key}")
        node[parts[-1]] = val
    return validate_config(cfg)


def config_hash(cfg: dict) -> str:
    """Stable under key reordering: hash of the sorted-key serialization."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_measure(cfg: dict) -> MeasureConfig:
    m = cfg["measure"]
    weights = WeightLaw.from_dict(m["weights"])
    return MeasureConfig(m["family"], m["intensity"], weights,
                         displacement=m["displacement"])


def build_potential(cfg: dict) -> ImpurityPotential:
    p = cfg["potential"]
    profile = AnisotropyProfile(tuple(int(d) for d in p["dims"]),
                                tuple(_parse_alpha(a) for a in p["alpha"]))
    return ImpurityPotential(profile, p["family"], p["f0"], p["radius"])


def build_u_per(cfg: dict):
    op = cfg["operator"]
    if op["u_per"] == "zero":
        return None
    if op["u_per"] == "cosine":
        return cosine_potential(op["amplitude"])
    return float(op["u_per"])
