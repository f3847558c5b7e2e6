"""Alpha-set cache files and ``key = value`` configuration files.

Cache layout (little endian)::

    magic    4 bytes  b"QVAS"
    version  1 byte
    hash     32 bytes (sha256 of model + solver settings)
    |X|      uint32
    count    uint32
    count x (action int32, |X| float64)
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import asdict, fields

import numpy as np

from .gridworld import MotionNoise
from .model import AlphaSet
from .search import QvtsConfig
from .simulator import PLANNERS, Limits
from .solvers import SolverConfig

MAGIC = b"QVAS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sB32sII")


class CacheMismatch(ValueError):
    """The cache was written for another model, solver setting or format."""


class ConfigError(ValueError):
    pass


def cache_key(model, solver_config):
    h = hashlib.sha256()
    h.update(model.content_hash().encode())
    h.update(repr(sorted(asdict(solver_config).items())).encode())
    return h.digest()


def write_alpha_set(path, alphas, key):
    vectors = np.ascontiguousarray(alphas.vectors, dtype="<f8")
    count, n = vectors.shape
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, key, n, count))
        for i in range(count):
            fh.write(struct.pack("<i", int(alphas.actions[i])))
            fh.write(vectors[i].tobytes())
    os.replace(tmp, path)


def read_alpha_set(path, key=None):
    """Load a cache file; raise :class:`CacheMismatch` when ``key`` differs."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CacheMismatch(f"{path}: truncated header")
    magic, version, stored, n, count = _HEADER.unpack_from(data)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise CacheMismatch(f"{path}: unsupported format")
    if key is not None and stored != key:
        raise CacheMismatch(f"{path}: written for a different model")
    rec = 4 + 8 * n
    if len(data) != _HEADER.size + rec * count:
        raise CacheMismatch(f"{path}: size does not match header")
    actions = np.empty(count, dtype=np.int64)
    vectors = np.empty((count, n))
    off = _HEADER.size
    for i in range(count):
        actions[i] = struct.unpack_from("<i", data, off)[0]
        vectors[i] = np.frombuffer(data, dtype="<f8", count=n, offset=off + 4)
        off += rec
    return AlphaSet(vectors, actions)


def cache_paths(cache_dir, key):
    tag = key.hex()[:16]
    return {name: os.path.join(cache_dir, f"{name}_{tag}.alpha") for name in ("fib", "pbvi", "beliefs", "mdp")}


# ---------------------------------------------------------------------------
# key = value configuration
# ---------------------------------------------------------------------------

def parse_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def _coerce(value, kind):
    if kind is bool:
        return str(value).lower() in ("1", "true", "yes", "on")
    if value in ("none", "None", "") and kind is not str:
        return None
    if kind is int:
        return int(float(value))
    if kind is float:
        return float(value)
    return str(value)


_QVTS_TYPES = {"samples_per_qnode": int, "time_budget_ms": float, "gap_tolerance": float,
               "node_cap": int, "max_expansions": int, "action_rule": str,
               "expansion_mode": str, "clamp_to_leaf_bounds": bool, "seed": int}
_SOLVER_TYPES = {"epsilon": float, "max_iterations": int, "pbvi_iterations": int,
                 "pbvi_target_size": int, "solver_seed": int}
_TOP_TYPES = {"map": str, "planners": str, "episodes": int, "seed_base": int, "discount": float,
              "p_intended": float, "p_stay": float, "p_lateral": float, "sensor_accuracy": float,
              "output_dir": str, "cache_dir": str, "stop_patience": int, "max_steps": int,
              "workers": int, "astar_cache_path": bool}
KNOWN_KEYS = set(_QVTS_TYPES) | set(_SOLVER_TYPES) | set(_TOP_TYPES)


def settings_from_mapping(raw):
    """Split a flat mapping into typed settings objects.

    Returns a dict with ``qvts``, ``solver``, ``noise``, ``limits`` and the
    remaining plain top-level values.
    """
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        qv = {k: _coerce(v, _QVTS_TYPES[k]) for k, v in raw.items() if k in _QVTS_TYPES}
        sv = {k: _coerce(v, _SOLVER_TYPES[k]) for k, v in raw.items() if k in _SOLVER_TYPES}
        top = {k: _coerce(v, _TOP_TYPES[k]) for k, v in raw.items() if k in _TOP_TYPES}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if "solver_seed" in sv:
        sv["rng_seed"] = sv.pop("solver_seed")
    noise_keys = {f.name for f in fields(MotionNoise)}
    noise = MotionNoise(**{k: top.pop(k) for k in list(top) if k in noise_keys})
    limit_keys = {f.name for f in fields(Limits)}
    limits = Limits(**{k: top.pop(k) for k in list(top) if k in limit_keys})
    planners = top.pop("planners", ",".join(PLANNERS))
    planners = tuple(p.strip() for p in planners.split(",") if p.strip())
    bad = [p for p in planners if p not in PLANNERS]
    if bad:
        raise ConfigError(f"unknown planners: {', '.join(bad)}")
    try:
        qvts = QvtsConfig(**qv)
        solver = SolverConfig(**sv)
        noise.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    top.update(qvts=qvts, solver=solver, noise=noise, limits=limits, planners=planners)
    return top
