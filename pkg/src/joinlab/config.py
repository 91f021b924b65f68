"""Experiment configuration: JSON in, validated representation plus knobs out.

Schema (all keys except ``factors`` optional)::

    {
      "name": "bending_pair",
      "rank": 2,
      "factors": [
        {"kind": "Real2", "generators": [[[a, b], [c, d]], ...]},
        {"kind": "Complex3", "generators": [[[[re, im], [re, im]], [[re, im], [re, im]]], ...]}
      ],
      "twist": ["b", "a"],            # second factor = first factor after this substitution
      "max_word_length": 12,
      "t_cap": null,                  # null means no displacement cap
      "class_length": 8,              # conjugacy classes for the stretch constants
      "eps_schedule": [0.3, 0.2, 0.12, 0.08],
      "grid_size": 33,
      "strip_radii": [3, 5, 8],
      "eta_schedule": [0.1, 0.05, 0.02],
      "s_override": null,
      "threads": 1,
      "seed": 0,
      "out": "out"
    }
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import repcore
from .repcore import Factor, FactorKind, RepresentationSpec

DEFAULTS = {
    "name": "",
    "twist": None,
    "max_word_length": 12,
    "t_cap": None,
    "class_length": 8,
    "eps_schedule": [0.30, 0.20, 0.12, 0.08],
    "grid_size": 33,
    "strip_radii": [3.0, 5.0, 8.0],
    "eta_schedule": [0.10, 0.05, 0.02],
    "s_override": None,
    "threads": 1,
    "seed": 0,
    "out": "out",
}

BUNDLED = ("conjugate_pair", "bending_pair", "power_pair", "twisted_pair", "h2xh3_pair")


class ConfigError(ValueError):
    """Base class for configuration diagnostics."""


class MalformedConfigError(ConfigError):
    pass


class SingularGeneratorError(ConfigError):
    pass


class FactorCountError(ConfigError):
    pass


class NonLoxodromicGeneratorError(ConfigError):
    pass


class KnobRangeError(ConfigError):
    pass


@dataclass
class ExperimentConfig:
    rep: RepresentationSpec
    raw: dict
    name: str = ""
    twist: tuple | None = None
    max_word_length: int = 12
    t_cap: float = math.inf
    class_length: int = 8
    eps_schedule: tuple = (0.30, 0.20, 0.12, 0.08)
    grid_size: int = 33
    strip_radii: tuple = (3.0, 5.0, 8.0)
    eta_schedule: tuple = (0.10, 0.05, 0.02)
    s_override: float | None = None
    threads: int = 1
    seed: int = 0
    out: str = "out"
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        """Effective configuration with defaults filled in (threads and out are run options)."""
        out = {"name": self.name, **self.rep.to_json()}
        out.update(twist=None if self.twist is None else list(self.twist),
                   max_word_length=self.max_word_length,
                   t_cap=None if math.isinf(self.t_cap) else self.t_cap,
                   class_length=self.class_length, eps_schedule=list(self.eps_schedule),
                   grid_size=self.grid_size, strip_radii=list(self.strip_radii),
                   eta_schedule=list(self.eta_schedule), s_override=self.s_override,
                   seed=self.seed)
        return out

    def with_overrides(self, **kw) -> "ExperimentConfig":
        new = copy.copy(self)
        for k, v in kw.items():
            if v is not None:
                setattr(new, k, v)
        return new


def _matrix(entry, kind: FactorKind, where: str) -> np.ndarray:
    try:
        arr = np.asarray(entry, dtype=np.float64)
    except (TypeError, ValueError) as err:
        raise MalformedConfigError(f"{where}: matrix entries must be numbers") from err
    if kind is FactorKind.REAL2:
        if arr.shape != (2, 2):
            raise MalformedConfigError(f"{where}: expected a 2x2 real matrix, got shape {arr.shape}")
        m = arr
    else:
        if arr.shape == (2, 2):
            m = arr.astype(np.complex128)
        elif arr.shape == (2, 2, 2):
            m = arr[..., 0] + 1j * arr[..., 1]
        else:
            raise MalformedConfigError(
                f"{where}: expected 2x2 entries given as [re, im] pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(np.abs(m))):
        raise MalformedConfigError(f"{where}: non-finite matrix entry")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-12:
        raise SingularGeneratorError(f"{where}: generator is not invertible (det = {det})")
    if kind is FactorKind.REAL2 and det < 0:
        raise SingularGeneratorError(f"{where}: negative determinant, not an element of PSL(2,R)")
    return m


def _substitute(rep_factor: Factor, twist, rank: int) -> Factor:
    gens = []
    for text in twist:
        word = repcore.word_from_str(text)
        if not word or any(x >= 2 * rank for x in word):
            raise MalformedConfigError(f"twist image {text!r} is not a word in the generators")
        m = np.eye(2, dtype=rep_factor.kind.dtype)
        for x in word:
            m = m @ rep_factor.letter_matrix(x)
        gens.append(m)
    return Factor(rep_factor.kind, tuple(gens))


def _number(raw, key, lo, hi, kind=float):
    v = raw[key]
    try:
        v = kind(v)
    except (TypeError, ValueError) as err:
        raise KnobRangeError(f"{key}: expected a number, got {raw[key]!r}") from err
    if not lo <= v <= hi:
        raise KnobRangeError(f"{key} = {v} outside [{lo}, {hi}]")
    return v


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise MalformedConfigError("top level must be a JSON object")
    if "factors" not in raw or not isinstance(raw["factors"], list):
        raise MalformedConfigError("missing 'factors' list")
    merged = {**DEFAULTS, **raw}
    facs = raw["factors"]
    twist = merged["twist"]
    k = len(facs) + (1 if twist is not None else 0)
    if k > 3:
        raise FactorCountError(
            f"k = {k} factors: the strip theorem behind the directional estimators "
            "holds for products of at most three rank-one factors; use k <= 3")
    if k < 1:
        raise MalformedConfigError("at least one factor is required")
    factors = []
    for i, f in enumerate(facs):
        try:
            kind = FactorKind(f["kind"])
        except (KeyError, TypeError, ValueError) as err:
            raise MalformedConfigError(f"factor {i}: kind must be 'Real2' or 'Complex3'") from err
        gens = f.get("generators")
        if not isinstance(gens, list) or not gens:
            raise MalformedConfigError(f"factor {i}: missing generators")
        mats = [_matrix(g, kind, f"factor {i} generator {j}") for j, g in enumerate(gens)]
        for j, m in enumerate(mats):
            m = repcore.normalize(m)
            if not repcore.is_loxodromic(m):
                raise NonLoxodromicGeneratorError(
                    f"factor {i} generator {j} is not loxodromic (|trace| = {abs(m[0, 0] + m[1, 1]):.6g})")
        factors.append(Factor(kind, tuple(mats)))
    rank = int(merged.get("rank", len(factors[0].generators)))
    if twist is not None:
        if not isinstance(twist, list) or len(twist) != rank:
            raise MalformedConfigError(f"twist must list {rank} generator images")
        factors.append(_substitute(factors[0], twist, rank))
    try:
        rep = RepresentationSpec(rank, tuple(factors), name=str(merged["name"]))
    except repcore.NonLoxodromicError as err:
        raise NonLoxodromicGeneratorError(str(err)) from err
    except repcore.RepresentationError as err:
        raise MalformedConfigError(str(err)) from err

    def schedule(key, lo, hi):
        vals = merged[key]
        if not isinstance(vals, list) or not vals:
            raise KnobRangeError(f"{key} must be a non-empty list")
        return tuple(_number({key: v}, key, lo, hi) for v in vals)

    t_cap = merged["t_cap"]
    s_over = merged["s_override"]
    return ExperimentConfig(
        rep=rep, raw=raw, name=str(merged["name"]),
        twist=None if twist is None else tuple(twist),
        max_word_length=_number(merged, "max_word_length", 2, 20, int),
        t_cap=math.inf if t_cap is None else _number(merged, "t_cap", 1e-6, 1e6),
        class_length=_number(merged, "class_length", 1, 12, int),
        eps_schedule=schedule("eps_schedule", 1e-3, 1.0),
        grid_size=_number(merged, "grid_size", 5, 257, int),
        strip_radii=schedule("strip_radii", 1e-3, 100.0),
        eta_schedule=schedule("eta_schedule", 1e-4, 1.0),
        s_override=None if s_over is None else _number(merged, "s_override", 1e-6, 100.0),
        threads=_number(merged, "threads", 1, 256, int),
        seed=_number(merged, "seed", 0, 2**63 - 1, int),
        out=str(merged["out"]),
        notes=raw.get("notes", {}),
    )


def bundled_path(name: str) -> Path:
    return Path(__file__).with_name("configs") / f"{name}.json"


def parse_config(path) -> ExperimentConfig:
    """Load a config file; a bare bundled name such as ``bending_pair`` also works."""
    p = Path(path)
    if not p.exists():
        stem = p.name[:-5] if p.name.endswith(".json") else p.name
        if stem in BUNDLED and str(p) == p.name:
            p = bundled_path(stem)
        else:
            raise MalformedConfigError(f"config file {path} not found")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise MalformedConfigError(f"{p}: invalid JSON ({err.msg} at line {err.lineno})") from err
    return config_from_dict(raw)
