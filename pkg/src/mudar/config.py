"""Runtime configuration: defaults, JSON config files, flag overrides.

A Config bundles every tunable parameter struct plus the output directory
and seed. JSON files and CLI flags override individual keys; everything
else keeps its default. Values are validated by the underlying parameter
types at merge time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .datatypes import OnsetParams, PeakPickParams, StftParams
from .errors import ConfigError, MudarError
from .motion_rhythm import FlowParams, HoofParams
from .neural_blocks import FocalParams, JointLossParams, TripletParams
from .pair_sampling import SamplingParams
from .retarget import RetrievalParams
from .synthetic import SyntheticSpec

ENV_CONFIG_VAR = "MUDAR_CONFIG"

_SECTIONS = (
    "stft", "onset", "pick", "flow", "hoof", "focal", "triplet", "joint",
    "sampling", "retrieval", "synthetic",
)


@dataclass(frozen=True)
class Config:
    """Effective settings for every pipeline stage."""

    stft: StftParams = field(default_factory=StftParams)
    onset: OnsetParams = field(default_factory=OnsetParams)
    pick: PeakPickParams = field(default_factory=PeakPickParams)
    flow: FlowParams = field(default_factory=FlowParams)
    hoof: HoofParams = field(default_factory=HoofParams)
    focal: FocalParams = field(default_factory=FocalParams)
    triplet: TripletParams = field(default_factory=TripletParams)
    joint: JointLossParams = field(default_factory=JointLossParams)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    out_dir: str = "."
    seed: int = 0

    def to_dict(self) -> dict:
        out = {}
        for section in _SECTIONS:
            struct = getattr(self, section)
            out[section] = {
                f.name: _plain(getattr(struct, f.name)) for f in fields(struct)
            }
        out["out_dir"] = self.out_dir
        out["seed"] = self.seed
        return out


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


def _merged_section(current, updates, section: str):
    if not isinstance(updates, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    known = {f.name for f in fields(type(current))}
    unknown = sorted(set(updates) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {section!r}")
    coerced = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in updates.items()
    }
    try:
        return replace(current, **coerced)
    except (MudarError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in section {section!r}: {exc}") from None


def merge_config(base: Config, data: dict) -> Config:
    """base with the (possibly partial, nested) plain-dict data applied."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = base
    for key, value in data.items():
        if key in _SECTIONS:
            cfg = replace(cfg, **{key: _merged_section(getattr(cfg, key), value, key)})
        elif key == "out_dir":
            if not isinstance(value, str):
                raise ConfigError(f"out_dir must be a string, got {value!r}")
            cfg = replace(cfg, out_dir=value)
        elif key == "seed":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"seed must be an integer, got {value!r}")
            cfg = replace(cfg, seed=value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg


def load_config(path=None) -> Config:
    """Defaults, merged with the JSON file at path (or $MUDAR_CONFIG if set)."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_VAR) or None
    cfg = Config()
    if path is None:
        return cfg
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return merge_config(cfg, data)


def config_json(cfg: Config) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
