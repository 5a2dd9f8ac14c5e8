"""Run configuration: one INI file covering model, association, lifecycle,
training and simulation sections, mirrored onto the per-module dataclasses.

Unknown keys are rejected so typos fail loudly; every value is validated by
the owning dataclass. CLI flags override file values field by field.
"""

from __future__ import annotations

import configparser
import typing
from dataclasses import asdict, dataclass, field, fields

from .association import AssociationConfig
from .motion import ModelConfig
from .simulator import Scenario
from .track_manager import TrackManagerConfig
from .trainer import TrainConfig

__all__ = ["RunConfig", "load_config", "save_config", "apply_overrides"]

_SECTIONS = {
    "model": ModelConfig,
    "association": AssociationConfig,
    "tracker": TrackManagerConfig,
    "train": TrainConfig,
    "simulator": Scenario,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    association: AssociationConfig = field(default_factory=AssociationConfig)
    tracker: TrackManagerConfig = field(default_factory=TrackManagerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    simulator: Scenario = field(default_factory=Scenario)

    def validate(self) -> "RunConfig":
        for name in _SECTIONS:
            getattr(self, name).validate()
        return self


def _parse_value(raw: str, annotation, fieldname: str):
    raw = raw.strip()
    if annotation is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{fieldname}: cannot parse {raw!r} as bool")
    if annotation is int:
        return int(raw)
    if annotation is float:
        return float(raw)
    if annotation is str:
        return raw
    # tuple-valued fields: comma separated
    parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
    args = typing.get_args(annotation) or (float, float)
    out = []
    for p, a in zip(parts, args):
        out.append(int(p) if a is int else float(p))
    return tuple(out)


def load_config(path) -> RunConfig:
    """Read an INI file into a RunConfig; missing sections/keys keep defaults."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ValueError(f"cannot read config file: {path}")
    rc = RunConfig()
    for section, cls in _SECTIONS.items():
        if not cp.has_section(section):
            continue
        target = getattr(rc, section)
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        for key, raw in cp.items(section):
            if key not in known:
                raise ValueError(f"[{section}] has unknown key {key!r}")
            setattr(target, key, _parse_value(raw, hints[key], f"[{section}] {key}"))
    return rc.validate()


def save_config(path, rc: RunConfig) -> None:
    cp = configparser.ConfigParser()
    for section in _SECTIONS:
        cp.add_section(section)
        for key, value in asdict(getattr(rc, section)).items():
            if isinstance(value, (tuple, list)):
                cp.set(section, key, ",".join(str(v) for v in value))
            else:
                cp.set(section, key, str(value))
    with open(path, "w") as fh:
        cp.write(fh)


def apply_overrides(rc: RunConfig, section: str, overrides: dict) -> RunConfig:
    """Set non-None override values onto one section, then re-validate."""
    target = getattr(rc, section)
    known = {f.name for f in fields(type(target))}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ValueError(f"unknown {section} option: {key}")
        setattr(target, key, value)
    target.validate()
    return rc
