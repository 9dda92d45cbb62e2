"""Sectioned key/value run configuration (INI syntax) with strict key checking."""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ppo import PpoConfig, RlConfig


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "runs"
    wall_time: bool = False


@dataclass(frozen=True)
class ImitationSection:
    num_per_class: int = 10
    T: int = 300
    noise: float = 0.05
    classes: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    raster: bool = False
    n_basis: int = 15
    epochs: int = 150
    batch_size: int = 16
    lr: float = 3e-3
    w_scale: float = 1000.0
    hidden: tuple[int, ...] = (100, 100)
    zero_forcing: bool = False


@dataclass(frozen=True)
class GradCheckSection:
    instances: int = 50
    max_dof: int = 3
    max_basis: int = 10
    max_steps: int = 50
    h: float = 1e-5
    tolerance: float = 1e-4


@dataclass(frozen=True)
class AblateSection:
    env: str = "push"
    seeds: tuple[int, ...] = (0, 1, 2)
    total_steps: int = 400_000
    init_log_std: float = -1.6
    grids: tuple[str, ...] = ("n_basis", "rollout", "integration", "basis", "learn_alpha", "only_g")


@dataclass(frozen=True)
class PlotSection:
    inputs: tuple[str, ...] = ()
    width: int = 480
    height: int = 360


SECTIONS: dict[str, type] = {
    "run": RunSection,
    "rl": RlConfig,
    "ppo": PpoConfig,
    "imitation": ImitationSection,
    "grad_check": GradCheckSection,
    "ablate": AblateSection,
    "plot": PlotSection,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    rl: RlConfig = field(default_factory=RlConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    imitation: ImitationSection = field(default_factory=ImitationSection)
    grad_check: GradCheckSection = field(default_factory=GradCheckSection)
    ablate: AblateSection = field(default_factory=AblateSection)
    plot: PlotSection = field(default_factory=PlotSection)

    def with_values(self, section: str, **values) -> RunConfig:
        current = getattr(self, section)
        try:
            return dataclasses.replace(self, **{section: dataclasses.replace(current, **values)})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc


def _parse_value(raw: str, default, name: str):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(f"not a boolean: {text!r}")
            return configparser.ConfigParser.BOOLEAN_STATES[lowered]
        if isinstance(default, tuple):
            if not text:
                return ()
            items = [t.strip() for t in text.split(",")]
            proto = default[0] if default else ""
            return tuple(type(proto)(t) if not isinstance(proto, str) else t for t in items)
        if default is None:
            return None if text.lower() == "none" else float(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _collect(config: RunConfig, items) -> RunConfig:
    """Apply ``(section, key, raw)`` triples; each section is rebuilt once so
    cross-field checks see the final values, not intermediate ones."""
    pending: dict[str, dict] = {}
    for section, key, raw in items:
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; known: {sorted(SECTIONS)}")
        defaults = {f.name: f.default for f in dataclasses.fields(SECTIONS[section])}
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        pending.setdefault(section, {})[key] = _parse_value(raw, defaults[key], f"{section}.{key}")
    for section, values in pending.items():
        config = config.with_values(section, **values)
    return config


def _parse_overrides(overrides) -> list[tuple[str, str, str]]:
    items = []
    for item in overrides or []:
        lhs, sep, value = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        items.append((section, key, value))
    return items


def loads(text: str, overrides=None) -> RunConfig:
    """Parse INI text, then apply ``section.key=value`` overrides on top."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    items = [(section, key, raw) for section in parser.sections() for key, raw in parser.items(section)]
    return _collect(RunConfig(), items + _parse_overrides(overrides))


def load(path=None, overrides=None) -> RunConfig:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text, overrides)


def dumps(config: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section in SECTIONS:
        values = getattr(config, section)
        parser[section] = {f.name: _format_value(getattr(values, f.name)) for f in dataclasses.fields(values)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
