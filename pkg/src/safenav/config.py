"""Scenario files: TOML with ``[world]``, ``[rewards]``, ``[td3]`` and ``[filter]`` sections."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .mptd3 import Td3Config
from .reward import RewardParams
from .world import WorldConfig

SECTIONS = ("world", "rewards", "td3", "filter")
FILTER_KEYS = {"k_clf", "k_cbf", "alpha_bcbf", "lam_slack", "margin"}


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    world: WorldConfig = field(default_factory=WorldConfig)
    rewards: RewardParams = field(default_factory=RewardParams)
    td3: Td3Config = field(default_factory=Td3Config)
    filter: dict[str, float] = field(default_factory=dict)
    source: str | None = None


def _build(cls, values: dict[str, Any], section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    values = dict(values)
    for k, v in values.items():
        # allow "pi/6"-style angles written as strings
        if isinstance(v, str) and "pi" in v:
            try:
                values[k] = float(eval(v, {"__builtins__": {}}, {"pi": math.pi}))
            except Exception as exc:
                raise ConfigError(f"cannot evaluate [{section}] {k} = {v!r}") from exc
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}]: {exc}") from exc


def parse_scenario(data: dict[str, Any], source: str | None = None) -> Scenario:
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    flt = dict(data.get("filter", {}))
    bad = sorted(set(flt) - FILTER_KEYS)
    if bad:
        raise ConfigError(f"unknown key(s) in [filter]: {', '.join(bad)}")
    return Scenario(
        world=_build(WorldConfig, data.get("world", {}), "world"),
        rewards=_build(RewardParams, data.get("rewards", {}), "rewards"),
        td3=_build(Td3Config, data.get("td3", {}), "td3"),
        filter=flt,
        source=source,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_scenario(data, str(path))


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``desk_train``, ``static_target``, ...)."""
    path = Path(__file__).parent / "configs" / f"{name}.toml"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path
