"""Pipeline configuration: presets plus JSON/TOML loading."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .appearance import TrainConfig
from .editing import EditConfig
from .propagation import PropagationConfig
from .vectorizer import VectorizerConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["PipelineConfig", "TrackerConfig", "load_config", "preset", "PRESETS"]

# Desk scale: eps_d shrinks with the 64-96 px synthetic frames (see README).
DESK_EPS_D = 8.0
# The frozen decoder makes edits capacity-limited; 500 steps stops short of the plateau.
DESK_EDIT_STEPS = 2000


@dataclass
class TrackerConfig:
    name: str = "auto"  # auto | oracle | lk
    levels: int = 3
    window: int = 15
    iters: int = 10
    eig_ref: float = 0.01


@dataclass
class PipelineConfig:
    vectorizer: VectorizerConfig = field(default_factory=VectorizerConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    edit: EditConfig = field(default_factory=EditConfig)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data, base=None):
        """Overlay ``data`` (section -> {field: value}) on ``base`` (default: desk preset)."""
        base = base or preset("desk")
        sections = {f.name for f in fields(cls)}
        unknown = set(data) - sections - {"preset"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        if "preset" in data:
            base = preset(data["preset"])
        out = {}
        for name in sections:
            current = getattr(base, name)
            values = asdict(current)
            override = data.get(name, {})
            bad = set(override) - set(values)
            if bad:
                raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
            values.update(override)
            out[name] = type(current)(**values)
        return cls(**out)


def preset(name):
    """``"desk"`` (small synthetic scenes) or ``"paper"`` (full-scale values)."""
    if name == "desk":
        eps = DESK_EPS_D
        return PipelineConfig(
            vectorizer=VectorizerConfig(spacing=eps / 2.0),
            propagation=PropagationConfig(eps_d=eps),
            train=TrainConfig(),
            edit=EditConfig(steps=DESK_EDIT_STEPS),
        )
    if name == "paper":
        return PipelineConfig(
            vectorizer=VectorizerConfig(spacing=15.0),
            propagation=PropagationConfig(eps_d=30.0),
            train=TrainConfig.paper(),
        )
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("desk", "paper")


def load_config(path=None):
    """Read a ``.toml`` or ``.json`` config file; ``None`` gives the desk preset."""
    if path is None:
        return preset("desk")
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    else:
        data = json.loads(path.read_text())
    return PipelineConfig.from_dict(data)
