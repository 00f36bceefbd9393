"""Search configuration.

A :class:`SearchConfig` mirrors the JSON config file accepted by the CLI.
Defaults reproduce the reference scenario: radius 9, 35 % missing links,
source at (0, 7) releasing 12 particles per interval, entry node (9, -4),
4000 particles and 400 hypothetical counts per control.

Example:
>>> cfg = load_config("configs/desk_scale.json").replace(run_seed=7)
>>> cfg.N, cfg.M
(2000, 200)
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .lattice import CompleteGrid, NodeCoord, PERCOLATION_THRESHOLD
from .sensing import DetectionMatrix

__all__ = ["ConfigError", "SearchConfig", "load_config", "save_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


_STRATEGIES = ("bridge-avoiding", "rejection")
_METHODS = ("quadrature", "exact")


@dataclass(frozen=True)
class SearchConfig:
    # search area and environment
    R0: int = 9
    closed_disk: bool = False
    p: float = 0.35
    env_strategy: str = "bridge-avoiding"
    # ground-truth source and searcher entry
    source: NodeCoord = (0, 7)
    A0: float = 12.0
    start: NodeCoord = (9, -4)
    # filter and controller
    N: int = 4000
    M: int = 400
    p_e: float = 0.04
    primary: DetectionMatrix = field(default_factory=lambda: DetectionMatrix(1.0, 0.0))
    secondary: DetectionMatrix = field(default_factory=lambda: DetectionMatrix(0.8, 0.1))
    map_stay_prob: float = 0.999
    q0: float = 0.5
    eta0: float = 15.0
    theta0: float = 1.0
    ess_threshold: Optional[float] = None
    kernel_floor: float = 0.05
    sample_rate: bool = False
    bhatt_method: str = "quadrature"
    history_window: int = 10
    history_limit: int = 3
    # run control
    max_steps: int = 100
    env_seed: int = 0
    run_seed: int = 0
    evolve_map: bool = True
    pin_environment: bool = False
    track_filter: bool = False

    def __post_init__(self):
        object.__setattr__(self, "source", _node(self.source, "source"))
        object.__setattr__(self, "start", _node(self.start, "start"))
        checks = [
            (self.R0 >= 1, "R0 must be >= 1"),
            (0.0 <= self.p < PERCOLATION_THRESHOLD, "p must lie in [0, 0.5)"),
            (self.A0 > 0, "A0 must be positive"),
            (self.N >= 1, "N must be >= 1"),
            (self.M >= 1, "M must be >= 1"),
            (0.0 <= self.p_e <= 1.0, "p_e must lie in [0, 1]"),
            (0.5 < self.map_stay_prob <= 1.0, "map_stay_prob must lie in (0.5, 1]"),
            (0.0 <= self.q0 <= 1.0, "q0 must lie in [0, 1]"),
            (self.eta0 > 0 and self.theta0 > 0, "eta0 and theta0 must be positive"),
            (self.max_steps >= 1, "max_steps must be >= 1"),
            (self.kernel_floor >= 0, "kernel_floor must be >= 0"),
            (self.history_window >= 1 and self.history_limit >= 1, "history window/limit must be >= 1"),
            (self.env_strategy in _STRATEGIES, f"env_strategy must be one of {_STRATEGIES}"),
            (self.bhatt_method in _METHODS, f"bhatt_method must be one of {_METHODS}"),
            (
                self.ess_threshold is None or 0.0 < self.ess_threshold <= 1.0,
                "ess_threshold must be null or lie in (0, 1]",
            ),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    # ------------------------------------------------------------------
    # Conversions
    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SearchConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        data = dict(data)
        for key in ("primary", "secondary"):
            if key in data and not isinstance(data[key], DetectionMatrix):
                data[key] = _detection(data[key], key)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["source"] = list(self.source)
        out["start"] = list(self.start)
        return out

    def replace(self, **overrides: Any) -> "SearchConfig":
        """Copy with *overrides* applied (``None`` values are ignored)."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return SearchConfig.from_dict({**self.to_dict(), **overrides})

    def validate_geometry(self, grid: CompleteGrid) -> None:
        """Source and start must be grid nodes; the source may not sit on the rim."""
        for name, node in (("start", self.start), ("source", self.source)):
            if not grid.contains(node):
                raise ConfigError(f"{name} {node} is not a node of the R0={self.R0} grid")
        if grid.is_boundary(self.source):
            raise ConfigError(f"source {self.source} lies on the absorbing rim")


def _node(value: Any, name: str) -> Tuple[int, int]:
    try:
        x, y = value
        if int(x) != x or int(y) != y:
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a pair of integers, got {value!r}") from None
    return (int(x), int(y))


def _detection(value: Any, name: str) -> DetectionMatrix:
    try:
        if isinstance(value, dict):
            return DetectionMatrix(float(value["p_d"]), float(value["p_fa"]))
        p_d, p_fa = value
        return DetectionMatrix(float(p_d), float(p_fa))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path: Path | str) -> SearchConfig:
    """Read a JSON config file; missing keys take their defaults."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return SearchConfig.from_dict(data)


def save_config(config: SearchConfig, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return path
