"""Ground-truth sensors and actuation of the searcher.

* Sensor 1 counts tracer particles: ``n ~ Poisson(theta_node)`` against the
  exact field.
* Sensor 2 reports the presence of the primary and secondary links around
  the searcher through a 2x2 detection matrix per tier.
* A commanded control is executed correctly with probability ``1 - p_e``;
  otherwise one of the other four controls is executed.  A move across a
  missing link (or off the grid) leaves the searcher in place.
* Links flip status independently between steps (slow map evolution).

Every function takes a ``numpy.random.Generator`` (or a seed) so callers can
keep one stream per noise source.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Union

import networkx as nx
import numpy as np

from .diffusion import ConcentrationField
from .lattice import DIRECTIONS, EnvironmentMap, NodeCoord, observable_links

__all__ = [
    "Control",
    "ControlVector",
    "CONTROLS",
    "DetectionMatrix",
    "LinkObservation",
    "Move",
    "as_generator",
    "sample_count",
    "observe_links",
    "realise_control",
    "execute_control",
    "evolve_map",
]

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.Generator, np.random.SeedSequence]

PRIMARY = "primary"
SECONDARY = "secondary"


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Pass generators through, build one from anything else."""
    return np.random.default_rng(seed)


class Control(enum.Enum):
    """Admissible motion controls on the unit lattice."""

    STAY = (0, 0)
    UP = (0, 1)
    RIGHT = (1, 0)
    DOWN = (0, -1)
    LEFT = (-1, 0)

    @property
    def displacement(self) -> NodeCoord:
        return self.value

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Control":
        return cls[label.upper()]

    def apply(self, pos: NodeCoord) -> NodeCoord:
        return (pos[0] + self.value[0], pos[1] + self.value[1])


ControlVector = Control
CONTROLS = tuple(Control)
DISPLACEMENTS = tuple(c.displacement for c in CONTROLS)


@dataclass(frozen=True)
class DetectionMatrix:
    """Link detector performance: ``P(z=1|m=1) = p_d``, ``P(z=1|m=0) = p_fa``."""

    p_d: float
    p_fa: float

    def __post_init__(self):
        if not 0.0 <= self.p_fa < self.p_d <= 1.0:
            raise ValueError(f"need 0 <= p_fa < p_d <= 1, got p_d={self.p_d}, p_fa={self.p_fa}")

    def likelihood(self, z: int, m: int) -> float:
        """``P(z | m)``."""
        p1 = self.p_d if m else self.p_fa
        return p1 if z else 1.0 - p1

    def matrix(self) -> np.ndarray:
        """Columns indexed by ``m``, rows by ``z``; columns sum to 1."""
        return np.array([[1.0 - self.p_fa, 1.0 - self.p_d], [self.p_fa, self.p_d]])


@dataclass(frozen=True)
class LinkObservation:
    link_id: int
    z: int
    tier: str
    direction: str

    @property
    def slot(self) -> int:
        """Column of :attr:`CompleteGrid.observation_table` this reading fills."""
        base = [name for name, _ in DIRECTIONS].index(self.direction)
        return base if self.tier == PRIMARY else base + 4

    def to_dict(self) -> dict:
        return {"link_id": self.link_id, "z": self.z, "tier": self.tier, "direction": self.direction}


class Move(NamedTuple):
    pos: NodeCoord
    realised: Control


# ---------------------------------------------------------------------------
# Sensors
# ---------------------------------------------------------------------------


def sample_count(field: ConcentrationField, node: NodeCoord, seed: SeedLike = None) -> int:
    """Tracer count at *node*: one Poisson draw with mean ``theta_node``."""
    rng = as_generator(seed)
    return int(rng.poisson(field.at(node)))


def observe_links(
    env: EnvironmentMap,
    node: NodeCoord,
    primary: DetectionMatrix,
    secondary: DetectionMatrix,
    seed: SeedLike = None,
) -> List[LinkObservation]:
    """Noisy presence readings for every link the grid has around *node*."""
    rng = as_generator(seed)
    prim, sec = observable_links(env.grid, node)
    out: List[LinkObservation] = []
    for tier, links, pi in ((PRIMARY, prim, primary), (SECONDARY, sec, secondary)):
        for (direction, _), link in zip(DIRECTIONS, links):
            if link is None:
                continue
            m = int(env.status[link.id])
            z = int(rng.random() < (pi.p_d if m else pi.p_fa))
            out.append(LinkObservation(link.id, z, tier, direction))
    return out


# ---------------------------------------------------------------------------
# Motion
# ---------------------------------------------------------------------------


def realise_control(commanded: Control, p_e: float, seed: SeedLike = None) -> Control:
    """The control actually executed: *commanded* w.p. ``1 - p_e``, else another."""
    if not 0.0 <= p_e <= 1.0:
        raise ValueError(f"p_e must lie in [0, 1], got {p_e!r}")
    rng = as_generator(seed)
    if rng.random() >= p_e:
        return commanded
    others = [c for c in CONTROLS if c is not commanded]
    return others[int(rng.integers(len(others)))]


def execute_control(
    pos: NodeCoord,
    commanded: Control,
    p_e: float,
    env: EnvironmentMap,
    seed: SeedLike = None,
) -> Move:
    """Apply *commanded* with control error; blocked moves stay in place."""
    pos = (int(pos[0]), int(pos[1]))
    if not env.grid.contains(pos):
        raise ValueError(f"position {pos} is not on the grid")
    realised = realise_control(commanded, p_e, seed)
    target = realised.apply(pos)
    if realised is Control.STAY or not env.passable(pos, target):
        return Move(pos, realised)
    return Move(target, realised)


# ---------------------------------------------------------------------------
# Map evolution
# ---------------------------------------------------------------------------


def evolve_map(
    env: EnvironmentMap,
    stay_prob: float = 0.999,
    seed: SeedLike = None,
    *,
    keep_connected: bool = False,
) -> EnvironmentMap:
    """Flip each link independently with probability ``1 - stay_prob``.

    With *keep_connected* a removal that would disconnect the lattice is
    dropped.  Returns *env* itself when nothing flips.
    """
    if not 0.5 < stay_prob <= 1.0:
        raise ValueError(f"stay_prob must lie in (0.5, 1], got {stay_prob!r}")
    rng = as_generator(seed)
    flips = rng.random(env.grid.L) >= stay_prob
    if not flips.any():
        return env

    status = env.status.copy()
    if not keep_connected:
        status[flips] ^= 1
        return env.with_status(status)

    opening = flips & (status == 0)
    closing = np.flatnonzero(flips & (status == 1))
    status[opening] = 1
    g: Optional[nx.Graph] = env.with_status(status).graph() if closing.size else None
    for lid in closing:
        link = env.grid.links[int(lid)]
        g.remove_edge(link.a, link.b)
        if nx.has_path(g, link.a, link.b):
            status[lid] = 0
        else:
            g.add_edge(link.a, link.b)
            logger.debug("Kept link %d open: closing it would cut the lattice", lid)
    if np.array_equal(status, env.status):
        return env
    return env.with_status(status)
