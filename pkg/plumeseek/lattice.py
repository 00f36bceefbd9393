"""Square lattice inside a circular search area, and obstructed environments.

The *complete grid* holds every unit link between lattice nodes of the
search area.  An *environment* is the complete grid with a fraction ``p`` of
links removed; missing links model blocked passages.

Node membership follows one of two rules::

    open rim (default)   x**2 + y**2 <  (R0 + 1)**2
    closed disk          x**2 + y**2 <=  R0**2

The open-rim rule places the absorbing rim just beyond the circle of radius
``R0``; for ``R0 = 9`` it yields the 572 links of the reference scenario and
contains the entry node ``(9, -4)``.

Link ids are canonical: endpoints sorted by ``(x, y)``, links sorted by
endpoint pair, ids assigned in that order.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

__all__ = [
    "NodeCoord",
    "Link",
    "CompleteGrid",
    "EnvironmentMap",
    "DisconnectedEnvironmentError",
    "DIRECTIONS",
    "PERCOLATION_THRESHOLD",
    "build_complete_grid",
    "generate_environment",
    "observable_links",
    "shortest_path_length",
    "link_status_counts",
    "save_environment",
    "load_environment",
]

logger = logging.getLogger(__name__)

NodeCoord = Tuple[int, int]

# East, West, up, down; the order of primary and secondary observation slots
DIRECTIONS: Tuple[Tuple[str, NodeCoord], ...] = (
    ("E", (1, 0)),
    ("W", (-1, 0)),
    ("N", (0, 1)),
    ("S", (0, -1)),
)

PERCOLATION_THRESHOLD = 0.5
SCHEMA_VERSION = 1


class DisconnectedEnvironmentError(RuntimeError):
    """Raised when a connected environment cannot be produced."""


@dataclass(frozen=True, order=True)
class Link:
    """A unit link between two lattice nodes, endpoints in canonical order."""

    a: NodeCoord
    b: NodeCoord
    id: int = field(compare=False)

    def as_quadruple(self) -> Tuple[int, int, int, int]:
        return (*self.a, *self.b)

    def touches(self, node: NodeCoord) -> bool:
        return node == self.a or node == self.b


def _canonical(p: NodeCoord, q: NodeCoord) -> Tuple[NodeCoord, NodeCoord]:
    return (p, q) if p <= q else (q, p)


class CompleteGrid:
    """All lattice nodes and unit links of the circular search area.

    Parameters
    ----------
    radius: int
        Search-area radius ``R0`` in lattice units.
    closed_disk: bool, default ``False``
        Use the closed-disk node rule instead of the open rim.
    """

    def __init__(self, radius: int, *, closed_disk: bool = False):
        if int(radius) != radius or radius < 1:
            raise ValueError(f"radius must be an integer >= 1, got {radius!r}")
        self.radius = int(radius)
        self.closed_disk = closed_disk

        r = self.radius
        nodes = [
            (x, y)
            for x in range(-r - 1, r + 2)
            for y in range(-r - 1, r + 2)
            if self._inside(x, y)
        ]
        nodes.sort()
        self.nodes: Tuple[NodeCoord, ...] = tuple(nodes)
        self.node_index: Dict[NodeCoord, int] = {n: i for i, n in enumerate(self.nodes)}

        pairs = set()
        for node in self.nodes:
            for _, (dx, dy) in DIRECTIONS:
                other = (node[0] + dx, node[1] + dy)
                if other in self.node_index:
                    pairs.add(_canonical(node, other))
        self.links: Tuple[Link, ...] = tuple(
            Link(a, b, i) for i, (a, b) in enumerate(sorted(pairs))
        )
        self._link_ids: Dict[Tuple[NodeCoord, NodeCoord], int] = {
            (link.a, link.b): link.id for link in self.links
        }
        self.boundary = np.array(
            [len(self.neighbours(n)) < 4 for n in self.nodes], dtype=bool
        )
        self.boundary.flags.writeable = False

    def _inside(self, x: int, y: int) -> bool:
        d2 = x * x + y * y
        if self.closed_disk:
            return d2 <= self.radius**2
        return d2 < (self.radius + 1) ** 2

    def __repr__(self) -> str:  # pragma: no cover
        rule = "closed" if self.closed_disk else "open-rim"
        return f"<CompleteGrid R0={self.radius} {rule} nodes={len(self.nodes)} links={self.L}>"

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    @property
    def L(self) -> int:
        return len(self.links)

    def contains(self, node: Sequence[int]) -> bool:
        return (int(node[0]), int(node[1])) in self.node_index

    def neighbours(self, node: NodeCoord) -> List[NodeCoord]:
        out = []
        for _, (dx, dy) in DIRECTIONS:
            other = (node[0] + dx, node[1] + dy)
            if other in self.node_index:
                out.append(other)
        return out

    def is_boundary(self, node: NodeCoord) -> bool:
        return bool(self.boundary[self.node_index[node]])

    def link_id(self, p: NodeCoord, q: NodeCoord) -> Optional[int]:
        """Return the id of the link joining *p* and *q*, or ``None``."""
        return self._link_ids.get(_canonical(tuple(p), tuple(q)))

    def link(self, p: NodeCoord, q: NodeCoord) -> Optional[Link]:
        lid = self.link_id(p, q)
        return None if lid is None else self.links[lid]

    def graph(self) -> nx.Graph:
        """The complete grid as an undirected graph keyed by node coordinates."""
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((link.a, link.b, {"id": link.id}) for link in self.links)
        return g

    # ------------------------------------------------------------------
    # Vectorised lookup tables used by the filter
    # ------------------------------------------------------------------

    @cached_property
    def coords(self) -> np.ndarray:
        """``(n_nodes, 2)`` integer coordinates in node-index order."""
        arr = np.array(self.nodes, dtype=np.int64)
        arr.flags.writeable = False
        return arr

    @cached_property
    def observation_table(self) -> np.ndarray:
        """``(n_nodes, 8)`` link ids observable from each node, ``-1`` where absent.

        Columns 0-3 are primary links (E, W, N, S), columns 4-7 the
        secondary links in the same directions.
        """
        table = np.full((len(self.nodes), 8), -1, dtype=np.int64)
        for i, node in enumerate(self.nodes):
            primary, secondary = observable_links(self, node)
            for j, link in enumerate(primary + secondary):
                if link is not None:
                    table[i, j] = link.id
        table.flags.writeable = False
        return table

    def move_table(self, displacements: Sequence[NodeCoord]) -> np.ndarray:
        """``(n_nodes, len(displacements))`` destination node indices.

        Displacements that leave the complete grid map to the node itself.
        """
        table = np.empty((len(self.nodes), len(displacements)), dtype=np.int64)
        for i, (x, y) in enumerate(self.nodes):
            for j, (dx, dy) in enumerate(displacements):
                table[i, j] = self.node_index.get((x + dx, y + dy), i)
        return table


def build_complete_grid(R0: int, *, closed_disk: bool = False) -> CompleteGrid:
    """Build the complete grid for a search area of radius *R0*."""
    return CompleteGrid(R0, closed_disk=closed_disk)


# ---------------------------------------------------------------------------
# Environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnvironmentMap:
    """Link statuses ``m`` over the complete grid (1 = passable)."""

    grid: CompleteGrid
    status: np.ndarray
    removal_fraction: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        status = np.asarray(self.status, dtype=np.uint8).copy()
        if status.shape != (self.grid.L,):
            raise ValueError(f"status must have shape ({self.grid.L},), got {status.shape}")
        if np.any(status > 1):
            raise ValueError("status entries must be 0 or 1")
        status.flags.writeable = False
        object.__setattr__(self, "status", status)

    @property
    def removed_link_ids(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.status == 0)]

    def present(self, link_id: int) -> bool:
        return bool(self.status[link_id])

    def passable(self, p: NodeCoord, q: NodeCoord) -> bool:
        lid = self.grid.link_id(p, q)
        return lid is not None and self.present(lid)

    def with_status(self, status: np.ndarray) -> "EnvironmentMap":
        return EnvironmentMap(self.grid, status, self.removal_fraction, self.seed)

    def graph(self) -> nx.Graph:
        """Graph of the nodes and their status-1 links."""
        g = nx.Graph()
        g.add_nodes_from(self.grid.nodes)
        g.add_edges_from(
            (link.a, link.b) for link in self.grid.links if self.status[link.id]
        )
        return g

    def is_connected(self) -> bool:
        return nx.is_connected(self.graph())


def _removal_count(p: float, L: int) -> int:
    # nearest integer, halves away from zero
    return int(math.floor(p * L + 0.5))


def generate_environment(
    grid: CompleteGrid,
    p: float,
    seed: Optional[int] = None,
    *,
    strategy: str = "bridge-avoiding",
    max_attempts: int = 10_000,
) -> EnvironmentMap:
    """Remove ``round(p * L)`` links at random, keeping every node reachable.

    ``strategy="rejection"`` draws uniform removal sets and keeps the first
    connected one, giving up after *max_attempts*.  ``"bridge-avoiding"``
    walks the links in random order and removes a link only when the
    lattice stays connected without it.
    """
    if not 0.0 <= p < PERCOLATION_THRESHOLD:
        raise ValueError(f"removal fraction must lie in [0, 0.5), got {p!r}")
    rng = np.random.default_rng(seed)
    n_remove = _removal_count(p, grid.L)

    if strategy == "rejection":
        for attempt in range(1, max_attempts + 1):
            status = np.ones(grid.L, dtype=np.uint8)
            status[rng.choice(grid.L, size=n_remove, replace=False)] = 0
            env = EnvironmentMap(grid, status, p, seed)
            if env.is_connected():
                logger.info(
                    "Environment: removed %d/%d links after %d attempt(s)", n_remove, grid.L, attempt
                )
                return env
        raise DisconnectedEnvironmentError(
            f"no connected environment in {max_attempts} attempts "
            f"(p={p}, R0={grid.radius}); p is too close to the threshold"
        )

    if strategy != "bridge-avoiding":
        raise ValueError(f"unknown strategy {strategy!r}")

    g = grid.graph()
    removed: List[int] = []
    for lid in rng.permutation(grid.L):
        if len(removed) == n_remove:
            break
        link = grid.links[int(lid)]
        g.remove_edge(link.a, link.b)
        if nx.has_path(g, link.a, link.b):
            removed.append(int(lid))
        else:
            g.add_edge(link.a, link.b)
    if len(removed) < n_remove:
        raise DisconnectedEnvironmentError(
            f"only {len(removed)} of {n_remove} links can be removed without "
            f"disconnecting the lattice (p={p}, R0={grid.radius})"
        )
    status = np.ones(grid.L, dtype=np.uint8)
    status[removed] = 0
    logger.info("Environment: removed %d/%d links (seed=%s)", n_remove, grid.L, seed)
    return EnvironmentMap(grid, status, p, seed)


# ---------------------------------------------------------------------------
# Queries over an environment
# ---------------------------------------------------------------------------


def observable_links(
    grid: CompleteGrid, node: NodeCoord
) -> Tuple[List[Optional[Link]], List[Optional[Link]]]:
    """Primary and secondary links visible from *node*, in E, W, N, S order.

    ``None`` marks a slot the complete grid has no link for.
    """
    node = (int(node[0]), int(node[1]))
    if node not in grid.node_index:
        raise ValueError(f"node {node} is not on the grid")
    primary: List[Optional[Link]] = []
    secondary: List[Optional[Link]] = []
    for _, (dx, dy) in DIRECTIONS:
        first = (node[0] + dx, node[1] + dy)
        second = (node[0] + 2 * dx, node[1] + 2 * dy)
        primary.append(grid.link(node, first))
        secondary.append(grid.link(first, second))
    return primary, secondary


def shortest_path_length(env: EnvironmentMap, a: NodeCoord, b: NodeCoord) -> Optional[int]:
    """Steps along passable links from *a* to *b*; ``None`` when unreachable."""
    a, b = tuple(a), tuple(b)
    for node in (a, b):
        if node not in env.grid.node_index:
            raise ValueError(f"node {node} is not on the grid")
    try:
        return int(nx.shortest_path_length(env.graph(), a, b))
    except nx.NetworkXNoPath:
        return None


def link_status_counts(env: EnvironmentMap) -> Dict[str, int]:
    present = int(env.status.sum())
    return {"present": present, "removed": env.grid.L - present}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_environment(env: EnvironmentMap, path: Path | str) -> Path:
    """Write *env* as JSON; the grid itself is regenerated from its radius."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "radius": env.grid.radius,
        "closed_disk": env.grid.closed_disk,
        "removal_fraction": env.removal_fraction,
        "seed": env.seed,
        "removed_link_ids": env.removed_link_ids,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def load_environment(path: Path | str, grid: Optional[CompleteGrid] = None) -> EnvironmentMap:
    data = json.loads(Path(path).read_text())
    try:
        radius = data["radius"]
        closed_disk = data.get("closed_disk", False)
        removed = np.asarray(data["removed_link_ids"], dtype=np.int64)
        fraction = float(data["removal_fraction"])
    except KeyError as exc:
        raise ValueError(f"{path}: malformed environment file, missing {exc}") from exc
    except (TypeError, AttributeError) as exc:
        raise ValueError(f"{path}: malformed environment file, {exc}") from exc
    if grid is None or grid.radius != radius or grid.closed_disk != closed_disk:
        grid = build_complete_grid(radius, closed_disk=closed_disk)
    if removed.size and (removed.min() < 0 or removed.max() >= grid.L):
        raise ValueError(f"{path}: removed link ids must lie in [0, {grid.L})")
    status = np.ones(grid.L, dtype=np.uint8)
    status[removed] = 0
    return EnvironmentMap(grid, status, fraction, data.get("seed"))
