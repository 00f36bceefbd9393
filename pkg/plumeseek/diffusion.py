"""Exact steady-state tracer field on an environment.

A tracer particle performs a random walk over the passable links; rim
nodes absorb it.  In canonical form the transition matrix is::

    T = | I  0 |
        | R  Q |

with absorbing states first.  Row ``i`` of the fundamental matrix
``F = (I - Q)^-1`` holds the expected number of visits to every transient
node by a walker released at ``i``, so a source at ``i`` releasing ``A0``
particles per sampling interval produces the mean count ``A0 * F[i, j]`` at
node ``j``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .lattice import CompleteGrid, EnvironmentMap, NodeCoord

__all__ = [
    "ChainError",
    "CanonicalChain",
    "ConcentrationField",
    "build_canonical_chain",
    "mean_concentration_field",
    "random_walk_oracle",
    "write_field_csv",
]

logger = logging.getLogger(__name__)


class ChainError(RuntimeError):
    """The environment does not define a usable absorbing chain."""


@dataclass(frozen=True, eq=False)
class CanonicalChain:
    """Absorbing Markov chain of an environment, absorbing states first.

    ``state_of`` maps a node to its state index: ``0..r-1`` absorbing,
    ``r..r+t-1`` transient.  ``Q`` and ``R`` are indexed by transient state
    ``s - r``.
    """

    grid: CompleteGrid
    absorbing_nodes: Tuple[NodeCoord, ...]
    transient_nodes: Tuple[NodeCoord, ...]
    Q: np.ndarray
    R: np.ndarray
    state_of: Dict[NodeCoord, int]

    @property
    def absorbing_count(self) -> int:
        return len(self.absorbing_nodes)

    @property
    def transient_count(self) -> int:
        return len(self.transient_nodes)

    def transient_index(self, node: NodeCoord) -> int:
        state = self.state_of[tuple(node)]
        if state < self.absorbing_count:
            raise ChainError(f"node {tuple(node)} is absorbing")
        return state - self.absorbing_count


@dataclass(frozen=True, eq=False)
class ConcentrationField:
    """Mean tracer count per sampling interval at every grid node."""

    grid: CompleteGrid
    values: np.ndarray
    source: NodeCoord
    release_rate: float

    def at(self, node: NodeCoord) -> float:
        return float(self.values[self.grid.node_index[tuple(node)]])

    def scaled(self, release_rate: float) -> "ConcentrationField":
        return ConcentrationField(
            self.grid, self.values * (release_rate / self.release_rate), self.source, release_rate
        )


def build_canonical_chain(env: EnvironmentMap) -> CanonicalChain:
    """Canonical absorbing chain of *env*; rim nodes are the absorbing states."""
    grid = env.grid
    absorbing = tuple(n for n in grid.nodes if grid.is_boundary(n))
    transient = tuple(n for n in grid.nodes if not grid.is_boundary(n))
    r, t = len(absorbing), len(transient)
    state_of = {n: i for i, n in enumerate(absorbing)}
    state_of.update({n: r + i for i, n in enumerate(transient)})

    Q = np.zeros((t, t))
    R = np.zeros((t, r))
    for ti, node in enumerate(transient):
        reachable = [other for other in grid.neighbours(node) if env.passable(node, other)]
        if not reachable:
            raise ChainError(f"transient node {node} has no passable link")
        share = 1.0 / len(reachable)
        for other in reachable:
            s = state_of[other]
            if s < r:
                R[ti, s] = share
            else:
                Q[ti, s - r] = share
    return CanonicalChain(grid, absorbing, transient, Q, R, state_of)


def mean_concentration_field(
    chain: CanonicalChain, source: NodeCoord, A0: float
) -> ConcentrationField:
    """``theta_j = A0 * F[source, j]`` by one linear solve (no explicit inverse)."""
    if not A0 > 0:
        raise ValueError(f"release rate must be positive, got {A0!r}")
    si = chain.transient_index(source)
    t = chain.transient_count
    rhs = np.zeros(t)
    rhs[si] = 1.0
    # row si of (I - Q)^-1 solves (I - Q)^T x = e_si
    try:
        row = scipy.linalg.solve((np.eye(t) - chain.Q).T, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise ChainError("I - Q is singular; some transient nodes never reach the rim") from exc

    grid = chain.grid
    values = np.zeros(len(grid.nodes))
    idx = [grid.node_index[n] for n in chain.transient_nodes]
    values[idx] = A0 * row
    values.flags.writeable = False
    return ConcentrationField(grid, values, tuple(source), float(A0))


def _walk_tables(env: EnvironmentMap) -> Tuple[np.ndarray, np.ndarray]:
    grid = env.grid
    n = len(grid.nodes)
    nbr = np.full((n, 4), -1, dtype=np.int64)
    deg = np.zeros(n, dtype=np.int64)
    for link in grid.links:
        if not env.status[link.id]:
            continue
        i, j = grid.node_index[link.a], grid.node_index[link.b]
        nbr[i, deg[i]] = j
        deg[i] += 1
        nbr[j, deg[j]] = i
        deg[j] += 1
    return nbr, deg


def random_walk_oracle(
    env: EnvironmentMap,
    source: NodeCoord,
    walks: int,
    seed: Optional[int] = None,
    *,
    max_length: int = 100_000,
) -> np.ndarray:
    """Empirical mean visits per grid node by walkers released at *source*.

    All walkers advance together; a walker is counted at every transient
    node it occupies and stops on the rim.  Returns an array in node-index
    order with zeros on the rim.
    """
    if walks < 1:
        raise ValueError(f"walks must be >= 1, got {walks!r}")
    grid = env.grid
    if grid.is_boundary(tuple(source)):
        raise ChainError(f"source {tuple(source)} lies on the rim")
    rng = np.random.default_rng(seed)
    nbr, deg = _walk_tables(env)
    n = len(grid.nodes)

    visits = np.zeros(n)
    cur = np.full(walks, grid.node_index[tuple(source)], dtype=np.int64)
    for _ in range(max_length):
        if cur.size == 0:
            break
        visits += np.bincount(cur, minlength=n)
        cur = cur[deg[cur] > 0]
        pick = (rng.random(cur.size) * deg[cur]).astype(np.int64)
        cur = nbr[cur, pick]
        cur = cur[~grid.boundary[cur]]
    else:
        raise ChainError(f"{cur.size} walkers still transient after {max_length} steps")
    return visits / walks


def write_field_csv(field: ConcentrationField, path: Path | str) -> Path:
    """Write ``x,y,theta`` rows for every grid node."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "theta"])
        for (x, y), theta in zip(field.grid.nodes, field.values):
            writer.writerow([x, y, repr(float(theta))])
    logger.info("Field written to %s", path)
    return path
