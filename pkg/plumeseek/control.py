"""Myopic information-driven motion control.

For every admissible control the searcher hypothesises noise-free future
counts (deterministic move, rounded Poisson mean of a randomly chosen
particle; a move across a link the particle believes missing stays put)
and scores the control by the expected Bhattacharyya distance between the
current and the updated posterior::

    D(u) = -2 ln( sum_i w_i J_i(n) / sqrt(sum_i w_i I_i(n)) )

``I_i`` is the marginal count likelihood of particle ``i`` and ``J_i`` the
integral of the square-root likelihood against its release-rate Gamma.
The control with the largest mean ``D`` wins; a searcher that keeps
returning to the same node moves at random instead.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln, logsumexp

from .analytic import DomainGeom, c_values
from .lattice import DIRECTIONS, CompleteGrid, NodeCoord
from .rbpf import ParticleSet, log_count_likelihood, log_gamma_pdf, log_poisson
from .sensing import CONTROLS, Control, SeedLike, as_generator

__all__ = [
    "QUAD_POINTS",
    "BLOCKED_BELOW",
    "VisitHistory",
    "ControlDecision",
    "round_half_away",
    "believed_blocked",
    "moved_searcher",
    "ideal_future_count",
    "log_bhatt_J",
    "bhatt_J",
    "bhatt_J_exact",
    "reward_from_terms",
    "reward_sample",
    "expected_reward",
    "admissible_controls",
    "select_control",
]

logger = logging.getLogger(__name__)

QUAD_POINTS = 256
QUAD_HALF_WIDTH = 10.0
# a link believed present with probability below this blocks the move
BLOCKED_BELOW = 0.5

_PRIMARY_SLOT = {d: j for j, (_, d) in enumerate(DIRECTIONS)}


class VisitHistory:
    """The last *window* positions of the searcher."""

    def __init__(self, window: int = 10, limit: int = 3):
        self.limit = limit
        self._nodes: Deque[NodeCoord] = deque(maxlen=window)

    def __len__(self) -> int:
        return len(self._nodes)

    def append(self, node: NodeCoord) -> None:
        self._nodes.append(tuple(node))

    def count(self, node: NodeCoord) -> int:
        return self._nodes.count(tuple(node))

    def oscillating(self, node: NodeCoord) -> bool:
        """*node* was visited more than ``limit`` times within the window."""
        return self.count(node) > self.limit


@dataclass
class ControlDecision:
    control: Control
    rewards: Dict[str, float] = field(default_factory=dict)
    heuristic_triggered: bool = False

    def to_dict(self) -> dict:
        return {
            "chosen": self.control.label,
            "rewards": self.rewards,
            "heuristic_triggered": self.heuristic_triggered,
        }


def round_half_away(x):
    """Nearest integer, halves rounded away from zero."""
    x = np.asarray(x, dtype=float)
    out = (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def believed_blocked(particles: ParticleSet, u: Control) -> np.ndarray:
    """Per particle: the primary link in direction *u* is believed missing.

    Links absent from the complete grid count as missing.
    """
    if u is Control.STAY:
        return np.zeros(particles.N, dtype=bool)
    lid = particles.grid.observation_table[particles.searcher, _PRIMARY_SLOT[u.displacement]]
    q = particles.q[np.arange(particles.N), np.maximum(lid, 0)]
    return (lid < 0) | (q < BLOCKED_BELOW)


def moved_searcher(particles: ParticleSet, u: Control, move_table: np.ndarray) -> np.ndarray:
    """Deterministic destination of every particle under *u*; believed-blocked moves stay."""
    dest = move_table[particles.searcher, CONTROLS.index(u)]
    return np.where(believed_blocked(particles, u), particles.searcher, dest)


def _moved_constants(
    particles: ParticleSet, u: Control, geom: DomainGeom, move_table: np.ndarray
) -> np.ndarray:
    dest = moved_searcher(particles, u, move_table)
    xy = particles.grid.coords[dest]
    src = particles.source
    return c_values(xy[:, 0], xy[:, 1], src[:, 0], src[:, 1], geom.R0)


def ideal_future_count(
    particles: ParticleSet,
    i: int,
    u: Control,
    geom: DomainGeom,
    move_table: np.ndarray,
) -> int:
    """Rounded mean count particle *i* predicts after a deterministic move *u*."""
    dest = moved_searcher(particles, u, move_table)[i]
    x, y = particles.grid.coords[dest]
    X, Y = particles.source[i]
    c = float(c_values(x, y, X, Y, geom.R0))
    return round_half_away(particles.eta[i] * particles.theta[i] * c)


# ---------------------------------------------------------------------------
# The Bhattacharyya integral
# ---------------------------------------------------------------------------


def log_bhatt_J(eta, theta, c, n, *, points: int = QUAD_POINTS):
    """``log J`` by trapezoid quadrature over ``A``.

    The grid spans ``mean +/- 10 sd`` of the Gamma (cut at 0) with *points*
    nodes; the integrand is formed in log space and rescaled by its maximum.
    """
    eta, theta, c, n = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (eta, theta, c, n)))
    mu = eta * theta
    sigma = np.sqrt(eta) * theta
    lo = np.maximum(0.0, mu - QUAD_HALF_WIDTH * sigma)
    hi = mu + QUAD_HALF_WIDTH * sigma
    a = lo[..., None] + (hi - lo)[..., None] * np.linspace(0.0, 1.0, points)

    log_f = 0.5 * log_poisson(n[..., None], c[..., None] * a) + log_gamma_pdf(
        a, eta[..., None], theta[..., None]
    )
    peak = np.max(log_f, axis=-1)
    with np.errstate(divide="ignore"):
        return peak + np.log(trapezoid(np.exp(log_f - peak[..., None]), a, axis=-1))


def bhatt_J(eta, theta, c, n, *, points: int = QUAD_POINTS):
    out = np.exp(log_bhatt_J(eta, theta, c, n, points=points))
    return float(out) if out.ndim == 0 else out


def log_bhatt_J_exact(eta, theta, c, n):
    eta, theta, c, n = (np.asarray(v, dtype=float) for v in (eta, theta, c, n))
    half = 0.5 * n
    return (
        half * np.log(c)
        - 0.5 * gammaln(n + 1.0)
        - gammaln(eta)
        - eta * np.log(theta)
        + gammaln(eta + half)
        - (eta + half) * np.log(1.0 / theta + 0.5 * c)
    )


def bhatt_J_exact(eta, theta, c, n):
    """Closed form of the Bhattacharyya integral (Gamma-Poisson algebra)."""
    out = np.exp(log_bhatt_J_exact(eta, theta, c, n))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------


def reward_from_terms(weights, log_I, log_J) -> float:
    """``D`` from per-particle ``log I`` and ``log J`` at one hypothetical count."""
    w = np.asarray(weights, dtype=float)
    log_den = logsumexp(log_I, b=w)
    if not np.isfinite(log_den):
        logger.warning("Reward denominator vanished; scoring the control 0")
        return 0.0
    d = -2.0 * (logsumexp(log_J, b=w) - 0.5 * log_den)
    return max(float(d), 0.0)


def _log_J(eta, theta, c, n, method: str):
    if method == "quadrature":
        return log_bhatt_J(eta, theta, c, n)
    if method == "exact":
        return log_bhatt_J_exact(eta, theta, c, n)
    raise ValueError(f"unknown integration method {method!r}")


def reward_sample(
    particles: ParticleSet,
    u: Control,
    n: int,
    geom: DomainGeom,
    move_table: np.ndarray,
    *,
    method: str = "quadrature",
) -> float:
    """Bhattacharyya reward of control *u* if count *n* were measured next."""
    c = _moved_constants(particles, u, geom, move_table)
    log_I = log_count_likelihood(particles.eta, particles.theta, c, n)
    log_J = _log_J(particles.eta, particles.theta, c, n, method)
    return reward_from_terms(particles.weights, log_I, log_J)


def expected_reward(
    particles: ParticleSet,
    u: Control,
    M: int,
    geom: DomainGeom,
    move_table: np.ndarray,
    seed: SeedLike = None,
    *,
    sample_rate: bool = False,
    method: str = "quadrature",
) -> float:
    """Sample mean of the reward over *M* hypothetical counts.

    Each hypothetical count comes from a uniformly chosen particle: its rate
    is the Gamma mean ``eta * theta`` (or, with *sample_rate*, a Gamma draw)
    times its ``c`` after the move, rounded.  Identical counts share one
    reward evaluation.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M!r}")
    rng = as_generator(seed)
    c = _moved_constants(particles, u, geom, move_table)
    idx = rng.integers(particles.N, size=M)
    if sample_rate:
        rate = rng.gamma(particles.eta[idx], particles.theta[idx])
    else:
        rate = particles.eta[idx] * particles.theta[idx]
    counts, multiplicity = np.unique(round_half_away(rate * c[idx]), return_counts=True)

    total = 0.0
    for n, times in zip(counts, multiplicity):
        log_I = log_count_likelihood(particles.eta, particles.theta, c, n)
        log_J = _log_J(particles.eta, particles.theta, c, n, method)
        total += times * reward_from_terms(particles.weights, log_I, log_J)
    return total / M


def admissible_controls(
    grid: CompleteGrid, pos: NodeCoord, particles: Optional[ParticleSet] = None
) -> List[Control]:
    """Controls whose deterministic move keeps the searcher on the grid.

    With *particles*, moves across a primary link of *pos* whose weighted
    existence probability is below :data:`BLOCKED_BELOW` are dropped too.
    ``STAY`` is always admissible.
    """
    options = [u for u in CONTROLS if grid.contains(u.apply(pos))]
    if particles is None:
        return options
    w = particles.weights / particles.weights.sum()
    kept = []
    for u in options:
        if u is not Control.STAY:
            lid = grid.link_id(pos, u.apply(pos))
            if float(w @ particles.q[:, lid]) < BLOCKED_BELOW:
                continue
        kept.append(u)
    return kept


def select_control(
    particles: ParticleSet,
    history: VisitHistory,
    pos: NodeCoord,
    geom: DomainGeom,
    M: int,
    seed: SeedLike = None,
    *,
    move_table: Optional[np.ndarray] = None,
    sample_rate: bool = False,
    method: str = "quadrature",
) -> ControlDecision:
    """Pick the admissible control with the largest expected reward.

    Moves the particles believe blocked are not admissible (see
    :func:`admissible_controls`).

    Ties are broken uniformly at random; an oscillating searcher (see
    :class:`VisitHistory`) gets a uniformly random admissible control.
    """
    rng = as_generator(seed)
    grid = particles.grid
    pos = (int(pos[0]), int(pos[1]))
    options = admissible_controls(grid, pos, particles)

    if history.oscillating(pos):
        choice = options[int(rng.integers(len(options)))]
        logger.debug("Node %s revisited %d times: random control %s", pos, history.count(pos), choice.label)
        return ControlDecision(choice, {}, True)

    if move_table is None:
        move_table = grid.move_table([u.displacement for u in CONTROLS])
    rewards = np.array(
        [
            expected_reward(particles, u, M, geom, move_table, rng, sample_rate=sample_rate, method=method)
            for u in options
        ]
    )
    best = rewards.max()
    ties = np.flatnonzero(rewards >= best - 1e-12 * max(1.0, abs(best)))
    choice = options[int(ties[rng.integers(len(ties))])]
    logger.debug("Rewards %s -> %s", np.round(rewards, 4).tolist(), choice.label)
    return ControlDecision(choice, {u.label: float(r) for u, r in zip(options, rewards)}, False)
