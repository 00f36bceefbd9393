"""Rao-Blackwellised particle filter over searcher pose, source and map.

Each particle carries a sampled searcher node and a continuous source
position; conditioned on those, the map and the effective release rate are
tracked analytically:

* ``q[j]`` - probability that link ``j`` exists (independent links,
  two-state Markov prediction, Bayes update through the detection matrix);
* ``(eta, theta)`` - Gamma posterior of the release rate ``A``, conjugate to
  the Poisson count model ``n ~ Poisson(c * A)``.

The proposal is the transitional prior, so the importance weight of a
particle is the marginal likelihood of the count (Gamma integrated out)
times the predictive probability of the link readings.  All likelihoods are
handled in log space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .analytic import DomainGeom, c_values, tortuosity
from .lattice import CompleteGrid, NodeCoord
from .sensing import (
    CONTROLS,
    DISPLACEMENTS,
    PRIMARY,
    Control,
    DetectionMatrix,
    LinkObservation,
    SeedLike,
    as_generator,
)

__all__ = [
    "FilterDivergenceError",
    "ParticleSet",
    "PosteriorSummary",
    "RaoBlackwellFilter",
    "init_particles",
    "predict_searcher",
    "predict_map_probs",
    "update_map_probs",
    "update_gamma",
    "log_count_likelihood",
    "count_likelihood_I",
    "log_importance_weight",
    "importance_weight",
    "systematic_resample",
    "resample_and_regularise",
    "effective_sample_size",
    "posterior_summary",
    "estimated_route",
]

logger = logging.getLogger(__name__)

PRESENT_THRESHOLD = 0.6


class FilterDivergenceError(RuntimeError):
    """Every particle received zero weight."""


# ---------------------------------------------------------------------------
# Particle containers
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ParticleSet:
    """Struct-of-arrays particle set; particle *i* is row *i* of every array.

    ``searcher`` holds node indices into ``grid.nodes``; ``q`` is ``(N, L)``.
    """

    grid: CompleteGrid
    searcher: np.ndarray
    source: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    step: int = 0

    @property
    def N(self) -> int:
        return len(self.weights)

    def take(self, idx: np.ndarray) -> "ParticleSet":
        """New set made of the particles at *idx* (copies), weights uniform."""
        n = len(idx)
        return ParticleSet(
            self.grid,
            self.searcher[idx].copy(),
            self.source[idx].copy(),
            self.q[idx].copy(),
            self.eta[idx].copy(),
            self.theta[idx].copy(),
            np.full(n, 1.0 / n),
            self.step,
        )


def _sample_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    outside = pts[:, 0] ** 2 + pts[:, 1] ** 2 >= radius**2
    while outside.any():
        pts[outside] = _sample_disk(rng, int(outside.sum()), radius)
        outside = pts[:, 0] ** 2 + pts[:, 1] ** 2 >= radius**2
    return pts


def init_particles(
    N: int,
    start: NodeCoord,
    grid: CompleteGrid,
    geom: DomainGeom,
    *,
    q0: float = 0.5,
    eta0: float = 15.0,
    theta0: float = 1.0,
    seed: SeedLike = None,
) -> ParticleSet:
    """Initial set: searcher at *start*, sources uniform over the disk."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N!r}")
    if not grid.contains(start):
        raise ValueError(f"start {tuple(start)} is not on the grid")
    if not 0.0 <= q0 <= 1.0:
        raise ValueError(f"q0 must lie in [0, 1], got {q0!r}")
    if not (eta0 > 0 and theta0 > 0):
        raise ValueError("eta0 and theta0 must be positive")
    rng = as_generator(seed)
    return ParticleSet(
        grid,
        np.full(N, grid.node_index[tuple(start)], dtype=np.int64),
        _sample_disk(rng, N, geom.R0),
        np.full((N, grid.L), float(q0)),
        np.full(N, float(eta0)),
        np.full(N, float(theta0)),
        np.full(N, 1.0 / N),
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict_searcher(
    searcher: np.ndarray,
    u: Control,
    p_e: float,
    move_table: np.ndarray,
    seed: SeedLike = None,
) -> np.ndarray:
    """Sample the motion model for every particle.

    The filter knows only the complete grid: displacements leaving it
    collapse to "stay", blocked links are not modelled.
    """
    rng = as_generator(seed)
    searcher = np.asarray(searcher, dtype=np.int64)
    n = searcher.size
    u_idx = CONTROLS.index(u)
    wrong = rng.random(n) < p_e
    alt = rng.integers(len(CONTROLS) - 1, size=n)
    alt = np.where(alt >= u_idx, alt + 1, alt)
    realised = np.where(wrong, alt, u_idx)
    return move_table[searcher, realised]


def predict_map_probs(q_prev: np.ndarray, stay_prob: float) -> np.ndarray:
    """Two-state Markov prediction of link existence probabilities."""
    q_prev = np.asarray(q_prev, dtype=float)
    return (1.0 - stay_prob) * (1.0 - q_prev) + stay_prob * q_prev


def _link_factors(
    z: int, q: np.ndarray, pi: DetectionMatrix
) -> Tuple[np.ndarray, np.ndarray]:
    """Predictive probability of reading *z* and the posterior ``P(m=1|z)``."""
    l1 = pi.p_d if z else 1.0 - pi.p_d
    l0 = pi.p_fa if z else 1.0 - pi.p_fa
    pz = l1 * q + l0 * (1.0 - q)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(pz > 0, l1 * q / pz, 0.0)
    return pz, post


def update_map_probs(
    q_pred: np.ndarray,
    obs: Iterable[LinkObservation],
    searcher,
    grid: CompleteGrid,
    primary: DetectionMatrix,
    secondary: DetectionMatrix,
):
    """Bayes update of link probabilities from one set of link readings.

    *q_pred* is one particle's ``(L,)`` vector with *searcher* its node
    coordinate, or an ``(N, L)`` block with *searcher* the particles' node
    indices.  Readings are re-resolved from each particle's own node through
    their direction and tier; a slot with no link there is certainly absent.

    Returns the updated probabilities and the log predictive probability of
    the readings (``-inf`` marks a reading impossible under the prior).
    """
    q = np.array(q_pred, dtype=float)
    single = q.ndim == 1
    if single:
        q = q[None, :]
        nodes = np.array([grid.node_index[(int(searcher[0]), int(searcher[1]))]])
    else:
        nodes = np.asarray(searcher, dtype=np.int64)
    rows = np.arange(len(nodes))
    ids = grid.observation_table[nodes]
    loglik = np.zeros(len(nodes))
    for ob in obs:
        pi = primary if ob.tier == PRIMARY else secondary
        lid = ids[:, ob.slot]
        has = lid >= 0
        pz, post = _link_factors(ob.z, q[rows, np.maximum(lid, 0)], pi)
        pz = np.where(has, pz, pi.likelihood(ob.z, 0))
        with np.errstate(divide="ignore"):
            loglik += np.log(pz)
        q[rows[has], lid[has]] = post[has]
    if single:
        return q[0], float(loglik[0])
    return q, loglik


def update_gamma(eta, theta, n, c):
    """Conjugate update of the release-rate Gamma after count *n*."""
    eta, theta, c = (np.asarray(v, dtype=float) for v in (eta, theta, c))
    eta_new = eta + n
    theta_new = theta / (1.0 + c * theta)
    if eta_new.ndim == 0:
        return float(eta_new), float(theta_new)
    return eta_new, theta_new


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


def log_poisson(n, lam):
    return xlogy(n, lam) - lam - gammaln(np.asarray(n, dtype=float) + 1.0)


def log_gamma_pdf(a, eta, theta):
    return xlogy(eta - 1.0, a) - a / theta - gammaln(eta) - eta * np.log(theta)


def log_count_likelihood(eta, theta, c, n, *, at=None):
    """``log I``: marginal likelihood of count *n* with ``A`` integrated out.

    Uses the ratio ``P(n; cA) G(A; eta, theta) / G(A; eta+n, theta')``, which
    is the same for every ``A > 0``; it is evaluated at *at* (default the
    prior mean ``eta * theta``).
    """
    eta, theta, c, n = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (eta, theta, c, n)))
    A = eta * theta if at is None else np.broadcast_to(np.asarray(at, dtype=float), eta.shape)
    theta_post = theta / (1.0 + c * theta)
    return log_poisson(n, c * A) + log_gamma_pdf(A, eta, theta) - log_gamma_pdf(A, eta + n, theta_post)


def count_likelihood_I(eta, theta, c, n, *, at=None):
    out = np.exp(log_count_likelihood(eta, theta, c, n, at=at))
    return float(out) if out.ndim == 0 else out


def log_importance_weight(eta, theta, c, n, link_loglik=0.0):
    """Log of the unnormalised particle weight.

    The count term has the release rate integrated out; *link_loglik* is the
    log predictive probability of the link readings from
    :func:`update_map_probs`.
    """
    return log_count_likelihood(eta, theta, c, n) + np.asarray(link_loglik, dtype=float)


def importance_weight(eta, theta, c, n, link_loglik=0.0):
    out = np.exp(log_importance_weight(eta, theta, c, n, link_loglik))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w**2))


def systematic_resample(weights: np.ndarray, seed: SeedLike = None) -> np.ndarray:
    """Systematic (low variance) resampling; returns ancestor indices."""
    rng = as_generator(seed)
    N = len(weights)
    cumsum = np.cumsum(weights)
    cumsum[-1] = 1.0
    u = rng.uniform(0, 1.0 / N) + np.arange(N) / N
    return np.clip(np.searchsorted(cumsum, u), 0, N - 1)


def resample_and_regularise(
    particles: ParticleSet,
    geom: DomainGeom,
    seed: SeedLike = None,
    *,
    kernel_floor: float = 0.05,
    max_redraws: int = 100,
) -> ParticleSet:
    """Systematic resampling, then Gaussian jitter of the source positions.

    The kernel bandwidth per coordinate follows Silverman's rule on the
    resampled cloud (``sigma * N**(-1/6)`` in two dimensions), floored at
    *kernel_floor*.  Jittered sources are redrawn until they fall inside the
    disk; stragglers keep their resampled position.
    """
    rng = as_generator(seed)
    out = particles.take(systematic_resample(particles.weights, rng))
    N = out.N
    h = np.maximum(out.source.std(axis=0) * N ** (-1.0 / 6.0), kernel_floor)

    jittered = out.source + h * rng.standard_normal((N, 2))
    bad = ~geom.contains(jittered[:, 0], jittered[:, 1])
    for _ in range(max_redraws):
        if not bad.any():
            break
        jittered[bad] = out.source[bad] + h * rng.standard_normal((int(bad.sum()), 2))
        bad = ~geom.contains(jittered[:, 0], jittered[:, 1])
    jittered[bad] = out.source[bad]
    out.source = jittered
    return out


# ---------------------------------------------------------------------------
# Posterior read-out
# ---------------------------------------------------------------------------


@dataclass
class PosteriorSummary:
    searcher_map_node: NodeCoord
    support: List[NodeCoord]
    source_mean: Tuple[float, float]
    source_cov: np.ndarray
    source_map_node: NodeCoord
    A_mean: float
    q_mean: np.ndarray = field(repr=False)
    A0_estimate: Optional[float] = None

    def links_present(self, threshold: float = PRESENT_THRESHOLD) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.q_mean > threshold)]

    def top_q_links(self, k: int = 10) -> List[Tuple[int, float]]:
        order = np.argsort(-self.q_mean, kind="stable")[:k]
        return [(int(i), float(self.q_mean[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "searcher_map_node": list(self.searcher_map_node),
            "source_mean": list(self.source_mean),
            "source_cov": self.source_cov.tolist(),
            "source_map_node": list(self.source_map_node),
            "A_mean": self.A_mean,
            "A0_estimate": self.A0_estimate,
            "support_size": len(self.support),
            "top_q_links": [list(t) for t in self.top_q_links()],
        }


def posterior_summary(
    particles: ParticleSet, *, removal_fraction: Optional[float] = None
) -> PosteriorSummary:
    """Point estimates of the particle approximation.

    With *removal_fraction* the summary also reports the retrospective
    release rate ``A0 = A * f_c``.
    """
    grid = particles.grid
    w = particles.weights / particles.weights.sum()
    node_mass = np.bincount(particles.searcher, weights=w, minlength=len(grid.nodes))
    src_mean = w @ particles.source
    diff = particles.source - src_mean
    cov = np.einsum("i,ij,ik->jk", w, diff, diff)
    A_mean = float(w @ (particles.eta * particles.theta))
    nearest = int(np.argmin(np.sum((grid.coords - src_mean) ** 2, axis=1)))
    return PosteriorSummary(
        searcher_map_node=grid.nodes[int(np.argmax(node_mass))],
        support=[grid.nodes[int(i)] for i in np.unique(particles.searcher)],
        source_mean=(float(src_mean[0]), float(src_mean[1])),
        source_cov=cov,
        source_map_node=grid.nodes[nearest],
        A_mean=A_mean,
        q_mean=w @ particles.q,
        A0_estimate=None if removal_fraction is None else A_mean * tortuosity(removal_fraction),
    )


def estimated_route(
    summary: PosteriorSummary,
    grid: CompleteGrid,
    start: NodeCoord,
    threshold: float = PRESENT_THRESHOLD,
) -> Optional[List[NodeCoord]]:
    """Route from *start* to the estimated source over links believed present."""
    g = nx.Graph()
    g.add_nodes_from(grid.nodes)
    g.add_edges_from(
        (grid.links[i].a, grid.links[i].b) for i in summary.links_present(threshold)
    )
    try:
        return nx.shortest_path(g, tuple(start), summary.source_map_node)
    except nx.NetworkXNoPath:
        return None


# ---------------------------------------------------------------------------
# The filter
# ---------------------------------------------------------------------------


class RaoBlackwellFilter:
    """Sequential estimator of searcher pose, source parameters and map.

    Parameters
    ----------
    particles: ParticleSet
        Initial set (see :func:`init_particles`).
    geom: DomainGeom
        Circle of the analytic count model.
    p_e: float
        Control-error probability of the motion model.
    primary, secondary: DetectionMatrix
        Link detector models per observation tier.
    stay_prob: float
        Diagonal of the link-status transition matrix.
    ess_threshold: float | None
        Resample only when ``ESS < ess_threshold * N``; ``None`` resamples
        every step.
    """

    def __init__(
        self,
        particles: ParticleSet,
        geom: DomainGeom,
        *,
        p_e: float,
        primary: DetectionMatrix,
        secondary: DetectionMatrix,
        stay_prob: float = 0.999,
        ess_threshold: Optional[float] = None,
        kernel_floor: float = 0.05,
        seed: SeedLike = None,
    ):
        self.particles = particles
        self.grid = particles.grid
        self.geom = geom
        self.p_e = p_e
        self.primary = primary
        self.secondary = secondary
        self.stay_prob = stay_prob
        self.ess_threshold = ess_threshold
        self.kernel_floor = kernel_floor
        self.rng = as_generator(seed)
        self.move_table = self.grid.move_table(DISPLACEMENTS)
        self.impossible_readings = 0

    def constants(self, searcher: np.ndarray) -> np.ndarray:
        """``c`` for every particle with searcher nodes *searcher*."""
        xy = self.grid.coords[searcher]
        src = self.particles.source
        return c_values(xy[:, 0], xy[:, 1], src[:, 0], src[:, 1], self.geom.R0)

    def step(self, u: Control, n: int, obs: Sequence[LinkObservation]) -> float:
        """One filter cycle for control *u*, count *n* and link readings *obs*.

        Returns the effective sample size before resampling.
        """
        ps = self.particles
        searcher = predict_searcher(ps.searcher, u, self.p_e, self.move_table, self.rng)
        c = self.constants(searcher)
        q, link_loglik = update_map_probs(
            predict_map_probs(ps.q, self.stay_prob), obs, searcher, self.grid, self.primary, self.secondary
        )
        impossible = int(np.isneginf(link_loglik).sum())
        if impossible:
            self.impossible_readings += impossible
            logger.warning("Impossible link reading on %d particle(s)", impossible)

        with np.errstate(divide="ignore"):
            logw = np.log(ps.weights)
        logw = logw + log_importance_weight(ps.eta, ps.theta, c, n, link_loglik)
        if not np.isfinite(logw).any():
            raise FilterDivergenceError(f"all {ps.N} particle weights are zero at step {ps.step + 1}")
        weights = np.exp(logw - logsumexp(logw))

        eta, theta = update_gamma(ps.eta, ps.theta, n, c)
        updated = ParticleSet(self.grid, searcher, ps.source, q, eta, theta, weights, ps.step + 1)
        ess = effective_sample_size(weights)
        if self.ess_threshold is None or ess < self.ess_threshold * ps.N:
            updated = resample_and_regularise(updated, self.geom, self.rng, kernel_floor=self.kernel_floor)
        logger.debug("Step %d: ESS %.1f / %d", updated.step, ess, ps.N)
        self.particles = updated
        return ess

    def summary(self, *, removal_fraction: Optional[float] = None) -> PosteriorSummary:
        return posterior_summary(self.particles, removal_fraction=removal_fraction)
