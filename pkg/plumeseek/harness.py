"""Search runs and Monte Carlo batches.

A run follows the searcher loop: choose a control, move in the true
environment, let the map evolve, sense, update the filter.  It ends when the
searcher steps on the source or after ``max_steps`` steps.  A run that found
the source succeeds only if the true source node lies in the particle
support of the searcher position.

Every run draws from its own random streams spawned from
``SeedSequence([run_seed, run_id])``, so batch results do not depend on the
number of workers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .analytic import DomainGeom
from .config import SearchConfig
from .control import ControlDecision, VisitHistory, admissible_controls, select_control
from .diffusion import ConcentrationField, build_canonical_chain, mean_concentration_field
from .lattice import (
    CompleteGrid,
    EnvironmentMap,
    NodeCoord,
    build_complete_grid,
    generate_environment,
    link_status_counts,
    observable_links,
    shortest_path_length,
)
from .models import ExperimentSummary, Outcome, RunRecord, StepRecord
from .rbpf import (
    FilterDivergenceError,
    PosteriorSummary,
    RaoBlackwellFilter,
    estimated_route,
    init_particles,
)
from .sensing import evolve_map, execute_control, observe_links, sample_count

__all__ = [
    "INFOTAXIS",
    "RANDOM",
    "SCENARIO_SOURCES",
    "SCENARIO_RATES",
    "run_streams",
    "environment_seed",
    "run_search",
    "monte_carlo",
    "random_walk_baseline",
    "sweep",
    "source_cells",
    "rate_cells",
]

logger = logging.getLogger(__name__)

INFOTAXIS = "infotaxis"
RANDOM = "random"

SCENARIO_SOURCES: Tuple[NodeCoord, ...] = ((0, 7), (0, 1), (2, -5))
SCENARIO_RATES: Tuple[float, ...] = (8.0, 12.0, 16.0)

_STREAMS = ("counts", "links", "motion", "map", "filter", "control")

Cell = Tuple[NodeCoord, float]


def run_streams(config: SearchConfig, run_id: int) -> Dict[str, np.random.Generator]:
    """Independent generators for every stochastic component of one run."""
    children = np.random.SeedSequence([config.run_seed, run_id]).spawn(len(_STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(_STREAMS, children)}


def environment_seed(config: SearchConfig, run_id: int) -> int:
    """Seed of the environment of run *run_id*; ``env_seed`` itself when pinned."""
    if config.pin_environment:
        return config.env_seed
    return int(np.random.SeedSequence([config.env_seed, run_id]).generate_state(1)[0])


def _field(env: EnvironmentMap, config: SearchConfig) -> ConcentrationField:
    return mean_concentration_field(build_canonical_chain(env), config.source, config.A0)


def _map_match_rate(
    summary: PosteriorSummary, env: EnvironmentMap, visited: Iterable[NodeCoord]
) -> Optional[float]:
    """Share of primary links around visited nodes whose thresholded belief is right."""
    ids = sorted(
        {link.id for node in visited for link in observable_links(env.grid, node)[0] if link is not None}
    )
    if not ids:
        return None
    believed = summary.q_mean[ids] > 0.5
    return float(np.mean(believed == env.status[ids].astype(bool)))


def run_search(
    config: SearchConfig,
    env: Optional[EnvironmentMap] = None,
    *,
    run_id: int = 0,
    grid: Optional[CompleteGrid] = None,
    policy: str = INFOTAXIS,
) -> RunRecord:
    """Run one search.

    *env* pins the true environment; otherwise one is generated from
    :func:`environment_seed`.  ``policy="random"`` draws controls uniformly
    from the admissible set and runs the filter only with ``track_filter``.
    """
    if policy not in (INFOTAXIS, RANDOM):
        raise ValueError(f"unknown policy {policy!r}")
    if env is not None:
        grid = env.grid
    elif grid is None:
        grid = build_complete_grid(config.R0, closed_disk=config.closed_disk)
    config.validate_geometry(grid)
    if env is None:
        env = generate_environment(
            grid, config.p, environment_seed(config, run_id), strategy=config.env_strategy
        )
    initial_env = env
    geom = DomainGeom(config.R0)
    rng = run_streams(config, run_id)
    field = _field(env, config)

    filt: Optional[RaoBlackwellFilter] = None
    summary: Optional[PosteriorSummary] = None
    if policy == INFOTAXIS or config.track_filter:
        particles = init_particles(
            config.N,
            config.start,
            grid,
            geom,
            q0=config.q0,
            eta0=config.eta0,
            theta0=config.theta0,
            seed=rng["filter"],
        )
        filt = RaoBlackwellFilter(
            particles,
            geom,
            p_e=config.p_e,
            primary=config.primary,
            secondary=config.secondary,
            stay_prob=config.map_stay_prob,
            ess_threshold=config.ess_threshold,
            kernel_floor=config.kernel_floor,
            seed=rng["filter"],
        )
        summary = filt.summary(removal_fraction=config.p)

    pos: NodeCoord = config.start
    belief: NodeCoord = pos
    history = VisitHistory(config.history_window, config.history_limit)
    history.append(belief)
    visited = {pos}
    steps: List[StepRecord] = []
    diagnostic: Optional[str] = None
    found = pos == config.source

    k = 0
    while not found and k < config.max_steps:
        k += 1
        if policy == INFOTAXIS:
            decision = select_control(
                filt.particles,
                history,
                belief,
                geom,
                config.M,
                rng["control"],
                move_table=filt.move_table,
                sample_rate=config.sample_rate,
                method=config.bhatt_method,
            )
        else:
            options = admissible_controls(grid, pos)
            decision = ControlDecision(options[int(rng["control"].integers(len(options)))])

        move = execute_control(pos, decision.control, config.p_e, env, rng["motion"])
        pos = move.pos
        visited.add(pos)
        if config.evolve_map:
            evolved = evolve_map(env, config.map_stay_prob, rng["map"], keep_connected=True)
            if evolved is not env:
                env = evolved
                field = _field(env, config)

        n = sample_count(field, pos, rng["counts"])
        obs = observe_links(env, pos, config.primary, config.secondary, rng["links"])
        step = StepRecord(
            k,
            pos,
            n,
            decision.control.label,
            move.realised.label,
            [ob.to_dict() for ob in obs],
            decision.heuristic_triggered,
            decision.rewards,
        )
        steps.append(step)

        if filt is not None:
            try:
                filt.step(decision.control, n, obs)
            except FilterDivergenceError as exc:
                diagnostic = f"filter diverged: {exc}"
                logger.warning("Run %d: %s", run_id, diagnostic)
                break
            summary = filt.summary(removal_fraction=config.p)
            step.posterior = summary.to_dict()
        belief = summary.searcher_map_node if policy == INFOTAXIS else pos
        history.append(belief)
        found = pos == config.source

    if diagnostic is not None or not found:
        outcome = Outcome.FAILURE_UNFOUND
    elif summary is None or config.source in summary.support:
        outcome = Outcome.SUCCESS
    else:
        outcome = Outcome.FAILURE_MISIDENTIFIED

    record = RunRecord(
        run_id=run_id,
        outcome=outcome,
        steps_taken=len(steps),
        steps=steps,
        start=config.start,
        source=config.source,
        diagnostic=diagnostic,
        initial_shortest_path=shortest_path_length(initial_env, config.start, config.source),
        environment={
            "radius": grid.radius,
            "closed_disk": grid.closed_disk,
            "seed": initial_env.seed,
            "removal_fraction": initial_env.removal_fraction,
            **link_status_counts(initial_env),
        },
    )
    if summary is not None:
        record.final_posterior = summary.to_dict()
        record.support = list(summary.support)
        record.links_present = summary.links_present()
        route = estimated_route(summary, grid, config.start)
        record.estimated_route_length = None if route is None else len(route) - 1
        record.map_match_rate = _map_match_rate(summary, env, visited)

    logger.info(
        "Run %d: %s after %d step(s) (%d control failure(s))",
        run_id,
        outcome.value,
        record.steps_taken,
        record.control_failures,
    )
    return record


def _run_task(task: Tuple[SearchConfig, int, str, Optional[EnvironmentMap]]) -> RunRecord:
    config, run_id, policy, env = task
    return run_search(config, env, run_id=run_id, policy=policy)


def monte_carlo(
    config: SearchConfig,
    runs: int,
    *,
    workers: int = 1,
    policy: str = INFOTAXIS,
    env: Optional[EnvironmentMap] = None,
    label: str = "mc",
) -> ExperimentSummary:
    """*runs* independent searches, run ids ``0 .. runs-1``, in submission order."""
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs!r}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers!r}")
    tasks = [(config, run_id, policy, env) for run_id in range(runs)]
    logger.info("%s: %d run(s) on %d worker(s)", label, runs, workers)
    if workers == 1:
        records = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks))
    summary = ExperimentSummary(records, config.to_dict(), label)
    logger.info(
        "%s: success %.1f %%, mean steps %s", label, summary.success_rate, summary.mean_steps
    )
    return summary


def random_walk_baseline(
    config: SearchConfig,
    runs: int,
    *,
    workers: int = 1,
    env: Optional[EnvironmentMap] = None,
) -> ExperimentSummary:
    """Monte Carlo batch with uniformly random admissible controls."""
    return monte_carlo(config, runs, workers=workers, policy=RANDOM, env=env, label="baseline")


def source_cells(A0: float = 12.0) -> List[Cell]:
    return [(source, A0) for source in SCENARIO_SOURCES]


def rate_cells(source: NodeCoord = (0, 7)) -> List[Cell]:
    return [(source, rate) for rate in SCENARIO_RATES]


def sweep(
    config: SearchConfig,
    cells: Sequence[Cell],
    runs: int,
    *,
    workers: int = 1,
) -> List[ExperimentSummary]:
    """One Monte Carlo batch per ``(source, A0)`` cell."""
    out = []
    for source, A0 in cells:
        cell_config = config.replace(source=tuple(source), A0=float(A0))
        label = f"source=({source[0]},{source[1]}) A0={float(A0):g}"
        out.append(monte_carlo(cell_config, runs, workers=workers, label=label))
    return out
