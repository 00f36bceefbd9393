"""Command-line interface for plumeseek experiments."""
from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import click

from .config import SearchConfig, load_config, save_config
from .diffusion import ChainError, build_canonical_chain, mean_concentration_field, write_field_csv
from .harness import (
    INFOTAXIS,
    RANDOM,
    monte_carlo,
    random_walk_baseline,
    run_search,
    sweep as run_sweep,
    source_cells,
    rate_cells,
)
from .lattice import (
    DisconnectedEnvironmentError,
    EnvironmentMap,
    build_complete_grid,
    generate_environment,
    link_status_counts,
    load_environment,
    save_environment,
)
from .storage import read_json, write_run, write_summary

logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")


@contextmanager
def _reported_errors():
    """Turn configuration and I/O failures into a clean non-zero exit."""
    try:
        yield
    except (ValueError, OSError, DisconnectedEnvironmentError, ChainError) as exc:
        raise click.ClickException(str(exc)) from exc


_SHARED_OPTIONS = (
    click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="JSON file with SearchConfig values.",
    ),
    click.option("--seed", type=click.IntRange(min=0), help="Seed for environments and runs."),
    click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        default=Path("out"),
        show_default=True,
        help="Output directory.",
    ),
    click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True),
)


def shared_options(func):
    """``--config``, ``--seed``, ``--out`` and ``--workers`` for every command."""
    for option in reversed(_SHARED_OPTIONS):
        func = option(func)
    return func


def _config(config_path: Optional[Path], seed: Optional[int], **overrides) -> SearchConfig:
    config = load_config(config_path) if config_path else SearchConfig()
    if seed is not None:
        overrides.update(env_seed=seed, run_seed=seed)
    return config.replace(**overrides)


def _environment(config: SearchConfig, env_path: Optional[Path]) -> EnvironmentMap:
    grid = build_complete_grid(config.R0, closed_disk=config.closed_disk)
    if env_path is not None:
        return load_environment(env_path, grid)
    return generate_environment(grid, config.p, config.env_seed, strategy=config.env_strategy)


def _echo_summary(summary) -> None:
    mean = "n/a" if summary.mean_steps is None else f"{summary.mean_steps:.1f}"
    click.echo(
        f"{summary.label}: {summary.successes}/{summary.runs} successful "
        f"({summary.success_rate:.1f} %), mean steps {mean}"
    )


@click.group()
@click.option("--verbose", is_flag=True, help="Log debug messages.")
def cli(verbose: bool):
    """Simulated searches for a diffusive source in an obstructed lattice."""
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


@cli.command("gen-env", help="Generate an environment and write it as JSON.")
@shared_options
@click.option("--p", "p", type=float, help="Missing-link fraction.")
@click.option("--radius", type=click.IntRange(min=1), help="Search-area radius R0.")
def gen_env(config_path, seed, out: Path, workers, p, radius):
    with _reported_errors():
        config = _config(config_path, seed, p=p, R0=radius)
        env = _environment(config, None)
        path = save_environment(env, out / "environment.json")
    counts = link_status_counts(env)
    click.echo(f"Wrote {path} ({counts['removed']} of {env.grid.L} links removed).")


@cli.command("solve-field", help="Solve the mean concentration field and write it as CSV.")
@shared_options
@click.option("--env", "env_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--source", type=(int, int), help="Source node X Y.")
@click.option("--a0", "A0", type=float, help="Release rate.")
def solve_field(config_path, seed, out: Path, workers, env_path, source, A0):
    with _reported_errors():
        config = _config(config_path, seed, source=source, A0=A0)
        env = _environment(config, env_path)
        config.validate_geometry(env.grid)
        field = mean_concentration_field(build_canonical_chain(env), config.source, config.A0)
        out.mkdir(parents=True, exist_ok=True)
        path = write_field_csv(field, out / "field.csv")
    click.echo(f"Wrote {path}.")


@cli.command("run", help="Run a single search and write its record and step log.")
@shared_options
@click.option("--env", "env_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--run-id", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--policy", type=click.Choice([INFOTAXIS, RANDOM]), default=INFOTAXIS, show_default=True)
def run(config_path, seed, out: Path, workers, env_path, run_id: int, policy: str):
    with _reported_errors():
        config = _config(config_path, seed)
        env = _environment(config, env_path) if env_path else None
        record = run_search(config, env, run_id=run_id, policy=policy)
        path = write_run(record, out, stem="run")
    click.echo(f"{record.outcome.value} after {record.steps_taken} step(s); wrote {path}.")


@cli.command("mc", help="Monte Carlo batch of searches.")
@shared_options
@click.option("--runs", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--env", "env_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Pin this environment for every run.")
def mc(config_path, seed, out: Path, workers: int, runs: int, env_path):
    with _reported_errors():
        config = _config(config_path, seed)
        env = _environment(config, env_path) if env_path else None
        summary = monte_carlo(config, runs, workers=workers, env=env)
        write_summary(summary, out)
        save_config(config, out / "config.json")
    _echo_summary(summary)


@cli.command("baseline", help="Monte Carlo batch with uniformly random controls.")
@shared_options
@click.option("--runs", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--env", "env_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Pin this environment for every run.")
def baseline(config_path, seed, out: Path, workers: int, runs: int, env_path):
    with _reported_errors():
        config = _config(config_path, seed)
        env = _environment(config, env_path) if env_path else None
        summary = random_walk_baseline(config, runs, workers=workers, env=env)
        write_summary(summary, out)
    _echo_summary(summary)


@cli.command("sweep", help="Monte Carlo batches over the source positions or release rates.")
@shared_options
@click.option("--table", type=click.Choice(["sources", "rates"]), default="sources", show_default=True)
@click.option("--runs", type=click.IntRange(min=1), default=100, show_default=True)
def sweep(config_path, seed, out: Path, workers: int, table: str, runs: int):
    with _reported_errors():
        config = _config(config_path, seed)
        cells = source_cells(config.A0) if table == "sources" else rate_cells(config.source)
        summaries = run_sweep(config, cells, runs, workers=workers)
        for i, summary in enumerate(summaries):
            write_summary(summary, out / f"cell-{i}", persist_runs=False)
    for summary in summaries:
        _echo_summary(summary)


@cli.command("plot", help="Render a run record, or the field of the configured scenario.")
@shared_options
@click.argument("run_json", required=False, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--env", "env_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def plot(config_path, seed, out: Path, workers, run_json: Optional[Path], env_path):
    from .plotting import plot_field, plot_run

    with _reported_errors():
        if run_json is not None:
            path = out / f"{run_json.stem}.png"
            plot_run(read_json(run_json), path)
        else:
            config = _config(config_path, seed)
            env = _environment(config, env_path)
            config.validate_geometry(env.grid)
            field = mean_concentration_field(build_canonical_chain(env), config.source, config.A0)
            path = out / "field.png"
            plot_field(field, path, env=env)
    click.echo(f"Wrote {path}.")


if __name__ == "__main__":  # pragma: no cover
    cli()
