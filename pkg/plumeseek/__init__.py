"""plumeseek - simulated search for a diffusive tracer source.

This package provides:
* lattice environments with missing links (plumeseek.lattice);
* the absorbing-chain concentration field and the analytic count model
  used by the searcher (plumeseek.diffusion, plumeseek.analytic);
* a Rao-Blackwellised particle filter over searcher pose, source and map
  (plumeseek.rbpf) with Bhattacharyya-reward motion control
  (plumeseek.control);
* search runs, Monte Carlo batches and a Click CLI (plumeseek.harness,
  plumeseek.cli).
"""

__all__ = [
    "SearchConfig",
    "load_config",
    "run_search",
    "monte_carlo",
    "random_walk_baseline",
]

from .config import SearchConfig, load_config  # noqa: E402
from .harness import monte_carlo, random_walk_baseline, run_search  # noqa: E402
