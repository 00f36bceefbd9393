"""Records produced by search runs and Monte Carlo experiments."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .lattice import NodeCoord

SCHEMA_VERSION = 1


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    FAILURE_UNFOUND = "failure-unfound"
    FAILURE_MISIDENTIFIED = "failure-misidentified"


@dataclass
class StepRecord:
    k: int
    pos: NodeCoord
    n: int
    commanded: str
    realised: str
    link_obs: List[Dict[str, Any]] = field(default_factory=list)
    heuristic_triggered: bool = False
    rewards: Dict[str, float] = field(default_factory=dict)
    posterior: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "pos": list(self.pos),
            "n": self.n,
            "commanded": self.commanded,
            "realised": self.realised,
            "link_obs": self.link_obs,
            "heuristic_triggered": self.heuristic_triggered,
            "rewards": self.rewards,
            "posterior": self.posterior,
        }


@dataclass
class RunRecord:
    run_id: int
    outcome: Outcome
    steps_taken: int
    steps: List[StepRecord] = field(default_factory=list)
    start: NodeCoord = (0, 0)
    source: NodeCoord = (0, 0)
    final_posterior: Dict[str, Any] = field(default_factory=dict)
    support: List[NodeCoord] = field(default_factory=list)
    links_present: List[int] = field(default_factory=list)
    diagnostic: Optional[str] = None
    initial_shortest_path: Optional[int] = None
    estimated_route_length: Optional[int] = None
    map_match_rate: Optional[float] = None
    environment: Dict[str, Any] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    @property
    def trajectory(self) -> List[NodeCoord]:
        return [self.start] + [s.pos for s in self.steps]

    @property
    def counts(self) -> List[int]:
        return [s.n for s in self.steps]

    @property
    def control_failures(self) -> int:
        """Steps on which the executed control differed from the commanded one."""
        return sum(1 for s in self.steps if s.realised != s.commanded)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "outcome": self.outcome.value,
            "steps_taken": self.steps_taken,
            "diagnostic": self.diagnostic,
            "control_failures": self.control_failures,
            "initial_shortest_path": self.initial_shortest_path,
            "estimated_route_length": self.estimated_route_length,
            "map_match_rate": self.map_match_rate,
            "start": list(self.start),
            "source": list(self.source),
            "final_posterior": self.final_posterior,
            "support": [list(n) for n in self.support],
            "links_present": self.links_present,
            "trajectory": [list(p) for p in self.trajectory],
            "counts": self.counts,
            "environment": self.environment,
        }


@dataclass
class ExperimentSummary:
    """Aggregate of a batch of runs; mean steps only over successful runs."""

    records: List[RunRecord]
    config: Dict[str, Any] = field(default_factory=dict)
    label: str = "mc"

    @property
    def runs(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> int:
        return sum(1 for r in self.records if r.success)

    @property
    def success_rate(self) -> float:
        return 100.0 * self.successes / self.runs if self.runs else 0.0

    @property
    def mean_steps(self) -> Optional[float]:
        steps = [r.steps_taken for r in self.records if r.success]
        return sum(steps) / len(steps) if steps else None

    def outcome_counts(self) -> Dict[str, int]:
        counts = {o.value: 0 for o in Outcome}
        for r in self.records:
            counts[r.outcome.value] += 1
        return counts

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "label": self.label,
            "runs": self.runs,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "mean_steps": self.mean_steps,
            "outcomes": self.outcome_counts(),
            "config": self.config,
        }
