"""Social outcome metrics and welfare objectives.

All functions are pure. Conventions that the formulas leave open:

* equality is the Gini complement over ordered pairs; when total return is
  exactly zero it is defined as 1.0, and when total return is negative the
  formula is evaluated as written (values outside [0, 1] are meaningful
  there and are reported as-is);
* an agent that never collects positive reward contributes the full
  horizon to sustainability, so early-extinction runs score low.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .errors import InvalidArgumentError

OBJECTIVES = ("utilitarian", "maximin")


@dataclass(frozen=True)
class MetricsVector:
    """The four social outcomes plus the worst-off agent's return."""

    u: float
    e: float
    s: float
    p: float
    maximin: float

    def record(self) -> dict:
        return {"U": self.u, "E": self.e, "S": self.s, "P": self.p,
                "maximin": self.maximin}

    @classmethod
    def from_record(cls, record: dict) -> "MetricsVector":
        return cls(u=record["U"], e=record["E"], s=record["S"],
                   p=record["P"], maximin=record["maximin"])


@dataclass(frozen=True)
class EpisodeRecord:
    """Per-episode data sufficient to compute every metric.

    ``positive_reward_times[i]`` lists the steps where agent i's reward was
    strictly positive; ``active_counts[t]`` is the number of agents not
    tagged out at step t.
    """

    returns: Tuple[float, ...]
    positive_reward_times: Tuple[Tuple[int, ...], ...]
    active_counts: Tuple[int, ...]
    horizon: int


def efficiency(returns: Sequence[float], horizon: int) -> float:
    """Collective return per step: sum of agent returns divided by H."""
    if horizon <= 0:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    return sum(returns) / horizon


def equality(returns: Sequence[float]) -> float:
    """Gini complement: 1 - sum_{i,j} |R_i - R_j| / (2 N sum_i R_i)."""
    if len(returns) < 1:
        raise InvalidArgumentError("equality needs at least one agent")
    total = sum(returns)
    if total == 0:
        return 1.0
    n = len(returns)
    dispersion = sum(abs(a - b) for a in returns for b in returns)
    return 1.0 - dispersion / (2 * n * total)


def sustainability(positive_reward_times: Sequence[Sequence[int]],
                   horizon: int) -> float:
    """Mean over agents of the mean step at which positive reward arrives.

    Agents with no positive reward contribute ``horizon``.
    """
    per_agent = []
    for times in positive_reward_times:
        if times:
            per_agent.append(sum(times) / len(times))
        else:
            per_agent.append(float(horizon))
    if not per_agent:
        raise InvalidArgumentError("sustainability needs at least one agent")
    return sum(per_agent) / len(per_agent)


def peace(active_counts: Sequence[int], horizon: int) -> float:
    """Mean number of untagged agents per step."""
    if len(active_counts) != horizon:
        raise InvalidArgumentError(
            f"need one active count per step: got {len(active_counts)} "
            f"for horizon {horizon}"
        )
    if horizon == 0:
        raise InvalidArgumentError("horizon must be positive")
    return sum(active_counts) / horizon


def welfare(returns: Sequence[float], horizon: int, objective: str) -> float:
    """Scalar welfare: ``utilitarian`` is efficiency, ``maximin`` is the
    minimum per-agent return."""
    if objective == "utilitarian":
        return efficiency(returns, horizon)
    if objective == "maximin":
        if not returns:
            raise InvalidArgumentError("maximin needs at least one agent")
        return min(returns)
    raise InvalidArgumentError(
        f"unknown objective {objective!r}; expected one of {OBJECTIVES}"
    )


def metrics_from_episode(episode: EpisodeRecord) -> MetricsVector:
    return MetricsVector(
        u=efficiency(episode.returns, episode.horizon),
        e=equality(episode.returns),
        s=sustainability(episode.positive_reward_times, episode.horizon),
        p=peace(episode.active_counts, episode.horizon),
        maximin=min(episode.returns),
    )


def mean_metrics(vectors: Sequence[MetricsVector],
                 maximin: float | None = None) -> MetricsVector:
    """Field-wise mean of metric vectors; ``maximin`` may be overridden
    (evaluation reports use the maximin of seed-averaged returns)."""
    if not vectors:
        raise InvalidArgumentError("mean of no metric vectors")
    n = len(vectors)
    return MetricsVector(
        u=sum(v.u for v in vectors) / n,
        e=sum(v.e for v in vectors) / n,
        s=sum(v.s for v in vectors) / n,
        p=sum(v.p for v in vectors) / n,
        maximin=maximin if maximin is not None
        else sum(v.maximin for v in vectors) / n,
    )
