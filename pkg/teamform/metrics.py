"""
Welfare and fairness measures for partitions of a game.

Envy compares sets of teammates: agent i looking at agent j's team sees
team(j) without j, as if i had taken j's place. Ties never count as envy.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import CapacityExceededError, InvalidBoundsError, InvalidPartitionError
from .model import (
    Game,
    Partition,
    SerialOrder,
    count_partitions,
    enumerate_partitions,
    normalize,
    validate_partition,
)

logger = logging.getLogger(__name__)

MAXIMIN_PARTITION_LIMIT = 10 ** 7

# Column order of MetricsReport.to_row()
METRICS_COLUMNS = [
    "social_welfare",
    "raw_welfare",
    "envy_free_fraction",
    "bounded_envy_fraction",
    "proportional_fraction",
    "maximin_satisfied_fraction",
]


def team_value(game: Game, p: Partition, i: int) -> float:
    """Agent i's utility for its own teammates."""
    return game.value(i, p.team_of(i))


def social_welfare(game: Game, p: Partition, normalized: bool = False) -> float:
    """
    Sum of all agents' utilities for their teammates.

    Args:
        game: Game whose utilities are summed (pass a normalized game for the
            normalized form)
        p: Partition to evaluate
        normalized: Divide by the number of agents

    Returns:
        Raw or per-agent welfare
    """
    if not validate_partition(game, p):
        raise InvalidPartitionError(f"Not a valid partition for this game: {p.describe()}")

    raw = math.fsum(game.value(i, team) for team in p.teams for i in team)
    return raw / game.n if normalized else raw


def envies(game: Game, p: Partition, i: int, j: int) -> bool:
    """True iff i strictly prefers j's teammates (j removed) to its own teammates."""
    own = team_value(game, p, i)
    other = game.value(i, (m for m in p.team_of(j) if m != j))
    return other > own


def envy_free(game: Game, p: Partition, i: int) -> bool:
    """True iff agent i envies nobody."""
    return not any(envies(game, p, i, j) for j in range(game.n) if j != i)


def envy_bounded_by_single(game: Game, p: Partition, i: int) -> bool:
    """
    True iff every team i envies stops being preferred once some single
    member (other than the agent i would replace) is removed from it.
    """
    row = game.rows[i]
    own = team_value(game, p, i)

    for team in p.teams:
        if i in team:
            continue
        for j in team:
            others = [m for m in team if m != j]
            value = math.fsum(row[m] for m in others)
            if value <= own:
                continue
            if not any(value - row[r] <= own for r in others):
                return False

    return True


def proportional(game: Game, p: Partition, i: int) -> bool:
    """True iff i's team is worth at least its total utility divided by the number of teams."""
    return team_value(game, p, i) >= game.total(i) / len(p.teams)


def _maximin_values(game: Game, p: Partition, agents: Sequence[int]) -> List[float]:
    """For each agent, the worst coalition it could land in by one swap under p."""
    values = []
    for i in agents:
        row = game.rows[i]
        worst = math.inf
        for team in p.teams:
            if i in team:
                worst = min(worst, math.fsum(row[m] for m in team if m != i))
            else:
                worst = min(worst, min(math.fsum(row[m] for m in team if m != j) for j in team))
        values.append(worst)
    return values


def maximin_shares(game: Game, limit: int = MAXIMIN_PARTITION_LIMIT) -> List[float]:
    """
    Maximin share of every agent, by exhaustive search over partitions.

    Args:
        game: Game to evaluate
        limit: Largest number of partitions the search may visit

    Returns:
        List of shares indexed by agent
    """
    total = count_partitions(game.n, game.k_min, game.k_max)
    if total > limit:
        raise CapacityExceededError(
            f"Maximin share needs {total} partitions, above the limit of {limit}"
        )

    agents = list(range(game.n))
    shares = [-math.inf] * game.n
    for p in enumerate_partitions(game.n, game.k_min, game.k_max):
        for i, value in enumerate(_maximin_values(game, p, agents)):
            if value > shares[i]:
                shares[i] = value
    return shares


def maximin_share(game: Game, i: int, limit: int = MAXIMIN_PARTITION_LIMIT) -> float:
    """
    The value of the worst coalition agent i could reach through a single
    swap (possibly with itself), under the partition that makes this worst
    case best.
    """
    total = count_partitions(game.n, game.k_min, game.k_max)
    if total > limit:
        raise CapacityExceededError(
            f"Maximin share needs {total} partitions, above the limit of {limit}"
        )

    share = -math.inf
    for p in enumerate_partitions(game.n, game.k_min, game.k_max):
        share = max(share, _maximin_values(game, p, [i])[0])
    return share


def maximin_guarantee_satisfied(game: Game, p: Partition,
                                shares: Optional[Sequence[float]] = None,
                                limit: int = MAXIMIN_PARTITION_LIMIT) -> float:
    """Fraction of agents whose team is worth at least their maximin share."""
    if shares is None:
        shares = maximin_shares(game, limit)
    satisfied = sum(1 for i in range(game.n) if team_value(game, p, i) >= shares[i])
    return satisfied / game.n


def cosine_similarity(game: Game) -> float:
    """
    Mean cosine similarity over all unordered pairs of distinct agents.

    Each pair is compared on their values for the remaining n-2 agents. A
    pair where either reduced vector is zero contributes 0.
    """
    n = game.n
    if n < 3:
        raise InvalidBoundsError(f"Cosine similarity needs at least 3 agents, got {n}")

    u = game.utilities
    total = 0.0
    degenerate = 0
    for i in range(n):
        for j in range(i + 1, n):
            mask = np.ones(n, dtype=bool)
            mask[[i, j]] = False
            a, b = u[i, mask], u[j, mask]
            norm = float(np.linalg.norm(a) * np.linalg.norm(b))
            if norm == 0.0:
                degenerate += 1
                continue
            total += float(a @ b) / norm

    if degenerate:
        logger.warning(f"{degenerate} agent pairs have a zero reduced utility vector; counted as 0")

    return total / (n * (n - 1) / 2)


def preference_ranks(game: Game) -> np.ndarray:
    """
    ranks[i, j] is the rank of j in i's preferences over the other agents
    (1 = best, ties share their average rank). The diagonal is NaN.
    """
    n = game.n
    ranks = np.full((n, n), np.nan)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        ranks[i, others] = rankdata(-game.utilities[i, others], method="average")
    return ranks


def popularity(game: Game) -> np.ndarray:
    """Mean rank each agent receives from all other agents (lower is more popular)."""
    return np.nanmean(preference_ranks(game), axis=0)


@dataclass
class AgentOutcome:
    """What one agent received from one mechanism run."""

    agent: int
    utility: float
    utility_fraction: float
    serial_index: int
    mean_teammate_rank: float
    popularity: float


def per_agent_outcomes(game: Game, p: Partition, order: SerialOrder) -> List[AgentOutcome]:
    """
    Per-agent records: share of total utility captured, serial index, mean
    rank of teammates in the agent's own preferences, and the mean rank the
    agent receives from everyone else.
    """
    if not validate_partition(game, p):
        raise InvalidPartitionError(f"Not a valid partition for this game: {p.describe()}")

    ranks = preference_ranks(game)
    received = np.nanmean(ranks, axis=0)
    positions = order.positions()

    outcomes = []
    for i in range(game.n):
        teammates = p.teammates(i)
        utility = game.value(i, teammates)
        total = game.total(i)
        outcomes.append(AgentOutcome(
            agent=i,
            utility=utility,
            utility_fraction=utility / total if total > 0 else 0.0,
            serial_index=positions[i],
            mean_teammate_rank=float(np.mean(ranks[i, list(teammates)])) if teammates else float("nan"),
            popularity=float(received[i]),
        ))
    return outcomes


def pareto_dominates(game: Game, q: Partition, p: Partition) -> bool:
    """True iff every agent weakly prefers q to p and at least one strictly."""
    strict = False
    for i in range(game.n):
        a, b = team_value(game, q, i), team_value(game, p, i)
        if a < b:
            return False
        if a > b:
            strict = True
    return strict


def find_pareto_improvement(game: Game, p: Partition,
                            limit: int = MAXIMIN_PARTITION_LIMIT) -> Optional[Partition]:
    """First feasible partition (in canonical order) that Pareto-dominates p, if any."""
    total = count_partitions(game.n, game.k_min, game.k_max)
    if total > limit:
        raise CapacityExceededError(
            f"Pareto check needs {total} partitions, above the limit of {limit}"
        )
    for q in enumerate_partitions(game.n, game.k_min, game.k_max):
        if pareto_dominates(game, q, p):
            return q
    return None


@dataclass
class MetricsReport:
    """Welfare and fairness of one mechanism run."""

    social_welfare: float
    raw_welfare: float
    envy_free_fraction: float
    bounded_envy_fraction: float
    proportional_fraction: float
    maximin_satisfied_fraction: Optional[float] = None
    per_agent: List[AgentOutcome] = field(default_factory=list)

    def to_row(self) -> Dict[str, Optional[float]]:
        """Flat record in METRICS_COLUMNS order."""
        values = asdict(self)
        return {column: values[column] for column in METRICS_COLUMNS}


def evaluate(game: Game, p: Partition, order: SerialOrder,
             normalized_game: Optional[Game] = None,
             maximin: Optional[Sequence[float]] = None) -> MetricsReport:
    """
    Compute the full metrics report for one partition.

    Args:
        game: True preferences
        p: Partition produced by a mechanism
        order: Serial order the mechanism used
        normalized_game: Normalized copy of game (computed when omitted)
        maximin: Precomputed maximin shares; the maximin fraction is left
            empty without them

    Returns:
        MetricsReport
    """
    if normalized_game is None:
        normalized_game = normalize(game, strict=False)

    n = game.n
    envy_free_count = sum(1 for i in range(n) if envy_free(game, p, i))
    bounded_count = sum(1 for i in range(n) if envy_bounded_by_single(game, p, i))
    proportional_count = sum(1 for i in range(n) if proportional(game, p, i))

    return MetricsReport(
        social_welfare=social_welfare(normalized_game, p, normalized=True),
        raw_welfare=social_welfare(game, p),
        envy_free_fraction=envy_free_count / n,
        bounded_envy_fraction=bounded_count / n,
        proportional_fraction=proportional_count / n,
        maximin_satisfied_fraction=(maximin_guarantee_satisfied(game, p, maximin)
                                    if maximin is not None else None),
        per_agent=per_agent_outcomes(normalized_game, p, order),
    )
