"""
Draft-style team formation mechanisms and the mechanism registry.

Every mechanism takes reported preferences and a serial order and returns a
partition whose team sizes follow the game's size schedule. Ties between
equally good choices go to the smallest agent (or team) index.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set

import numpy as np

from .errors import TeamFormError
from .model import Game, Partition, SerialOrder

logger = logging.getLogger(__name__)

Mechanism = Callable[..., Partition]


@dataclass
class DraftState:
    """
    A partially built partition.

    Team t holds at most ``schedule[t]`` agents; its first member is its
    captain.
    """

    schedule: List[int]
    order: SerialOrder
    teams: List[List[int]] = field(default_factory=list)
    unassigned: Set[int] = field(default_factory=set)
    cursor: int = 0

    @classmethod
    def start(cls, game: Game, order: SerialOrder) -> "DraftState":
        if len(order) != game.n:
            raise TeamFormError(f"Serial order covers {len(order)} agents, game has {game.n}")
        return cls(schedule=game.schedule, order=order, unassigned=set(range(game.n)))

    def vacancies(self, t: int) -> int:
        return self.schedule[t] - len(self.teams[t])

    def team_index(self, i: int) -> Optional[int]:
        for t, team in enumerate(self.teams):
            if i in team:
                return t
        return None

    def open_team(self, captain: int) -> int:
        self.teams.append([captain])
        self.unassigned.discard(captain)
        return len(self.teams) - 1

    def add(self, t: int, i: int) -> None:
        self.teams[t].append(i)
        self.unassigned.discard(i)

    def partition(self) -> Partition:
        return Partition.of(self.teams)


def _favorite(game: Game, i: int, candidates: Set[int]) -> int:
    """Highest-valued candidate for agent i, smallest index on ties."""
    row = game.rows[i]
    return min(candidates, key=lambda j: (-row[j], j))


def _favorites(game: Game, i: int, candidates: Set[int], count: int) -> List[int]:
    row = game.rows[i]
    return sorted(candidates, key=lambda j: (-row[j], j))[:count]


def rsd(game: Game, order: SerialOrder, rng: Optional[np.random.Generator] = None) -> Partition:
    """
    Random serial dictatorship.

    Each agent in order that is still unassigned takes the largest team size
    left in the schedule and fills it with its favorite unassigned agents.
    """
    state = DraftState.start(game, order)
    sizes = sorted(state.schedule, reverse=True)

    for dictator in order:
        if dictator not in state.unassigned:
            continue
        size = sizes.pop(0)
        state.unassigned.discard(dictator)
        chosen = _favorites(game, dictator, state.unassigned, size - 1)
        state.teams.append([dictator] + chosen)
        state.unassigned.difference_update(chosen)
        logger.debug(f"RSD: {game.label(dictator)} takes {[game.label(j) for j in chosen]}")

    return state.partition()


def hbs_draft(game: Game, order: SerialOrder, rng: Optional[np.random.Generator] = None) -> Partition:
    """
    Serpentine captain draft.

    The first T agents in order captain the T scheduled teams. Captains then
    pick their favorite unassigned agent in rounds that alternate between
    forward and reverse captain order, skipping full teams.
    """
    state = DraftState.start(game, order)
    captains = list(order)[:len(state.schedule)]
    for captain in captains:
        state.open_team(captain)

    forward = list(range(len(captains)))
    rounds = 0
    while state.unassigned:
        sequence = forward if rounds % 2 == 0 else forward[::-1]
        for t in sequence:
            if not state.unassigned:
                break
            if state.vacancies(t) == 0:
                continue
            pick = _favorite(game, captains[t], state.unassigned)
            state.add(t, pick)
            logger.debug(f"HBS: captain {game.label(captains[t])} picks {game.label(pick)}")
        rounds += 1

    return state.partition()


def incomplete_team_value(game: Game, i: int, team: Sequence[int], vacancies: int,
                          unassigned: Set[int]) -> float:
    """
    Expected value to agent i of joining a team that still has ``vacancies``
    open places (counted before i joins).

    The places left after i joins are valued at i's mean utility over the
    other unassigned agents.
    """
    row = game.rows[i]
    current = math.fsum(row[j] for j in team)
    if vacancies <= 1:
        return current
    others = [row[j] for j in sorted(unassigned) if j != i]
    mean = math.fsum(others) / len(others) if others else 0.0
    return current + (vacancies - 1) * mean


def opop_draft(game: Game, order: SerialOrder, rng: Optional[np.random.Generator] = None) -> Partition:
    """
    One-player-one-pick draft.

    The first T agents in order are captains. Walking the whole order once,
    an agent already on a team with an open place picks its favorite
    unassigned agent; an unassigned agent joins the incomplete team it values
    most and, if that team still has room, picks one agent to join it.
    """
    state = DraftState.start(game, order)
    for captain in list(order)[:len(state.schedule)]:
        state.open_team(captain)

    for position, agent in enumerate(order):
        state.cursor = position
        if not state.unassigned:
            break

        if agent in state.unassigned:
            incomplete = [t for t in range(len(state.teams)) if state.vacancies(t) > 0]
            t = max(incomplete, key=lambda s: (incomplete_team_value(
                game, agent, state.teams[s], state.vacancies(s), state.unassigned), -s))
            state.add(t, agent)
            logger.debug(f"OPOP: {game.label(agent)} joins team {t}")
        else:
            t = state.team_index(agent)

        if state.vacancies(t) > 0 and state.unassigned:
            pick = _favorite(game, agent, state.unassigned)
            state.add(t, pick)
            logger.debug(f"OPOP: {game.label(agent)} picks {game.label(pick)}")

    # Agents left over when every turn is spent fill the open places in index order
    for i in sorted(state.unassigned):
        t = next(t for t in range(len(state.teams)) if state.vacancies(t) > 0)
        state.add(t, i)

    return state.partition()


def _aceei(game: Game, order: SerialOrder, rng: Optional[np.random.Generator] = None,
           **options) -> Partition:
    from .aceei import aceei_tf
    return aceei_tf(game, order, rng if rng is not None else np.random.default_rng(), **options)


def _max_welfare(game: Game, order: SerialOrder, rng: Optional[np.random.Generator] = None,
                 **options) -> Partition:
    from .optimizer import max_welfare
    partition, _ = max_welfare(game, **options)
    return partition


MECHANISMS: Dict[str, Mechanism] = {
    "rsd": rsd,
    "hbs": hbs_draft,
    "opop": opop_draft,
    "aceei": _aceei,
    "maxwelfare": _max_welfare,
}

# Mechanisms that take no random source and no tuning options
ORDER_ONLY = {"rsd", "hbs", "opop"}


def run_mechanism(name: str, game: Game, order: SerialOrder, seed: Optional[int] = None,
                  **options) -> Partition:
    """
    Run a registered mechanism by name.

    Args:
        name: One of MECHANISMS
        game: Reported preferences
        order: Serial order
        seed: Seed for the mechanism's own random source (budgets)
        **options: Passed to mechanisms that accept tuning parameters

    Returns:
        The resulting partition
    """
    if name not in MECHANISMS:
        raise TeamFormError(f"Unknown mechanism '{name}', expected one of {', '.join(MECHANISMS)}")
    if name in ORDER_ONLY:
        return MECHANISMS[name](game, order)
    return MECHANISMS[name](game, order, np.random.default_rng(seed), **options)
