"""
Exact social-welfare maximization by branch and bound.

Partitions are built in canonical order: the smallest unplaced agent always
opens the next team, and teams are filled in increasing member order. Team
sizes follow the game's size schedule. The best completion of every set of
unplaced agents is memoized, so each such set is solved once however many
ways lead to it.
"""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import CapacityExceededError
from .mechanisms import rsd
from .metrics import social_welfare
from .model import Game, Partition, SerialOrder, remove_size

logger = logging.getLogger(__name__)

DEFAULT_MAX_NODES = 50_000_000

_TOL = 1e-12

Schedule = Tuple[int, ...]


@dataclass
class WelfareBound:
    """Incumbent of a welfare search and how it was bounded."""

    incumbent: Optional[Partition]
    incumbent_value: float
    nodes: int = 0
    states: int = 0
    upper_bound_fn: str = ("exact value of an already solved set of unplaced agents, otherwise the smaller of "
                           "the unplaced agents' top k_max - 1 utilities and half their top k_max - 1 pair sums")


class WelfareSearch:
    """Branch and bound over schedule-consistent partitions, memoized on the unplaced set."""

    def __init__(self, game: Game, max_nodes: int = DEFAULT_MAX_NODES):
        self.game = game
        self.max_nodes = max_nodes
        self.u = np.asarray(game.utilities, dtype=float)
        self.w = self.u + self.u.T
        self._pair = self.w.tolist()
        self._solved: Dict[Tuple[int, Schedule], Tuple[float, Tuple[int, ...]]] = {}
        self._team_values: Dict[int, float] = {}
        self._bounds: Dict[Tuple[int, int], float] = {}
        self._root: Optional[Tuple[float, Tuple[int, ...]]] = None

    @staticmethod
    def _members(mask: int) -> List[int]:
        return [a for a in range(mask.bit_length()) if mask >> a & 1]

    def _team_value(self, team: Tuple[int, ...], mask: int) -> float:
        if mask not in self._team_values:
            self._team_values[mask] = math.fsum(self._pair[a][b] for a, b in combinations(team, 2))
        return self._team_values[mask]

    def _optimistic(self, mask: int, slots: int) -> float:
        """Most the given agents could still gain from each other with at most ``slots`` teammates each."""
        key = (mask, slots)
        if key not in self._bounds:
            agents = self._members(mask)
            take = min(slots, len(agents) - 1)
            if take <= 0:
                self._bounds[key] = 0.0
            else:
                own = np.sort(self.u[np.ix_(agents, agents)], axis=1)[:, -take:].sum()
                pairs = np.sort(self.w[np.ix_(agents, agents)], axis=1)[:, -take:].sum() / 2.0
                self._bounds[key] = float(min(own, pairs))
        return self._bounds[key]

    def _upper(self, mask: int, schedule: Schedule) -> float:
        solved = self._solved.get((mask, schedule))
        if solved is not None:
            return solved[0]
        if len(schedule) == 1:
            return self._team_value(tuple(self._members(mask)), mask)
        return self._optimistic(mask, max(schedule) - 1)

    def run(self) -> WelfareBound:
        seed = rsd(self.game, SerialOrder.identity(self.game.n))
        self.result = WelfareBound(None, social_welfare(self.game, seed))

        everyone = (1 << self.game.n) - 1
        schedule = tuple(self.game.schedule)
        # Seeded slightly below the greedy value so an equally good canonical partition still wins
        value = self._solve(everyone, schedule, self.result.incumbent_value - 1e-9)

        if value == -math.inf:
            self.result.incumbent = seed
        else:
            self.result.incumbent = self._partition(everyone, schedule)
        self.result.incumbent_value = social_welfare(self.game, self.result.incumbent)
        self.result.states = len(self._solved)
        return self.result

    def _tick(self) -> None:
        self.result.nodes += 1
        if self.result.nodes > self.max_nodes:
            raise CapacityExceededError(
                f"Welfare search exceeded {self.max_nodes} nodes for n={self.game.n}"
            )

    def _solve(self, mask: int, schedule: Schedule, floor: float = -math.inf) -> float:
        """
        Best welfare of the agents in ``mask`` split by ``schedule``.

        Only completions strictly above ``floor`` are searched; with the
        default floor the result is exact and memoized.
        """
        key = (mask, schedule)
        if key in self._solved:
            return self._solved[key][0]

        agents = self._members(mask)
        if len(schedule) == 1:
            self._tick()
            value = self._team_value(tuple(agents), mask)
            self._solved[key] = (value, tuple(agents))
            return value

        first, rest = agents[0], agents[1:]
        best_value, best_team = floor, None
        for size in sorted(set(schedule)):
            left = tuple(remove_size(schedule, size))
            for others in combinations(rest, size - 1):
                self._tick()
                team = (first,) + others
                team_mask = 0
                for a in team:
                    team_mask |= 1 << a
                value = self._team_value(team, team_mask)
                remainder = mask & ~team_mask
                if value + self._upper(remainder, left) <= best_value + _TOL:
                    continue
                total = value + self._solve(remainder, left)
                if total > best_value + _TOL:
                    best_value, best_team = total, team

        if best_team is None:
            return -math.inf
        if floor == -math.inf:
            self._solved[key] = (best_value, best_team)
        else:
            self._root = (best_value, best_team)
        logger.debug(f"Welfare search: {len(agents)} agents solved at {best_value:.6f} after "
                     f"{self.result.nodes} nodes")
        return best_value

    def _partition(self, mask: int, schedule: Schedule) -> Partition:
        teams = []
        solved = self._solved.get((mask, schedule))
        _, team = solved if solved is not None else self._root
        while True:
            teams.append(team)
            team_mask = sum(1 << a for a in team)
            mask &= ~team_mask
            schedule = tuple(remove_size(schedule, len(team)))
            if not mask:
                break
            _, team = self._solved[(mask, schedule)]
        return Partition(tuple(teams))


def max_welfare(game: Game, max_nodes: int = DEFAULT_MAX_NODES) -> Tuple[Partition, float]:
    """
    A partition maximizing raw social welfare.

    Args:
        game: Game to optimize
        max_nodes: Search-node limit

    Returns:
        (partition, raw welfare); among optimal partitions the first in
        canonical order is returned
    """
    result = WelfareSearch(game, max_nodes).run()
    logger.info(f"Max welfare {result.incumbent_value:.4f} found in {result.nodes} nodes "
                f"over {result.states} solved subsets")
    return result.incumbent, result.incumbent_value
