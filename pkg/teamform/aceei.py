"""
Approximate competitive equilibrium from (near-)equal incomes for team formation.

Agents receive near-equal budgets. Each round, a price search looks for
prices on the remaining agents under which demands approximately clear;
then the next agent in serial order buys its favorite affordable team.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from .model import Game, Partition, SerialOrder, legal_team_sizes, remove_size

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.01
DEFAULT_TABU_ITERS = 20
GRADIENT_STEPS = (10.0, 5.0, 1.0, 0.5, 0.1)
UNILATERAL_STEPS = (1.0, 0.5, 0.1, 0.05, 0.001)
SEARCH_METHODS = ("tabu", "tatonnement")

_TOL = 1e-12


@dataclass(frozen=True)
class BudgetVector:
    """Per-agent budgets, all distinct and in [1, b_bar)."""

    b: Tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def b_bar(self) -> float:
        return 1.0 + 1.0 / (2 * self.n)

    @property
    def minimum(self) -> float:
        return min(self.b)

    def __getitem__(self, i: int) -> float:
        return self.b[i]


@dataclass(frozen=True)
class PriceState:
    """
    Auxiliary prices on the remaining agents.

    ``aux[k]`` belongs to agent ``remaining[k]``; the prices agents actually
    face are the auxiliary prices truncated to [0, b_bar].
    """

    remaining: Tuple[int, ...]
    aux: Tuple[float, ...]
    b_bar: float
    epsilon: float = DEFAULT_EPSILON

    @property
    def prices(self) -> np.ndarray:
        return np.clip(np.asarray(self.aux, dtype=float), 0.0, self.b_bar)

    def price_map(self) -> Dict[int, float]:
        return dict(zip(self.remaining, self.prices.tolist()))

    def key(self) -> Tuple[float, ...]:
        return tuple(round(p, 12) for p in self.prices.tolist())

    @classmethod
    def uniform(cls, remaining: Sequence[int], price: float, b_bar: float,
                epsilon: float = DEFAULT_EPSILON) -> "PriceState":
        remaining = tuple(sorted(remaining))
        return cls(remaining, tuple([price] * len(remaining)), b_bar, epsilon)

    def with_prices(self, prices: Sequence[float]) -> "PriceState":
        return replace(self, aux=tuple(float(p) for p in prices))

    def restrict(self, remaining: Sequence[int]) -> "PriceState":
        """Keep only the given agents' prices."""
        lookup = dict(zip(self.remaining, self.aux))
        remaining = tuple(sorted(remaining))
        return replace(self, remaining=remaining, aux=tuple(lookup[j] for j in remaining))


@dataclass
class DemandProfile:
    """
    Demands of the remaining agents and the excess-demand statistics.

    D[j] counts the agents demanding j whom j does not demand; U[j] is 1 iff
    nobody demands j.
    """

    remaining: Tuple[int, ...]
    demand: Dict[int, Tuple[int, ...]]
    D: np.ndarray
    U: np.ndarray

    @classmethod
    def from_demands(cls, remaining: Sequence[int], demand: Dict[int, Tuple[int, ...]]) -> "DemandProfile":
        remaining = tuple(remaining)
        position = {j: k for k, j in enumerate(remaining)}
        D = np.zeros(len(remaining), dtype=int)
        demanded = np.zeros(len(remaining), dtype=bool)
        for i, bundle in demand.items():
            for j in bundle:
                demanded[position[j]] = True
                if i not in demand[j]:
                    D[position[j]] += 1
        U = (~demanded).astype(int)
        return cls(remaining, demand, D, U)


def assign_budgets(n: int, rng: np.random.Generator) -> BudgetVector:
    """Draw n distinct budgets uniformly from [1, 1 + 1/(2n))."""
    b_bar = 1.0 + 1.0 / (2 * n)
    budgets = rng.uniform(1.0, b_bar, size=n)
    while len(set(budgets.tolist())) < n:
        _, first = np.unique(budgets, return_index=True)
        duplicate = np.setdiff1d(np.arange(n), first)
        budgets[duplicate] = rng.uniform(1.0, b_bar, size=len(duplicate))
    return BudgetVector(tuple(budgets.tolist()))


def _consecutive_runs(sizes: Sequence[int]) -> List[Tuple[int, int]]:
    runs: List[Tuple[int, int]] = []
    for s in sorted(set(sizes)):
        if runs and runs[-1][1] == s - 1:
            runs[-1] = (runs[-1][0], s)
        else:
            runs.append((s, s))
    return runs


class _BundleSearch:
    """
    Branch and bound for one cardinality-constrained knapsack.

    Candidates are branched in index order, include before exclude, and the
    incumbent only changes on strict improvement, so among equally valued
    bundles the lexicographically smallest is kept.
    """

    def __init__(self, candidates: Sequence[int], utility: Sequence[float],
                 price: Sequence[float], budget: float):
        self.candidates = list(candidates)
        self.utility = list(utility)
        self.price = list(price)
        self.budget = budget
        m = len(self.candidates)
        # Suffix views for bounding: positions sorted by utility, prices ascending
        self.by_utility = [sorted(range(k, m), key=lambda q: -self.utility[q]) for k in range(m + 1)]
        self.cheapest = [sorted(self.price[k:]) for k in range(m + 1)]

    def solve(self, count_min: int, count_max: int) -> Tuple[float, Optional[Tuple[int, ...]]]:
        self.count_min = count_min
        self.count_max = count_max
        self.best_value = -math.inf
        self.best: Optional[Tuple[int, ...]] = None
        self._branch(0, [], 0.0, 0.0)
        return self.best_value, self.best

    def _bound(self, k: int, slots: int, left: float) -> float:
        total = 0.0
        taken = 0
        for q in self.by_utility[k]:
            if taken == slots:
                break
            if self.price[q] <= left + _TOL:
                total += self.utility[q]
                taken += 1
        return total

    def _branch(self, k: int, chosen: List[int], value: float, cost: float) -> None:
        count = len(chosen)
        if count >= self.count_min and value > self.best_value + _TOL:
            self.best_value = value
            self.best = tuple(self.candidates[q] for q in chosen)
        if count == self.count_max or k == len(self.candidates):
            return

        left = self.budget - cost
        need = self.count_min - count
        if need > 0:
            cheapest = self.cheapest[k]
            if len(cheapest) < need or math.fsum(cheapest[:need]) > left + _TOL:
                return
        if value + self._bound(k, self.count_max - count, left) <= self.best_value + _TOL:
            return

        if self.price[k] <= left + _TOL:
            chosen.append(k)
            self._branch(k + 1, chosen, value + self.utility[k], cost + self.price[k])
            chosen.pop()
        self._branch(k + 1, chosen, value, cost)


def demand(game: Game, i: int, remaining: Sequence[int], prices: Mapping[int, float],
           budget: float, legal_sizes: Sequence[int]) -> Tuple[int, ...]:
    """
    Agent i's favorite affordable bundle of other remaining agents.

    Legal team sizes are split into runs of consecutive integers; each run is
    one knapsack with a cardinality window. The best bundle over all runs is
    returned, or the empty bundle if no legal-size bundle is affordable.

    Args:
        game: Reported preferences
        i: Demanding agent
        remaining: Agents still in the market (i included)
        prices: Price of each remaining agent
        budget: Agent i's budget
        legal_sizes: Team sizes (counting i) the bundle may complete

    Returns:
        Sorted tuple of demanded agents
    """
    candidates = sorted(j for j in remaining if j != i)
    row = game.rows[i]
    search = _BundleSearch(candidates, [row[j] for j in candidates],
                           [prices[j] for j in candidates], budget)

    best_value = -math.inf
    best: Optional[Tuple[int, ...]] = None
    for lo, hi in _consecutive_runs(legal_sizes):
        count_min, count_max = lo - 1, min(hi - 1, len(candidates))
        if count_min > count_max:
            continue
        value, bundle = search.solve(count_min, count_max)
        if bundle is None:
            continue
        if value > best_value + _TOL or (abs(value - best_value) <= _TOL and bundle < best):
            best_value, best = value, bundle

    return best if best is not None else ()


def excess_demand(state: PriceState, profile: DemandProfile) -> np.ndarray:
    """z_j = (1 + eps - (eps / b_bar) p_j) D_j - U_j."""
    scale = 1.0 + state.epsilon - (state.epsilon / state.b_bar) * state.prices
    return scale * profile.D - profile.U


def clearing_error(game: Game, state: PriceState, budgets: BudgetVector,
                   legal_sizes: Sequence[int]) -> Tuple[DemandProfile, np.ndarray]:
    """Demands at the current prices and the price update error z."""
    prices = state.price_map()
    demands = {i: demand(game, i, state.remaining, prices, budgets[i], legal_sizes)
               for i in state.remaining}
    profile = DemandProfile.from_demands(state.remaining, demands)
    return profile, excess_demand(state, profile)


def price_update(state: PriceState, profile: DemandProfile) -> PriceState:
    """One step of the admissible update f(p~) = t(p~) + z(t(p~)) / |N'|."""
    z = excess_demand(state, profile)
    return state.with_prices(state.prices + z / len(state.remaining))


def clearing_norm(z: np.ndarray, prices: np.ndarray) -> float:
    """L2 norm of z, ignoring under-demand of agents already priced at 0."""
    relaxed = np.where((prices <= 0.0) & (z < 0.0), 0.0, z)
    return float(np.linalg.norm(relaxed))


def stranded_agents(profile: DemandProfile, prices: np.ndarray) -> int:
    """
    Number of agents with a positive price who can afford no legal bundle.

    Such an agent can only end up on a team through the price-free fallback,
    so no relaxed clearing exists while it is priced above 0.
    """
    empty = np.array([not profile.demand[i] for i in profile.remaining], dtype=bool)
    return int(np.count_nonzero(empty & (prices > 0.0)))


def is_exact_clearing(profile: DemandProfile, legal_sizes: Sequence[int]) -> bool:
    """True iff every agent demands a legal team and the demanded teams agree."""
    legal = set(legal_sizes)
    for i, bundle in profile.demand.items():
        team = set(bundle) | {i}
        if len(team) not in legal:
            return False
        for j in bundle:
            if set(profile.demand[j]) | {j} != team:
                return False
    return True


def is_relaxed_clearing(profile: DemandProfile, prices: np.ndarray) -> bool:
    """
    True iff all demand is reciprocated and every agent nobody demands is
    priced at 0.
    """
    if np.any(profile.D > 0):
        return False
    return bool(np.all((profile.U == 0) | (prices <= 0.0)))


def initial_prices(remaining: Sequence[int], budgets: BudgetVector, k_max: int,
                   epsilon: float = DEFAULT_EPSILON) -> PriceState:
    """Every agent priced at the smallest budget over the largest legal demand size."""
    return PriceState.uniform(remaining, budgets.minimum / max(k_max - 1, 1), budgets.b_bar, epsilon)


def price_scale(budgets: BudgetVector) -> float:
    """Unit of the search steps: one hundredth of the smallest budget."""
    return budgets.minimum / 100.0


class Evaluation(NamedTuple):
    profile: DemandProfile
    z: np.ndarray
    error: float
    stranded: int

    @property
    def rank(self) -> Tuple[int, float]:
        return self.stranded, self.error


class PriceSearch:
    """
    Tabu search over price vectors for approximate market clearing.

    Each iteration expands the current point into gradient neighbors (moves
    along z of several lengths) and unilateral neighbors (one agent's price
    changed), steps to the best neighbor not visited before, and remembers
    the best point seen. Points are ranked by stranded agents first and
    relaxed clearing error second.
    """

    def __init__(self, game: Game, budgets: BudgetVector, legal_sizes: Sequence[int],
                 iterations: int = DEFAULT_TABU_ITERS,
                 sigma: Optional[float] = None,
                 logger: Optional[logging.Logger] = None):
        self.game = game
        self.budgets = budgets
        self.legal_sizes = list(legal_sizes)
        self.iterations = iterations
        self.sigma = sigma if sigma is not None else price_scale(budgets)
        self.logger = logger or logging.getLogger(__name__)
        self.demand_calls = 0
        self._cache: Dict[Tuple[Tuple[int, ...], Tuple[float, ...]], Evaluation] = {}

    def evaluate(self, state: PriceState, parent: Optional[PriceState] = None) -> Evaluation:
        """
        Demands, z, relaxed error and stranded count at a state, cached by
        price vector. ``parent`` is a state evaluated before; demands it
        shares with ``state`` are reused instead of recomputed.
        """
        key = (state.remaining, state.key())
        if key not in self._cache:
            self._cache[key] = self._evaluate(state, parent)
        return self._cache[key]

    def _evaluate(self, state: PriceState, parent: Optional[PriceState]) -> Evaluation:
        known: Dict[int, Tuple[int, ...]] = {}
        if parent is not None and parent.remaining == state.remaining:
            changed = np.flatnonzero(state.prices != parent.prices)
            if len(changed) == 1 and state.prices[changed[0]] > parent.prices[changed[0]]:
                # A single price rise keeps every bundle without the raised agent optimal
                raised = state.remaining[changed[0]]
                known = {i: bundle for i, bundle in self.evaluate(parent).profile.demand.items()
                         if raised not in bundle}

        prices = state.price_map()
        demands = {}
        for i in state.remaining:
            if i in known:
                demands[i] = known[i]
            else:
                demands[i] = demand(self.game, i, state.remaining, prices, self.budgets[i], self.legal_sizes)
                self.demand_calls += 1

        profile = DemandProfile.from_demands(state.remaining, demands)
        z = excess_demand(state, profile)
        return Evaluation(profile, z, clearing_norm(z, state.prices), stranded_agents(profile, state.prices))

    def neighbors(self, state: PriceState, z: np.ndarray) -> List[PriceState]:
        p = state.prices
        b_bar = state.b_bar
        result = []

        norm = float(np.linalg.norm(z))
        if norm > 0:
            direction = z / norm
            for step in GRADIENT_STEPS:
                result.append(state.with_prices(np.clip(p + step * self.sigma * direction, 0.0, b_bar)))

        for k in range(len(p)):
            if z[k] <= 0:
                if p[k] > 0:
                    moved = p.copy()
                    moved[k] = 0.0
                    result.append(state.with_prices(moved))
                continue
            for step in UNILATERAL_STEPS:
                moved = p.copy()
                moved[k] = min(p[k] + step * self.sigma, b_bar)
                result.append(state.with_prices(moved))

        return result

    def run(self, start: PriceState) -> PriceState:
        """Search from ``start`` and return the best state visited."""
        start = start.with_prices(start.prices)
        current = start
        evaluation = self.evaluate(current)
        best, best_rank = current, evaluation.rank
        tabu: Set[Tuple[float, ...]] = {current.key()}

        for iteration in range(self.iterations):
            if best_rank[0] == 0 and best_rank[1] <= _TOL:
                break

            candidates = [s for s in self.neighbors(current, evaluation.z) if s.key() not in tabu]
            if not candidates:
                self.logger.debug(f"Price search: no unvisited neighbors after {iteration} iterations")
                break

            scored = [(self.evaluate(s, current).rank, k, s) for k, s in enumerate(candidates)]
            rank, _, current = min(scored, key=lambda item: (item[0], item[1]))
            evaluation = self.evaluate(current)
            tabu.add(current.key())

            if rank < best_rank:
                best, best_rank = current, rank
            self.logger.debug(f"Price search iteration {iteration + 1}: error {rank[1]:.4f}, "
                              f"stranded {rank[0]}, best {best_rank[1]:.4f}")

        return best


def price_search(game: Game, budgets: BudgetVector, legal_sizes: Sequence[int],
                 start: PriceState, iterations: int = DEFAULT_TABU_ITERS) -> PriceState:
    """Tabu price search from ``start``; see PriceSearch."""
    return PriceSearch(game, budgets, legal_sizes, iterations).run(start)


def tatonnement(game: Game, budgets: BudgetVector, legal_sizes: Sequence[int],
                start: PriceState, iterations: int = DEFAULT_TABU_ITERS) -> PriceState:
    """
    Iterate the price update on its own output and return the visited state
    with the fewest stranded agents and, among those, the smallest relaxed
    clearing error.
    """
    state = start
    best, best_rank = None, (math.inf, math.inf)
    for _ in range(iterations + 1):
        profile, z = clearing_error(game, state, budgets, legal_sizes)
        rank = (stranded_agents(profile, state.prices), clearing_norm(z, state.prices))
        if rank < best_rank:
            best, best_rank = state, rank
        if rank[0] == 0 and rank[1] <= _TOL:
            break
        state = price_update(state, profile)
    return best


def aceei_tf(game: Game, order: SerialOrder, rng: np.random.Generator,
             epsilon: float = DEFAULT_EPSILON, tabu_iters: int = DEFAULT_TABU_ITERS,
             search: str = "tabu", budgets: Optional[BudgetVector] = None) -> Partition:
    """
    Assign teams through repeated approximate market clearing.

    Args:
        game: Reported preferences
        order: Serial order in which agents buy their teams
        rng: Source for the budget draw
        epsilon: Price update parameter
        tabu_iters: Iterations of each price search
        search: "tabu" or "tatonnement"
        budgets: Fixed budgets instead of a fresh draw

    Returns:
        The resulting partition
    """
    if search not in SEARCH_METHODS:
        raise ValueError(f"Unknown price search '{search}', expected one of {', '.join(SEARCH_METHODS)}")

    n = game.n
    if budgets is None:
        budgets = assign_budgets(n, rng)
    schedule = game.schedule
    remaining: Set[int] = set(range(n))
    state = initial_prices(range(n), budgets, game.k_max, epsilon)
    teams: List[Tuple[int, ...]] = []

    for agent in order:
        if agent not in remaining:
            continue

        # Sizes that leave a coverable rest, restricted to the sizes still scheduled
        legal_sizes = [s for s in legal_team_sizes(len(remaining), game.k_min, game.k_max) if s in schedule]
        if len(schedule) == 1:
            bundle = tuple(sorted(remaining - {agent}))
        else:
            state = state.restrict(sorted(remaining))
            if len(remaining) >= 2:
                if search == "tabu":
                    state = PriceSearch(game, budgets, legal_sizes, tabu_iters).run(state)
                else:
                    state = tatonnement(game, budgets, legal_sizes, state, tabu_iters)

            bundle = demand(game, agent, state.remaining, state.price_map(), budgets[agent], legal_sizes)
            if not bundle and 1 not in legal_sizes:
                free = {j: 0.0 for j in state.remaining}
                bundle = demand(game, agent, state.remaining, free, math.inf, legal_sizes)

        team = (agent,) + bundle
        schedule = remove_size(schedule, len(team))
        remaining.difference_update(team)
        teams.append(team)
        logger.debug(f"A-CEEI-TF: {game.label(agent)} buys {[game.label(j) for j in bundle]}")

    return Partition.of(teams)
