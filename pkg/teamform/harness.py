"""
Incentive analysis: misreport generation, regret estimation and order sweeps.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import permutations
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import CannotDeviateError, CapacityExceededError
from .mechanisms import MECHANISMS, run_mechanism
from .model import Game, SerialOrder
from .utils.stats import mean_confidence_interval

logger = logging.getLogger(__name__)

DEFAULT_RANK_P = 0.5
SWEEP_MAX_AGENTS = 8


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent random source for one (seed, keys...) combination."""
    return np.random.default_rng([seed, *keys])


def mechanism_key(name: str) -> int:
    return list(MECHANISMS).index(name)


@dataclass
class DeviationReport:
    """One misreport: agent's row with some pairs of entries exchanged."""

    agent: int
    original_row: Tuple[float, ...]
    deviated_row: Tuple[float, ...]
    swaps: List[Tuple[int, int]] = field(default_factory=list)


def _rank_weights(m: int, p: float) -> np.ndarray:
    """Geometric weights over ranks 1..m, truncated and renormalized."""
    weights = p * (1.0 - p) ** np.arange(m)
    return weights / weights.sum()


def gen_deviation(row: Sequence[float], agent: int, rng: np.random.Generator,
                  rank_p: float = DEFAULT_RANK_P) -> DeviationReport:
    """
    Draw a misreport for ``agent`` by swapping pairs of its values.

    The number of swaps is 1 + Poisson(1). For each swap, the first entry is
    chosen by rank (better ranks more likely, truncated geometric) and its
    partner uniformly from the other entries.
    """
    original = tuple(float(v) for v in row)
    others = [j for j in range(len(original)) if j != agent]
    if len({original[j] for j in others}) < 2:
        raise CannotDeviateError(f"Agent {agent} values every other agent equally; no misreport changes its row")

    ranked = sorted(others, key=lambda j: (-original[j], j))
    weights = _rank_weights(len(ranked), rank_p)

    deviated = list(original)
    swaps = []
    for _ in range(1 + int(rng.poisson(1.0))):
        first = ranked[int(rng.choice(len(ranked), p=weights))]
        partners = [j for j in others if j != first]
        second = partners[int(rng.integers(len(partners)))]
        deviated[first], deviated[second] = deviated[second], deviated[first]
        swaps.append((first, second))

    return DeviationReport(agent, original, tuple(deviated), swaps)


def unique_deviations(row: Sequence[float], agent: int, count: int, rng: np.random.Generator,
                      rank_p: float = DEFAULT_RANK_P, max_attempts: Optional[int] = None) -> List[DeviationReport]:
    """
    Up to ``count`` distinct misreports, none equal to the truthful row.

    Fewer are returned, with a warning, when the attempt limit runs out.
    """
    truthful = tuple(float(v) for v in row)
    seen: Set[Tuple[float, ...]] = {truthful}
    reports: List[DeviationReport] = []
    limit = max_attempts if max_attempts is not None else 200 * count

    attempts = 0
    while len(reports) < count and attempts < limit:
        attempts += 1
        report = gen_deviation(row, agent, rng, rank_p)
        if report.deviated_row in seen:
            continue
        seen.add(report.deviated_row)
        reports.append(report)

    if len(reports) < count:
        logger.warning(f"Only {len(reports)} distinct misreports found for agent {agent} after {attempts} attempts")
    return reports


@dataclass
class RegretResult:
    """Regret of truthful reporting for one mechanism on one instance."""

    mechanism: str
    per_run: List[float]
    mean: float
    half_width: float
    best_gain: Dict[int, float] = field(default_factory=dict)


def _agent_gains(job) -> Tuple[int, List[float]]:
    """Normalized utility gains of every misreport of one agent (pool worker)."""
    game, name, order, mech_seed, agent, truthful_value, rows, options = job
    total = game.total(agent)
    gains = []
    for row in rows:
        partition = run_mechanism(name, game.with_row(agent, row), order, seed=mech_seed, **options)
        gains.append((game.value(agent, partition.team_of(agent)) - truthful_value) / total)
    return agent, gains


def regret_estimate(game: Game, mechanism: str, runs: int = 8, deviations_per_agent: int = 25,
                    seed: int = 0, rank_p: float = DEFAULT_RANK_P, workers: int = 1,
                    options: Optional[dict] = None) -> RegretResult:
    """
    Mean over runs of the largest gain any agent gets from a misreport.

    Each run draws a serial order (shared across mechanisms for the same
    seed), runs the mechanism truthfully, then reruns it once per misreport
    with only the deviator's row replaced. Gains are measured on the true
    preferences and divided by the deviator's total utility; the per-run
    maximum is floored at 0.

    Args:
        game: True preferences
        mechanism: Name in MECHANISMS
        runs: Number of serial orders
        deviations_per_agent: Misreports tried per agent and run
        seed: Base seed
        rank_p: Success probability of the rank distribution for swaps
        workers: Processes for the reruns (1 runs in-process)
        options: Mechanism tuning options

    Returns:
        RegretResult with a t-distribution 95% confidence interval
    """
    options = options or {}
    per_run: List[float] = []
    best_gain: Dict[int, float] = {}

    for run in range(runs):
        order = SerialOrder.random(game.n, stream(seed, run))
        mech_seed = [seed, run, mechanism_key(mechanism)]
        truthful = run_mechanism(mechanism, game, order, seed=mech_seed, **options)

        jobs = []
        for agent in range(game.n):
            if game.total(agent) <= 0:
                continue
            try:
                reports = unique_deviations(game.rows[agent], agent, deviations_per_agent,
                                            stream(seed, run, game.n + agent), rank_p)
            except CannotDeviateError as e:
                logger.debug(str(e))
                continue
            truthful_value = game.value(agent, truthful.team_of(agent))
            jobs.append((game, mechanism, order, mech_seed, agent, truthful_value,
                         [r.deviated_row for r in reports], options))

        if workers > 1 and len(jobs) > 1:
            with Pool(workers) as pool:
                results = pool.map(_agent_gains, jobs)
        else:
            results = [_agent_gains(job) for job in jobs]

        run_max = 0.0
        for agent, gains in results:
            if gains:
                best_gain[agent] = max(best_gain.get(agent, -math.inf), max(gains))
                run_max = max(run_max, max(gains))
        per_run.append(run_max)
        logger.debug(f"Regret {mechanism} run {run + 1}/{runs}: {run_max:.4f}")

    mean, half_width = mean_confidence_interval(per_run)
    return RegretResult(mechanism, per_run, mean, half_width, best_gain)


@dataclass
class SweepResult:
    """Truthful and misreported utility of one agent over every serial order."""

    orders: List[Tuple[int, ...]]
    truthful: List[float]
    deviated: List[float]

    @property
    def gains(self) -> np.ndarray:
        return np.asarray(self.deviated) - np.asarray(self.truthful)

    @property
    def better(self) -> int:
        return int(np.sum(self.gains > 1e-9))

    @property
    def worse(self) -> int:
        return int(np.sum(self.gains < -1e-9))

    @property
    def mean_gain(self) -> float:
        return float(self.gains.mean())

    def helping_orders(self) -> List[Tuple[int, ...]]:
        return [o for o, g in zip(self.orders, self.gains) if g > 1e-9]

    def hurting_orders(self) -> List[Tuple[int, ...]]:
        return [o for o, g in zip(self.orders, self.gains) if g < -1e-9]


def order_sweep(game: Game, mechanism: str, agent: int, misreport: Sequence[float],
                seed: int = 0, **options) -> SweepResult:
    """
    Run a mechanism over all n! serial orders, truthfully and with one
    agent's misreport, measuring that agent's true utility each time.
    """
    if game.n > SWEEP_MAX_AGENTS:
        raise CapacityExceededError(f"Order sweep over {game.n}! orders is limited to n <= {SWEEP_MAX_AGENTS}")

    lying = game.with_row(agent, misreport)
    result = SweepResult([], [], [])
    for order in permutations(range(game.n)):
        serial = SerialOrder(order)
        honest = run_mechanism(mechanism, game, serial, seed=seed, **options)
        dishonest = run_mechanism(mechanism, lying, serial, seed=seed, **options)
        result.orders.append(order)
        result.truthful.append(game.value(agent, honest.team_of(agent)))
        result.deviated.append(game.value(agent, dishonest.team_of(agent)))
    return result
