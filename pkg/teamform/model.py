"""
Problem-instance model: games, partitions, serial orders and size constraints.

Agents are 0-indexed integers everywhere; letters (A, B, ...) only appear
when instances are loaded from or printed for people.
"""

import csv
import logging
import math
import string
from itertools import combinations
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataParseError, DegeneratePreferencesError, InvalidBoundsError

logger = logging.getLogger(__name__)


def _check_bounds(n: int, k_min: int, k_max: int) -> None:
    if k_min < 1:
        raise InvalidBoundsError(f"k_min must be at least 1, got {k_min}")
    if k_max > n:
        raise InvalidBoundsError(f"k_max must not exceed n={n}, got {k_max}")
    if k_min > k_max:
        raise InvalidBoundsError(f"k_min={k_min} exceeds k_max={k_max}")


def _coverable(m: int, k_min: int, k_max: int) -> bool:
    """True if m agents split into teams with sizes in [k_min, k_max]; m=0 is coverable."""
    if m == 0:
        return True
    hi = min(k_max, m)
    if m < k_min or hi < k_min:
        return False
    return m % k_min == 0 or m % hi == 0 or (m // k_min) > (m // hi)


def feasible(n: int, k_min: int, k_max: int) -> bool:
    """
    Check whether n agents can be divided into teams with sizes in [k_min, k_max].

    Args:
        n: Number of agents
        k_min: Minimum team size
        k_max: Maximum team size

    Returns:
        True iff k_min divides n, k_max divides n, or n // k_min > n // k_max
    """
    _check_bounds(n, k_min, k_max)
    return n % k_min == 0 or n % k_max == 0 or (n // k_min) > (n // k_max)


def team_size_schedule(n: int, k_min: int, k_max: int) -> List[int]:
    """
    Team sizes used by every mechanism, sorted in descending order.

    As many teams of size k_max as possible are formed such that the rest can
    still be covered; the rest is scheduled the same way with the next size
    down, so with two sizes the remainder is all k_min.

    Args:
        n: Number of agents
        k_min: Minimum team size
        k_max: Maximum team size

    Returns:
        Descending list of team sizes summing to n
    """
    if not feasible(n, k_min, k_max):
        raise InvalidBoundsError(f"No partition of {n} agents into teams of size {k_min}..{k_max}")

    schedule: List[int] = []
    remaining = n
    for size in range(k_max, k_min - 1, -1):
        if remaining == 0:
            break
        for count in range(remaining // size, -1, -1):
            rest = remaining - count * size
            if _coverable(rest, k_min, size - 1):
                schedule.extend([size] * count)
                remaining = rest
                break

    return schedule


def legal_team_sizes(m: int, k_min: int, k_max: int) -> List[int]:
    """
    Team sizes a chooser may take out of m remaining agents (itself included).

    A size is legal when it lies in [k_min, k_max] and the agents left over
    can still be covered by legal teams.
    """
    return [s for s in range(k_min, min(k_max, m) + 1) if _coverable(m - s, k_min, k_max)]


def remove_size(schedule: Sequence[int], size: int) -> List[int]:
    """Return the schedule with one team of the given size removed."""
    remaining = list(schedule)
    remaining.remove(size)
    return remaining


def agent_label(i: int, names: Optional[Sequence[str]] = None) -> str:
    """Printable name of an agent: its given name, a letter, or its index."""
    if names:
        return names[i]
    if i < 26:
        return string.ascii_uppercase[i]
    return str(i)


@dataclass(frozen=True, eq=False)
class Game:
    """
    A team formation problem with additively separable preferences.

    ``utilities[i][j]`` is the value of agent j to agent i. The diagonal is
    stored as 0 and never read.
    """

    utilities: np.ndarray
    k_min: int
    k_max: int
    names: Optional[Tuple[str, ...]] = None
    rows: Tuple[Tuple[float, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.array(self.utilities, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DataParseError(f"Utility matrix must be square, got shape {matrix.shape}")
        n = matrix.shape[0]
        if n < 2:
            raise InvalidBoundsError(f"A game needs at least 2 agents, got {n}")
        np.fill_diagonal(matrix, 0.0)
        if not np.all(np.isfinite(matrix)):
            raise DataParseError("Utility matrix contains non-finite values")
        if np.any(matrix < 0):
            raise DataParseError("Utilities must be non-negative")
        if not feasible(n, self.k_min, self.k_max):
            raise InvalidBoundsError(
                f"No partition of {n} agents into teams of size {self.k_min}..{self.k_max}"
            )
        if self.names is not None and len(self.names) != n:
            raise DataParseError(f"Expected {n} agent names, got {len(self.names)}")

        matrix.setflags(write=False)
        object.__setattr__(self, "utilities", matrix)
        object.__setattr__(self, "rows", tuple(tuple(row) for row in matrix.tolist()))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.utilities.shape[0]

    @property
    def schedule(self) -> List[int]:
        return team_size_schedule(self.n, self.k_min, self.k_max)

    def value(self, i: int, members: Iterable[int]) -> float:
        """Utility of agent i for a set of teammates (i itself is ignored)."""
        row = self.rows[i]
        return math.fsum(row[j] for j in sorted(members) if j != i)

    def total(self, i: int) -> float:
        """Agent i's value for all other agents together."""
        return math.fsum(self.rows[i])

    def label(self, i: int) -> str:
        return agent_label(i, self.names)

    def with_row(self, i: int, row: Sequence[float]) -> "Game":
        """Copy of the game with agent i's reported row replaced."""
        matrix = np.array(self.utilities, dtype=float)
        matrix[i, :] = np.asarray(row, dtype=float)
        return Game(matrix, self.k_min, self.k_max, self.names)

    def with_utilities(self, matrix: np.ndarray) -> "Game":
        return Game(matrix, self.k_min, self.k_max, self.names)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], k_min: int, k_max: int,
                  names: Optional[Sequence[str]] = None) -> "Game":
        return cls(np.asarray(rows, dtype=float), k_min, k_max, tuple(names) if names else None)

    @classmethod
    def from_csv(cls, path: str) -> "Game":
        """
        Load a game from the model CSV format.

        The first line is ``n,k_min,k_max``; then n rows of n comma-separated
        non-negative decimals. Diagonal entries are ignored and set to 0.
        """
        with open(path, "r", newline="") as handle:
            records = [r for r in csv.reader(handle) if r and any(cell.strip() for cell in r)]

        if not records:
            raise DataParseError(f"{path}: empty file")
        try:
            n, k_min, k_max = (int(cell) for cell in records[0][:3])
        except ValueError:
            raise DataParseError(f"{path}: header must be 'n,k_min,k_max', got {records[0]}")
        if len(records) - 1 != n:
            raise DataParseError(f"{path}: expected {n} matrix rows, found {len(records) - 1}")

        matrix = np.zeros((n, n))
        for i, record in enumerate(records[1:]):
            if len(record) != n:
                raise DataParseError(f"{path}: row {i + 1} has {len(record)} entries, expected {n}")
            for j, cell in enumerate(record):
                if i == j:
                    continue
                try:
                    matrix[i, j] = float(cell)
                except ValueError:
                    raise DataParseError(f"{path}: row {i + 1} has non-numeric entry '{cell}'")
            if np.any(matrix[i] < 0):
                raise DataParseError(f"{path}: row {i + 1} has negative utilities")

        return cls(matrix, k_min, k_max)

    def to_csv(self, path: str) -> None:
        """Write the game in the model CSV format."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow([self.n, self.k_min, self.k_max])
            for row in self.rows:
                writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class Partition:
    """
    A collection of teams, stored canonically (members sorted, teams ordered
    by their smallest member).
    """

    teams: Tuple[Tuple[int, ...], ...]
    _lookup: Dict[int, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        teams = tuple(sorted((tuple(sorted(team)) for team in self.teams),
                             key=lambda t: (t[0] if t else -1, t)))
        lookup: Dict[int, int] = {}
        for index, team in enumerate(teams):
            for member in team:
                lookup.setdefault(member, index)
        object.__setattr__(self, "teams", teams)
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def of(cls, teams: Iterable[Iterable[int]]) -> "Partition":
        return cls(tuple(tuple(team) for team in teams))

    def team_of(self, i: int) -> Tuple[int, ...]:
        return self.teams[self._lookup[i]]

    def teammates(self, i: int) -> Tuple[int, ...]:
        return tuple(j for j in self.team_of(i) if j != i)

    def same_team(self, i: int, j: int) -> bool:
        return self._lookup.get(i) == self._lookup.get(j)

    def sizes(self) -> List[int]:
        return sorted((len(team) for team in self.teams), reverse=True)

    def __len__(self) -> int:
        return len(self.teams)

    def __iter__(self) -> Iterator[Tuple[int, ...]]:
        return iter(self.teams)

    def describe(self, names: Optional[Sequence[str]] = None) -> str:
        """Human-readable form, e.g. ``{(ACD), (BEF)}``."""
        parts = []
        for team in self.teams:
            labels = [agent_label(i, names) for i in team]
            joiner = "" if all(len(label) == 1 for label in labels) else ","
            parts.append("(" + joiner.join(labels) + ")")
        return "{" + ", ".join(parts) + "}"


@dataclass(frozen=True)
class SerialOrder:
    """A permutation of the agents; position 0 moves first."""

    order: Tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"Serial order is not a permutation of 0..{len(order) - 1}: {order}")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, n: int) -> "SerialOrder":
        return cls(tuple(range(n)))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "SerialOrder":
        return cls(tuple(int(i) for i in rng.permutation(n)))

    def position(self, i: int) -> int:
        return self.order.index(i)

    def positions(self) -> List[int]:
        """positions()[i] is agent i's serial index."""
        result = [0] * len(self.order)
        for index, agent in enumerate(self.order):
            result[agent] = index
        return result

    def __iter__(self) -> Iterator[int]:
        return iter(self.order)

    def __len__(self) -> int:
        return len(self.order)

    def __getitem__(self, index: int) -> int:
        return self.order[index]


def validate_partition(game: Game, p: Partition) -> bool:
    """True iff the teams are a disjoint cover of the agents with legal sizes."""
    seen = set()
    for team in p.teams:
        if not game.k_min <= len(team) <= game.k_max:
            return False
        for member in team:
            if member in seen or not 0 <= member < game.n:
                return False
            seen.add(member)
    return len(seen) == game.n


def normalize(game: Game, strict: bool = True) -> Game:
    """
    Scale each agent's row so its values for the other agents sum to 1.

    Args:
        game: Game to normalize
        strict: Raise DegeneratePreferencesError for all-zero rows; otherwise
            log a warning and leave those rows at zero

    Returns:
        Normalized game with the same bounds and names
    """
    matrix = np.array(game.utilities, dtype=float)
    totals = matrix.sum(axis=1)
    degenerate = [int(i) for i in np.flatnonzero(totals <= 0)]

    safe = np.where(totals > 0, totals, 1.0)
    normalized = game.with_utilities(matrix / safe[:, None])

    if degenerate:
        labels = ", ".join(game.label(i) for i in degenerate)
        if strict:
            raise DegeneratePreferencesError(f"All-zero utility rows for agents: {labels}",
                                             agents=degenerate, game=normalized)
        logger.warning(f"All-zero utility rows left unnormalized for agents: {labels}")

    return normalized


def count_partitions(n: int, k_min: int, k_max: int) -> int:
    """Number of partitions of n labelled agents into teams with sizes in [k_min, k_max]."""
    counts = [1] + [0] * n
    for m in range(1, n + 1):
        counts[m] = sum(math.comb(m - 1, s - 1) * counts[m - s]
                        for s in range(k_min, min(k_max, m) + 1))
    return counts[n]


def enumerate_partitions(n: int, k_min: int, k_max: int,
                         sizes: Optional[Sequence[int]] = None) -> Iterator[Partition]:
    """
    Yield every partition of n agents with team sizes in [k_min, k_max].

    Partitions are produced once each, in canonical order: the smallest
    unassigned agent always opens the next team. When ``sizes`` is given,
    only partitions whose size multiset equals it are produced.
    """

    budget: Optional[Dict[int, int]] = None
    if sizes is not None:
        budget = {}
        for s in sizes:
            budget[s] = budget.get(s, 0) + 1

    def extend(unassigned: Tuple[int, ...], teams: List[Tuple[int, ...]]) -> Iterator[Partition]:
        if not unassigned:
            yield Partition(tuple(teams))
            return
        first, rest = unassigned[0], unassigned[1:]
        for size in range(k_min, min(k_max, len(unassigned)) + 1):
            if budget is not None:
                if budget.get(size, 0) == 0:
                    continue
            elif not _coverable(len(unassigned) - size, k_min, k_max):
                continue
            if budget is not None:
                budget[size] -= 1
            for others in combinations(rest, size - 1):
                chosen = set(others)
                teams.append((first,) + others)
                yield from extend(tuple(a for a in rest if a not in chosen), teams)
                teams.pop()
            if budget is not None:
                budget[size] += 1

    yield from extend(tuple(range(n)), [])
