"""
Problem instances: random generators and loaders for preference data files.

Matrix files are CSV. The first line names the format and the bounds, e.g.
``rank,17,4,5`` or ``count,32,5,6``; the next n lines hold the matrix.
Diagonal entries may be blank, ``x`` or any number and are ignored.
"""

import csv
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .errors import ConfigError, DataParseError, InvalidBoundsError
from .model import Game

logger = logging.getLogger(__name__)

GENERATORS = ("r_sim", "r_sca")
LOADERS = ("rank_matrix", "count_matrix", "raw_matrix")
DATASET_KINDS = GENERATORS + LOADERS
TIE_POLICIES = ("reject", "average")


def gen_rsim(n: int, rng: np.random.Generator, k_min: int = 1, k_max: Optional[int] = None) -> Game:
    """
    Random-similar preferences.

    Agent i (1-based) has public value i; every other agent values it at i
    plus normal noise with standard deviation n / 5, redrawn until the sum is
    non-negative.
    """
    if n < 2:
        raise InvalidBoundsError(f"Random-similar instances need at least 2 agents, got {n}")

    public = np.arange(1, n + 1, dtype=float)
    values = public[None, :] + rng.normal(0.0, n / 5.0, size=(n, n))
    negative = values < 0
    while negative.any():
        values[negative] = public[np.nonzero(negative)[1]] + rng.normal(0.0, n / 5.0, size=int(negative.sum()))
        negative = values < 0

    np.fill_diagonal(values, 0.0)
    return Game(values, k_min, k_max if k_max is not None else n)


def gen_rsca(n: int, rng: np.random.Generator, k_min: int = 1, k_max: Optional[int] = None) -> Game:
    """
    Random-scattered preferences.

    Each agent splits a total value of 100 among the others at n - 2 uniform
    cut points; the pieces go to the other agents in index order.
    """
    if n < 3:
        raise InvalidBoundsError(f"Random-scattered instances need at least 3 agents, got {n}")

    values = np.zeros((n, n))
    for j in range(n):
        cuts = np.sort(rng.uniform(0.0, 100.0, size=n - 2))
        pieces = np.diff(np.concatenate(([0.0], cuts, [100.0])))
        others = [i for i in range(n) if i != j]
        values[j, others] = pieces

    return Game(values, k_min, k_max if k_max is not None else n)


def _read_header(path: str, kind: str) -> Tuple[int, int, int]:
    try:
        with open(path, "r", newline="") as handle:
            header = next(csv.reader(handle), None)
    except OSError as e:
        raise DataParseError(f"{path}: cannot read file: {e}")

    if not header or header[0].strip().lower() != kind or len(header) < 4:
        raise DataParseError(f"{path}: header must be '{kind},n,k_min,k_max', got {header}")
    try:
        n, k_min, k_max = (int(cell) for cell in header[1:4])
    except ValueError:
        raise DataParseError(f"{path}: header must be '{kind},n,k_min,k_max', got {header}")
    return n, k_min, k_max


def _read_body(path: str, n: int) -> np.ndarray:
    """The n x n body of a matrix file, with diagonal entries set to NaN."""
    try:
        frame = pd.read_csv(path, header=None, skiprows=1, skip_blank_lines=True,
                            na_values=["x", "X"], keep_default_na=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataParseError(f"{path}: cannot parse matrix: {e}")

    if frame.shape != (n, n):
        raise DataParseError(f"{path}: expected a {n}x{n} matrix, found {frame.shape[0]}x{frame.shape[1]}")

    matrix = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            try:
                matrix[i, j] = float(frame.iat[i, j])
            except (TypeError, ValueError):
                raise DataParseError(f"{path}: row {i + 1} has non-numeric entry '{frame.iat[i, j]}'")
            if np.isnan(matrix[i, j]):
                raise DataParseError(f"{path}: row {i + 1} is missing the entry for column {j + 1}")
    return matrix


def load_rank_matrix(path: str, k_min: Optional[int] = None, k_max: Optional[int] = None,
                     ties: str = "reject") -> Game:
    """
    Load a rank matrix (1 = best) and convert ranks r to values n - r.

    Args:
        path: CSV file with header ``rank,n,k_min,k_max``
        k_min: Overrides the header's minimum team size
        k_max: Overrides the header's maximum team size
        ties: "reject" requires each row to rank the others 1..n-1 exactly
            once; "average" gives tied entries the mean of the ranks they span

    Returns:
        Game with the converted values
    """
    if ties not in TIE_POLICIES:
        raise ConfigError(f"Unknown tie policy '{ties}', expected one of {', '.join(TIE_POLICIES)}")

    n, header_min, header_max = _read_header(path, "rank")
    ranks = _read_body(path, n)
    expected = list(range(1, n))

    values = np.zeros((n, n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        row = ranks[i, others]
        if ties == "reject":
            if sorted(row.tolist()) != expected:
                raise DataParseError(f"{path}: row {i + 1} is not a permutation of ranks 1..{n - 1}")
        else:
            if np.any(row < 1) or np.any(row > n - 1):
                raise DataParseError(f"{path}: row {i + 1} has ranks outside 1..{n - 1}")
            if len(set(row.tolist())) < len(row):
                logger.info(f"{path}: averaging tied ranks in row {i + 1}")
            row = rankdata(row, method="average")
        values[i, others] = n - row

    return Game(values, k_min or header_min, k_max or header_max)


def load_count_matrix(path: str, k_min: Optional[int] = None, k_max: Optional[int] = None) -> Game:
    """
    Load a matrix of non-negative counts and use them directly as utilities.

    Args:
        path: CSV file with header ``count,n,k_min,k_max``
        k_min: Overrides the header's minimum team size
        k_max: Overrides the header's maximum team size

    Returns:
        Game with the counts as values
    """
    n, header_min, header_max = _read_header(path, "count")
    counts = _read_body(path, n)
    np.fill_diagonal(counts, 0.0)

    for i in range(n):
        if np.any(counts[i] < 0):
            raise DataParseError(f"{path}: row {i + 1} has negative counts")

    zero_rows = [i + 1 for i in range(n) if not counts[i].any()]
    if zero_rows:
        logger.warning(f"{path}: rows {zero_rows} are all zero; those agents are indifferent")

    return Game(counts, k_min or header_min, k_max or header_max)


def load_raw_matrix(path: str, k_min: Optional[int] = None, k_max: Optional[int] = None) -> Game:
    """Load a game in the model CSV format, optionally overriding its bounds."""
    game = Game.from_csv(path)
    if k_min or k_max:
        return Game(game.utilities, k_min or game.k_min, k_max or game.k_max)
    return game


@dataclass
class DatasetSpec:
    """Where the instances of an experiment come from."""

    kind: str
    n: Optional[int] = None
    k_min: Optional[int] = None
    k_max: Optional[int] = None
    seed: Optional[int] = None
    source_path: Optional[str] = None
    ties: str = "reject"

    @property
    def is_generated(self) -> bool:
        return self.kind in GENERATORS

    def validate(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"Unknown dataset '{self.kind}', expected one of {', '.join(DATASET_KINDS)}")
        if self.is_generated:
            missing = [name for name in ("n", "k_min", "k_max", "seed") if getattr(self, name) is None]
            if missing:
                raise ConfigError(f"Dataset {self.kind} needs {', '.join(missing)}")
        elif not self.source_path:
            raise ConfigError(f"Dataset {self.kind} needs source_path")
        if self.ties not in TIE_POLICIES:
            raise ConfigError(f"Unknown tie policy '{self.ties}', expected one of {', '.join(TIE_POLICIES)}")


def build_game(spec: DatasetSpec, rng: Optional[np.random.Generator] = None) -> Game:
    """
    Generate or load one instance.

    Args:
        spec: Dataset description
        rng: Source for generators (defaults to one seeded with spec.seed)

    Returns:
        Game
    """
    spec.validate()

    if spec.kind == "r_sim":
        return gen_rsim(spec.n, rng or np.random.default_rng(spec.seed), spec.k_min, spec.k_max)
    if spec.kind == "r_sca":
        return gen_rsca(spec.n, rng or np.random.default_rng(spec.seed), spec.k_min, spec.k_max)
    if spec.kind == "rank_matrix":
        return load_rank_matrix(spec.source_path, spec.k_min, spec.k_max, ties=spec.ties)
    if spec.kind == "count_matrix":
        return load_count_matrix(spec.source_path, spec.k_min, spec.k_max)
    return load_raw_matrix(spec.source_path, spec.k_min, spec.k_max)


def load_matrix(path: str, k_min: Optional[int] = None, k_max: Optional[int] = None,
                ties: str = "reject") -> Game:
    """Load any supported matrix file, choosing the loader from its header."""
    try:
        with open(path, "r", newline="") as handle:
            header = next(csv.reader(handle), None)
    except OSError as e:
        raise DataParseError(f"{path}: cannot read file: {e}")

    kind = header[0].strip().lower() if header else ""
    if kind == "rank":
        return load_rank_matrix(path, k_min, k_max, ties=ties)
    if kind == "count":
        return load_count_matrix(path, k_min, k_max)
    return load_raw_matrix(path, k_min, k_max)
