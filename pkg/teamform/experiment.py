"""
Experiment orchestration: run mechanisms over instances and write the tables.
"""

import logging
import math
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from .aceei import SEARCH_METHODS
from .data import DatasetSpec, build_game
from .errors import CapacityExceededError, ConfigError, TeamFormError
from .harness import mechanism_key, regret_estimate, stream
from .mechanisms import MECHANISMS, run_mechanism
from .metrics import METRICS_COLUMNS, cosine_similarity, evaluate, maximin_shares
from .model import Game, SerialOrder, normalize
from .utils.config import parse_bool, read_config
from .utils.stats import format_interval, mean_confidence_interval

logger = logging.getLogger(__name__)

# Stream keys that keep instance draws apart from serial-order draws
INSTANCE_STREAM = 1_000_003


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; see ``from_file`` for the file format."""

    dataset: str
    n: Optional[int] = None
    k_min: Optional[int] = None
    k_max: Optional[int] = None
    source_path: Optional[str] = None
    ties: str = "reject"
    mechanisms: List[str] = field(default_factory=lambda: ["rsd", "hbs", "opop", "aceei"])
    runs: int = 8
    deviations_per_agent: int = 25
    instances: int = 20
    seed: int = 0
    regret: bool = False
    output_dir: str = "results"
    workers: int = 1
    swap_rank_p: float = 0.5
    aceei_epsilon: float = 0.01
    aceei_tabu_iters: int = 20
    aceei_search: str = "tabu"
    aceei_deviations_per_agent: Optional[int] = None
    optimizer_max_nodes: int = 50_000_000
    maximin: bool = False

    @property
    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(kind=self.dataset, n=self.n, k_min=self.k_min, k_max=self.k_max,
                           seed=self.seed, source_path=self.source_path, ties=self.ties)

    @classmethod
    def from_dict(cls, values: Dict[str, str]) -> "ExperimentConfig":
        """Build a config from raw strings, converting each key to its field type."""
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        if "dataset" not in values:
            raise ConfigError("Config must name a dataset")

        converted: Dict[str, Any] = {}
        for key, raw in values.items():
            try:
                if key == "mechanisms":
                    converted[key] = [m.strip().lower() for m in raw.split(",") if m.strip()]
                elif key in ("regret", "maximin"):
                    converted[key] = parse_bool(raw)
                elif key in ("swap_rank_p", "aceei_epsilon"):
                    converted[key] = float(raw)
                elif key in ("n", "k_min", "k_max", "runs", "deviations_per_agent", "instances",
                             "seed", "workers", "aceei_tabu_iters", "aceei_deviations_per_agent"):
                    converted[key] = int(raw)
                elif key == "optimizer_max_nodes":
                    converted[key] = int(float(raw))
                else:
                    converted[key] = raw
            except ValueError:
                raise ConfigError(f"Invalid value for {key}: '{raw}'")

        config = cls(**converted)
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        return cls.from_dict(read_config(path))

    def validate(self) -> None:
        if not self.mechanisms:
            raise ConfigError("At least one mechanism is required")
        unknown = [m for m in self.mechanisms if m not in MECHANISMS]
        if unknown:
            raise ConfigError(f"Unknown mechanisms: {', '.join(unknown)}")
        for name in ("runs", "deviations_per_agent", "instances", "workers", "aceei_tabu_iters",
                     "optimizer_max_nodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.swap_rank_p <= 1.0:
            raise ConfigError(f"swap_rank_p must lie in (0, 1], got {self.swap_rank_p}")
        if self.aceei_epsilon <= 0:
            raise ConfigError(f"aceei_epsilon must be positive, got {self.aceei_epsilon}")
        if self.aceei_search not in SEARCH_METHODS:
            raise ConfigError(f"aceei_search must be one of {', '.join(SEARCH_METHODS)}")
        if self.aceei_deviations_per_agent is not None and self.aceei_deviations_per_agent < 1:
            raise ConfigError(f"aceei_deviations_per_agent must be positive, "
                              f"got {self.aceei_deviations_per_agent}")
        self.dataset_spec.validate()

    def mechanism_options(self, name: str) -> Dict[str, Any]:
        if name == "aceei":
            return {"epsilon": self.aceei_epsilon, "tabu_iters": self.aceei_tabu_iters,
                    "search": self.aceei_search}
        if name == "maxwelfare":
            return {"max_nodes": self.optimizer_max_nodes}
        return {}

    def deviations_for(self, name: str) -> int:
        """Misreports per agent and run for one mechanism's regret estimate."""
        if name == "aceei" and self.aceei_deviations_per_agent is not None:
            return self.aceei_deviations_per_agent
        return self.deviations_per_agent


@dataclass
class ExperimentReport:
    """Tables produced by one experiment and where they were written."""

    tables: Dict[str, pd.DataFrame]
    paths: Dict[str, str] = field(default_factory=dict)


def _summarize(frame: pd.DataFrame, column: str) -> pd.DataFrame:
    """
    Mean and 95% interval of ``column`` per mechanism.

    With several instances the samples are per-instance means over runs;
    with one instance they are the runs themselves.
    """
    rows = []
    for mechanism, group in frame.groupby("mechanism", sort=False):
        values = group.dropna(subset=[column])
        if values.empty:
            rows.append({"mechanism": mechanism, "mean": np.nan, "half_width": np.nan, "samples": 0})
            continue
        if values["instance"].nunique() > 1:
            samples = values.groupby("instance")[column].mean().tolist()
        else:
            samples = values[column].tolist()
        mean, half_width = mean_confidence_interval(samples)
        rows.append({"mechanism": mechanism, "mean": mean, "half_width": half_width, "samples": len(samples)})
    return pd.DataFrame(rows, columns=["mechanism", "mean", "half_width", "samples"])


class ExperimentRunner:
    """Runs one configured experiment and writes its report files."""

    def __init__(self, config: ExperimentConfig, logger: Optional[logging.Logger] = None):
        """
        Initialize the runner.

        Args:
            config: Validated experiment configuration
            logger: Logger instance
        """
        config.validate()
        self.config = config
        self.logger = logger or logging.getLogger(__name__)

    def instances(self) -> List[Game]:
        spec = self.config.dataset_spec
        if not spec.is_generated:
            return [build_game(spec)]
        return [build_game(spec, stream(self.config.seed, INSTANCE_STREAM, index))
                for index in range(self.config.instances)]

    def _maximin(self, game: Game) -> Optional[List[float]]:
        if not self.config.maximin:
            return None
        try:
            return maximin_shares(game)
        except CapacityExceededError as e:
            self.logger.warning(f"Maximin shares skipped: {e}")
            return None

    def run_instance(self, index: int, game: Game, metrics_rows: List[dict], agent_rows: List[dict]) -> None:
        config = self.config
        normalized = normalize(game, strict=False)
        shares = self._maximin(game)
        optimum = {}

        for run in range(config.runs):
            order = SerialOrder.random(game.n, stream(config.seed, run))
            for name in config.mechanisms:
                record = {"instance": index, "run": run, "mechanism": name}
                try:
                    if name == "maxwelfare" and "partition" in optimum:
                        partition = optimum["partition"]
                    else:
                        partition = run_mechanism(name, game, order, seed=[config.seed, run, mechanism_key(name)],
                                                  **config.mechanism_options(name))
                        if name == "maxwelfare":
                            optimum["partition"] = partition
                except CapacityExceededError as e:
                    self.logger.warning(f"{name} on instance {index}: {e}")
                    metrics_rows.append({**record, "partition": "n/a", **{c: np.nan for c in METRICS_COLUMNS}})
                    continue

                report = evaluate(game, partition, order, normalized, shares)
                metrics_rows.append({**record, "partition": partition.describe(game.names), **report.to_row()})
                for outcome in report.per_agent:
                    agent_rows.append({**record, "agent": outcome.agent,
                                       "serial_index": outcome.serial_index,
                                       "utility_fraction": outcome.utility_fraction,
                                       "mean_teammate_rank": outcome.mean_teammate_rank,
                                       "popularity": outcome.popularity})

    def run_regret(self, index: int, game: Game, regret_rows: List[dict]) -> None:
        config = self.config
        for name in config.mechanisms:
            self.logger.info(f"Regret: {name} on instance {index}")
            try:
                result = regret_estimate(game, name, runs=config.runs,
                                         deviations_per_agent=config.deviations_for(name),
                                         seed=config.seed, rank_p=config.swap_rank_p,
                                         workers=config.workers, options=config.mechanism_options(name))
            except CapacityExceededError as e:
                self.logger.warning(f"Regret for {name} on instance {index} skipped: {e}")
                regret_rows.append({"instance": index, "run": np.nan, "mechanism": name, "regret": np.nan})
                continue
            for run, value in enumerate(result.per_run):
                regret_rows.append({"instance": index, "run": run, "mechanism": name, "regret": value})

    def run(self) -> ExperimentReport:
        """
        Run every instance and mechanism, then aggregate and write the tables.

        Returns:
            ExperimentReport with all tables and their file paths
        """
        config = self.config
        self.logger.info(f"=== Starting experiment: {config.dataset}, mechanisms {', '.join(config.mechanisms)} ===")

        games = self.instances()
        metrics_rows: List[dict] = []
        agent_rows: List[dict] = []
        regret_rows: List[dict] = []
        similarity = []

        for index, game in enumerate(games):
            self.logger.info(f"=== Instance {index + 1}/{len(games)}: {config.dataset} (n={game.n}) ===")
            try:
                similarity.append(cosine_similarity(game))
            except TeamFormError as e:
                self.logger.warning(f"Similarity skipped: {e}")
            self.run_instance(index, game, metrics_rows, agent_rows)
            if config.regret:
                self.run_regret(index, game, regret_rows)

        metrics = pd.DataFrame(metrics_rows, columns=["instance", "run", "mechanism", "partition"] + METRICS_COLUMNS)
        agents = pd.DataFrame(agent_rows, columns=["instance", "run", "mechanism", "agent", "serial_index",
                                                   "utility_fraction", "mean_teammate_rank", "popularity"])

        tables = {
            "metrics": metrics,
            "welfare": _summarize(metrics, "social_welfare"),
            "envy": _summarize(metrics, "bounded_envy_fraction"),
            "serial_utility": agents[["instance", "run", "mechanism", "agent", "serial_index", "utility_fraction"]],
            "popularity": agents[["instance", "run", "mechanism", "agent", "popularity", "mean_teammate_rank"]],
        }

        mean, half_width = mean_confidence_interval(similarity)
        tables["similarity"] = pd.DataFrame([{
            "dataset": config.dataset, "similarity": mean, "half_width": half_width,
            "n": games[0].n, "k_min": games[0].k_min, "k_max": games[0].k_max,
        }])

        if config.regret:
            regret = pd.DataFrame(regret_rows, columns=["instance", "run", "mechanism", "regret"])
            tables["regret"] = self._summarize_regret(regret)

        report = ExperimentReport(tables)
        self.write(report)
        self.print_summary(report, agents)
        self.logger.info("=== Experiment complete ===")
        return report

    @staticmethod
    def _summarize_regret(regret: pd.DataFrame) -> pd.DataFrame:
        rows = []
        for mechanism, group in regret.groupby("mechanism", sort=False):
            mean, half_width = mean_confidence_interval(group["regret"].dropna())
            rows.append({"mechanism": mechanism, "mean": mean, "half_width": half_width,
                         "samples": int(group["regret"].notna().sum())})
        return pd.DataFrame(rows, columns=["mechanism", "mean", "half_width", "samples"])

    def write(self, report: ExperimentReport) -> None:
        os.makedirs(self.config.output_dir, exist_ok=True)
        for name, table in report.tables.items():
            path = os.path.join(self.config.output_dir, f"{name}.csv")
            table.to_csv(path, index=False, na_rep="n/a", float_format="%.6f")
            report.paths[name] = path
            self.logger.info(f"Wrote {path}")

    def print_summary(self, report: ExperimentReport, agents: pd.DataFrame) -> None:
        tables = report.tables
        regret = tables.get("regret")

        print(f"\nResults for {self.config.dataset}")
        print("=" * (12 + len(self.config.dataset)))
        print(f"{'mechanism':<12}{'welfare':>16}{'bounded envy':>16}{'regret':>16}{'serial rho':>12}")

        for _, row in tables["welfare"].iterrows():
            mechanism = row["mechanism"]
            envy = tables["envy"].set_index("mechanism").loc[mechanism]
            regret_text = "-"
            if regret is not None and mechanism in set(regret["mechanism"]):
                r = regret.set_index("mechanism").loc[mechanism]
                regret_text = format_interval(r["mean"], r["half_width"])

            subset = agents[agents["mechanism"] == mechanism]
            rho = float("nan")
            if len(subset) > 2 and subset["serial_index"].nunique() > 1 and subset["utility_fraction"].nunique() > 1:
                rho = float(spearmanr(subset["serial_index"], subset["utility_fraction"])[0])

            print(f"{mechanism:<12}{format_interval(row['mean'], row['half_width']):>16}"
                  f"{format_interval(envy['mean'], envy['half_width']):>16}{regret_text:>16}"
                  f"{'n/a' if math.isnan(rho) else f'{rho:.2f}':>12}")

        sim = tables["similarity"].iloc[0]
        print(f"\nSimilarity: {format_interval(sim['similarity'], sim['half_width'], 3)} "
              f"(n={sim['n']}, k={sim['k_min']}..{sim['k_max']})")


def run_experiment(config: ExperimentConfig, logger: Optional[logging.Logger] = None) -> ExperimentReport:
    """Run an experiment and return its report."""
    return ExperimentRunner(config, logger).run()
