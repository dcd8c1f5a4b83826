"""
Team Formation Tool

A Python package for forming teams under additively separable preferences
with team-size limits:
- Random serial dictatorship, HBS and one-player-one-pick drafts
- A-CEEI-TF, a market mechanism with near-equal budgets
- Exact welfare maximization
- Welfare, envy, proportionality and maximin share measures
- Misreport generation and regret estimation
"""

from .aceei import aceei_tf
from .data import DatasetSpec, build_game, gen_rsca, gen_rsim, load_count_matrix, load_rank_matrix
from .errors import TeamFormError
from .experiment import ExperimentConfig, ExperimentRunner, run_experiment
from .harness import order_sweep, regret_estimate
from .mechanisms import MECHANISMS, hbs_draft, opop_draft, rsd, run_mechanism
from .metrics import evaluate, social_welfare
from .model import Game, Partition, SerialOrder, feasible, normalize, team_size_schedule
from .optimizer import max_welfare

__version__ = "1.0.0"
