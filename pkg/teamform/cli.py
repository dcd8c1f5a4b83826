"""
Command-line interface for the team formation tool.

Subcommands run experiments from config files, run single mechanisms,
estimate regret, compute the welfare optimum and generate instances.
"""

import argparse
import logging
import traceback

import numpy as np

from .data import DatasetSpec, build_game, load_matrix
from .errors import TeamFormError
from .experiment import ExperimentConfig, ExperimentRunner
from .harness import regret_estimate
from .mechanisms import MECHANISMS, run_mechanism
from .metrics import cosine_similarity, evaluate
from .model import SerialOrder, normalize
from .optimizer import DEFAULT_MAX_NODES, max_welfare
from .utils.logging_setup import setup_logging
from .utils.stats import format_interval


def add_aceei_arguments(parser):
    parser.add_argument('--aceei-epsilon', type=float, default=0.01,
                        help='Price update parameter for A-CEEI-TF')
    parser.add_argument('--aceei-tabu-iters', type=int, default=20,
                        help='Iterations of each A-CEEI-TF price search')
    parser.add_argument('--aceei-search', choices=['tabu', 'tatonnement'], default='tabu',
                        help='Price search used by A-CEEI-TF')


def add_optimizer_arguments(parser):
    parser.add_argument('--max-nodes', type=int, default=DEFAULT_MAX_NODES,
                        help='Search-node limit of the welfare optimizer')


def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description='Team Formation Tool',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )

    parser.add_argument('--log-file', default='teamform.log',
                        help='Path to the log file')
    parser.add_argument('--verbose', action='store_true',
                        help='Log every draft pick and price search step')

    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='Run an experiment from a config file',
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    run.add_argument('--config', required=True,
                     help='Path to a key=value experiment config file')
    run.add_argument('--output-dir',
                     help='Directory for the result tables (overrides the config)')
    run.add_argument('--workers', type=int,
                     help='Processes for regret reruns (overrides the config)')

    mech = commands.add_parser('mech', help='Run one mechanism on a matrix file',
                               formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    mech.add_argument('mechanism', choices=list(MECHANISMS))
    mech.add_argument('matrix', help='Matrix file (model, rank or count format)')
    mech.add_argument('--seed', type=int, default=0,
                      help='Seed for the serial order and budgets')
    mech.add_argument('--order',
                      help='Comma-separated serial order of agent indices (random if not given)')
    add_aceei_arguments(mech)
    add_optimizer_arguments(mech)

    regret = commands.add_parser('regret', help='Estimate the regret of truthful reporting',
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    regret.add_argument('mechanism', choices=list(MECHANISMS))
    regret.add_argument('matrix', help='Matrix file (model, rank or count format)')
    regret.add_argument('--runs', type=int, default=8,
                        help='Number of random serial orders')
    regret.add_argument('--deviations', type=int, default=25,
                        help='Distinct misreports per agent and run')
    regret.add_argument('--seed', type=int, default=0,
                        help='Base seed')
    regret.add_argument('--swap-rank-p', type=float, default=0.5,
                        help='Success probability of the geometric rank distribution for swaps')
    regret.add_argument('--workers', type=int, default=1,
                        help='Processes for the misreport reruns')
    add_aceei_arguments(regret)
    add_optimizer_arguments(regret)

    optimize = commands.add_parser('optimize', help='Find a welfare-maximizing partition',
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    optimize.add_argument('matrix', help='Matrix file (model, rank or count format)')
    add_optimizer_arguments(optimize)

    gen = commands.add_parser('gen', help='Generate a random instance',
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    gen.add_argument('kind', choices=['r_sim', 'r_sca'])
    gen.add_argument('--n', type=int, required=True,
                     help='Number of agents')
    gen.add_argument('--k', type=int,
                     help='Team size (sets both --k-min and --k-max)')
    gen.add_argument('--k-min', type=int,
                     help='Minimum team size')
    gen.add_argument('--k-max', type=int,
                     help='Maximum team size')
    gen.add_argument('--seed', type=int, default=0,
                     help='Generator seed')
    gen.add_argument('--output', required=True,
                     help='Where to write the instance (model CSV format)')

    similarity = commands.add_parser('similarity', help='Print the preference similarity of a matrix',
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    similarity.add_argument('matrix', help='Matrix file (model, rank or count format)')

    return parser.parse_args(argv)


def aceei_options(args):
    return {"epsilon": args.aceei_epsilon, "tabu_iters": args.aceei_tabu_iters,
            "search": args.aceei_search}


def options_for(name, args):
    if name == "aceei":
        return aceei_options(args)
    if name == "maxwelfare":
        return {"max_nodes": args.max_nodes}
    return {}


def command_run(args, logger):
    config = ExperimentConfig.from_file(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.workers:
        config.workers = args.workers

    print(f"Starting experiment with the following parameters:")
    print(f"  Dataset: {config.dataset}")
    print(f"  Mechanisms: {', '.join(config.mechanisms)}")
    print(f"  Runs: {config.runs}, instances: {config.instances if config.dataset_spec.is_generated else 1}")
    print(f"  Regret: {'Enabled' if config.regret else 'Disabled'}")
    print(f"\nDetailed logs will be written to {args.log_file}\n")

    report = ExperimentRunner(config, logger).run()
    print(f"\nTables written to {config.output_dir}: {', '.join(sorted(report.paths))}")
    return True


def command_mech(args, logger):
    game = load_matrix(args.matrix)
    if args.order:
        order = SerialOrder(tuple(int(i) for i in args.order.split(',')))
    else:
        order = SerialOrder.random(game.n, np.random.default_rng(args.seed))

    partition = run_mechanism(args.mechanism, game, order, seed=args.seed, **options_for(args.mechanism, args))
    report = evaluate(game, partition, order)

    print(f"Serial order: {' '.join(game.label(i) for i in order)}")
    print(f"Partition: {partition.describe(game.names)}")
    print(f"Raw welfare: {report.raw_welfare:.4f}")
    print(f"Normalized welfare: {report.social_welfare:.4f}")
    print(f"Envy-free agents: {report.envy_free_fraction:.2f}")
    print(f"Envy bounded by a single teammate: {report.bounded_envy_fraction:.2f}")
    print(f"Proportional agents: {report.proportional_fraction:.2f}")
    return True


def command_regret(args, logger):
    game = load_matrix(args.matrix)
    result = regret_estimate(game, args.mechanism, runs=args.runs, deviations_per_agent=args.deviations,
                             seed=args.seed, rank_p=args.swap_rank_p, workers=args.workers,
                             options=options_for(args.mechanism, args))

    print(f"Mechanism: {args.mechanism}")
    print(f"Per-run maximum regret: {' '.join(f'{v:.4f}' for v in result.per_run)}")
    print(f"Mean maximum regret: {format_interval(result.mean, result.half_width, 3)}")
    return True


def command_optimize(args, logger):
    game = load_matrix(args.matrix)
    partition, value = max_welfare(game, max_nodes=args.max_nodes)
    normalized = evaluate(game, partition, SerialOrder.identity(game.n), normalize(game, strict=False))

    print(f"Partition: {partition.describe(game.names)}")
    print(f"Raw welfare: {value:.4f}")
    print(f"Normalized welfare: {normalized.social_welfare:.4f}")
    return True


def command_gen(args, logger):
    k_min = args.k_min or args.k or 1
    k_max = args.k_max or args.k or args.n
    game = build_game(DatasetSpec(kind=args.kind, n=args.n, k_min=k_min, k_max=k_max, seed=args.seed))
    game.to_csv(args.output)
    logger.info(f"Wrote {args.kind} instance with n={args.n} to {args.output}")
    print(f"Instance written to {args.output}")
    return True


def command_similarity(args, logger):
    game = load_matrix(args.matrix)
    print(f"{'similarity':>10} {'n':>4} {'k_min':>6} {'k_max':>6}")
    print(f"{cosine_similarity(game):>10.3f} {game.n:>4} {game.k_min:>6} {game.k_max:>6}")
    return True


COMMANDS = {
    'run': command_run,
    'mech': command_mech,
    'regret': command_regret,
    'optimize': command_optimize,
    'gen': command_gen,
    'similarity': command_similarity,
}


def main(argv=None):
    """Main function to run the team formation tool."""
    print("\nTeam Formation Tool")
    print("===================\n")

    args = parse_arguments(argv)
    logger = setup_logging(args.log_file, logging.DEBUG if args.verbose else logging.INFO)

    try:
        success = COMMANDS[args.command](args, logger)
        return 0 if success else 1

    except TeamFormError as e:
        logger.error(f"{e.code}: {e}")
        print(f"ERROR_CODE={e.code}: {e}")
        return 1

    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 1

    except Exception as e:
        print(f"\nError in main function: {str(e)}")
        logger.error(f"Traceback: {traceback.format_exc()}")
        return 1
