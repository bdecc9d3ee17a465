#!/usr/bin/env python3
"""
Command-line entry point
Запуск экспериментов: run, synth, backproject
"""

import argparse
import logging
import sys
from typing import List, Optional

from config import SolverMode, get_config, setup_logging
from experiment import (
    ExperimentConfigError, build_problem, build_summary, load_experiment,
)
from insertion import DescentError
from problem import backprojection_raster
from solver import MonotonicityError, SolverError, solve
from storage import ArtifactStore
from utils import TimeListParser, format_duration

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='dgcg',
        description='Reconstruct moving point sources from undersampled Fourier data',
    )
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='synthesize or load data and reconstruct')
    run.add_argument('config', help='experiment JSON file')
    run.add_argument('--out', help='output directory (default: output_dir of the experiment)')
    run.add_argument('--seed', type=int, help='solver seed')
    run.add_argument('--mode', choices=[m.value for m in SolverMode], help='core or full')
    run.add_argument('--dump-stationary', action='store_true',
                     help='write the stationary curves of every insertion step')

    synth = commands.add_parser('synth', help='write the measurement data only')
    synth.add_argument('config', help='experiment JSON file')
    synth.add_argument('--out', help='output directory')

    backproject = commands.add_parser('backproject', help='write backprojection rasters of the data')
    backproject.add_argument('config', help='experiment JSON file')
    backproject.add_argument('--times', help="time indices, e.g. '0,25,50' or '0-10'")
    backproject.add_argument('--resolution', type=int, help='pixels per side')
    backproject.add_argument('--out', help='output directory')
    return parser


def _write_backprojections(store: ArtifactStore, problem, times: List[int], resolution: int) -> None:
    for i in times:
        image = backprojection_raster(problem.data, i, resolution, problem.forward)
        store.write_backprojection(image, i)


def cmd_run(args, app_config) -> int:
    """
    Reconstruct and write recon.json, convergence.csv, rasters and summary.json
    """
    experiment = load_experiment(args.config)
    solver_cfg = experiment.solver.apply(app_config.solver)
    if args.seed is not None:
        solver_cfg.seed = args.seed
    if args.mode is not None:
        solver_cfg.mode = SolverMode(args.mode)
    solver_cfg.validate()
    app_config.solver = solver_cfg

    problem, truth = build_problem(experiment)
    store = ArtifactStore(args.out or experiment.output_dir)
    store.init()

    on_stationary = store.write_stationary if args.dump_stationary else None
    report = solve(problem, solver_cfg, threads=app_config.runtime.threads, on_stationary=on_stationary)

    store.write_measure(report.measure)
    store.write_curves(report.measure.curves)
    store.write_convergence(report.history)
    _write_backprojections(store, problem, experiment.backprojection_times, experiment.raster_resolution)
    store.write_summary(build_summary(report, problem, truth, app_config))

    logger.info("%s: %s after %d iterations in %s, %d atoms, objective %.8e",
                experiment.name, report.termination.value, report.iterations,
                format_duration(report.history[-1].wallclock_s), len(report.measure),
                report.final_objective)
    return report.termination.exit_code


def cmd_synth(args, _app_config) -> int:
    experiment = load_experiment(args.config)
    problem, truth = build_problem(experiment)
    store = ArtifactStore(args.out or experiment.output_dir)
    store.init()
    store.write_data(problem.schedule, problem.data)
    if truth is not None:
        store.write_measure(truth, 'truth.json')
    return EXIT_OK


def cmd_backproject(args, _app_config) -> int:
    experiment = load_experiment(args.config)
    problem, _ = build_problem(experiment)
    times = TimeListParser.parse(args.times, experiment.T) if args.times else experiment.backprojection_times
    store = ArtifactStore(args.out or experiment.output_dir)
    store.init()
    _write_backprojections(store, problem, times, args.resolution or experiment.raster_resolution)
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'synth': cmd_synth,
    'backproject': cmd_backproject,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes

    Returns:
        int: 0 success, 2 iteration budget exhausted, 1 error
    """
    args = build_parser().parse_args(argv)
    try:
        app_config = get_config()
    except ValueError as e:
        logging.basicConfig(format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        logger.error("Configuration error: %s", e)
        return EXIT_ERROR
    setup_logging(app_config.logging)

    try:
        return COMMANDS[args.command](args, app_config)
    except ExperimentConfigError as e:
        logger.error("Invalid experiment: %s", e)
    except (SolverError, MonotonicityError, DescentError) as e:
        logger.error("Solver failed", exc_info=e)
    except (ValueError, OSError) as e:
        logger.error("Error: %s", e, exc_info=e)
    return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
