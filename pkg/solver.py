#!/usr/bin/env python3
"""
Solver Module
Внешний цикл DGCG

Core mode inserts the best stationary curve and re-solves the weights;
full mode inserts every new stationary curve and alternates weight
solves with sliding for k_max rounds.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np

from config import SolverConfig, SolverMode
from geometry import Curve, SparseMeasure
from insertion import DescentError, insertion_value, multistart
from problem import (
    Problem, ResidualMonitor, dual_variable, gap_function, objective, pairing,
)
from sliding import slide
from weights import QPSolveError, assemble_qp, solve_nnqp

logger = logging.getLogger(__name__)

StationaryCallback = Callable[[int, List[Curve], List[float]], None]


class TerminationReason(Enum):
    """Why the outer loop stopped"""
    CONVERGED = "converged"
    GAP_BELOW_TOL = "gap_below_TOL"
    EMPTY_INSERTION = "empty_insertion"
    NO_NEW_CURVE = "no_new_curve"
    BUDGET = "budget"

    @property
    def exit_code(self) -> int:
        return 2 if self is TerminationReason.BUDGET else 0


class SolverError(RuntimeError):
    """
    Inner failure with the outer iteration it happened in
    """

    def __init__(self, iteration: int, message: str):
        super().__init__(f"Outer iteration {iteration}: {message}")
        self.iteration = iteration


class MonotonicityError(RuntimeError):
    """
    Objective increased across an outer iteration
    """

    def __init__(self, iteration: int, before: float, after: float):
        super().__init__(
            f"Objective increased at outer iteration {iteration}: {before:.12e} -> {after:.12e}"
        )
        self.iteration = iteration
        self.before = before
        self.after = after


@dataclass
class HistoryEntry:
    """
    Telemetry of one iterate mu^n
    """
    iteration: int
    objective: float
    fidelity: float
    regularizer: float
    n_atoms: int
    wallclock_s: float
    # gap of mu^n, known once the next insertion step has run
    gap: float = math.nan
    # max |1 - pairing| over retained atoms after the weight solves producing mu^n
    first_order_residual: float = math.nan


@dataclass
class SolveReport:
    """
    Result of solve(): final measure, history of mu^0..mu^N, termination
    """
    measure: SparseMeasure
    history: List[HistoryEntry]
    termination: TerminationReason
    monitor: ResidualMonitor = field(repr=False, default_factory=ResidualMonitor)

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    @property
    def final_objective(self) -> float:
        return self.history[-1].objective

    @property
    def final_gap(self) -> float:
        return self.history[-1].gap


def _first_order_residual(weights: np.ndarray, gradient: np.ndarray) -> float:
    support = weights > 0
    if not np.any(support):
        return 0.0
    return float(np.max(np.abs(gradient[support])))


def _coefficient_step(curves: Sequence[Curve], problem: Problem, cfg: SolverConfig,
                      iteration: int):
    qp = assemble_qp(curves, problem)
    try:
        c = solve_nnqp(qp, cfg.qp_tol)
    except QPSolveError as e:
        raise SolverError(iteration, str(e)) from e
    c = np.where(c > cfg.weight_threshold, c, 0.0)
    measure = SparseMeasure.from_lists(
        problem.alpha, problem.beta,
        [cj for cj in c if cj > 0], [g for g, cj in zip(curves, c) if cj > 0],
    )
    return measure, _first_order_residual(c, qp.gradient(c))


def _new_curves(stationary: List[Curve], existing: Sequence[Curve], mode: SolverMode,
                dedup_tol: float) -> List[Curve]:
    """
    Stationary curves that are not atoms yet; CORE keeps only the best of them
    """
    out: List[Curve] = []
    for g in stationary:
        if any(g.distance(other) < dedup_tol for other in list(existing) + out):
            continue
        out.append(g)
        if mode is SolverMode.CORE:
            break
    return out


def solve(problem: Problem, cfg: SolverConfig, threads: int = 1,
          on_stationary: Optional[StationaryCallback] = None) -> SolveReport:
    """
    Run the outer loop from the zero measure

    Args:
        problem: Problem
        cfg: Solver configuration
        threads: Workers for independent descents
        on_stationary: Called with (iteration, curves, F values) after
            every insertion step

    Returns:
        SolveReport

    Raises:
        SolverError: Inner failure or empty insertion after iteration 0
        MonotonicityError: Objective increase beyond cfg.monotonicity_slack
    """
    started = time.perf_counter()
    measure = problem.empty_measure()
    value = objective(measure, problem)
    monitor = ResidualMonitor()
    monitor.record(value.total)
    history = [HistoryEntry(0, value.total, value.fidelity, value.regularizer, 0,
                            time.perf_counter() - started)]
    m0 = problem.zero_objective
    termination = TerminationReason.BUDGET

    logger.info("Solving: T = %d, alpha = %g, beta = %g, M0 = %.6e, mode = %s",
                problem.grid.T, problem.alpha, problem.beta, m0, cfg.mode.value)

    for n in range(cfg.max_outer_iterations):
        w = dual_variable(measure, problem)
        try:
            stationary = multistart(measure.curves, w, cfg.multistart, cfg.descent,
                                    seed=[cfg.seed, n], threads=threads)
        except DescentError as e:
            raise SolverError(n, str(e)) from e

        if on_stationary is not None:
            on_stationary(n, stationary, [insertion_value(g, w) for g in stationary])

        if not stationary:
            if not measure.is_empty:
                raise SolverError(n, "multistart returned no stationary curve for a nonempty iterate")
            termination = TerminationReason.EMPTY_INSERTION
            history[-1].gap = 0.0
            monitor.set_last_gap(0.0)
            logger.info("Iteration %d: empty insertion set, zero measure is optimal", n)
            break

        best = stationary[0]
        t = pairing(best, w)
        gap = gap_function(t, m0)
        history[-1].gap = gap
        monitor.set_last_gap(gap)
        logger.info("Iteration %d: objective %.10e, pairing %.8f, gap %.3e, %d stationary curves",
                    n, history[-1].objective, t, gap, len(stationary))

        if t <= 1.0:
            termination = TerminationReason.CONVERGED
            break
        if gap < cfg.tol:
            termination = TerminationReason.GAP_BELOW_TOL
            break

        inserted = _new_curves(stationary, measure.curves, cfg.mode, cfg.multistart.dedup_tol)
        if not inserted:
            logger.warning("Iteration %d: gap %.3e but every stationary curve is already an atom", n, gap)
            termination = TerminationReason.NO_NEW_CURVE
            break

        before = history[-1].objective
        curves = measure.curves + inserted
        rounds = 1 if cfg.mode is SolverMode.CORE else cfg.k_max
        first_order = 0.0
        for k in range(rounds):
            measure, residual_k = _coefficient_step(curves, problem, cfg, n)
            first_order = max(first_order, residual_k)
            if cfg.mode is SolverMode.FULL and not measure.is_empty:
                round_start = objective(measure, problem).total
                try:
                    measure = slide(measure, problem, cfg.slide, cfg.multistart.dedup_tol)
                except DescentError as e:
                    raise SolverError(n, str(e)) from e
                logger.debug("Round %d: slide decreased objective by %.3e",
                             k, round_start - objective(measure, problem).total)
            curves = measure.curves

        value = objective(measure, problem)
        if value.total > before + cfg.monotonicity_slack:
            raise MonotonicityError(n, before, value.total)

        monitor.record(value.total)
        history.append(HistoryEntry(n + 1, value.total, value.fidelity, value.regularizer,
                                    len(measure), time.perf_counter() - started,
                                    first_order_residual=first_order))
        logger.info("Iteration %d: inserted %d curve(s), %d atoms, objective %.10e",
                    n, len(inserted), len(measure), value.total)

    logger.info("Finished after %d iterations: %s", len(history) - 1, termination.value)
    return SolveReport(measure, history, termination, monitor)
