#!/usr/bin/env python3
"""
Sliding Module
Скольжение: спуск по кривым при фиксированных весах

With the weights fixed the regularizer sum_j c_j is constant, so the
sliding step descends the fidelity over the stacked atom nodes.
"""

import logging
from typing import List, Tuple

import numpy as np

from config import SlideConfig
from forward import Measurements
from geometry import Curve, SparseMeasure
from insertion import DescentError, value_and_gradient
from problem import DualVariable, Problem, objective

logger = logging.getLogger(__name__)


def _intensities(weights: np.ndarray, stack: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    T = stack.shape[1] - 1
    energy = 0.5 * beta * T * np.sum(np.diff(stack, axis=1) ** 2, axis=(1, 2)) + alpha
    return weights / energy


def _evaluate(weights: np.ndarray, stack: np.ndarray, problem: Problem) -> Tuple[float, Measurements]:
    """Objective and residual for atoms with the given weights on the stacked nodes"""
    intensities = _intensities(weights, stack, problem.alpha, problem.beta)
    forward = problem.forward
    residual = Measurements([
        intensities @ forward.kernel(i, stack[:, i, :]) - problem.data[i]
        for i in range(problem.grid.size)
    ])
    fidelity = float(np.sum(residual.norms_squared()) / (2 * problem.grid.size))
    return fidelity + float(np.sum(weights)), residual


def _stack_gradient(weights: np.ndarray, stack: np.ndarray, w: DualVariable) -> np.ndarray:
    alpha, beta = w.problem.alpha, w.problem.beta
    return np.stack([
        c * value_and_gradient(nodes, w, alpha, beta)[1] for c, nodes in zip(weights, stack)
    ])


def slide_gradient(measure: SparseMeasure, problem: Problem) -> List[np.ndarray]:
    """
    Gradient of the objective over the atom nodes at fixed weights

    For atom j it equals c_j times the insertion gradient of its curve
    under the dual variable of the whole measure.

    Args:
        measure: SparseMeasure
        problem: Problem

    Returns:
        List[np.ndarray]: one (T+1, 2) array per atom
    """
    if measure.is_empty:
        return []
    stack = np.stack([g.nodes for g in measure.curves])
    _, residual = _evaluate(measure.weights, stack, problem)
    grads = _stack_gradient(measure.weights, stack, DualVariable(problem, residual))
    return list(grads)


def merge_collisions(measure: SparseMeasure, problem: Problem, dedup_tol: float,
                     slack: float = 1e-10) -> SparseMeasure:
    """
    Merge atoms whose curves are within dedup_tol at every time

    The lighter atom's weight moves onto the heavier atom's curve; a
    merge that raises the objective by more than `slack` is skipped.

    Args:
        measure: SparseMeasure
        problem: Problem
        dedup_tol: Max node distance of colliding curves
        slack: Allowed objective increase

    Returns:
        SparseMeasure
    """
    weights = list(measure.weights)
    curves = measure.curves
    current = objective(measure, problem).total

    merged = True
    while merged:
        merged = False
        for j in range(len(curves)):
            for k in range(j + 1, len(curves)):
                if curves[j].distance(curves[k]) >= dedup_tol:
                    continue
                keep, drop = (j, k) if weights[j] >= weights[k] else (k, j)
                new_weights = [c for idx, c in enumerate(weights) if idx != drop]
                new_curves = [g for idx, g in enumerate(curves) if idx != drop]
                new_weights[new_curves.index(curves[keep])] += weights[drop]
                candidate = SparseMeasure.from_lists(measure.alpha, measure.beta, new_weights, new_curves)
                value = objective(candidate, problem).total
                if value <= current + slack:
                    logger.warning("Merged colliding atoms (distance %.2e, weights %.3e + %.3e)",
                                   curves[j].distance(curves[k]), weights[keep], weights[drop])
                    weights, curves, current = new_weights, new_curves, value
                    merged = True
                    break
            if merged:
                break
    return SparseMeasure.from_lists(measure.alpha, measure.beta, weights, curves)


def _merge_identical(weights: np.ndarray, curves: List[Curve]) -> Tuple[List[float], List[Curve]]:
    out_weights: List[float] = []
    out_curves: List[Curve] = []
    for c, g in zip(weights, curves):
        if g in out_curves:
            out_weights[out_curves.index(g)] += float(c)
        else:
            out_weights.append(float(c))
            out_curves.append(g)
    return out_weights, out_curves


def slide(measure: SparseMeasure, problem: Problem, cfg: SlideConfig,
          dedup_tol: float = 1e-3) -> SparseMeasure:
    """
    Projected backtracking-Armijo descent of the objective over all
    atom curves, weights fixed, dual variable refreshed every step

    Args:
        measure: Nonempty SparseMeasure
        problem: Problem
        cfg: Slide parameters
        dedup_tol: Collision distance for merging atoms afterwards

    Returns:
        SparseMeasure: objective not above the input's

    Raises:
        DescentError: If a non-finite value appears
    """
    if measure.is_empty or cfg.inner_steps == 0:
        return measure

    weights = measure.weights
    stack = np.stack([g.nodes for g in measure.curves])
    start_value, residual = _evaluate(weights, stack, problem)
    value = start_value
    step = cfg.initial_step

    for iteration in range(cfg.inner_steps):
        grad = _stack_gradient(weights, stack, DualVariable(problem, residual))
        if not np.all(np.isfinite(grad)):
            raise DescentError("Non-finite sliding gradient", iteration, value, step)
        if np.linalg.norm(stack - np.clip(stack - grad, 0.0, 1.0)) < cfg.gradient_tol:
            break

        accepted = False
        for _ in range(cfg.max_backtracks):
            candidate = np.clip(stack - step * grad, 0.0, 1.0)
            decrease = float(np.sum(grad * (stack - candidate)))
            candidate_value, candidate_residual = _evaluate(weights, candidate, problem)
            if not np.isfinite(candidate_value):
                raise DescentError("Non-finite sliding objective", iteration, candidate_value, step)
            if decrease > 0 and candidate_value <= value - cfg.armijo_slope * decrease:
                accepted = True
                break
            step *= cfg.armijo_shrink
        if not accepted:
            break
        stack, value, residual = candidate, candidate_value, candidate_residual
        step /= cfg.armijo_shrink

    logger.debug("Slide: objective %.6e -> %.6e", start_value, value)
    merged_weights, curves = _merge_identical(weights, [Curve.clamped(nodes) for nodes in stack])
    slid = SparseMeasure.from_lists(measure.alpha, measure.beta, merged_weights, curves)
    return merge_collisions(slid, problem, dedup_tol)
