#!/usr/bin/env python3
"""
Problem Module
Дискретная по времени вариационная задача

    min_mu  1/(2(T+1)) sum_i ||K*_{t_i} rho_{t_i} - f_{t_i}||^2 + J(mu)

plus everything derived from a residual: dual variable, pairing with
atoms, primal-dual gap, positivity test and backprojection rasters.
"""

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Union

import numpy as np

from forward import ForwardOperator, FrequencySchedule, Measurements
from geometry import Curve, SparseMeasure, TimeGrid, normalization, regularizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Problem:
    """
    Data f, schedule and regularization parameters on one time grid
    """
    grid: TimeGrid
    schedule: FrequencySchedule
    data: Measurements
    alpha: float
    beta: float
    forward: ForwardOperator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.schedule.T != self.grid.T:
            raise ValueError(f"Schedule has T = {self.schedule.T}, grid has T = {self.grid.T}")
        if not self.data.matches(self.schedule):
            raise ValueError("Data lengths do not match the frequency schedule")
        object.__setattr__(self, 'forward', ForwardOperator(self.schedule))

    @property
    def zero_objective(self) -> float:
        """M_0: objective of the zero measure"""
        return float(np.sum(self.data.norms_squared()) / (2 * self.grid.size))

    def empty_measure(self) -> SparseMeasure:
        return SparseMeasure(self.alpha, self.beta)

    def data_norm(self) -> float:
        """sqrt(sum_i ||f_i||^2)"""
        return float(np.sqrt(np.sum(self.data.norms_squared())))


class ObjectiveValue(NamedTuple):
    total: float
    fidelity: float
    regularizer: float


def synthesize(ground_truth: SparseMeasure, schedule: FrequencySchedule) -> Measurements:
    """
    Noiseless data f_{t_i} = K*_{t_i} rho^dagger_{t_i}

    Args:
        ground_truth: SparseMeasure on the schedule's grid
        schedule: Frequency schedule

    Returns:
        Measurements
    """
    return ForwardOperator(schedule).apply_forward_all(ground_truth)


def add_noise(data: Measurements, noise_level: float, seed: Optional[int] = None) -> Measurements:
    """
    Relative complex Gaussian noise

    f^eps = f + eps * sqrt(sum ||f_i||^2 / sum ||nu_i||^2) * nu,
    nu = U + iV with U, V independent standard Gaussians. nu depends on
    the seed only, so different levels with one seed share a realization.

    Args:
        data: Noiseless data
        noise_level: eps >= 0
        seed: Seed of the generator

    Returns:
        Measurements

    Raises:
        ValueError: eps < 0, or eps > 0 with identically zero data
    """
    if noise_level < 0:
        raise ValueError("noise level must be nonnegative")
    if noise_level == 0:
        return data
    if data.is_zero():
        raise ValueError("Cannot scale relative noise for identically zero data")

    rng = np.random.default_rng(seed)
    nu = Measurements([
        rng.standard_normal(v.size) + 1j * rng.standard_normal(v.size) for v in data
    ])
    scale = noise_level * np.sqrt(np.sum(data.norms_squared()) / np.sum(nu.norms_squared()))
    logger.debug("Adding %.1f%% relative noise (scale %.3e)", 100 * noise_level, scale)
    return data + nu.scale(scale)


def residual(measure: SparseMeasure, problem: Problem) -> Measurements:
    """K* rho - f at every sampling time"""
    return problem.forward.apply_forward_all(measure) - problem.data


def objective(measure: SparseMeasure, problem: Problem) -> ObjectiveValue:
    """
    Target functional with its two parts

    Args:
        measure: SparseMeasure
        problem: Problem

    Returns:
        ObjectiveValue: (total, fidelity, regularizer)
    """
    fidelity = float(np.sum(residual(measure, problem).norms_squared()) / (2 * problem.grid.size))
    reg = regularizer(measure)
    return ObjectiveValue(fidelity + reg, fidelity, reg)


class DualVariable:
    """
    w_{t_i}(x) = -(K_{t_i} r_{t_i})(x), r = K* rho - f
    Двойственная переменная
    """

    def __init__(self, problem: Problem, residual_data: Measurements):
        """
        Args:
            problem: Problem the residual belongs to
            residual_data: r = K* rho - f
        """
        if not residual_data.matches(problem.schedule):
            raise ValueError("Residual lengths do not match the frequency schedule")
        self.problem = problem
        self.residual = residual_data
        forward = problem.forward
        self._stacked = np.stack(list(residual_data)) if forward.uniform_counts else None

    @property
    def grid(self) -> TimeGrid:
        return self.problem.grid

    def __call__(self, i: int, points) -> np.ndarray:
        return -self.problem.forward.apply_preadjoint(self.residual[i], i, points)

    def gradient(self, i: int, points) -> np.ndarray:
        return -self.problem.forward.apply_preadjoint_grad(self.residual[i], i, points)

    def along(self, curve: Union[Curve, np.ndarray]) -> np.ndarray:
        """w_{t_i}(gamma(t_i)) for every i; accepts a Curve or its (T+1, 2) nodes"""
        nodes = curve.nodes if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
        if self._stacked is not None:
            psi = self.problem.forward.kernel_along(nodes)
            return -np.sum(psi * np.conj(self._stacked), axis=1).real / self._stacked.shape[1]
        return np.array([float(self(i, nodes[i])) for i in range(self.grid.size)])

    def gradient_along(self, curve: Union[Curve, np.ndarray]) -> np.ndarray:
        """grad w_{t_i}(gamma(t_i)), shape (T+1, 2)"""
        nodes = curve.nodes if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
        if self._stacked is not None:
            grad = self.problem.forward.kernel_grad_along(nodes)
            return -np.einsum('ikd,ik->id', grad, np.conj(self._stacked)).real / self._stacked.shape[1]
        return np.stack([self.gradient(i, nodes[i]) for i in range(self.grid.size)])

    def time_average(self, points) -> np.ndarray:
        """1/(T+1) sum_i w_{t_i}(x) for a stack of points"""
        return np.mean([self(i, points) for i in range(self.grid.size)], axis=0)

    def bound(self, i: int) -> float:
        """Upper bound of |w_{t_i}| (kernel entries have modulus <= 1)"""
        r = self.residual[i]
        return float(np.sum(np.abs(r)) / r.size)

    def is_zero(self) -> bool:
        return self.residual.is_zero()


def dual_variable(measure: SparseMeasure, problem: Problem) -> DualVariable:
    """
    Dual variable of an iterate; the residual is computed once

    Args:
        measure: Current iterate
        problem: Problem

    Returns:
        DualVariable
    """
    return DualVariable(problem, residual(measure, problem))


def pairing(curve: Curve, w: DualVariable) -> float:
    """
    <rho_gamma, w> = a_gamma / (T+1) * sum_i w_{t_i}(gamma(t_i))

    Args:
        curve: Curve on the problem grid
        w: Dual variable

    Returns:
        float
    """
    if curve.T != w.grid.T:
        raise ValueError("Curve and dual variable live on different grids")
    a = normalization(curve, w.problem.alpha, w.problem.beta)
    return float(a * np.mean(w.along(curve)))


def gap_function(t: float, m0: float) -> float:
    """
    Lambda(t) = 0 for t <= 1, M_0/2 (t^2 - 1) otherwise
    """
    if t <= 1.0:
        return 0.0
    return 0.5 * m0 * (t * t - 1.0)


def dual_gap(measure: SparseMeasure, curve: Curve, problem: Problem,
             w: Optional[DualVariable] = None) -> float:
    """
    Primal-dual gap of an iterate through its best insertion curve

    Args:
        measure: Current iterate
        curve: Best stationary curve found for the iterate's dual variable
        problem: Problem
        w: Dual variable of `measure` if already built

    Returns:
        float: Lambda(<rho_gamma*, w>) >= 0
    """
    if w is None:
        w = dual_variable(measure, problem)
    return gap_function(pairing(curve, w), problem.zero_objective)


def positivity_test(w: DualVariable, resolution: int = 64, polish_steps: int = 20) -> float:
    """
    P(w) = 1/(T+1) sum_i max_x w_{t_i}(x)

    The per-time maximum comes from a resolution x resolution grid over
    [0,1]^2 followed by projected gradient ascent from the best cell.
    P(w) <= 0 means the zero measure is optimal.

    Args:
        w: Dual variable
        resolution: Grid points per axis (>= 2)
        polish_steps: Ascent steps

    Returns:
        float
    """
    if resolution < 2:
        raise ValueError("positivity test resolution must be at least 2")
    if w.is_zero():
        return 0.0

    axis = np.linspace(0.0, 1.0, resolution)
    xx, yy = np.meshgrid(axis, axis, indexing='ij')
    grid_points = np.stack([xx.ravel(), yy.ravel()], axis=1)
    cell = 1.0 / (resolution - 1)

    maxima = np.empty(w.grid.size)
    for i in range(w.grid.size):
        values = w(i, grid_points)
        best = int(np.argmax(values))
        x, value = grid_points[best].copy(), float(values[best])
        step = cell
        for _ in range(polish_steps):
            g = w.gradient(i, x)
            norm = float(np.linalg.norm(g))
            if norm == 0.0:
                break
            candidate = np.clip(x + step * g / norm, 0.0, 1.0)
            candidate_value = float(w(i, candidate))
            if candidate_value > value:
                x, value = candidate, candidate_value
            else:
                step *= 0.5
        maxima[i] = value
    return float(np.mean(maxima))


def backprojection_raster(data: Measurements, i: int, resolution: int,
                          forward: ForwardOperator) -> np.ndarray:
    """
    8-bit image of the backprojection K_{t_i} f_{t_i}

    Pixel (r, c) samples x = ((c + 0.5)/res, 1 - (r + 0.5)/res), so row 0
    is the top of the square. Values are min-max scaled to 0..255; a
    constant field gives an all-zero image.

    Args:
        data: Measurements to backproject
        i: Time index
        resolution: Pixels per side
        forward: Operator of the schedule

    Returns:
        np.ndarray: (resolution, resolution) uint8
    """
    if resolution < 1:
        raise ValueError("raster resolution must be positive")
    centers = (np.arange(resolution) + 0.5) / resolution
    cols, rows = np.meshgrid(centers, centers[::-1], indexing='xy')
    points = np.stack([cols.ravel(), rows.ravel()], axis=1)
    field_values = forward.apply_preadjoint(data[i], i, points).reshape(resolution, resolution)

    low, high = float(field_values.min()), float(field_values.max())
    if high - low <= 0.0:
        return np.zeros((resolution, resolution), dtype=np.uint8)
    scaled = np.round(255.0 * (field_values - low) / (high - low))
    return scaled.astype(np.uint8)


class ResidualMonitor:
    """
    Objective/gap history and the derived numerical residuals
    Мониторинг сходимости
    """

    def __init__(self):
        self.objectives: List[float] = []
        self.gaps: List[float] = []

    def record(self, objective_value: float, gap: Union[float, None] = None) -> None:
        self.objectives.append(float(objective_value))
        self.gaps.append(float('nan') if gap is None else float(gap))

    def set_last_gap(self, gap: float) -> None:
        if self.gaps:
            self.gaps[-1] = float(gap)

    def residuals(self) -> np.ndarray:
        """r~(mu^n) = T(mu^n) - T(mu^N) against the last recorded iterate"""
        objectives = np.asarray(self.objectives)
        if objectives.size == 0:
            return objectives
        return objectives - objectives[-1]

    def residual_below_gap_fraction(self) -> float:
        """Fraction of iterations n < N with r~ <= G~ (gaps recorded)"""
        res = self.residuals()[:-1]
        gaps = np.asarray(self.gaps)[:-1]
        valid = ~np.isnan(gaps)
        if not np.any(valid):
            return 1.0
        return float(np.mean(res[valid] <= gaps[valid] + 1e-12))

    def sublinear_envelope_holds(self) -> bool:
        """r~(mu^n) <= r~(mu^1) / n for n >= 1 (reported, not enforced)"""
        res = self.residuals()
        if res.size < 3:
            return True
        c = res[1]
        n = np.arange(1, res.size)
        return bool(np.all(res[1:] <= c / n + 1e-12))
