#!/usr/bin/env python3
"""
Insertion Module
Шаг вставки: поиск стационарных кривых

Minimizes F(gamma) = W(gamma) / L(gamma) over curves, with
W(gamma) = -1/(T+1) sum_i w_{t_i}(gamma(t_i)) and L the curve energy,
by Armijo descent from random and crossover starts.
"""

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import solveh_banded

from config import DescentConfig, MultistartConfig
from geometry import INFINITY_CURVE, Curve, InfinityCurve, TimeGrid
from problem import DualVariable, positivity_test

logger = logging.getLogger(__name__)

PROPOSAL_BATCH = 1000


class DescentError(RuntimeError):
    """
    Non-finite values during a descent
    """

    def __init__(self, message: str, iteration: int, value: float, step: float):
        super().__init__(f"{message} (iteration {iteration}, value {value!r}, step {step!r})")
        self.iteration = iteration
        self.value = value
        self.step = step


def energy_gradient(nodes: np.ndarray, beta: float) -> np.ndarray:
    """
    Gradient of L(gamma) = beta/2 T sum |gamma_{i+1} - gamma_i|^2 + alpha
    with respect to the nodes

    Args:
        nodes: (T+1, 2) curve nodes
        beta: Speed penalization

    Returns:
        np.ndarray: (T+1, 2)
    """
    T = nodes.shape[0] - 1
    lap = np.zeros_like(nodes)
    diff = np.diff(nodes, axis=0)
    lap[:-1] -= diff
    lap[1:] += diff
    return beta * T * lap


def _value(nodes: np.ndarray, w: DualVariable, alpha: float, beta: float) -> float:
    T = nodes.shape[0] - 1
    energy = 0.5 * beta * T * float(np.sum(np.diff(nodes, axis=0) ** 2)) + alpha
    return float(-np.mean(w.along(nodes)) / energy)


def value_and_gradient(nodes: np.ndarray, w: DualVariable, alpha: float, beta: float) -> Tuple[float, np.ndarray]:
    """F and its nodewise gradient on raw (T+1, 2) nodes"""
    T = nodes.shape[0] - 1
    energy = 0.5 * beta * T * float(np.sum(np.diff(nodes, axis=0) ** 2)) + alpha
    value = -np.mean(w.along(nodes)) / energy
    d_work = -w.gradient_along(nodes) / (T + 1)
    d_energy = energy_gradient(nodes, beta)
    return float(value), (d_work - value * d_energy) / energy


def insertion_value(curve: Curve, w: DualVariable) -> float:
    """
    F(gamma) = W(gamma) / L(gamma)

    Args:
        curve: Curve on the problem grid
        w: Dual variable

    Returns:
        float: equals -pairing(curve, w)
    """
    if curve.T != w.grid.T:
        raise ValueError("Curve and dual variable live on different grids")
    return _value(curve.nodes, w, w.problem.alpha, w.problem.beta)


def insertion_gradient(curve: Curve, w: DualVariable) -> np.ndarray:
    """
    Nodewise gradient DF = DW / L - F DL / L

    Args:
        curve: Curve on the problem grid
        w: Dual variable

    Returns:
        np.ndarray: (T+1, 2)
    """
    if curve.T != w.grid.T:
        raise ValueError("Curve and dual variable live on different grids")
    return value_and_gradient(curve.nodes, w, w.problem.alpha, w.problem.beta)[1]


def h1_riesz(gradient: np.ndarray) -> np.ndarray:
    """
    Riesz representative in the discrete H^1 inner product
    <u, v> = dt sum u.v + T sum du.dv

    Args:
        gradient: (T+1, 2) Euclidean gradient

    Returns:
        np.ndarray: (T+1, 2)
    """
    n = gradient.shape[0]
    T = n - 1
    degree = np.full(n, 2.0)
    degree[[0, -1]] = 1.0
    banded = np.zeros((2, n))
    banded[0, 1:] = -T
    banded[1, :] = 1.0 / T + T * degree
    return solveh_banded(banded, gradient)


def descend(start: Curve, w: DualVariable, cfg: DescentConfig) -> Union[Curve, InfinityCurve]:
    """
    Projected backtracking-Armijo descent of F

    Args:
        start: Initial curve
        w: Dual variable
        cfg: Descent parameters

    Returns:
        Curve | InfinityCurve: the infinity curve iff F(start) >= 0,
        otherwise the last iterate (F never above F(start))

    Raises:
        DescentError: If a non-finite value appears
    """
    alpha, beta = w.problem.alpha, w.problem.beta
    nodes = start.nodes.copy()
    value, grad = value_and_gradient(nodes, w, alpha, beta)
    if not np.isfinite(value):
        raise DescentError("Non-finite insertion value at start", 0, value, 0.0)
    if value >= 0:
        return INFINITY_CURVE

    step = cfg.initial_step
    iteration = 0
    for iteration in range(cfg.max_iterations):
        if not np.all(np.isfinite(grad)):
            raise DescentError("Non-finite insertion gradient", iteration, value, step)
        projected = nodes - np.clip(nodes - grad, 0.0, 1.0)
        if np.linalg.norm(projected) < cfg.stationarity_tol:
            break

        direction = h1_riesz(grad) if cfg.h1_preconditioner else grad
        accepted = False
        for _ in range(cfg.max_backtracks):
            candidate = np.clip(nodes - step * direction, 0.0, 1.0)
            decrease = float(np.sum(grad * (nodes - candidate)))
            candidate_value = _value(candidate, w, alpha, beta)
            if not np.isfinite(candidate_value):
                raise DescentError("Non-finite insertion value", iteration, candidate_value, step)
            if decrease > 0 and candidate_value <= value - cfg.armijo_slope * decrease:
                accepted = True
                break
            step *= cfg.armijo_shrink
        if not accepted:
            logger.debug("Descent stalled after %d iterations (F = %.6e)", iteration, value)
            break

        nodes = candidate
        value, grad = value_and_gradient(nodes, w, alpha, beta)
        step /= cfg.armijo_shrink

    logger.debug("Descent finished: %d iterations, F = %.6e", iteration, value)
    return Curve.clamped(nodes)


def sample_start(w: DualVariable, grid: TimeGrid, reweight: Callable[[np.ndarray], np.ndarray],
                 rng: np.random.Generator, anchor_stride: int = 5,
                 box: Tuple[float, float] = (0.05, 0.95),
                 max_proposals: int = 100_000) -> Curve:
    """
    Random start drawn from the density proportional to Q(w_{t_i}(x))

    Node positions are rejection-sampled on the box E at every
    `anchor_stride`-th time (and the last one) and linearly interpolated
    in between.

    Args:
        w: Dual variable
        grid: Time grid
        reweight: Q, nonnegative and nondecreasing
        rng: Random generator
        anchor_stride: Spacing of anchor times
        box: (low, high) of E = [low, high]^2
        max_proposals: Proposals per anchor before falling back to uniform

    Returns:
        Curve
    """
    anchors = list(range(0, grid.T + 1, anchor_stride))
    if anchors[-1] != grid.T:
        anchors.append(grid.T)
    low, high = box

    positions = []
    for i in anchors:
        envelope = float(reweight(np.array([w.bound(i)]))[0])
        point = None
        drawn = 0
        while envelope > 0 and drawn < max_proposals:
            proposals = rng.uniform(low, high, size=(PROPOSAL_BATCH, 2))
            density = reweight(w(i, proposals))
            accept = rng.uniform(0.0, envelope, size=PROPOSAL_BATCH) < density
            drawn += PROPOSAL_BATCH
            if np.any(accept):
                point = proposals[int(np.argmax(accept))]
                break
        if point is None:
            logger.warning("Rejection sampling found no point at time %d; sampling uniformly", i)
            point = rng.uniform(low, high, size=2)
        positions.append(point)

    positions = np.asarray(positions)
    times = grid.nodes
    anchor_times = times[anchors]
    nodes = np.stack([
        np.interp(times, anchor_times, positions[:, 0]),
        np.interp(times, anchor_times, positions[:, 1]),
    ], axis=1)
    return Curve(nodes)


def peak_start(w: DualVariable, box: Tuple[float, float] = (0.05, 0.95), resolution: int = 64) -> Curve:
    """
    Static curve at the grid maximizer of the time-averaged dual variable

    Args:
        w: Dual variable
        box: (low, high) of the searched square
        resolution: Grid points per axis

    Returns:
        Curve: constant in time
    """
    low, high = box
    axis = np.linspace(low, high, resolution)
    xx, yy = np.meshgrid(axis, axis, indexing='ij')
    points = np.stack([xx.ravel(), yy.ravel()], axis=1)
    best = points[int(np.argmax(w.time_average(points)))]
    return Curve.constant(best, w.grid)


def sample_static_start(w: DualVariable, reweight: Callable[[np.ndarray], np.ndarray],
                        rng: np.random.Generator, box: Tuple[float, float] = (0.05, 0.95),
                        max_proposals: int = 100_000) -> Curve:
    """
    Static random start: one point drawn from the density proportional to
    Q of the time-averaged dual variable, repeated at every time

    Args:
        w: Dual variable
        reweight: Q, nonnegative and nondecreasing
        rng: Random generator
        box: (low, high) of E = [low, high]^2
        max_proposals: Proposals before falling back to uniform

    Returns:
        Curve
    """
    low, high = box
    bound = float(np.mean([w.bound(i) for i in range(w.grid.size)]))
    envelope = float(reweight(np.array([bound]))[0])
    drawn = 0
    while envelope > 0 and drawn < max_proposals:
        proposals = rng.uniform(low, high, size=(PROPOSAL_BATCH, 2))
        density = reweight(w.time_average(proposals))
        accept = rng.uniform(0.0, envelope, size=PROPOSAL_BATCH) < density
        drawn += PROPOSAL_BATCH
        if np.any(accept):
            return Curve.constant(proposals[int(np.argmax(accept))], w.grid)
    logger.warning("Rejection sampling found no static point; sampling uniformly")
    return Curve.constant(rng.uniform(low, high, size=2), w.grid)


def _entry_time(outside: np.ndarray, inside: np.ndarray, eps: float) -> float:
    """
    Fraction s in [0, 1] along outside -> inside where |d| crosses eps
    (d is the difference of the two curves, linear on the interval)
    """
    q = inside - outside
    qq = float(q @ q)
    if qq == 0.0:
        return 1.0
    pq = float(outside @ q)
    c = float(outside @ outside) - eps * eps
    disc = max(pq * pq - qq * c, 0.0)
    return float(np.clip((-pq - np.sqrt(disc)) / qq, 0.0, 1.0))


def crossover(first: Curve, second: Curve, eps: float, delta: float) -> List[Curve]:
    """
    Crossovers of two curves on every interval where they are eps-close

    Closeness is detected at the nodes; each component's endpoints are
    refined to where the node-interpolated distance crosses eps. A pair
    that stays eps-close at every node yields no crossovers.

    Args:
        first: Curve
        second: Curve on the same grid
        eps: Closeness threshold
        delta: Fraction of the half-width used for the linear bridge

    Returns:
        List[Curve]: 2M curves for M components
    """
    if first.T != second.T:
        raise ValueError("Crossover needs curves on the same grid")
    if eps <= 0 or not 0 < delta < 1:
        raise ValueError("Crossover needs eps > 0 and 0 < delta < 1")

    T = first.T
    times = np.linspace(0.0, 1.0, T + 1)
    diff = first.nodes - second.nodes
    close = np.linalg.norm(diff, axis=1) < eps
    if not np.any(close) or np.all(close):
        return []

    edges = np.diff(close.astype(int))
    starts = list(np.flatnonzero(edges == 1) + 1)
    ends = list(np.flatnonzero(edges == -1))
    if close[0]:
        starts.insert(0, 0)
    if close[-1]:
        ends.append(T)

    results = []
    h = 1.0 / T
    for a, b in zip(starts, ends):
        t_minus = 0.0 if a == 0 else times[a - 1] + h * _entry_time(diff[a - 1], diff[a], eps)
        t_plus = 1.0 if b == T else times[b + 1] - h * _entry_time(diff[b + 1], diff[b], eps)
        center = 0.5 * (t_plus + t_minus)
        half = 0.5 * (t_plus - t_minus)
        lo, hi = center - delta * half, center + delta * half
        for head, tail in ((first, second), (second, first)):
            nodes = np.where((times <= lo)[:, None], head.nodes, tail.nodes)
            bridge = (times > lo) & (times < hi)
            if np.any(bridge):
                left, right = head.evaluate(lo), tail.evaluate(hi)
                s = (times[bridge] - lo) / (hi - lo)
                nodes[bridge] = left[None, :] + s[:, None] * (right - left)[None, :]
            results.append(Curve.clamped(nodes))
    return results


def _is_known(curve: Curve, known: Sequence[Curve], tol: float) -> bool:
    return any(curve.distance(other) < tol for other in known)


def multistart(known_atoms: Sequence[Curve], w: DualVariable, mcfg: MultistartConfig,
               dcfg: DescentConfig, seed: Union[None, int, Sequence[int]] = None,
               threads: int = 1) -> List[Curve]:
    """
    Multistart gradient descent for the insertion step

    The known atoms are always descended first; then `n_max` further
    starts follow. The first one is the static curve at the peak of the
    time-averaged dual variable; the others are taken from the pending
    crossovers, or sampled at random when none are pending (every
    `static_every`-th sample is a static curve). Every new stationary
    curve is crossed with all stored ones before being stored.

    Args:
        known_atoms: Curves of the current iterate
        w: Dual variable
        mcfg: Multistart parameters
        dcfg: Descent parameters
        seed: Seed; restart r uses its own child generator
        threads: Workers for the independent descents of the known atoms

    Returns:
        List[Curve]: stationary curves sorted by F ascending (ties by
        node order), possibly empty
    """
    grid = w.grid
    if not known_atoms and positivity_test(
            w, mcfg.positivity_resolution, mcfg.positivity_polish_steps) <= 0:
        logger.info("Positivity test <= 0: zero measure is optimal")
        return []

    stationary: List[Curve] = []
    pending: deque = deque()

    def incorporate(result) -> None:
        if isinstance(result, InfinityCurve) or _is_known(result, stationary, mcfg.dedup_tol):
            return
        for other in stationary:
            pending.extend(crossover(result, other, mcfg.crossover_eps, mcfg.crossover_delta))
        stationary.append(result)

    if known_atoms:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            results = list(pool.map(lambda g: descend(g, w, dcfg), known_atoms))
        for result in results:
            incorporate(result)

    children = np.random.SeedSequence(seed).spawn(mcfg.n_max)
    reweight = mcfg.reweight()
    for r in range(mcfg.n_max):
        if r == 0:
            start = peak_start(w, mcfg.sampling_box, mcfg.positivity_resolution)
        elif pending:
            start = pending.popleft()
        elif r % mcfg.static_every == 0:
            start = sample_static_start(w, reweight, np.random.default_rng(children[r]),
                                        mcfg.sampling_box, mcfg.max_proposals)
        else:
            start = sample_start(w, grid, reweight, np.random.default_rng(children[r]),
                                 mcfg.anchor_stride, mcfg.sampling_box, mcfg.max_proposals)
        incorporate(descend(start, w, dcfg))

    logger.debug("Multistart: %d stationary curves, %d crossovers left", len(stationary), len(pending))
    scored = [(insertion_value(g, w), g.sort_key(), g) for g in stationary]
    scored.sort(key=lambda item: (item[0], item[1]))
    return [g for _, _, g in scored]
