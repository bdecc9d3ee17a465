#!/usr/bin/env python3
"""
Weights Module
Оптимизация коэффициентов атомов

For fixed curves the objective is a quadratic in the weights:

    objective(sum c_j mu_j) = 1/2 c^T Gamma c + b^T c + M_0
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from geometry import Curve, normalization
from problem import Problem

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


class QPSolveError(RuntimeError):
    """
    Iteration budget exhausted before the KKT tolerance was met
    """

    def __init__(self, best: np.ndarray, residual: float, iterations: int):
        super().__init__(
            f"NNQP did not reach KKT tolerance after {iterations} iterations (residual {residual:.3e})"
        )
        self.best = best
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class QuadraticProgram:
    """
    min_{c >= 0} 1/2 c^T gamma c + b^T c + offset
    """
    gamma: np.ndarray
    b: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1] or gamma.shape[0] != b.shape[0]:
            raise ValueError(f"Incompatible QP shapes {gamma.shape} and {b.shape}")
        if not np.allclose(gamma, gamma.T, rtol=0.0, atol=SYMMETRY_TOL * max(1.0, np.abs(gamma).max(initial=0.0))):
            raise ValueError("QP matrix must be symmetric")
        object.__setattr__(self, 'gamma', 0.5 * (gamma + gamma.T))
        object.__setattr__(self, 'b', b)

    @property
    def size(self) -> int:
        return self.b.shape[0]

    def value(self, c: np.ndarray) -> float:
        return float(0.5 * c @ self.gamma @ c + self.b @ c + self.offset)

    def gradient(self, c: np.ndarray) -> np.ndarray:
        return self.gamma @ c + self.b

    def kkt_residual(self, c: np.ndarray) -> float:
        """max of negativity of c, negativity of g, and complementarity |c_j g_j|"""
        if self.size == 0:
            return 0.0
        g = self.gradient(c)
        return float(max(np.max(-c, initial=0.0), np.max(-g, initial=0.0), np.max(np.abs(c * g))))


def assemble_qp(curves: Sequence[Curve], problem: Problem) -> QuadraticProgram:
    """
    Gram matrix and linear term of the coefficient problem

    gamma_jk = a_j a_k / (T+1) sum_i Re <psi_i(gamma_j), psi_i(gamma_k)> / n_i
    b_j      = 1 - a_j / (T+1) sum_i Re <psi_i(gamma_j), f_i> / n_i

    Args:
        curves: Atom curves on the problem grid
        problem: Problem

    Returns:
        QuadraticProgram: offset is M_0, so value(c) is the objective
    """
    curves = list(curves)
    if not curves:
        raise ValueError("assemble_qp needs at least one curve")
    if any(g.T != problem.grid.T for g in curves):
        raise ValueError("Curves and problem live on different grids")

    a = np.array([normalization(g, problem.alpha, problem.beta) for g in curves])
    n = len(curves)
    gram = np.zeros((n, n))
    correlation = np.zeros(n)
    for i in range(problem.grid.size):
        points = np.stack([g.nodes[i] for g in curves])
        psi = problem.forward.kernel(i, points)
        count = psi.shape[1]
        gram += (psi @ psi.conj().T).real / count
        correlation += (psi @ problem.data[i].conj()).real / count

    size = problem.grid.size
    gamma = np.outer(a, a) * gram / size
    b = 1.0 - a * correlation / size
    return QuadraticProgram(gamma, b, problem.zero_objective)


def _polish(qp: QuadraticProgram, c: np.ndarray) -> Optional[np.ndarray]:
    """
    Solve the equality system on the support of c, dropping coordinates
    that come out nonpositive; None if the support empties
    """
    support = np.flatnonzero(c > 0)
    while support.size:
        sub = qp.gamma[np.ix_(support, support)]
        x, _, rank, _ = linalg.lstsq(sub, -qp.b[support])
        if rank < support.size:
            logger.warning("Singular reduced QP system (rank %d of %d); using least-norm solution",
                           rank, support.size)
        if np.all(x > 0):
            polished = np.zeros(qp.size)
            polished[support] = x
            return polished
        support = support[x > 0]
    return None


def solve_nnqp(qp: QuadraticProgram, tol: float = 1e-9, max_iterations: int = 10_000,
               polish_every: int = 10) -> np.ndarray:
    """
    Nonnegative quadratic program by projected gradient with
    Barzilai-Borwein steps and periodic active-set polish

    Args:
        qp: QuadraticProgram with PSD matrix
        tol: KKT tolerance
        max_iterations: Projected-gradient budget
        polish_every: Polish attempt period

    Returns:
        np.ndarray: c >= 0 with kkt_residual(c) <= tol

    Raises:
        QPSolveError: If the budget runs out
    """
    if qp.size == 0:
        return np.zeros(0)

    lipschitz = float(np.linalg.eigvalsh(qp.gamma)[-1])
    if lipschitz <= 0:
        # gamma == 0: separable, c_j = 0 if b_j >= 0, unbounded below otherwise
        if np.all(qp.b >= -tol):
            return np.zeros(qp.size)
        raise QPSolveError(np.zeros(qp.size), float(-qp.b.min()), 0)

    c = np.zeros(qp.size)
    g = qp.gradient(c)
    step = 1.0 / lipschitz
    best, best_residual = c, qp.kkt_residual(c)
    if best_residual <= tol:
        return c

    for iteration in range(1, max_iterations + 1):
        c_next = np.maximum(c - step * g, 0.0)
        if qp.value(c_next) > qp.value(c):
            c_next = np.maximum(c - g / lipschitz, 0.0)
        g_next = qp.gradient(c_next)
        s, y = c_next - c, g_next - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 1.0 / lipschitz
        step = min(max(step, 1e-3 / lipschitz), 1e3 / lipschitz)
        c, g = c_next, g_next

        residual = qp.kkt_residual(c)
        if residual < best_residual:
            best, best_residual = c, residual
        if residual <= tol:
            logger.debug("NNQP converged by projected gradient in %d iterations", iteration)
            return c

        if iteration % polish_every == 0:
            polished = _polish(qp, c)
            if polished is not None and qp.kkt_residual(polished) <= tol:
                logger.debug("NNQP converged by active-set polish after %d iterations", iteration)
                return polished

    raise QPSolveError(best, best_residual, max_iterations)
