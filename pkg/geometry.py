#!/usr/bin/env python3
"""
Geometry Module
Кривые, атомы и разреженные меры

Curves are stored at the sampling times only and read as their
piecewise-linear interpolant. An atom of weight c on a curve gamma
has unit regularizer per unit weight, so J(sum c_j mu_j) = sum c_j.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

# max-node-distance below which two curves are the same curve
CURVE_EQUALITY_TOL = 1e-6
# weights below this are zero
WEIGHT_THRESHOLD = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """
    Uniform sampling times t_i = i/T, i = 0..T
    """
    T: int

    def __post_init__(self):
        if not isinstance(self.T, (int, np.integer)) or self.T < 1:
            raise ValueError(f"TimeGrid needs a positive integer T, got {self.T!r}")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.T + 1)

    @property
    def size(self) -> int:
        """Number of sampling times (T + 1)"""
        return self.T + 1

    @property
    def spacing(self) -> float:
        return 1.0 / self.T


class Curve:
    """
    Piecewise-linear curve in the closed unit square

    Immutable: the node array is copied and made read-only.
    """

    __slots__ = ('_nodes',)

    def __init__(self, nodes: Union[np.ndarray, Iterable]):
        """
        Args:
            nodes: (T+1, 2) positions gamma(t_i)

        Raises:
            ValueError: wrong shape, fewer than two nodes, non-finite
                or outside [0, 1]^2
        """
        arr = np.array(nodes, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            raise ValueError(f"Curve nodes must have shape (T+1, 2) with T >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Curve nodes must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("Curve nodes must lie in the closed unit square")
        arr.setflags(write=False)
        self._nodes = arr

    @classmethod
    def constant(cls, point, grid: TimeGrid) -> 'Curve':
        """Static curve sitting at `point`"""
        return cls(np.tile(np.asarray(point, dtype=float), (grid.size, 1)))

    @classmethod
    def line(cls, start, velocity, grid: TimeGrid) -> 'Curve':
        """gamma(t) = start + t * velocity sampled on the grid"""
        t = grid.nodes[:, None]
        return cls(np.asarray(start, dtype=float)[None, :] + t * np.asarray(velocity, dtype=float)[None, :])

    @classmethod
    def clamped(cls, nodes: np.ndarray) -> 'Curve':
        """Build a curve after projecting nodes onto [0, 1]^2"""
        return cls(np.clip(nodes, 0.0, 1.0))

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def T(self) -> int:
        return self._nodes.shape[0] - 1

    def evaluate(self, t) -> np.ndarray:
        """
        Position at arbitrary times in [0, 1] (linear interpolation)

        Args:
            t: scalar or array of times

        Returns:
            np.ndarray: (..., 2) positions
        """
        times = np.linspace(0.0, 1.0, self.T + 1)
        t = np.asarray(t, dtype=float)
        x = np.interp(t, times, self._nodes[:, 0])
        y = np.interp(t, times, self._nodes[:, 1])
        return np.stack([x, y], axis=-1)

    def resample(self, grid: TimeGrid) -> 'Curve':
        """Linear interpolation of this curve onto another uniform grid"""
        return Curve(self.evaluate(grid.nodes))

    def distance(self, other: 'Curve') -> float:
        """Max node distance; curves must share the node count"""
        if other.T != self.T:
            raise ValueError(f"Cannot compare curves with {self.T + 1} and {other.T + 1} nodes")
        return float(np.max(np.linalg.norm(self._nodes - other.nodes, axis=1)))

    def is_close(self, other: 'Curve', tol: float = CURVE_EQUALITY_TOL) -> bool:
        return self.distance(other) <= tol

    def sort_key(self) -> Tuple[float, ...]:
        """Serialization order, used to break ties deterministically"""
        return tuple(self._nodes.ravel().tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Curve):
            return NotImplemented
        return self._nodes.shape == other.nodes.shape and bool(np.array_equal(self._nodes, other.nodes))

    def __hash__(self) -> int:
        return hash(self._nodes.tobytes())

    def __repr__(self) -> str:
        return f"Curve(T={self.T}, start={self._nodes[0].tolist()}, end={self._nodes[-1].tolist()})"


class InfinityCurve:
    """
    The point at infinity of the curve space: normalization 0, zero atom
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    normalization = 0.0

    def __repr__(self) -> str:
        return "InfinityCurve()"


INFINITY_CURVE = InfinityCurve()


def kinetic_energy(curve: Curve, grid: TimeGrid) -> float:
    """
    Dirichlet energy of the piecewise-linear curve

    int_0^1 |gamma'(t)|^2 dt = T * sum_i |gamma(t_{i+1}) - gamma(t_i)|^2

    Args:
        curve: Curve on `grid`
        grid: Time grid

    Returns:
        float: nonnegative energy

    Raises:
        ValueError: node count does not match the grid
    """
    if curve.T != grid.T:
        raise ValueError(f"Curve has {curve.T + 1} nodes but the grid has {grid.size}")
    increments = np.diff(curve.nodes, axis=0)
    return float(grid.T * np.sum(increments ** 2))


def curve_energy(curve: Curve, alpha: float, beta: float) -> float:
    """L(gamma) = beta/2 * int |gamma'|^2 + alpha"""
    return 0.5 * beta * kinetic_energy(curve, TimeGrid(curve.T)) + alpha


def normalization(curve: Curve, alpha: float, beta: float) -> float:
    """
    a_gamma = 1 / L(gamma)

    Args:
        curve: Curve
        alpha: Positive regularization parameter
        beta: Positive regularization parameter

    Returns:
        float: positive normalization
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    return 1.0 / curve_energy(curve, alpha, beta)


def intensity(weight: float, curve: Curve, alpha: float, beta: float) -> float:
    """I = c * a_gamma, the per-time amplitude of the atom"""
    return weight * normalization(curve, alpha, beta)


@dataclass(frozen=True)
class Atom:
    """Weighted curve"""
    weight: float
    curve: Curve


@dataclass(frozen=True)
class SparseMeasure:
    """
    Conic combination sum_j c_j mu_{gamma_j}

    Atoms with weights at or below WEIGHT_THRESHOLD are rejected;
    `with_weights()` drops them instead.
    """
    alpha: float
    beta: float
    atoms: Tuple[Atom, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        object.__setattr__(self, 'atoms', tuple(self.atoms))
        node_counts = {atom.curve.T for atom in self.atoms}
        if len(node_counts) > 1:
            raise ValueError("All atoms must live on the same time grid")
        for atom in self.atoms:
            if not atom.weight > WEIGHT_THRESHOLD:
                raise ValueError(f"Atom weights must be positive, got {atom.weight}")
        if len(set(atom.curve for atom in self.atoms)) != len(self.atoms):
            raise ValueError("Two atoms share an identical curve")

    @classmethod
    def from_lists(cls, alpha: float, beta: float, weights: Iterable[float],
                   curves: Iterable[Curve]) -> 'SparseMeasure':
        return cls(alpha, beta, tuple(Atom(float(c), g) for c, g in zip(weights, curves)))

    @classmethod
    def from_intensities(cls, alpha: float, beta: float, intensities: Iterable[float],
                         curves: Iterable[Curve]) -> 'SparseMeasure':
        """Build a measure whose atoms carry the given intensities c_j a_j"""
        curves = list(curves)
        weights = [i / normalization(g, alpha, beta) for i, g in zip(intensities, curves)]
        return cls.from_lists(alpha, beta, weights, curves)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def is_empty(self) -> bool:
        return not self.atoms

    @property
    def weights(self) -> np.ndarray:
        return np.array([atom.weight for atom in self.atoms], dtype=float)

    @property
    def curves(self) -> List[Curve]:
        return [atom.curve for atom in self.atoms]

    @property
    def normalizations(self) -> np.ndarray:
        return np.array([normalization(g, self.alpha, self.beta) for g in self.curves], dtype=float)

    @property
    def intensities(self) -> np.ndarray:
        return self.weights * self.normalizations

    def positions(self, i: int) -> np.ndarray:
        """(N, 2) atom positions at sampling time index i"""
        if self.is_empty:
            return np.zeros((0, 2))
        return np.stack([g.nodes[i] for g in self.curves])

    def mass_per_time(self) -> np.ndarray:
        """
        Total spatial mass sum_j c_j a_j at every sampling time
        (constant in time by construction)
        """
        if self.is_empty:
            return np.zeros(0)
        total = float(np.sum(self.intensities))
        return np.full(self.atoms[0].curve.T + 1, total)

    def with_weights(self, weights: Iterable[float]) -> 'SparseMeasure':
        """Same curves, new weights; zero weights are dropped"""
        weights = list(weights)
        if len(weights) != len(self.atoms):
            raise ValueError("Weight count does not match atom count")
        kept = tuple(Atom(float(c), g) for c, g in zip(weights, self.curves) if c > WEIGHT_THRESHOLD)
        return SparseMeasure(self.alpha, self.beta, kept)

    def with_curves(self, curves: Iterable[Curve]) -> 'SparseMeasure':
        """Same weights, new curves"""
        curves = list(curves)
        if len(curves) != len(self.atoms):
            raise ValueError("Curve count does not match atom count")
        return SparseMeasure.from_lists(self.alpha, self.beta, self.weights, curves)

    def scaled(self, factor: float) -> 'SparseMeasure':
        return self.with_weights(self.weights * factor)


def regularizer(measure: SparseMeasure) -> float:
    """
    J_{alpha,beta} of a sparse measure: the sum of its weights

    Args:
        measure: SparseMeasure

    Returns:
        float: sum_j c_j
    """
    return float(sum(atom.weight for atom in measure.atoms))
