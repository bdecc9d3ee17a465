#!/usr/bin/env python3
"""
Forward Module
Недосэмплированные преобразования Фурье со сглаженной срезкой

Measurement operators K*_{t_i}: measures -> C^{n_i}, their pre-adjoints
K_{t_i}: C^{n_i} -> C^{1,1}([0,1]^2) and kernel gradients. The data space
at time i is C^{n_i} with <u, v> = Re<u, v> / n_i; that scaling lives in
the pre-adjoint and in every norm, never in the kernel.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from geometry import SparseMeasure
from utils import as_points

logger = logging.getLogger(__name__)

RAMP_WIDTH = 0.1


def _smoothstep(u: np.ndarray) -> np.ndarray:
    return 10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5


def _smoothstep_deriv(u: np.ndarray) -> np.ndarray:
    return 30 * u ** 2 - 60 * u ** 3 + 30 * u ** 4


def cutoff(z) -> np.ndarray:
    """
    C^2 cutoff: quintic ramps on [0, 0.1] and [0.9, 1], 1 in between,
    0 outside [0, 1]

    Args:
        z: scalar or array

    Returns:
        np.ndarray: chi(z), same shape as z
    """
    z = np.asarray(z, dtype=float)
    left = _smoothstep(np.clip(z, 0.0, RAMP_WIDTH) / RAMP_WIDTH)
    right = _smoothstep(np.clip(1.0 - z, 0.0, RAMP_WIDTH) / RAMP_WIDTH)
    inside = (z >= 0.0) & (z <= 1.0)
    return np.where(inside, np.minimum(left, right), 0.0)


def cutoff_deriv(z) -> np.ndarray:
    """chi'(z), zero outside [0, 1] and on the flat part"""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    left = (z >= 0.0) & (z < RAMP_WIDTH)
    right = (z > 1.0 - RAMP_WIDTH) & (z <= 1.0)
    out = np.where(left, _smoothstep_deriv(np.clip(z, 0.0, RAMP_WIDTH) / RAMP_WIDTH) / RAMP_WIDTH, out)
    out = np.where(right, -_smoothstep_deriv(np.clip(1.0 - z, 0.0, RAMP_WIDTH) / RAMP_WIDTH) / RAMP_WIDTH, out)
    return out


@dataclass(frozen=True)
class FrequencySchedule:
    """
    Frequencies S_i (n_i x 2) for each sampling time i = 0..T
    """
    frequencies: Tuple[np.ndarray, ...]

    def __post_init__(self):
        freqs = []
        for i, s in enumerate(self.frequencies):
            arr = np.array(s, dtype=float).reshape(-1, 2) if np.size(s) else np.zeros((0, 2))
            if arr.shape[0] < 1:
                raise ValueError(f"Frequency schedule needs at least one frequency at time {i}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"Non-finite frequency at time {i}")
            arr.setflags(write=False)
            freqs.append(arr)
        if len(freqs) < 2:
            raise ValueError("Frequency schedule needs at least two sampling times")
        object.__setattr__(self, 'frequencies', tuple(freqs))

    @classmethod
    def constant(cls, frequencies, T: int) -> 'FrequencySchedule':
        """Same frequencies at every sampling time"""
        return cls(tuple(np.asarray(frequencies, dtype=float) for _ in range(T + 1)))

    @property
    def T(self) -> int:
        return len(self.frequencies) - 1

    def count(self, i: int) -> int:
        """n_i"""
        return self.frequencies[i].shape[0]

    def to_list(self) -> List[List[List[float]]]:
        return [s.tolist() for s in self.frequencies]


def spiral_schedule(n: int, T: int, max_radius: float = 10.0, turns: float = 2.0) -> FrequencySchedule:
    """
    Time-constant frequencies on an Archimedean spiral r = b * theta

    The first sample sits at the origin (zero frequency), the last at
    `max_radius` after `turns` revolutions.

    Args:
        n: Number of frequencies
        T: Number of time intervals
        max_radius: Radius of the last sample
        turns: Number of revolutions covered by the n samples

    Returns:
        FrequencySchedule
    """
    if n < 1:
        raise ValueError("spiral needs at least one frequency")
    if max_radius <= 0 or turns <= 0:
        raise ValueError("max_radius and turns must be positive")
    s = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    theta = 2 * np.pi * turns * s
    radius = max_radius * s
    points = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    return FrequencySchedule.constant(points, T)


def rotating_line_schedule(T: int, n_lines: int, spacing: float, n_freq: int) -> FrequencySchedule:
    """
    Frequencies on a line through the origin rotating by pi/Theta per sample

    S_{i,k} = R(theta_i) (h (k - (n+1)/2), 0), theta_i = i pi / Theta,
    R(theta) = [[cos, sin], [-sin, cos]].

    Args:
        T: Number of time intervals
        n_lines: Theta
        spacing: h
        n_freq: n_i (same for all times)

    Returns:
        FrequencySchedule
    """
    if n_lines < 1 or spacing <= 0 or n_freq < 1:
        raise ValueError("rotating lines need n_lines >= 1, spacing > 0, n_freq >= 1")
    k = np.arange(1, n_freq + 1)
    radial = spacing * (k - (n_freq + 1) / 2)
    freqs = []
    for i in range(T + 1):
        theta = i * np.pi / n_lines
        freqs.append(np.stack([radial * np.cos(theta), -radial * np.sin(theta)], axis=1))
    return FrequencySchedule(tuple(freqs))


class Measurements:
    """
    One complex vector per sampling time
    """

    __slots__ = ('_values',)

    def __init__(self, values: Sequence[np.ndarray]):
        vals = []
        for v in values:
            arr = np.array(v, dtype=complex).ravel()
            arr.setflags(write=False)
            vals.append(arr)
        self._values = tuple(vals)

    @classmethod
    def zeros(cls, schedule: FrequencySchedule) -> 'Measurements':
        return cls([np.zeros(schedule.count(i), dtype=complex) for i in range(schedule.T + 1)])

    def __len__(self) -> int:
        return len(self._values)

    def __getitem__(self, i: int) -> np.ndarray:
        return self._values[i]

    def __iter__(self):
        return iter(self._values)

    def _check_shape(self, other: 'Measurements') -> None:
        if len(other) != len(self) or any(a.shape != b.shape for a, b in zip(self, other)):
            raise ValueError("Measurements have mismatched shapes")

    def __add__(self, other: 'Measurements') -> 'Measurements':
        self._check_shape(other)
        return Measurements([a + b for a, b in zip(self, other)])

    def __sub__(self, other: 'Measurements') -> 'Measurements':
        self._check_shape(other)
        return Measurements([a - b for a, b in zip(self, other)])

    def scale(self, factor: float) -> 'Measurements':
        return Measurements([factor * a for a in self])

    def norms_squared(self) -> np.ndarray:
        """Per-time H norms ||v_i||^2 = |v_i|^2 / n_i"""
        return np.array([np.vdot(v, v).real / v.size for v in self])

    def inner(self, other: 'Measurements') -> np.ndarray:
        """Per-time H inner products Re<u_i, v_i> / n_i"""
        self._check_shape(other)
        return np.array([np.vdot(b, a).real / a.size for a, b in zip(self, other)])

    def is_zero(self) -> bool:
        return all(not np.any(v) for v in self)

    def matches(self, schedule: FrequencySchedule) -> bool:
        return len(self) == schedule.T + 1 and all(
            v.size == schedule.count(i) for i, v in enumerate(self)
        )

    def to_list(self) -> List[List[List[float]]]:
        """JSON form: per time a list of [re, im] pairs"""
        return [np.stack([v.real, v.imag], axis=1).tolist() for v in self]

    @classmethod
    def from_list(cls, data) -> 'Measurements':
        values = []
        for pairs in data:
            arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
            values.append(arr[:, 0] + 1j * arr[:, 1])
        return cls(values)


class ForwardOperator:
    """
    Cut-off undersampled Fourier operators on a frequency schedule
    Оператор измерений
    """

    def __init__(self, schedule: FrequencySchedule):
        """
        Args:
            schedule: Frequencies per sampling time
        """
        self.schedule = schedule
        counts = {schedule.count(i) for i in range(schedule.T + 1)}
        # (T+1, n, 2) when every time has the same n_i, for curve-wise evaluation
        self._stacked = np.stack(schedule.frequencies) if len(counts) == 1 else None

    @property
    def T(self) -> int:
        return self.schedule.T

    @property
    def uniform_counts(self) -> bool:
        return self._stacked is not None

    def kernel_along(self, nodes: np.ndarray) -> np.ndarray:
        """
        psi_{t_i}(gamma(t_i)) for all i at once (uniform n_i only)

        Args:
            nodes: (T+1, 2) curve nodes

        Returns:
            np.ndarray: (T+1, n) complex
        """
        phase = np.exp(-2j * np.pi * np.einsum('id,ikd->ik', nodes, self._stacked))
        chi = cutoff(nodes[:, 0]) * cutoff(nodes[:, 1])
        return phase * chi[:, None]

    def kernel_grad_along(self, nodes: np.ndarray) -> np.ndarray:
        """Gradient counterpart of kernel_along, shape (T+1, n, 2)"""
        phase = np.exp(-2j * np.pi * np.einsum('id,ikd->ik', nodes, self._stacked))
        c1, c2 = cutoff(nodes[:, 0]), cutoff(nodes[:, 1])
        d1, d2 = cutoff_deriv(nodes[:, 0]), cutoff_deriv(nodes[:, 1])
        chi = (c1 * c2)[:, None]
        grad = np.empty(phase.shape + (2,), dtype=complex)
        grad[..., 0] = phase * (-2j * np.pi * self._stacked[..., 0] * chi + (d1 * c2)[:, None])
        grad[..., 1] = phase * (-2j * np.pi * self._stacked[..., 1] * chi + (c1 * d2)[:, None])
        return grad

    def _phase(self, i: int, points: np.ndarray) -> np.ndarray:
        freqs = self.schedule.frequencies[i]
        return np.exp(-2j * np.pi * (points @ freqs.T))

    def kernel(self, i: int, points) -> np.ndarray:
        """
        psi_{t_i}(x)_k = exp(-2 pi i x . S_{i,k}) chi(x_1) chi(x_2)

        Args:
            i: Time index
            points: (m, 2) or (2,) positions

        Returns:
            np.ndarray: (m, n_i) or (n_i,) complex kernel values
        """
        pts, single = as_points(points)
        chi = cutoff(pts[:, 0]) * cutoff(pts[:, 1])
        values = self._phase(i, pts) * chi[:, None]
        return values[0] if single else values

    def kernel_grad(self, i: int, points) -> np.ndarray:
        """
        Spatial gradient of the kernel

        Returns:
            np.ndarray: (m, n_i, 2) or (n_i, 2); last axis is d/dx_1, d/dx_2
        """
        pts, single = as_points(points)
        freqs = self.schedule.frequencies[i]
        phase = self._phase(i, pts)
        c1, c2 = cutoff(pts[:, 0]), cutoff(pts[:, 1])
        d1, d2 = cutoff_deriv(pts[:, 0]), cutoff_deriv(pts[:, 1])
        chi = (c1 * c2)[:, None]
        grad = np.empty(phase.shape + (2,), dtype=complex)
        grad[..., 0] = phase * (-2j * np.pi * freqs[None, :, 0] * chi + (d1 * c2)[:, None])
        grad[..., 1] = phase * (-2j * np.pi * freqs[None, :, 1] * chi + (c1 * d2)[:, None])
        return grad[0] if single else grad

    def apply_forward(self, measure: SparseMeasure, i: int) -> np.ndarray:
        """
        K*_{t_i} rho_{t_i} = sum_j c_j a_j psi_{t_i}(gamma_j(t_i))

        Args:
            measure: SparseMeasure on this operator's grid
            i: Time index

        Returns:
            np.ndarray: (n_i,) complex
        """
        if measure.is_empty:
            return np.zeros(self.schedule.count(i), dtype=complex)
        if measure.atoms[0].curve.T != self.T:
            raise ValueError("Measure and schedule live on different grids")
        return measure.intensities @ self.kernel(i, measure.positions(i))

    def apply_forward_all(self, measure: SparseMeasure) -> Measurements:
        """K* rho at every sampling time"""
        return Measurements([self.apply_forward(measure, i) for i in range(self.T + 1)])

    def apply_preadjoint(self, h: np.ndarray, i: int, points) -> np.ndarray:
        """
        (K_{t_i} h)(x) = Re sum_k psi_k(x) conj(h_k) / n_i

        Raises:
            ValueError: h length differs from n_i
        """
        h = self._check_vector(h, i)
        values = (self.kernel(i, points) @ np.conj(h)).real / h.size
        return values

    def apply_preadjoint_grad(self, h: np.ndarray, i: int, points) -> np.ndarray:
        """Spatial gradient of K_{t_i} h, shape (m, 2) or (2,)"""
        h = self._check_vector(h, i)
        grad = self.kernel_grad(i, points)
        return np.einsum('...kd,k->...d', grad, np.conj(h)).real / h.size

    def _check_vector(self, h: np.ndarray, i: int) -> np.ndarray:
        h = np.asarray(h, dtype=complex).ravel()
        if h.size != self.schedule.count(i):
            raise ValueError(
                f"Measurement vector at time {i} has length {h.size}, expected {self.schedule.count(i)}"
            )
        return h
