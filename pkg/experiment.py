#!/usr/bin/env python3
"""
Experiment Module
Описание эксперимента, построение задачи и сравнение с истинной мерой

Experiment files are JSON validated by the pydantic models below.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

from config import AppConfig, SolverConfig, SolverMode
from forward import (
    FrequencySchedule, Measurements, rotating_line_schedule, spiral_schedule,
)
from geometry import Curve, SparseMeasure, TimeGrid
from problem import Problem, add_noise, objective, synthesize

logger = logging.getLogger(__name__)

ARTIFACT_FRACTION = 0.05


class ExperimentConfigError(ValueError):
    """Unreadable or invalid experiment file"""


def _resolve(path: str, info: ValidationInfo) -> str:
    base_dir = (info.context or {}).get('base_dir', '.')
    resolved = path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))
    if not os.path.isfile(resolved):
        raise ValueError(f"file not found: {resolved}")
    return resolved


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class SpiralScheduleConfig(_Section):
    kind: Literal['spiral']
    n: int = Field(gt=0)
    max_radius: float = Field(10.0, gt=0)
    turns: float = Field(2.0, gt=0)


class RotatingLinesScheduleConfig(_Section):
    kind: Literal['rotating_lines']
    n_lines: int = Field(gt=0)
    spacing: float = Field(gt=0)
    n_freq: int = Field(gt=0)


class FileScheduleConfig(_Section):
    """Frequencies read from a data file written by `dgcg synth`"""
    kind: Literal['file']
    path: str

    @field_validator('path')
    @classmethod
    def _exists(cls, value: str, info: ValidationInfo) -> str:
        return _resolve(value, info)


ScheduleConfig = Union[SpiralScheduleConfig, RotatingLinesScheduleConfig, FileScheduleConfig]


class AtomConfig(_Section):
    """
    Ground-truth atom: explicit nodes, or the line start + t * velocity
    """
    intensity: float = Field(gt=0)
    nodes: Optional[List[Tuple[float, float]]] = None
    start: Optional[Tuple[float, float]] = None
    velocity: Tuple[float, float] = (0.0, 0.0)

    @model_validator(mode='after')
    def _one_shape(self) -> 'AtomConfig':
        if (self.nodes is None) == (self.start is None):
            raise ValueError("give exactly one of 'nodes' or 'start'")
        return self

    def curve(self, grid: TimeGrid) -> Curve:
        if self.nodes is not None:
            if len(self.nodes) != grid.size:
                raise ValueError(f"atom has {len(self.nodes)} nodes, grid needs {grid.size}")
            return Curve(self.nodes)
        return Curve.line(self.start, self.velocity, grid)


class NoiseConfig(_Section):
    level: float = Field(0.0, ge=0)
    seed: int = 0


class SolverOverrides(_Section):
    """Overrides applied on top of the environment defaults"""
    mode: Optional[Literal['core', 'full']] = None
    tol: Optional[float] = Field(None, gt=0)
    max_outer_iterations: Optional[int] = Field(None, gt=0)
    k_max: Optional[int] = Field(None, gt=0)
    seed: Optional[int] = None
    n_max: Optional[int] = Field(None, ge=0)
    crossover_eps: Optional[float] = Field(None, gt=0)
    crossover_delta: Optional[float] = Field(None, gt=0, lt=1)
    inner_steps: Optional[int] = Field(None, ge=0)
    h1_preconditioner: Optional[bool] = None

    def apply(self, base: SolverConfig) -> SolverConfig:
        """Copy of `base` with the given overrides"""
        out = replace(base, descent=replace(base.descent), multistart=replace(base.multistart),
                      slide=replace(base.slide))
        if self.mode is not None:
            out.mode = SolverMode(self.mode)
        for name in ('tol', 'max_outer_iterations', 'k_max', 'seed'):
            value = getattr(self, name)
            if value is not None:
                setattr(out, name, value)
        for name in ('n_max', 'crossover_eps', 'crossover_delta'):
            value = getattr(self, name)
            if value is not None:
                setattr(out.multistart, name, value)
        if self.inner_steps is not None:
            out.slide.inner_steps = self.inner_steps
        if self.h1_preconditioner is not None:
            out.descent.h1_preconditioner = self.h1_preconditioner
        return out


class ExperimentConfig(_Section):
    """
    One reconstruction experiment
    """
    name: str = 'experiment'
    T: int = Field(gt=0)
    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    schedule: ScheduleConfig = Field(discriminator='kind')
    ground_truth: List[AtomConfig] = Field(default_factory=list)
    data_file: Optional[str] = None
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    solver: SolverOverrides = Field(default_factory=SolverOverrides)
    output_dir: str = 'out'
    raster_resolution: int = Field(64, gt=0)
    backprojection_times: List[int] = Field(default_factory=lambda: [0])

    @field_validator('data_file')
    @classmethod
    def _data_exists(cls, value: Optional[str], info: ValidationInfo) -> Optional[str]:
        return None if value is None else _resolve(value, info)

    @model_validator(mode='after')
    def _check(self) -> 'ExperimentConfig':
        if not self.ground_truth and self.data_file is None:
            raise ValueError("give 'ground_truth' atoms or a 'data_file'")
        bad = [i for i in self.backprojection_times if not 0 <= i <= self.T]
        if bad:
            raise ValueError(f"backprojection_times {bad} outside 0..{self.T}")
        return self

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T)


def load_experiment(path: str) -> ExperimentConfig:
    """
    Parse and validate an experiment file

    Args:
        path: JSON file; relative references resolve against its directory

    Returns:
        ExperimentConfig

    Raises:
        ExperimentConfigError: With line/column for JSON syntax errors
            and field paths for schema errors
    """
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            text = fh.read()
    except OSError as e:
        raise ExperimentConfigError(f"{path}: {e.strerror}") from e

    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ExperimentConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e

    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        return ExperimentConfig.model_validate(payload, context={'base_dir': base_dir})
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ExperimentConfigError(f"{path}: {problems}") from e


def build_schedule(cfg: ExperimentConfig) -> FrequencySchedule:
    schedule_cfg = cfg.schedule
    if isinstance(schedule_cfg, SpiralScheduleConfig):
        return spiral_schedule(schedule_cfg.n, cfg.T, schedule_cfg.max_radius, schedule_cfg.turns)
    if isinstance(schedule_cfg, RotatingLinesScheduleConfig):
        return rotating_line_schedule(cfg.T, schedule_cfg.n_lines, schedule_cfg.spacing, schedule_cfg.n_freq)
    with open(schedule_cfg.path, 'r', encoding='utf-8') as fh:
        schedule = FrequencySchedule(tuple(json.load(fh)['frequencies']))
    if schedule.T != cfg.T:
        raise ExperimentConfigError(f"{schedule_cfg.path}: schedule has T = {schedule.T}, experiment has T = {cfg.T}")
    return schedule


def build_ground_truth(cfg: ExperimentConfig) -> Optional[SparseMeasure]:
    """Ground-truth measure, None when the experiment only has data"""
    if not cfg.ground_truth:
        return None
    grid = cfg.grid
    return SparseMeasure.from_intensities(
        cfg.alpha, cfg.beta,
        [atom.intensity for atom in cfg.ground_truth],
        [atom.curve(grid) for atom in cfg.ground_truth],
    )


def build_problem(cfg: ExperimentConfig) -> Tuple[Problem, Optional[SparseMeasure]]:
    """
    Problem of an experiment: synthesized (plus noise) from the ground
    truth, or loaded from the data file

    Returns:
        Tuple[Problem, Optional[SparseMeasure]]
    """
    schedule = build_schedule(cfg)
    truth = build_ground_truth(cfg)
    if cfg.data_file is not None:
        with open(cfg.data_file, 'r', encoding='utf-8') as fh:
            data = Measurements.from_list(json.load(fh)['measurements'])
    else:
        data = synthesize(truth, schedule)
    data = add_noise(data, cfg.noise.level, cfg.noise.seed)
    logger.info("Built problem '%s': T = %d, %d frequencies at t = 0, noise %.0f%%",
                cfg.name, cfg.T, schedule.count(0), 100 * cfg.noise.level)
    return Problem(cfg.grid, schedule, data, cfg.alpha, cfg.beta), truth


def discrepancy(truth: Curve, recon: Curve) -> float:
    """
    D = ||gamma_true - gamma_recon|| / ||gamma_true|| over the nodes
    """
    if truth.T != recon.T:
        raise ValueError("Curves live on different grids")
    norm = float(np.linalg.norm(truth.nodes))
    if norm == 0.0:
        raise ValueError("Discrepancy is undefined for a curve at the origin")
    return float(np.linalg.norm(truth.nodes - recon.nodes) / norm)


@dataclass
class MatchedPair:
    truth_index: int
    recon_index: int
    discrepancy: float
    intensity_ratio: float
    # time-averaged node distance
    position_error: float


@dataclass
class MatchResult:
    pairs: List[MatchedPair] = field(default_factory=list)
    # reconstructed atoms below ARTIFACT_FRACTION of the largest intensity
    artifacts: List[int] = field(default_factory=list)
    unmatched_recon: List[int] = field(default_factory=list)
    unmatched_truth: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'pairs': [vars(p) for p in self.pairs],
            'artifacts': self.artifacts,
            'unmatched_recon': self.unmatched_recon,
            'unmatched_truth': self.unmatched_truth,
        }


def match_curves(recon: SparseMeasure, truth: SparseMeasure,
                 artifact_fraction: float = ARTIFACT_FRACTION) -> MatchResult:
    """
    Greedy minimal-D assignment of reconstructed atoms to true atoms

    Low-intensity reconstructed atoms are set aside as artifacts before
    matching.

    Args:
        recon: Reconstruction
        truth: Ground truth on the same grid
        artifact_fraction: Intensity fraction below which an atom is an artifact

    Returns:
        MatchResult
    """
    result = MatchResult()
    if recon.is_empty:
        result.unmatched_truth = list(range(len(truth)))
        return result

    intensities = recon.intensities
    significant = [j for j in range(len(recon)) if intensities[j] >= artifact_fraction * intensities.max()]
    result.artifacts = [j for j in range(len(recon)) if j not in significant]

    candidates = sorted(
        (discrepancy(g_true, recon.curves[j]), k, j)
        for k, g_true in enumerate(truth.curves) for j in significant
    )
    used_truth, used_recon = set(), set()
    true_intensities = truth.intensities
    for d, k, j in candidates:
        if k in used_truth or j in used_recon:
            continue
        used_truth.add(k)
        used_recon.add(j)
        error = float(np.mean(np.linalg.norm(truth.curves[k].nodes - recon.curves[j].nodes, axis=1)))
        result.pairs.append(MatchedPair(k, j, d, float(intensities[j] / true_intensities[k]), error))

    result.pairs.sort(key=lambda p: p.truth_index)
    result.unmatched_recon = [j for j in significant if j not in used_recon]
    result.unmatched_truth = [k for k in range(len(truth)) if k not in used_truth]
    return result


def relative_residual(measure: SparseMeasure, problem: Problem) -> float:
    """sqrt(2 (T+1) fidelity) / ||f||"""
    norm = problem.data_norm()
    if norm == 0.0:
        return 0.0
    fidelity = objective(measure, problem).fidelity
    return float(np.sqrt(2 * problem.grid.size * fidelity) / norm)


def build_summary(report, problem: Problem, truth: Optional[SparseMeasure],
                  app_config: AppConfig) -> Dict[str, Any]:
    """
    summary.json payload

    Args:
        report: SolveReport
        problem: Problem
        truth: Ground truth or None
        app_config: Effective configuration

    Returns:
        Dict[str, Any]
    """
    measure = report.measure
    monitor = report.monitor
    first_order = [h.first_order_residual for h in report.history[1:]]
    summary: Dict[str, Any] = {
        'termination': report.termination.value,
        'exit_code': report.termination.exit_code,
        'iterations': report.iterations,
        'final_objective': report.final_objective,
        'final_gap': None if np.isnan(report.final_gap) else report.final_gap,
        'zero_objective': problem.zero_objective,
        'relative_residual': relative_residual(measure, problem),
        'atoms': [
            {'weight': float(c), 'intensity': float(i)}
            for c, i in zip(measure.weights, measure.intensities if not measure.is_empty else [])
        ],
        'convergence': {
            'residuals': monitor.residuals().tolist(),
            'residual_below_gap_fraction': monitor.residual_below_gap_fraction(),
            'sublinear_envelope_holds': monitor.sublinear_envelope_holds(),
            'max_first_order_residual': max(first_order) if first_order else 0.0,
        },
        'config': app_config.to_dict(),
        'wallclock_s': report.history[-1].wallclock_s,
    }
    if truth is not None:
        summary['matching'] = match_curves(measure, truth).to_dict()
    return summary
