#!/usr/bin/env python3
"""
Configuration Management Module
Централизованная конфигурация солвера

Every tunable of the solver lives here as a dataclass section with
environment-variable defaults and a validate() method.
"""

import os
import logging
import logging.handlers
from dataclasses import dataclass, field, asdict
from typing import Optional, Dict, Any, Callable
from enum import Enum

import numpy as np
from dotenv import load_dotenv

from geometry import WEIGHT_THRESHOLD

logger = logging.getLogger(__name__)

# .env next to the working directory provides defaults for DGCG_* variables
load_dotenv()


def _env_bool(name: str, default: str = 'false') -> bool:
    return os.getenv(name, default).lower() == 'true'


class LogLevel(Enum):
    """Available log levels"""
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class SolverMode(Enum):
    """
    Outer loop flavour
    CORE inserts the best stationary curve only and skips sliding,
    FULL inserts every stationary curve and alternates weights/sliding.
    """
    CORE = "core"
    FULL = "full"


@dataclass
class DescentConfig:
    """
    Backtracking-Armijo descent on curve nodes
    Параметры градиентного спуска
    """
    max_iterations: int = 3000
    armijo_shrink: float = 0.5      # sigma
    armijo_slope: float = 1e-4      # c1
    initial_step: float = 1.0
    stationarity_tol: float = 1e-6  # on the gradient norm
    max_backtracks: int = 40

    # (I - Laplacian)^-1 smoothing of the gradient, off by default
    h1_preconditioner: bool = False

    def validate(self) -> None:
        """Validate descent configuration"""
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_shrink must be in (0, 1)")
        if not 0 < self.armijo_slope < 1:
            raise ValueError("armijo_slope must be in (0, 1)")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if self.stationarity_tol <= 0:
            raise ValueError("stationarity_tol must be positive")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be positive")


@dataclass
class MultistartConfig:
    """
    Multistart insertion step
    Мультистарт для шага вставки
    """
    n_max: int = int(os.getenv('DGCG_N_MAX', '5'))
    crossover_eps: float = 0.05
    crossover_delta: float = 0.5
    dedup_tol: float = 1e-3

    # Q(t) = max(t, 0) ** sampling_power
    sampling_power: float = 2.0
    anchor_stride: int = 5
    sampling_box: tuple = (0.05, 0.95)
    max_proposals: int = 100_000
    # every static_every-th random start is constant in time
    static_every: int = 2

    # positivity test grid (also used by the peak start)
    positivity_resolution: int = 64
    positivity_polish_steps: int = 20

    def reweight(self) -> Callable[[np.ndarray], np.ndarray]:
        """
        Monotone nonnegative reweighting Q used by the random starts

        Returns:
            Callable: vectorized Q
        """
        power = self.sampling_power
        return lambda values: np.maximum(values, 0.0) ** power

    def validate(self) -> None:
        """Validate multistart configuration"""
        if self.n_max < 0:
            raise ValueError("n_max must be nonnegative")
        if self.crossover_eps <= 0:
            raise ValueError("crossover_eps must be positive")
        if not 0 < self.crossover_delta < 1:
            raise ValueError("crossover_delta must be in (0, 1)")
        if self.dedup_tol <= 0:
            raise ValueError("dedup_tol must be positive")
        if self.sampling_power <= 0:
            raise ValueError("sampling_power must be positive")
        if self.anchor_stride < 1:
            raise ValueError("anchor_stride must be positive")
        if self.static_every < 1:
            raise ValueError("static_every must be positive")
        low, high = self.sampling_box
        if not 0 <= low < high <= 1:
            raise ValueError("sampling_box must satisfy 0 <= low < high <= 1")
        if self.positivity_resolution < 2:
            raise ValueError("positivity_resolution must be at least 2")


@dataclass
class SlideConfig:
    """
    Sliding step (fixed weights, moving curves)
    Параметры скольжения
    """
    inner_steps: int = 100
    gradient_tol: float = 1e-6
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    initial_step: float = 1.0
    max_backtracks: int = 40

    def validate(self) -> None:
        """Validate sliding configuration"""
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be nonnegative")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_shrink must be in (0, 1)")
        if not 0 < self.armijo_slope < 1:
            raise ValueError("armijo_slope must be in (0, 1)")
        if self.initial_step <= 0 or self.gradient_tol <= 0:
            raise ValueError("initial_step and gradient_tol must be positive")


@dataclass
class SolverConfig:
    """
    Outer DGCG loop
    Конфигурация внешнего цикла
    """
    mode: SolverMode = SolverMode(os.getenv('DGCG_MODE', 'full'))
    tol: float = float(os.getenv('DGCG_TOL', '1e-10'))
    max_outer_iterations: int = int(os.getenv('DGCG_MAX_OUTER', '40'))
    k_max: int = 2
    seed: int = int(os.getenv('DGCG_SEED', '0'))

    qp_tol: float = 1e-9
    weight_threshold: float = 1e-10
    monotonicity_slack: float = 1e-10

    descent: DescentConfig = field(default_factory=DescentConfig)
    multistart: MultistartConfig = field(default_factory=MultistartConfig)
    slide: SlideConfig = field(default_factory=SlideConfig)

    def validate(self) -> None:
        """Validate solver configuration and nested sections"""
        if self.tol <= 0:
            raise ValueError("TOL must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be positive")
        if self.qp_tol <= 0:
            raise ValueError("qp_tol must be positive")
        # measures reject weights at or below WEIGHT_THRESHOLD
        if self.weight_threshold < WEIGHT_THRESHOLD:
            raise ValueError(f"weight_threshold must be at least {WEIGHT_THRESHOLD}")
        self.descent.validate()
        self.multistart.validate()
        self.slide.validate()

    def to_dict(self) -> Dict[str, Any]:
        """Plain dictionary (JSON-serializable)"""
        data = asdict(self)
        data['mode'] = self.mode.value
        data['multistart']['sampling_box'] = list(self.multistart.sampling_box)
        return data


@dataclass
class RuntimeConfig:
    """
    Worker parallelism
    Параллелизм
    """
    threads: int = int(os.getenv('DGCG_THREADS', '1'))

    def validate(self) -> None:
        """Validate runtime configuration"""
        if self.threads < 1:
            raise ValueError("DGCG_THREADS must be at least 1")


@dataclass
class LoggingConfig:
    """
    Logging configuration
    Конфигурация логирования
    """
    level: LogLevel = LogLevel(os.getenv('LOG_LEVEL', 'INFO'))

    # Format
    format: str = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    date_format: str = '%Y-%m-%d %H:%M:%S'

    # Files
    log_file: Optional[str] = os.getenv('LOG_FILE', None)
    log_file_max_size: int = 10 * 1024 * 1024  # 10 MB
    log_file_backup_count: int = 5

    # JSON logging
    use_json: bool = _env_bool('LOG_JSON')


@dataclass
class AppConfig:
    """
    Main application configuration
    Основная конфигурация приложения
    """
    solver: SolverConfig = field(default_factory=SolverConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    version: str = "1.0.0"
    app_name: str = "dgcg"

    def validate(self) -> None:
        """
        Validate all configuration sections
        """
        try:
            self.solver.validate()
            logger.debug("Solver config validated")
        except ValueError as e:
            logger.error("Solver config error: %s", e)
            raise

        try:
            self.runtime.validate()
            logger.debug("Runtime config validated")
        except ValueError as e:
            logger.error("Runtime config error: %s", e)
            raise

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert configuration to dictionary
        (written to summary.json and logged at startup)
        """
        return {
            'app_name': self.app_name,
            'version': self.version,
            'solver': self.solver.to_dict(),
            'runtime': {'threads': self.runtime.threads},
            'logging': {
                'level': self.logging.level.value,
                'use_json': self.logging.use_json,
            },
        }


def setup_logging(cfg: LoggingConfig) -> None:
    """
    Configure the root logger once

    Args:
        cfg: Logging section
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    if cfg.use_json:
        from pythonjsonlogger import jsonlogger
        formatter: logging.Formatter = jsonlogger.JsonFormatter(cfg.format, datefmt=cfg.date_format)
    else:
        formatter = logging.Formatter(cfg.format, datefmt=cfg.date_format)

    handlers: list = [logging.StreamHandler()]
    if cfg.log_file:
        handlers.append(logging.handlers.RotatingFileHandler(
            cfg.log_file,
            maxBytes=cfg.log_file_max_size,
            backupCount=cfg.log_file_backup_count,
        ))

    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(cfg.level.value)


def get_config() -> AppConfig:
    """
    Get application configuration instance
    Loads from environment variables

    Returns:
        AppConfig: Application configuration

    Raises:
        ValueError: If configuration is invalid
    """
    config = AppConfig()
    config.validate()
    return config
