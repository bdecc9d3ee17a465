#!/usr/bin/env python3
"""
Utility functions and helpers
Вспомогательные функции для разбора, валидации и форматирования
"""

import re
import logging
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)


def as_points(points) -> Tuple[np.ndarray, bool]:
    """
    Coerce a point or a stack of points to a (m, 2) float array

    Args:
        points: (2,) or (m, 2) array-like

    Returns:
        Tuple[np.ndarray, bool]: (m, 2) array and whether a single point was given

    Raises:
        ValueError: If the last axis is not of length 2
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != 2:
            raise ValueError(f"A point must have two coordinates, got {arr.shape[0]}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"Points must have shape (m, 2), got {arr.shape}")
    return arr, False


class TimeListParser:
    """
    Parsing of comma-separated time index lists ('0,25,50', '0-10')
    Разбор списков индексов времени
    """

    TIME_LIST_REGEX = re.compile(r'^\s*\d+(\s*-\s*\d+)?(\s*,\s*\d+(\s*-\s*\d+)?)*\s*$')

    @staticmethod
    def parse(text: str, T: int) -> List[int]:
        """
        Parse time indices

        Args:
            text: Comma-separated indices or ranges, e.g. '0,25,50' or '0-5,50'
            T: Largest admissible index

        Returns:
            List[int]: Sorted unique indices

        Raises:
            ValueError: If the format is invalid or an index exceeds T

        Examples:
            >>> TimeListParser.parse('0,25,50', 50)
            [0, 25, 50]
            >>> TimeListParser.parse('3-5', 10)
            [3, 4, 5]
        """
        if not text or not isinstance(text, str):
            raise ValueError("Time list must be a non-empty string")
        if not TimeListParser.TIME_LIST_REGEX.match(text):
            raise ValueError(f"Invalid time list: '{text}'. Use e.g. '0,25,50' or '0-10'")

        indices = set()
        for part in text.split(','):
            if '-' in part:
                low, high = (int(p) for p in part.split('-'))
                if low > high:
                    raise ValueError(f"Empty range '{part.strip()}'")
                indices.update(range(low, high + 1))
            else:
                indices.add(int(part))

        out_of_range = [i for i in indices if i > T]
        if out_of_range:
            raise ValueError(f"Time indices {sorted(out_of_range)} exceed T = {T}")
        return sorted(indices)


def format_duration(seconds: float) -> str:
    """
    Format seconds to human-readable form

    Args:
        seconds: Duration

    Returns:
        str: Formatted string

    Example:
        >>> format_duration(75.0)
        '1m 15.0s'
    """
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes, secs = divmod(seconds, 60)
    if minutes < 60:
        return f"{int(minutes)}m {secs:.1f}s"
    hours, minutes = divmod(minutes, 60)
    return f"{int(hours)}h {int(minutes)}m"
