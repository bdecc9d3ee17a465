#!/usr/bin/env python3
"""
Storage Module
Запись и чтение артефактов эксперимента (JSON, CSV, PGM)
"""

import csv
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from forward import FrequencySchedule, Measurements
from geometry import Curve, SparseMeasure

logger = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = ('iter', 'objective', 'fidelity', 'regularizer', 'gap', 'n_atoms', 'wallclock_s')


def measure_to_dict(measure: SparseMeasure) -> Dict[str, Any]:
    """JSON-ready form of a sparse measure"""
    intensities = measure.intensities if not measure.is_empty else []
    return {
        'alpha': measure.alpha,
        'beta': measure.beta,
        'atoms': [
            {
                'weight': float(atom.weight),
                'intensity': float(i),
                'nodes': atom.curve.nodes.tolist(),
            }
            for atom, i in zip(measure.atoms, intensities)
        ],
    }


def measure_from_dict(data: Dict[str, Any]) -> SparseMeasure:
    """
    Inverse of measure_to_dict

    Raises:
        ValueError: If a key is missing or a curve is invalid
    """
    try:
        atoms = data['atoms']
        weights = [float(a['weight']) for a in atoms]
        curves = [Curve(a['nodes']) for a in atoms]
        return SparseMeasure.from_lists(float(data['alpha']), float(data['beta']), weights, curves)
    except KeyError as e:
        raise ValueError(f"Measure file is missing key {e}") from e


class ArtifactStore:
    """
    Output directory of one run
    Хранилище артефактов
    """

    def __init__(self, out_dir: str):
        """
        Args:
            out_dir: Directory, created if missing
        """
        self.out_dir = out_dir

    def init(self) -> None:
        """
        Create the output directory
        """
        try:
            os.makedirs(self.out_dir, exist_ok=True)
            logger.info("Writing artifacts to %s", self.out_dir)
        except OSError as e:
            logger.error("Cannot create output directory %s: %s", self.out_dir, e)
            raise

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _write_json(self, name: str, payload: Any) -> str:
        target = self.path(name)
        try:
            with open(target, 'w', encoding='utf-8') as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write('\n')
        except OSError as e:
            logger.error("Error writing %s: %s", target, e)
            raise
        logger.debug("Wrote %s", target)
        return target

    def _read_json(self, name: str) -> Any:
        target = self.path(name)
        try:
            with open(target, 'r', encoding='utf-8') as fh:
                return json.load(fh)
        except OSError as e:
            logger.error("Error reading %s: %s", target, e)
            raise

    def write_measure(self, measure: SparseMeasure, name: str = 'recon.json') -> str:
        return self._write_json(name, measure_to_dict(measure))

    def read_measure(self, name: str = 'recon.json') -> SparseMeasure:
        return measure_from_dict(self._read_json(name))

    def write_data(self, schedule: FrequencySchedule, data: Measurements,
                   name: str = 'data.json') -> str:
        """
        Schedule and measurements; complex entries are [re, im] pairs
        """
        return self._write_json(name, {
            'T': schedule.T,
            'frequencies': schedule.to_list(),
            'measurements': data.to_list(),
        })

    def read_data(self, name: str = 'data.json'):
        """
        Returns:
            Tuple[FrequencySchedule, Measurements]
        """
        payload = self._read_json(name)
        try:
            schedule = FrequencySchedule(tuple(np.asarray(f, dtype=float).reshape(-1, 2)
                                               for f in payload['frequencies']))
            data = Measurements.from_list(payload['measurements'])
        except KeyError as e:
            raise ValueError(f"Data file is missing key {e}") from e
        return schedule, data

    def write_convergence(self, history: Sequence, name: str = 'convergence.csv') -> str:
        """
        One row per iterate mu^0..mu^N

        Args:
            history: HistoryEntry sequence
            name: File name
        """
        target = self.path(name)
        try:
            with open(target, 'w', newline='', encoding='utf-8') as fh:
                writer = csv.writer(fh)
                writer.writerow(CONVERGENCE_COLUMNS)
                for entry in history:
                    writer.writerow([
                        entry.iteration,
                        repr(entry.objective),
                        repr(entry.fidelity),
                        repr(entry.regularizer),
                        repr(entry.gap),
                        entry.n_atoms,
                        f"{entry.wallclock_s:.3f}",
                    ])
        except OSError as e:
            logger.error("Error writing %s: %s", target, e)
            raise
        return target

    def read_convergence(self, name: str = 'convergence.csv') -> List[Dict[str, float]]:
        target = self.path(name)
        with open(target, 'r', newline='', encoding='utf-8') as fh:
            return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]

    def write_pgm(self, image: np.ndarray, name: str) -> str:
        """
        Binary 8-bit PGM (P5)

        Args:
            image: (rows, cols) uint8
            name: File name
        """
        image = np.asarray(image)
        if image.ndim != 2 or image.dtype != np.uint8:
            raise ValueError("PGM images must be 2-D uint8 arrays")
        rows, cols = image.shape
        target = self.path(name)
        try:
            with open(target, 'wb') as fh:
                fh.write(f"P5\n{cols} {rows}\n255\n".encode('ascii'))
                fh.write(np.ascontiguousarray(image).tobytes())
        except OSError as e:
            logger.error("Error writing %s: %s", target, e)
            raise
        return target

    def write_backprojection(self, image: np.ndarray, i: int) -> str:
        return self.write_pgm(image, f"backprojection_{i:04d}.pgm")

    def write_summary(self, summary: Dict[str, Any], name: str = 'summary.json') -> str:
        return self._write_json(name, summary)

    def _write_curve_rows(self, target: str, curves: Sequence[Curve],
                          values: Optional[Sequence[float]] = None) -> str:
        # index, optional F, then x0, y0, x1, y1, ...
        try:
            with open(target, 'w', newline='', encoding='utf-8') as fh:
                writer = csv.writer(fh)
                extra = [] if values is None else ['F']
                if curves:
                    coords = [f"{axis}{i}" for i in range(curves[0].T + 1) for axis in ('x', 'y')]
                    writer.writerow(['curve'] + extra + coords)
                for k, curve in enumerate(curves):
                    lead = [] if values is None else [repr(float(values[k]))]
                    writer.writerow([k] + lead + [repr(v) for v in curve.nodes.ravel().tolist()])
        except OSError as e:
            logger.error("Error writing %s: %s", target, e)
            raise
        return target

    def write_stationary(self, iteration: int, curves: Sequence[Curve], values: Sequence[float]) -> str:
        """
        Stationary curves of one insertion step: index, F, then x0, y0, x1, y1, ...
        """
        return self._write_curve_rows(self.path(f"stationary_{iteration:04d}.csv"), curves, values)

    def write_curves(self, curves: Sequence[Curve], name: str = 'recon_curves.csv') -> str:
        """
        Curves of the final measure: index, then x0, y0, x1, y1, ...
        """
        return self._write_curve_rows(self.path(name), curves)

    def read_curves(self, name: str = 'recon_curves.csv') -> List[Curve]:
        """Curves written by write_curves"""
        with open(self.path(name), newline='', encoding='utf-8') as fh:
            rows = list(csv.reader(fh))[1:]
        return [Curve(np.asarray(row[1:], dtype=float).reshape(-1, 2)) for row in rows]


def read_pgm(path: str) -> np.ndarray:
    """
    Read a P5 image written by ArtifactStore.write_pgm

    Raises:
        ValueError: If the header is not a plain 8-bit P5 header
    """
    with open(path, 'rb') as fh:
        raw = fh.read()
    parts = raw.split(b'\n', 3)
    if len(parts) < 4 or parts[0] != b'P5' or parts[2] != b'255':
        raise ValueError(f"{path} is not an 8-bit P5 image")
    cols, rows = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} pixels, found {pixels.size}")
    return pixels.reshape(rows, cols)
