"""
Tests for experiment files, problem construction and ground-truth matching
"""

import json
from pathlib import Path

import numpy as np
import pytest

from config import SolverConfig, SolverMode
from experiment import (
    ExperimentConfig, ExperimentConfigError, build_problem, discrepancy, load_experiment,
    match_curves, relative_residual,
)
from geometry import Curve, SparseMeasure, TimeGrid

PRESETS = Path(__file__).parent.parent / 'presets'


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding='utf-8')
    return str(path)


def tiny_experiment(**overrides):
    payload = {
        'name': 'tiny',
        'T': 4,
        'alpha': 0.2,
        'beta': 0.2,
        'schedule': {'kind': 'spiral', 'n': 3},
        'ground_truth': [{'intensity': 1.0, 'start': [0.3, 0.4], 'velocity': [0.2, 0.1]}],
    }
    payload.update(overrides)
    return payload


class TestLoadExperiment:
    @pytest.mark.parametrize('preset', sorted(p.name for p in PRESETS.glob('*.json')))
    def test_presets_load(self, preset):
        cfg = load_experiment(str(PRESETS / preset))
        assert cfg.ground_truth
        assert all(0 <= i <= cfg.T for i in cfg.backprojection_times)

    def test_json_syntax_error_has_position(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{\n  "T": 4,\n  "alpha": \n}', encoding='utf-8')
        with pytest.raises(ExperimentConfigError, match=r'broken\.json:4:1'):
            load_experiment(str(path))

    def test_unknown_key_rejected(self, tmp_path):
        path = write_json(tmp_path / 'e.json', tiny_experiment(colour='red'))
        with pytest.raises(ExperimentConfigError, match='colour'):
            load_experiment(path)

    def test_schema_error_names_field(self, tmp_path):
        path = write_json(tmp_path / 'e.json', tiny_experiment(alpha=-1.0))
        with pytest.raises(ExperimentConfigError, match='alpha'):
            load_experiment(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ExperimentConfigError):
            load_experiment(str(tmp_path / 'nope.json'))

    def test_missing_data_file(self, tmp_path):
        path = write_json(tmp_path / 'e.json', tiny_experiment(ground_truth=[], data_file='data.json'))
        with pytest.raises(ExperimentConfigError, match='file not found'):
            load_experiment(path)

    def test_needs_truth_or_data(self, tmp_path):
        path = write_json(tmp_path / 'e.json', tiny_experiment(ground_truth=[]))
        with pytest.raises(ExperimentConfigError):
            load_experiment(path)

    def test_atom_needs_one_shape(self, tmp_path):
        atoms = [{'intensity': 1.0, 'start': [0.5, 0.5], 'nodes': [[0.5, 0.5]] * 5}]
        path = write_json(tmp_path / 'e.json', tiny_experiment(ground_truth=atoms))
        with pytest.raises(ExperimentConfigError, match='exactly one'):
            load_experiment(path)

    def test_backprojection_times_in_range(self, tmp_path):
        path = write_json(tmp_path / 'e.json', tiny_experiment(backprojection_times=[0, 9]))
        with pytest.raises(ExperimentConfigError, match='outside'):
            load_experiment(path)

    def test_data_file_resolves_relative_to_experiment(self, tmp_path):
        problem, _ = build_problem(ExperimentConfig.model_validate(tiny_experiment()))
        (tmp_path / 'data.json').write_text(json.dumps({
            'T': 4, 'frequencies': problem.schedule.to_list(), 'measurements': problem.data.to_list(),
        }), encoding='utf-8')
        path = write_json(tmp_path / 'e.json', tiny_experiment(
            ground_truth=[], data_file='data.json',
            schedule={'kind': 'file', 'path': 'data.json'}))
        loaded, truth = build_problem(load_experiment(path))
        assert truth is None
        for a, b in zip(loaded.data, problem.data):
            np.testing.assert_allclose(a, b)


class TestSolverOverrides:
    def test_apply_copies(self):
        base = SolverConfig()
        cfg = ExperimentConfig.model_validate(tiny_experiment(solver={'mode': 'core', 'n_max': 7, 'inner_steps': 0}))
        out = cfg.solver.apply(base)
        assert out.mode is SolverMode.CORE
        assert out.multistart.n_max == 7
        assert out.slide.inner_steps == 0
        assert base.multistart is not out.multistart
        assert base.slide.inner_steps == 100


class TestBuildProblem:
    def test_experiment1(self):
        problem, truth = build_problem(load_experiment(str(PRESETS / 'experiment1.json')))
        assert problem.grid.size == 51
        assert all(problem.schedule.count(i) == 20 for i in range(51))
        # coarser spiral than experiment1_strong, see DESIGN.md
        assert np.linalg.norm(problem.schedule.frequencies[0][-1]) == pytest.approx(5.0)
        assert len(truth) == 1
        np.testing.assert_allclose(truth.curves[0].nodes[-1], [0.8, 0.8])
        assert relative_residual(truth, problem) == pytest.approx(0.0, abs=1e-12)

    def test_rotating_lines(self):
        problem, truth = build_problem(load_experiment(str(PRESETS / 'experiment2_desk.json')))
        assert problem.grid.T == 20
        assert len(truth) == 3
        assert problem.schedule.count(0) == 15

    def test_noise_level(self):
        clean, _ = build_problem(load_experiment(str(PRESETS / 'experiment2_desk.json')))
        noisy, _ = build_problem(load_experiment(str(PRESETS / 'experiment2_desk_noise20.json')))
        noise = noisy.data - clean.data
        ratio = np.sqrt(np.sum(noise.norms_squared())) / clean.data_norm()
        assert ratio == pytest.approx(0.2, rel=1e-8)


class TestMatching:
    grid = TimeGrid(4)

    def test_discrepancy(self):
        truth = Curve.constant((0.6, 0.8), self.grid)
        shifted = Curve.constant((0.6, 0.9), self.grid)
        assert discrepancy(truth, truth) == 0.0
        assert discrepancy(truth, shifted) == pytest.approx(0.1)

    def test_discrepancy_grid_mismatch(self):
        with pytest.raises(ValueError):
            discrepancy(Curve.constant((0.5, 0.5), self.grid), Curve.constant((0.5, 0.5), TimeGrid(3)))

    def test_match_and_artifacts(self):
        a = Curve.constant((0.2, 0.2), self.grid)
        b = Curve.constant((0.8, 0.8), self.grid)
        truth = SparseMeasure.from_intensities(0.1, 0.1, [1.0, 2.0], [a, b])
        recon = SparseMeasure.from_intensities(
            0.1, 0.1, [1.9, 0.9, 0.01],
            [Curve.constant((0.8, 0.81), self.grid), Curve.constant((0.2, 0.21), self.grid),
             Curve.constant((0.5, 0.5), self.grid)],
        )
        result = match_curves(recon, truth)
        assert [(p.truth_index, p.recon_index) for p in result.pairs] == [(0, 1), (1, 0)]
        assert result.artifacts == [2]
        assert result.unmatched_truth == [] and result.unmatched_recon == []
        assert result.pairs[0].intensity_ratio == pytest.approx(0.9)
        assert result.pairs[1].position_error == pytest.approx(0.01)
        assert json.dumps(result.to_dict())

    def test_empty_reconstruction(self):
        truth = SparseMeasure.from_intensities(0.1, 0.1, [1.0], [Curve.constant((0.2, 0.2), self.grid)])
        result = match_curves(SparseMeasure(0.1, 0.1), truth)
        assert result.pairs == [] and result.unmatched_truth == [0]
