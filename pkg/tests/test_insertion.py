"""
Tests for the insertion step: F, its gradient, descent, random starts,
crossovers and the multistart driver
"""

import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from config import DescentConfig, MultistartConfig
from conftest import random_curve, random_problem
from forward import Measurements
from geometry import INFINITY_CURVE, Curve, TimeGrid
from insertion import (
    crossover, descend, h1_riesz, insertion_gradient, insertion_value, multistart, peak_start,
    sample_start, sample_static_start,
)
from problem import DualVariable, Problem, dual_variable, pairing

def zero_dual(problem):
    return DualVariable(problem, Measurements.zeros(problem.schedule))

class TestInsertionValue:
    def test_zero_dual(self, flat_problem):
        w = zero_dual(flat_problem)
        curve = Curve.line((0.2, 0.3), (0.5, 0.1), flat_problem.grid)
        assert insertion_value(curve, w) == 0.0
        assert_allclose(insertion_gradient(curve, w), 0.0)

    def test_flat_dual(self, flat_problem):
        # w = 2 on the flat region, L = alpha for a static curve
        w = dual_variable(flat_problem.empty_measure(), flat_problem)
        curve = Curve.constant((0.4, 0.6), flat_problem.grid)
        assert insertion_value(curve, w) == pytest.approx(-2.0 / 0.1)

    def test_equals_negative_pairing(self, rng):
        for _ in range(100):
            problem = random_problem(rng)
            w = DualVariable(problem, problem.data)
            curve = random_curve(rng, problem.grid.T, 0.0, 1.0)
            expected = -pairing(curve, w)
            assert insertion_value(curve, w) == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_grid_mismatch(self, flat_problem):
        with pytest.raises(ValueError):
            insertion_value(Curve.constant((0.5, 0.5), TimeGrid(3)), zero_dual(flat_problem))

    def test_gradient_matches_finite_differences(self, rng):
        h = 1e-6
        for _ in range(100):
            problem = random_problem(rng)
            w = DualVariable(problem, problem.data)
            curve = random_curve(rng, problem.grid.T)
            grad = insertion_gradient(curve, w)
            fd = np.zeros_like(grad)
            for idx in np.ndindex(*grad.shape):
                up, down = curve.nodes.copy(), curve.nodes.copy()
                up[idx] += h
                down[idx] -= h
                fd[idx] = (insertion_value(Curve(up), w) - insertion_value(Curve(down), w)) / (2 * h)
            assert np.linalg.norm(fd - grad) <= 1e-5 * np.linalg.norm(grad)

class TestDescend:
    def test_nonnegative_start_gives_infinity_curve(self, flat_problem):
        start = Curve.constant((0.5, 0.5), flat_problem.grid)
        assert descend(start, zero_dual(flat_problem), DescentConfig()) is INFINITY_CURVE

    def test_never_increases_F(self, rng):
        problem = random_problem(rng, T=4)
        w = DualVariable(problem, problem.data)
        for _ in range(10):
            start = random_curve(rng, 4)
            if insertion_value(start, w) >= 0:
                continue
            result = descend(start, w, DescentConfig(max_iterations=200))
            assert insertion_value(result, w) <= insertion_value(start, w)
            assert result.nodes.min() >= 0.0 and result.nodes.max() <= 1.0

    def test_finds_static_source(self, spiral_source_problem):
        problem = spiral_source_problem
        w = dual_variable(problem.empty_measure(), problem)
        start = Curve.constant((0.42, 0.58), problem.grid)
        result = descend(start, w, DescentConfig())
        assert np.max(np.linalg.norm(result.nodes - [0.4, 0.6], axis=1)) < 0.02
        grad = insertion_gradient(result, w)
        assert np.linalg.norm(grad[[0, -1]]) < 1e-3

    def test_h1_preconditioner_reaches_same_source(self, spiral_source_problem):
        problem = spiral_source_problem
        w = dual_variable(problem.empty_measure(), problem)
        start = Curve.line((0.38, 0.62), (0.04, -0.04), problem.grid)
        result = descend(start, w, DescentConfig(h1_preconditioner=True))
        assert insertion_value(result, w) < insertion_value(start, w)
        assert np.max(np.linalg.norm(result.nodes - [0.4, 0.6], axis=1)) < 0.02

    def test_h1_riesz_of_constant_field(self):
        # constant fields are not smoothed, only rescaled by 1/dt
        grad = np.ones((11, 2))
        assert_allclose(h1_riesz(grad), 10.0 * grad)

class TestSampleStart:
    def test_deterministic_for_seed(self, spiral_source_problem):
        w = dual_variable(spiral_source_problem.empty_measure(), spiral_source_problem)
        reweight = MultistartConfig().reweight()
        a = sample_start(w, spiral_source_problem.grid, reweight, np.random.default_rng(5))
        b = sample_start(w, spiral_source_problem.grid, reweight, np.random.default_rng(5))
        assert a == b
        assert a.nodes.min() >= 0.05 and a.nodes.max() <= 0.95

    def test_anchors_land_where_w_is_positive(self, spiral_source_problem):
        problem = spiral_source_problem
        w = dual_variable(problem.empty_measure(), problem)
        reweight = lambda v: np.maximum(v, 0.0)
        for seed in range(20):
            curve = sample_start(w, problem.grid, reweight, np.random.default_rng(seed))
            for i in (0, 5, 10):
                assert w(i, curve.nodes[i]) > 0

    def test_falls_back_to_uniform(self, flat_problem, caplog):
        w = zero_dual(flat_problem)
        with caplog.at_level(logging.WARNING):
            curve = sample_start(w, flat_problem.grid, MultistartConfig().reweight(),
                                 np.random.default_rng(0), max_proposals=2000)
        assert 'uniformly' in caplog.text
        assert curve.nodes.min() >= 0.05 and curve.nodes.max() <= 0.95

    def test_linear_between_anchors(self, flat_problem):
        w = dual_variable(flat_problem.empty_measure(), flat_problem)
        curve = sample_start(w, flat_problem.grid, MultistartConfig().reweight(), np.random.default_rng(1))
        assert_allclose(curve.nodes[2], 0.6 * curve.nodes[0] + 0.4 * curve.nodes[5])

class TestStaticStarts:
    def test_peak_start_sits_on_source(self, spiral_source_problem):
        w = dual_variable(spiral_source_problem.empty_measure(), spiral_source_problem)
        curve = peak_start(w)
        assert np.all(curve.nodes == curve.nodes[0])
        assert np.linalg.norm(curve.nodes[0] - [0.4, 0.6]) < 0.015

    def test_sampled_static_start(self, spiral_source_problem):
        w = dual_variable(spiral_source_problem.empty_measure(), spiral_source_problem)
        reweight = MultistartConfig().reweight()
        a = sample_static_start(w, reweight, np.random.default_rng(8))
        b = sample_static_start(w, reweight, np.random.default_rng(8))
        assert a == b
        assert np.all(a.nodes == a.nodes[0])
        assert a.nodes.min() >= 0.05 and a.nodes.max() <= 0.95
        assert w.time_average(a.nodes[:1])[0] > 0

    def test_static_fallback(self, flat_problem, caplog):
        w = zero_dual(flat_problem)
        with caplog.at_level(logging.WARNING):
            curve = sample_static_start(w, MultistartConfig().reweight(), np.random.default_rng(0),
                                        max_proposals=2000)
        assert 'uniformly' in caplog.text
        assert np.all(curve.nodes == curve.nodes[0])

class TestCrossover:
    def test_crossing_diagonals(self):
        grid = TimeGrid(50)
        first = Curve.line((0.0, 0.0), (1.0, 1.0), grid)
        second = Curve.line((0.0, 1.0), (1.0, -1.0), grid)
        out = crossover(first, second, eps=0.05, delta=0.8)
        assert len(out) == 2
        # bridge on (0.48, 0.52)
        assert_allclose(out[0].nodes[:24], first.nodes[:24])
        assert_allclose(out[0].nodes[27:], second.nodes[27:])
        assert_allclose(out[0].nodes[25], [0.5, 0.48], atol=1e-9)
        assert_allclose(out[1].nodes[:24], second.nodes[:24])
        assert_allclose(out[1].nodes[27:], first.nodes[27:])
        assert_allclose(out[1].nodes[25], [0.5, 0.52], atol=1e-9)

    def test_far_apart(self):
        grid = TimeGrid(10)
        assert crossover(Curve.constant((0.2, 0.2), grid), Curve.constant((0.8, 0.8), grid), 0.05, 0.5) == []

    def test_identical_curves(self):
        curve = Curve.line((0.1, 0.2), (0.5, 0.5), TimeGrid(10))
        assert crossover(curve, curve, 0.05, 0.5) == []

    def test_two_components(self):
        grid = TimeGrid(40)
        t = grid.nodes
        first = Curve(np.stack([t, np.full_like(t, 0.5)], axis=1))
        second = Curve(np.stack([t, 0.5 + 0.3 * np.sin(2 * np.pi * t)], axis=1))
        # close near t = 0, 0.5 and 1
        out = crossover(first, second, 0.05, 0.5)
        assert len(out) == 6

    @pytest.mark.parametrize('eps, delta', [(0.0, 0.5), (0.05, 1.0), (0.05, 0.0)])
    def test_rejects_bad_parameters(self, eps, delta):
        curve = Curve.constant((0.5, 0.5), TimeGrid(4))
        with pytest.raises(ValueError):
            crossover(curve, curve, eps, delta)

class TestMultistart:
    def test_zero_dual_without_atoms(self, flat_problem):
        assert multistart([], zero_dual(flat_problem), MultistartConfig(), DescentConfig()) == []

    def test_known_atoms_only(self, spiral_source_problem):
        problem = spiral_source_problem
        w = dual_variable(problem.empty_measure(), problem)
        known = [Curve.constant((0.41, 0.59), problem.grid), Curve.constant((0.39, 0.61), problem.grid)]
        out = multistart(known, w, MultistartConfig(n_max=0), DescentConfig(), seed=0)
        expected = descend(known[0], w, DescentConfig())
        assert len(out) == 1
        assert out[0] == expected

    def test_random_starts_sorted_and_reproducible(self, spiral_source_problem):
        problem = spiral_source_problem
        w = dual_variable(problem.empty_measure(), problem)
        cfg = MultistartConfig(n_max=4)
        out = multistart([], w, cfg, DescentConfig(max_iterations=500), seed=11)
        again = multistart([], w, cfg, DescentConfig(max_iterations=500), seed=11, threads=2)
        assert out
        values = [insertion_value(g, w) for g in out]
        assert values == sorted(values)
        assert all(v < 0 for v in values)
        assert out == again
        for a in range(len(out)):
            for b in range(a + 1, len(out)):
                assert out[a].distance(out[b]) >= cfg.dedup_tol

    def test_first_restart_finds_static_source(self, spiral_source_problem):
        problem = spiral_source_problem
        w = dual_variable(problem.empty_measure(), problem)
        for seed in (0, 1, 2):
            out = multistart([], w, MultistartConfig(n_max=1), DescentConfig(), seed=seed)
            assert len(out) == 1
            assert np.max(np.linalg.norm(out[0].nodes - [0.4, 0.6], axis=1)) < 0.02
            # W = -1 on the source, L = alpha
            assert insertion_value(out[0], w) == pytest.approx(-1.0 / problem.alpha, rel=1e-3)
