"""
Tests for the variational problem, dual variable, gap and monitoring
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_curve, random_problem, static_problem
from forward import Measurements, spiral_schedule
from geometry import Curve, SparseMeasure, TimeGrid
from problem import (
    DualVariable, Problem, ResidualMonitor, add_noise, backprojection_raster, dual_gap,
    dual_variable, gap_function, objective, pairing, positivity_test, synthesize,
)


def data_norm(data):
    return np.sqrt(np.sum(data.norms_squared()))


class TestProblem:
    def test_rejects_mismatched_data(self, flat_schedule):
        with pytest.raises(ValueError):
            Problem(TimeGrid(10), flat_schedule, Measurements([np.ones(2)] * 11), 0.1, 0.1)

    def test_rejects_bad_parameters(self, flat_schedule):
        with pytest.raises(ValueError):
            Problem(TimeGrid(10), flat_schedule, Measurements.zeros(flat_schedule), 0.0, 0.1)

    def test_zero_objective(self, flat_problem):
        # f_i = [2] at all 11 times
        assert flat_problem.zero_objective == pytest.approx(2.0)
        assert objective(flat_problem.empty_measure(), flat_problem).total == pytest.approx(2.0)


class TestSynthesisAndNoise:
    def test_static_source_in_flat_region(self, flat_schedule):
        problem, _ = static_problem(flat_schedule, point=(0.3, 0.8), intensity=1.5)
        for v in problem.data:
            assert_allclose(v, [1.5])

    def test_truth_has_zero_fidelity(self, spiral_source_problem):
        problem = spiral_source_problem
        truth = SparseMeasure.from_intensities(0.1, 0.1, [1.0], [Curve.constant((0.4, 0.6), problem.grid)])
        value = objective(truth, problem)
        assert value.fidelity == pytest.approx(0.0, abs=1e-28)
        assert value.total == pytest.approx(value.regularizer)

    @pytest.mark.parametrize('level', [0.2, 0.6])
    def test_noise_scaling(self, spiral_source_problem, level):
        f = spiral_source_problem.data
        noisy = add_noise(f, level, seed=7)
        assert data_norm(noisy - f) / data_norm(f) == pytest.approx(level, rel=1e-12)

    def test_noise_realization_is_shared_across_levels(self, spiral_source_problem):
        f = spiral_source_problem.data
        low = (add_noise(f, 0.2, seed=3) - f).scale(1 / 0.2)
        high = (add_noise(f, 0.6, seed=3) - f).scale(1 / 0.6)
        for a, b in zip(low, high):
            assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_zero_level_is_identity(self, spiral_source_problem):
        assert add_noise(spiral_source_problem.data, 0.0, seed=1) is spiral_source_problem.data

    def test_noise_on_zero_data(self, flat_schedule):
        with pytest.raises(ValueError):
            add_noise(Measurements.zeros(flat_schedule), 0.1, seed=0)

    def test_negative_level(self, spiral_source_problem):
        with pytest.raises(ValueError):
            add_noise(spiral_source_problem.data, -0.1)

    def test_synthesize_matches_operator(self, spiral_source_problem):
        truth = SparseMeasure.from_intensities(0.1, 0.1, [1.0], [Curve.constant((0.4, 0.6), TimeGrid(10))])
        data = synthesize(truth, spiral_source_problem.schedule)
        for a, b in zip(data, spiral_source_problem.data):
            assert_allclose(a, b)


class TestDualVariable:
    def test_zero_measure_gives_backprojection(self, flat_problem):
        w = dual_variable(flat_problem.empty_measure(), flat_problem)
        assert w(3, (0.5, 0.5)) == pytest.approx(2.0)
        assert w(3, (0.05, 0.5)) == pytest.approx(1.0)
        assert_allclose(w.gradient(3, (0.5, 0.5)), [0.0, 0.0])

    def test_curve_evaluation_matches_pointwise(self, rng):
        problem = random_problem(rng)
        w = DualVariable(problem, problem.data)
        curve = random_curve(rng, problem.grid.T)
        expected = [float(w(i, curve.nodes[i])) for i in range(problem.grid.size)]
        assert_allclose(w.along(curve), expected, rtol=1e-12, atol=1e-14)
        expected_grad = np.stack([w.gradient(i, curve.nodes[i]) for i in range(problem.grid.size)])
        assert_allclose(w.gradient_along(curve), expected_grad, rtol=1e-12, atol=1e-14)

    def test_bound(self, rng):
        problem = random_problem(rng)
        w = DualVariable(problem, problem.data)
        points = rng.uniform(0, 1, size=(500, 2))
        for i in range(problem.grid.size):
            assert np.all(np.abs(w(i, points)) <= w.bound(i) + 1e-12)

    def test_rejects_wrong_residual(self, flat_problem, spiral_source_problem):
        with pytest.raises(ValueError):
            DualVariable(flat_problem, spiral_source_problem.data)


class TestPairingAndGap:
    def test_pairing_of_static_curve(self, flat_problem):
        w = dual_variable(flat_problem.empty_measure(), flat_problem)
        curve = Curve.constant((0.5, 0.5), flat_problem.grid)
        # a = 1/alpha = 10, w = 2
        assert pairing(curve, w) == pytest.approx(20.0)

    def test_gap_function(self):
        assert gap_function(1.0, 3.0) == 0.0
        assert gap_function(0.5, 3.0) == 0.0
        assert gap_function(2.0, 3.0) == pytest.approx(4.5)

    def test_dual_gap(self, flat_problem):
        curve = Curve.constant((0.5, 0.5), flat_problem.grid)
        gap = dual_gap(flat_problem.empty_measure(), curve, flat_problem)
        assert gap == pytest.approx(0.5 * 2.0 * (20.0 ** 2 - 1))


class TestPositivity:
    def test_zero_residual(self, flat_schedule):
        problem = Problem(TimeGrid(10), flat_schedule, Measurements.zeros(flat_schedule), 0.1, 0.1)
        assert positivity_test(dual_variable(problem.empty_measure(), problem)) == 0.0

    def test_positive_source(self, spiral_source_problem):
        w = dual_variable(spiral_source_problem.empty_measure(), spiral_source_problem)
        # the maximum 1.0 sits on the source
        assert positivity_test(w) == pytest.approx(1.0, abs=1e-3)

    def test_negative_dual(self, flat_schedule):
        problem, _ = static_problem(flat_schedule)
        negated = DualVariable(problem, problem.data)
        assert positivity_test(negated) <= 0.0

    def test_resolution_check(self, flat_problem):
        with pytest.raises(ValueError):
            positivity_test(dual_variable(flat_problem.empty_measure(), flat_problem), resolution=1)


class TestBackprojection:
    def test_raster_peak_at_source(self):
        problem, _ = static_problem(spiral_schedule(20, 2), point=(0.25, 0.75), intensity=1.0)
        image = backprojection_raster(problem.data, 1, 32, problem.forward)
        assert image.shape == (32, 32) and image.dtype == np.uint8
        row, col = np.unravel_index(int(np.argmax(image)), image.shape)
        # x = (col + 0.5)/32, y = 1 - (row + 0.5)/32
        assert abs((col + 0.5) / 32 - 0.25) < 0.05
        assert abs(1 - (row + 0.5) / 32 - 0.75) < 0.05
        assert image.max() == 255 and image.min() == 0

    def test_constant_field(self, flat_schedule):
        image = backprojection_raster(Measurements.zeros(flat_schedule), 0, 8,
                                      Problem(TimeGrid(10), flat_schedule, Measurements.zeros(flat_schedule),
                                              0.1, 0.1).forward)
        assert not image.any()


class TestResidualMonitor:
    def test_residuals_and_fraction(self):
        monitor = ResidualMonitor()
        for value, gap in [(4.0, 5.0), (2.0, 1.0), (1.0, 0.5), (0.9, 0.0)]:
            monitor.record(value, gap)
        assert_allclose(monitor.residuals(), [3.1, 1.1, 0.1, 0.0])
        assert monitor.residual_below_gap_fraction() == pytest.approx(2 / 3)
        assert monitor.sublinear_envelope_holds()

    def test_set_last_gap(self):
        monitor = ResidualMonitor()
        monitor.record(1.0)
        assert np.isnan(monitor.gaps[0])
        monitor.set_last_gap(0.25)
        assert monitor.gaps == [0.25]
