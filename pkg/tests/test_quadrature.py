"""
Tests for the bounds search and the two-dimensional trapezoid sweep.
"""

import logging
import time
import sys
import os

import numpy as np
import pydantic
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from inference.marginal import ConditionalGaussian, MarginalModel
from inference.moments import CovMode, moment_functionals, posterior_summary
from inference.quadrature import (ConstantFunctional, Functional, GridSpec, auto_bounds, find_mode,
                                  integrate)
from inference.svd_basis import factorize
from model.datagen import generate_synthetic
from model.types import Hyperparams, RegressionData
from utils.error_handler import BoundsSearchError, DataValidationError, DegenerateGridError


class GaussianStub:
    """Isotropic Gaussian in (sigma1, sigma2) standing in for q~."""

    def __init__(self, centre=(1.0, 1.0), scale=0.1, k=2):
        self.centre = centre
        self.scale = scale
        self.k = k

    def evaluate(self, sigma1, sigma2):
        s1, s2 = np.broadcast_arrays(np.asarray(sigma1, dtype=float), np.asarray(sigma2, dtype=float))
        log_q = -((s1 - self.centre[0]) ** 2 + (s2 - self.centre[1]) ** 2) / (2 * self.scale ** 2)
        cond = ConditionalGaussian(mean=np.zeros(s1.shape + (self.k,)), variance=np.ones(s1.shape + (self.k,)))
        return log_q, cond


class FlatLineStub(GaussianStub):
    def evaluate(self, sigma1, sigma2):
        log_q, cond = super().evaluate(sigma1, sigma2)
        return np.full_like(log_q, -np.inf), cond


@pytest.fixture(scope="module")
def synthetic_model():
    data, _ = generate_synthetic(100, 10, seed=3)
    return MarginalModel(factorize(data), 8.0)


class TestGridSpec:

    def test_rejects_bad_ranges(self):
        with pytest.raises(pydantic.ValidationError):
            GridSpec(sigma1_range=(2.0, 1.0), sigma2_range=(0.5, 1.0))
        with pytest.raises(pydantic.ValidationError):
            GridSpec(sigma1_range=(0.0, 1.0), sigma2_range=(0.5, 1.0))
        with pytest.raises(pydantic.ValidationError):
            GridSpec(sigma1_range=(0.5, 1.0), sigma2_range=(0.5, 1.0), nodes_per_axis=1)

    def test_linear_weights(self):
        grid = GridSpec(sigma1_range=(0.5, 2.5), sigma2_range=(1.0, 3.0), nodes_per_axis=11)
        nodes, weights = grid.axis(1)
        assert nodes[0] == 0.5 and nodes[-1] == 2.5
        assert weights.sum() == pytest.approx(2.0, rel=1e-14)
        assert weights[0] == pytest.approx(0.5 * weights[1])

    def test_log_weights(self):
        grid = GridSpec(sigma1_range=(0.1, 10.0), sigma2_range=(1.0, 3.0), nodes_per_axis=401, spacing="log")
        nodes, weights = grid.axis(1)
        assert nodes[0] == pytest.approx(0.1) and nodes[-1] == pytest.approx(10.0)
        # integral of d(sigma) over the range
        assert weights.sum() == pytest.approx(9.9, rel=1e-4)

    def test_with_nodes_and_dict(self):
        grid = GridSpec(sigma1_range=(0.5, 2.5), sigma2_range=(1.0, 3.0))
        assert grid.with_nodes(500).nodes_per_axis == 500
        assert grid.to_dict() == {
            'sigma1_range': [0.5, 2.5], 'sigma2_range': [1.0, 3.0],
            'nodes_per_axis': 200, 'spacing': 'linear',
        }


class TestIntegrate:

    def test_constant_equals_normalizer(self):
        grid = GridSpec(sigma1_range=(0.3, 1.9), sigma2_range=(0.3, 1.9), nodes_per_axis=51)
        acc = integrate(GaussianStub(), grid, [ConstantFunctional("one")])
        assert acc.raw_moments["one"] == acc.normalizer
        assert acc.expectation("one") == 1.0

    def test_stub_mean_converges(self):
        sigma1 = Functional("sigma1", lambda s1, s2, cond: s1)
        errors = []
        for nodes in (11, 201):
            grid = GridSpec(sigma1_range=(0.3, 1.9), sigma2_range=(0.3, 1.9), nodes_per_axis=nodes)
            acc = integrate(GaussianStub(), grid, [sigma1])
            errors.append(abs(float(acc.expectation("sigma1")) - 1.0))
        assert errors[1] < 1e-9
        assert errors[0] > errors[1]

    def test_thread_count_does_not_change_result(self, synthetic_model):
        grid = auto_bounds(synthetic_model, Hyperparams(grid_nodes=120))
        functionals = moment_functionals(CovMode.EXACT)
        single = integrate(synthetic_model, grid, functionals, threads=1)
        pooled = integrate(synthetic_model, grid, functionals, threads=4)
        assert single.normalizer == pooled.normalizer
        for name in single.raw_moments:
            np.testing.assert_array_equal(single.raw_moments[name], pooled.raw_moments[name])

    def test_functional_order_does_not_matter(self, synthetic_model):
        grid = auto_bounds(synthetic_model, Hyperparams(grid_nodes=80))
        functionals = moment_functionals(CovMode.EXACT)
        forward = integrate(synthetic_model, grid, functionals, threads=1)
        backward = integrate(synthetic_model, grid, list(reversed(functionals)), threads=1)
        for name in forward.raw_moments:
            np.testing.assert_array_equal(forward.raw_moments[name], backward.raw_moments[name])

    def test_rejects_duplicate_names(self):
        grid = GridSpec(sigma1_range=(0.5, 1.5), sigma2_range=(0.5, 1.5), nodes_per_axis=5)
        with pytest.raises(DataValidationError):
            integrate(GaussianStub(), grid, [ConstantFunctional("one"), ConstantFunctional("one")])
        with pytest.raises(DataValidationError):
            integrate(GaussianStub(), grid, [])

    def test_degenerate_grid(self):
        grid = GridSpec(sigma1_range=(0.5, 1.5), sigma2_range=(0.5, 1.5), nodes_per_axis=5)
        with pytest.raises(DegenerateGridError):
            integrate(FlatLineStub(), grid, [ConstantFunctional("one")])

    def test_large_log_density_does_not_overflow(self):
        """Shifting log q~ by a huge constant changes nothing but log_scale"""
        class Shifted(GaussianStub):
            def evaluate(self, sigma1, sigma2):
                log_q, cond = super().evaluate(sigma1, sigma2)
                return log_q + 5000.0, cond

        grid = GridSpec(sigma1_range=(0.3, 1.9), sigma2_range=(0.3, 1.9), nodes_per_axis=41)
        sigma1 = Functional("sigma1", lambda s1, s2, cond: s1)
        plain = integrate(GaussianStub(), grid, [sigma1])
        shifted = integrate(Shifted(), grid, [sigma1])
        assert shifted.log_scale == pytest.approx(plain.log_scale + 5000.0)
        assert float(shifted.expectation("sigma1")) == pytest.approx(float(plain.expectation("sigma1")), rel=1e-10)


class TestBounds:

    def test_mode_is_a_maximum(self, synthetic_model):
        mode1, mode2, peak = find_mode(synthetic_model)
        assert peak == pytest.approx(synthetic_model.log_qtilde(mode1, mode2))
        for f1 in (0.99, 1.0, 1.01):
            for f2 in (0.99, 1.0, 1.01):
                assert synthetic_model.log_qtilde(mode1 * f1, mode2 * f2) <= peak + 1e-9

    def test_tail_deficit(self, synthetic_model):
        hyper = Hyperparams()
        grid = auto_bounds(synthetic_model, hyper)
        mode1, mode2, peak = find_mode(synthetic_model)
        (lo1, hi1), (lo2, hi2) = grid.sigma1_range, grid.sigma2_range

        assert lo1 < mode1 < hi1
        assert lo2 < mode2 < hi2
        along1 = np.linspace(lo1, hi1, 2001)
        along2 = np.linspace(lo2, hi2, 2001)
        edges = [
            synthetic_model.log_qtilde(lo1, along2), synthetic_model.log_qtilde(hi1, along2),
            synthetic_model.log_qtilde(along1, lo2), synthetic_model.log_qtilde(along1, hi2),
        ]
        for edge in edges:
            assert peak - edge.max() >= hyper.tail_drop - 0.05

    def test_nested_for_smaller_tail_drop(self, synthetic_model):
        wide = auto_bounds(synthetic_model, Hyperparams(tail_drop=46.0))
        narrow = auto_bounds(synthetic_model, Hyperparams(tail_drop=20.0))
        assert wide.sigma1_range[0] <= narrow.sigma1_range[0]
        assert wide.sigma1_range[1] >= narrow.sigma1_range[1]
        assert wide.sigma2_range[0] <= narrow.sigma2_range[0]
        assert wide.sigma2_range[1] >= narrow.sigma2_range[1]

    def test_clamped_lower_edge_warns(self, synthetic_model, caplog):
        mode1, mode2, _ = find_mode(synthetic_model)
        floor = 0.95 * min(mode1, mode2)
        with caplog.at_level(logging.WARNING, logger="nnpost"):
            grid = auto_bounds(synthetic_model, Hyperparams(sigma_floor=floor))
        assert min(grid.sigma1_range[0], grid.sigma2_range[0]) == floor
        assert any("clamped" in record.getMessage() for record in caplog.records)

    def test_improper_density_fails(self):
        """y = 0 with n > k: the density grows without bound as sigma2 -> 0"""
        data, _ = generate_synthetic(12, 2, seed=5)
        model = MarginalModel(factorize(RegressionData(X=data.X, y=np.zeros(12))), 8.0)
        with pytest.raises(BoundsSearchError):
            auto_bounds(model, Hyperparams())


class TestAccuracy:

    def _summary(self, model, grid):
        acc = integrate(model, grid, moment_functionals(CovMode.EXACT))
        return posterior_summary(model, acc, CovMode.EXACT)

    def test_200_nodes_against_500(self, synthetic_model):
        grid = auto_bounds(synthetic_model, Hyperparams())
        coarse = self._summary(synthetic_model, grid)
        fine = self._summary(synthetic_model, grid.with_nodes(500))
        assert coarse.max_abs_error(fine) <= 1e-10

    def test_linear_and_log_spacing_agree(self, synthetic_model):
        grid = auto_bounds(synthetic_model, Hyperparams())
        linear = self._summary(synthetic_model, grid)
        logarithmic = self._summary(synthetic_model, grid.model_copy(update={'spacing': 'log'}))
        assert linear.max_abs_error(logarithmic) <= 1e-10
        np.testing.assert_allclose(linear.cov_beta, logarithmic.cov_beta, rtol=1e-8, atol=1e-12)


class TestCostScaling:

    def test_integration_time_linear_in_k(self):
        """On a fixed 200^2 grid the time per coordinate stays within 3x as k grows tenfold"""
        grid = GridSpec(sigma1_range=(0.2, 3.0), sigma2_range=(0.2, 3.0), nodes_per_axis=200)
        functionals = moment_functionals(CovMode.EXACT)
        times = {}
        for k in (10, 100, 1000):
            data, _ = generate_synthetic(2 * k, k, seed=k)
            model = MarginalModel(factorize(data), 8.0)
            best = np.inf
            for _ in range(3):
                start = time.perf_counter()
                integrate(model, grid, functionals)
                best = min(best, time.perf_counter() - start)
            times[k] = best
        assert 10 / 3 <= times[1000] / times[100] <= 30, times
        assert times[100] / times[10] <= 30, times
