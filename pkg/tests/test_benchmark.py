"""
Tests for the benchmark harness.
"""

import logging
import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from inference.sampler import SamplerConfig
from model.datagen import generate_synthetic
from utils.error_handler import DataValidationError, SvdConvergenceError
from workflows.bench import BenchmarkHarness, BenchRow, fitted_exponents, parse_sizes, to_frame, write_report
from workflows.pipeline import PosteriorPipeline


class TestParseSizes:

    def test_parses_list(self):
        assert parse_sizes("50x5, 100X10,") == [(50, 5), (100, 10)]

    @pytest.mark.parametrize("text", ["", "50", "50x", "ax5", "0x5", "50x5x2"])
    def test_rejects(self, text):
        with pytest.raises(DataValidationError):
            parse_sizes(text)


class TestFittedExponents:

    def test_recovers_power_law(self):
        sizes = [(100, 5), (200, 5), (100, 20), (400, 10)]
        rows = [BenchRow(n=n, k=k, nodes=200, total_s=1e-6 * n * k ** 2) for n, k in sizes]
        exponents = fitted_exponents(rows)
        assert exponents['n'] == pytest.approx(1.0, abs=1e-9)
        assert exponents['k'] == pytest.approx(2.0, abs=1e-9)

    def test_needs_variation(self):
        rows = [BenchRow(n=n, k=5, nodes=200, total_s=0.1 * n) for n in (10, 20, 40)]
        assert fitted_exponents(rows) is None
        assert fitted_exponents(rows[:2]) is None

    def test_ignores_failed_rows(self):
        rows = [
            BenchRow(n=100, k=5, nodes=200, total_s=1.0),
            BenchRow(n=200, k=10, nodes=200, total_s=2.0),
            BenchRow(n=400, k=20, nodes=200, status="failed: MemoryError"),
        ]
        assert fitted_exponents(rows) is None


class TestNodeCountAccuracy:

    @pytest.mark.parametrize("n,k", [(50, 5), (100, 10), (500, 20), (1000, 50)])
    def test_200_nodes_match_500(self, n, k):
        data, _ = generate_synthetic(n, k, seed=0)
        pipeline = PosteriorPipeline()
        working = pipeline.fit(data)
        reference = pipeline.fit(data, grid=working.grid.with_nodes(500))
        assert working.summary.max_abs_error(reference.summary) <= 1e-10


class TestHarness:

    def test_rows_and_report(self, tmp_path):
        harness = BenchmarkHarness(arm="trap")
        rows = harness.run([(30, 2), (60, 3), (120, 6)])
        assert [r.status for r in rows] == ["ok"] * 3
        assert all(r.max_error <= 1e-10 for r in rows)
        assert all(r.total_s >= r.integrate_s >= 0 for r in rows)

        text = write_report(rows, "trap", path=tmp_path / "bench.csv")
        assert (tmp_path / "bench.csv").exists()
        assert "max_error" in text and "mcmc_s" not in text

    def test_reference_equal_to_working_grid(self):
        harness = BenchmarkHarness(reference_nodes=200)
        assert harness.run_size(40, 3).max_error == 0.0

    def test_mcmc_arm(self):
        harness = BenchmarkHarness(arm="svd-mcmc", sampler_config=SamplerConfig(draws=2000, warmup=500, seed=4))
        row = harness.run_size(50, 2)
        assert row.max_error is None
        assert row.mcmc_s > 0
        assert row.mcmc_error < 0.2
        assert list(to_frame([row], "svd-mcmc").columns)[-3:] == ['mcmc_s', 'mcmc_error', 'status']

    def test_memory_limit_skips(self):
        harness = BenchmarkHarness(memory_limit_gb=1e-9)
        row = harness.run_size(50, 5)
        assert row.status == "skipped"
        assert row.total_s is None

    def test_failed_size_does_not_stop_run(self, monkeypatch, caplog):
        harness = BenchmarkHarness()
        fit = harness.pipeline.fit

        def flaky_fit(data, grid=None):
            if data.n == 40:
                raise SvdConvergenceError("no driver converged", drivers=('gesdd', 'gesvd'))
            return fit(data, grid=grid)

        monkeypatch.setattr(harness.pipeline, 'fit', flaky_fit)
        with caplog.at_level(logging.WARNING, logger="nnpost"):
            rows = harness.run([(20, 2), (40, 2), (60, 2)])
        assert [r.status for r in rows] == ["ok", "failed: SvdConvergenceError", "ok"]
        assert np.isnan(to_frame(rows)['max_error'][1])
        assert harness.error_handler.get_error_stats()['total_unique_errors'] == 1
        assert any("1 of 3 size(s) failed" in record.getMessage() for record in caplog.records)

        # A second run starts from clean counts
        monkeypatch.setattr(harness.pipeline, 'fit', fit)
        harness.run([(20, 2)])
        assert harness.error_handler.get_error_stats()['total_unique_errors'] == 0

    def test_rejects_unknown_arm(self):
        with pytest.raises(DataValidationError):
            BenchmarkHarness(arm="nuts")

    def test_large_problem_completes(self):
        row = BenchmarkHarness().run_size(5000, 100)
        assert row.status == "ok"
        assert row.max_error <= 1e-10


class TestScaling:
    """Timing shape of the quadrature arm; the best of two runs per size is kept"""

    def _fastest(self, harness, n, k, repeats=2):
        rows = [harness.run_size(n, k) for _ in range(repeats)]
        return min(rows, key=lambda r: r.total_s)

    def test_5000_by_100_under_five_seconds(self):
        row = self._fastest(BenchmarkHarness(reference_nodes=200), 5000, 100)
        assert row.status == "ok"
        assert row.total_s < 5.0

    def test_time_grows_like_n_k_squared(self):
        harness = BenchmarkHarness(reference_nodes=200)
        rows = [self._fastest(harness, n, k) for n, k in [(1000, 50), (5000, 100), (10000, 500)]]
        exponents = fitted_exponents(rows)
        assert 1.6 <= exponents['k'] <= 3.2, exponents
        largest = rows[-1]
        assert largest.precompute_s > largest.integrate_s, largest
