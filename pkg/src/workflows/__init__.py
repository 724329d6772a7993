"""
nnpost Workflows Package

End-to-end posterior pipeline and the benchmark harness.
"""

from .pipeline import PosteriorPipeline, FitResult, SampleResult, Timings
from .bench import BenchmarkHarness, BenchRow, parse_sizes

__all__ = ['PosteriorPipeline', 'FitResult', 'SampleResult', 'Timings',
           'BenchmarkHarness', 'BenchRow', 'parse_sizes']
