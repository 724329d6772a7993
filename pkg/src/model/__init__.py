"""
Core domain types and synthetic data for nnpost.
"""

from .types import RegressionData, Hyperparams, PosteriorSummary, validate
from .datagen import generate_synthetic

__all__ = ['RegressionData', 'Hyperparams', 'PosteriorSummary', 'validate', 'generate_synthetic']
