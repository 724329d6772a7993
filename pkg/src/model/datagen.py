"""
Synthetic regression data.

Draws X, beta and the noise iid standard normal and sets y = X beta + eps.
The generator is numpy's PCG64 seeded explicitly; normal variates come from
its ziggurat transform, so output is bit-reproducible for a given seed on a
given platform.
"""

from typing import Tuple

import numpy as np

from model.types import RegressionData
from utils.error_handler import DataValidationError


def generate_synthetic(n: int, k: int, seed: int) -> Tuple[RegressionData, np.ndarray]:
    """
    Generate a random regression problem.

    Draw order is fixed: X (row-major), then beta_true, then the noise.

    Args:
        n: Number of observations (>= 1)
        k: Number of predictors (>= 1)
        seed: PCG64 seed

    Returns:
        Tuple of (data, beta_true)
    """
    if n < 1 or k < 1:
        raise DataValidationError(f"n and k must be at least 1, got n={n}, k={k}")

    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.standard_normal((n, k))
    beta_true = rng.standard_normal(k)
    noise = rng.standard_normal(n)
    y = X @ beta_true + noise

    return RegressionData(X=X, y=y), beta_true
