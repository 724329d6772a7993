"""
Domain types for nnpost.

RegressionData holds the fixed inputs X and y, Hyperparams the prior
strength and numerical controls, and PosteriorSummary the computed
posterior moments.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from utils.error_handler import DataValidationError, DimensionError


@dataclass(frozen=True)
class RegressionData:
    """Design matrix X (n x k) and response y (n)."""
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'X', np.asarray(self.X, dtype=float))
        object.__setattr__(self, 'y', np.asarray(self.y, dtype=float))

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def k(self) -> int:
        return int(self.X.shape[1]) if self.X.ndim == 2 else 0


class Hyperparams(BaseModel):
    """
    Prior strength on log(sigma1) plus the quadrature controls.

    tail_drop is in log-density units: 46 is a relative density of about 1e-20.
    """
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=8.0, gt=0)
    grid_nodes: int = Field(default=200, ge=2)
    tail_drop: float = Field(default=46.0, gt=0)
    sigma_floor: float = Field(default=1e-8, gt=0)


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior means and (co)variances of sigma1, sigma2 and beta."""
    mean_sigma1: float
    mean_sigma2: float
    var_sigma1: float
    var_sigma2: float
    mean_beta: np.ndarray
    cov_beta: np.ndarray

    @property
    def k(self) -> int:
        return int(self.mean_beta.shape[0])

    @property
    def sd_beta(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov_beta), 0.0, None))

    def max_abs_error(self, other: "PosteriorSummary") -> float:
        """
        Largest absolute difference of E[sigma1], E[sigma2] and every E[beta_i].

        Args:
            other: Summary to compare against (usually a reference run)

        Returns:
            The maximum absolute deviation
        """
        if other.k != self.k:
            raise DimensionError(f"cannot compare summaries with k={self.k} and k={other.k}")
        diffs = [
            abs(self.mean_sigma1 - other.mean_sigma1),
            abs(self.mean_sigma2 - other.mean_sigma2),
        ]
        diffs.extend(np.abs(self.mean_beta - other.mean_beta).tolist())
        return float(max(diffs))

    def to_dict(self) -> Dict[str, Any]:
        """Plain-Python view for JSON output."""
        return {
            'mean_sigma1': float(self.mean_sigma1),
            'mean_sigma2': float(self.mean_sigma2),
            'var_sigma1': float(self.var_sigma1),
            'var_sigma2': float(self.var_sigma2),
            'mean_beta': [float(v) for v in self.mean_beta],
            'cov_beta': [[float(v) for v in row] for row in self.cov_beta],
        }


def validate(data: RegressionData) -> RegressionData:
    """
    Check the RegressionData invariants.

    Rows and columns in error messages are 1-based.

    Args:
        data: Candidate regression inputs

    Returns:
        The same object, unchanged, when every invariant holds

    Raises:
        DataValidationError: empty input or a non-finite entry
        DimensionError: X and y disagree on n, or have the wrong rank
    """
    X, y = data.X, data.y
    if X.ndim != 2:
        raise DimensionError(f"X must be a 2-D matrix, got {X.ndim}-D")
    if y.ndim != 1:
        raise DimensionError(f"y must be a vector, got {y.ndim}-D")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise DataValidationError(f"empty design matrix of shape {X.shape}")
    if y.shape[0] != X.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")

    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        row, column = bad[0]
        raise DataValidationError(
            f"non-finite value {X[row, column]!r} in X", row=int(row) + 1, column=int(column) + 1
        )
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise DataValidationError(f"non-finite value {y[bad[0]]!r} in y", row=int(bad[0]) + 1)

    return data
