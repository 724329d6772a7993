"""
Marginal density of (sigma1, sigma2) with beta integrated out.

In the singular basis z = V^t beta the exponent of the posterior is a
diagonal quadratic form, so the beta integral is a product of 1-D Gaussian
integrals. What is left is log q~(sigma1, sigma2), which costs O(k) per
point and is evaluated entirely in the log domain.

With r = sigma2^2 / sigma1^2 the per-coordinate quantities are

    2 a2_i = (lambda_i^2 + r) / sigma2^2
    m_i    = a1_i / (2 a2_i) = w_i / (lambda_i^2 + r)
    v_i    = 1 / (2 a2_i)    = sigma2^2 / (lambda_i^2 + r)

and those forms stay finite for sigma values anywhere in [1e-8, 1e8]. The
residual y^t y - sum w_i^2 / (lambda_i^2 + r) is evaluated as

    rss + sum_active w_i^2 r / (lambda_i^2 (lambda_i^2 + r)) - sum_null w_i^2 / (lambda_i^2 + r)

which keeps its relative accuracy when sigma2 is far below the data scale.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from inference.svd_basis import SvdBasis
from utils.error_handler import DataValidationError

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ConditionalGaussian:
    """
    Mean and variance of each z_i given (sigma1, sigma2); trailing axis is k.

    inverse holds h_i = 1 / (lambda_i^2 + r) when the law comes from
    MarginalModel.evaluate.
    """
    mean: np.ndarray
    variance: np.ndarray
    inverse: Optional[np.ndarray] = None


class MarginalModel:
    """
    Evaluator of log q~ and of the conditional law of z.

    Squares of the singular values and of w are cached at construction so
    each evaluation is a single fused pass over k coordinates.
    """

    def __init__(self, basis: SvdBasis, gamma: float):
        if not gamma > 0:
            raise DataValidationError(f"gamma must be positive, got {gamma}")
        self.basis = basis
        self.gamma = float(gamma)
        self.n = basis.n
        self.k = basis.k
        self._lam2 = basis.lam ** 2
        self._w = basis.w
        self._w2 = basis.w ** 2
        self._yty = basis.yty
        self._rss = basis.rss
        active = basis.active
        self._w2_over_lam2 = np.where(active, self._w2 / np.where(active, self._lam2, 1.0), 0.0)
        self._w2_null = np.where(active, 0.0, self._w2)

    @staticmethod
    def _check_sigmas(sigma1, sigma2) -> Tuple[np.ndarray, np.ndarray]:
        s1, s2 = np.broadcast_arrays(np.asarray(sigma1, dtype=float), np.asarray(sigma2, dtype=float))
        if np.any(~(s1 > 0)) or np.any(~(s2 > 0)):
            raise DataValidationError("sigma1 and sigma2 must be positive")
        return s1, s2

    def evaluate(self, sigma1, sigma2) -> Tuple[np.ndarray, ConditionalGaussian]:
        """
        Evaluate log q~ and the conditional Gaussian of z in one pass.

        sigma1 and sigma2 broadcast against each other; the conditional
        moments get an extra trailing axis of length k.

        Args:
            sigma1: Positive scalar or array
            sigma2: Positive scalar or array

        Returns:
            Tuple of (log_qtilde, ConditionalGaussian)
        """
        s1, s2 = self._check_sigmas(sigma1, sigma2)
        s2_sq = s2 * s2
        ratio = (s2_sq / (s1 * s1))[..., None]
        denom = self._lam2 + ratio
        inverse = 1.0 / denom

        # y^t y - sum w^2 h rewritten around the least squares residual
        excess = self._rss + (inverse * ratio) @ self._w2_over_lam2 - inverse @ self._w2_null
        log_det = np.sum(np.log(denom), axis=-1)

        log_s1 = np.log(s1)
        log_s2 = np.log(s2)
        log_q = (
            -(self.k + 1) * log_s1
            - self.n * log_s2
            - self.gamma * log_s1 * log_s1
            - 0.5 * s2_sq
            - excess / (2.0 * s2_sq)
            + self.k * _HALF_LOG_2PI
            - 0.5 * log_det
            + self.k * log_s2
        )

        cond = ConditionalGaussian(mean=self._w * inverse, variance=s2_sq[..., None] * inverse, inverse=inverse)
        return log_q, cond

    def coeffs(self, sigma1: float, sigma2: float) -> Tuple[float, np.ndarray, np.ndarray]:
        """
        Coefficients of the diagonal quadratic form in z.

        Returns:
            Tuple (a0, a1, a2) with a2_i = lambda_i^2/(2 sigma2^2) + 1/(2 sigma1^2),
            a1_i = w_i / sigma2^2 and a0 = -y^t y / (2 sigma2^2)
        """
        s1, s2 = self._check_sigmas(sigma1, sigma2)
        s1, s2 = float(s1), float(s2)
        a2 = self._lam2 / (2.0 * s2 * s2) + 1.0 / (2.0 * s1 * s1)
        a1 = self._w / (s2 * s2)
        a0 = -self._yty / (2.0 * s2 * s2)
        return a0, a1, a2

    def log_qtilde(self, sigma1, sigma2):
        """log q~(sigma1, sigma2); a float for scalar inputs."""
        log_q, _ = self.evaluate(sigma1, sigma2)
        return float(log_q) if np.ndim(log_q) == 0 else log_q

    def conditional_z(self, sigma1, sigma2) -> ConditionalGaussian:
        """Mean a1/(2 a2) and variance 1/(2 a2) of z given (sigma1, sigma2)."""
        _, cond = self.evaluate(sigma1, sigma2)
        return cond

    def log_target(self, log_sigma: np.ndarray) -> float:
        """
        Density of (log sigma1, log sigma2): log q~ plus the log-Jacobian.

        Args:
            log_sigma: Length-2 array (log sigma1, log sigma2)

        Returns:
            Log density, or -inf where it cannot be evaluated
        """
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            sigma = np.exp(log_sigma)
            if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
                return -np.inf
            value = self.log_qtilde(sigma[0], sigma[1]) + log_sigma[0] + log_sigma[1]
        return value if np.isfinite(value) else -np.inf
