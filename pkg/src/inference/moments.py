"""
Posterior moments from integrated functionals.

Moments of sigma1 and sigma2 under q are moments under q~. Moments of beta
come from the conditional law of z = V^t beta: E[beta] = V E[m] and

    exact: cov(beta) = V (diag E[v] + E[m m^t] - E[m] E[m]^t) V^t
    paper: cov(beta) = V diag(E[v]) V^t
    diag:  cov(beta) = V diag(E[v] + E[m^2] - E[m]^2) V^t

where m, v are the conditional mean and variance of z. The z_i are only
conditionally independent, so the exact form carries the between-sigma
spread of m (law of total covariance). E[m m^t] is rebuilt from k-vectors
of expected powers of 1/(lambda^2 + r), so every mode costs O(k) per grid
point; diag keeps the spread per coordinate only.
"""

from enum import Enum
from math import comb
from typing import List

import numpy as np

from inference.marginal import MarginalModel
from inference.quadrature import ConstantFunctional, Functional, MomentAccumulator
from model.types import PosteriorSummary
from utils.error_handler import DataValidationError, MissingFunctionalError, NumericalError
from utils.logger import get_logger

logger = get_logger("moments")

NEGATIVE_VARIANCE_TOLERANCE = 1e-12
RESOLVENT_ORDER = 5
CLOSE_GAP = 1e-3


class CovMode(str, Enum):
    """How cov(beta) is assembled."""
    EXACT = "exact"
    PAPER = "paper"
    DIAG = "diag"


def sigma_name(which: int, power: int) -> str:
    """Functional name for sigma_which ** power."""
    if power == 1:
        return f"sigma{which}"
    if power == 2:
        return f"sigma{which}_sq"
    return f"sigma{which}_pow{power}"


class SigmaPower(Functional):
    def __init__(self, which: int, power: int):
        super().__init__(sigma_name(which, power))
        self.which = which
        self.power = power

    def __call__(self, sigma1, sigma2, cond):
        sigma = sigma1 if self.which == 1 else sigma2
        return sigma ** self.power


class ZMean(Functional):
    def __init__(self):
        super().__init__("z_mean")

    def __call__(self, sigma1, sigma2, cond):
        return cond.mean


class ZVariance(Functional):
    def __init__(self):
        super().__init__("z_var")

    def __call__(self, sigma1, sigma2, cond):
        return cond.variance


class ZMeanSquare(Functional):
    def __init__(self):
        super().__init__("z_mean_sq")

    def __call__(self, sigma1, sigma2, cond):
        return cond.mean ** 2


class ZResolvent(Functional):
    """
    h^p for h_i = 1 / (lambda_i^2 + r) and p = 1..RESOLVENT_ORDER.

    m_i = w_i h_i depends on the sigmas only through r, so E[m m^t] is
    rebuilt from these k-vectors by outer_mean() and the per-point cost
    stays O(k).
    """

    def __init__(self):
        super().__init__("z_resolvent")

    def __call__(self, sigma1, sigma2, cond):
        h = _inverse(cond)
        return np.stack([h ** p for p in range(1, RESOLVENT_ORDER + 1)], axis=-2)

    def weighted_sum(self, weights, sigma1, sigma2, cond):
        h = _inverse(cond)
        sums = np.empty((RESOLVENT_ORDER, h.shape[-1]))
        power = h
        for order in range(RESOLVENT_ORDER):
            if order:
                power = power * h
            sums[order] = weights @ power
        return sums


def _inverse(cond) -> np.ndarray:
    if cond.inverse is None:
        raise DataValidationError("conditional law carries no 1/(lambda^2 + r); build it with MarginalModel.evaluate")
    return cond.inverse


def outer_mean(model: MarginalModel, resolvent: np.ndarray) -> np.ndarray:
    """
    E[m m^t] from the expected powers of h.

    With a_i = lambda_i^2, E[h_i h_j] = (E[h_i] - E[h_j]) / (a_j - a_i) for
    well separated pairs. When |a_j - a_i| <= CLOSE_GAP min(a_i, a_j) the
    difference quotient loses digits and the expansion
    h_j = sum_p (-(a_j - a_i))^p h_i^(p+1) is used instead.

    Args:
        model: Supplies lambda^2 and w
        resolvent: Expectations of ZResolvent, shape (RESOLVENT_ORDER, k)

    Returns:
        k x k matrix E[m m^t]
    """
    a = model.basis.lam ** 2
    w = model.basis.w
    gap = a[None, :] - a[:, None]
    close = np.abs(gap) <= CLOSE_GAP * np.minimum(a[:, None], a[None, :])
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        far = (resolvent[0][:, None] - resolvent[0][None, :]) / gap
        series = sum((-gap) ** p * resolvent[p + 1][:, None] for p in range(RESOLVENT_ORDER - 1))
    pair = np.where(close, series, far)
    return np.outer(w, w) * (0.5 * (pair + pair.T))


def moment_functionals(mode: CovMode = CovMode.EXACT, sigma_powers: int = 2) -> List[Functional]:
    """
    Functionals posterior_summary needs for a covariance mode.

    Args:
        mode: Covariance assembly mode
        sigma_powers: Highest power of each sigma to integrate (at least 2)

    Returns:
        List of functionals
    """
    mode = CovMode(mode)
    functionals: List[Functional] = [ConstantFunctional("one")]
    for which in (1, 2):
        functionals.extend(SigmaPower(which, p) for p in range(1, max(sigma_powers, 2) + 1))
    functionals.extend([ZMean(), ZVariance()])
    if mode is CovMode.EXACT:
        functionals.append(ZResolvent())
    elif mode is CovMode.DIAG:
        functionals.append(ZMeanSquare())
    return functionals


def _variance(second: float, first: float, label: str) -> float:
    value = float(second - first * first)
    if value < -NEGATIVE_VARIANCE_TOLERANCE * max(1.0, abs(float(second))):
        raise NumericalError(f"negative variance {value:.3e} for {label}")
    return max(value, 0.0)


def posterior_summary(model: MarginalModel, acc: MomentAccumulator,
                      mode: CovMode = CovMode.EXACT) -> PosteriorSummary:
    """
    Assemble the posterior summary from integrated moments.

    Args:
        model: Marginal model whose basis maps z back to beta
        acc: Accumulator holding the functionals of moment_functionals(mode)
        mode: Covariance assembly mode

    Returns:
        PosteriorSummary

    Raises:
        MissingFunctionalError: a required functional is absent
        NumericalError: a variance came out negative beyond round-off
    """
    mode = CovMode(mode)
    required = [f.name for f in moment_functionals(mode)]
    missing = [name for name in required if name not in acc]
    if missing:
        raise MissingFunctionalError(f"accumulator lacks functionals {missing} for {mode.value} mode")

    mean_sigma1 = float(acc.expectation("sigma1"))
    mean_sigma2 = float(acc.expectation("sigma2"))
    var_sigma1 = _variance(acc.expectation("sigma1_sq"), mean_sigma1, "sigma1")
    var_sigma2 = _variance(acc.expectation("sigma2_sq"), mean_sigma2, "sigma2")

    V = model.basis.V
    mean_z = np.asarray(acc.expectation("z_mean"), dtype=float)
    mean_var = np.asarray(acc.expectation("z_var"), dtype=float)
    mean_beta = V @ mean_z

    if mode is CovMode.EXACT:
        outer = outer_mean(model, np.asarray(acc.expectation("z_resolvent"), dtype=float))
        cov_z = np.diag(mean_var) + outer - np.outer(mean_z, mean_z)
        cov_beta = V @ cov_z @ V.T
    elif mode is CovMode.DIAG:
        spread = acc.expectation("z_mean_sq") - mean_z * mean_z
        cov_beta = (V * (mean_var + spread)) @ V.T
    else:
        cov_beta = (V * mean_var) @ V.T
    cov_beta = 0.5 * (cov_beta + cov_beta.T)

    diagonal = np.diag(cov_beta)
    scale = max(1.0, float(np.abs(diagonal).max()))
    if np.any(diagonal < -NEGATIVE_VARIANCE_TOLERANCE * scale):
        raise NumericalError(f"negative variance {diagonal.min():.3e} on the diagonal of cov(beta)")

    return PosteriorSummary(
        mean_sigma1=mean_sigma1,
        mean_sigma2=mean_sigma2,
        var_sigma1=var_sigma1,
        var_sigma2=var_sigma2,
        mean_beta=mean_beta,
        cov_beta=cov_beta,
    )


def sigma_central_moment(acc: MomentAccumulator, which: int, order: int) -> float:
    """
    Central moment E[(sigma - E sigma)^order] from raw powers.

    Needs the accumulator to hold sigma powers 1..order
    (moment_functionals(..., sigma_powers=order)).
    """
    mean = float(acc.expectation(sigma_name(which, 1)))
    total = 0.0
    for power in range(order + 1):
        raw = 1.0 if power == 0 else float(acc.expectation(sigma_name(which, power)))
        total += comb(order, power) * raw * (-mean) ** (order - power)
    return total


def paper_cov_deviation(exact: PosteriorSummary, paper: PosteriorSummary) -> float:
    """Largest absolute entry of cov_exact - cov_paper."""
    deviation = float(np.max(np.abs(exact.cov_beta - paper.cov_beta)))
    logger.info(f"paper-cov deviates from exact-cov by up to {deviation:.3e}")
    return deviation
