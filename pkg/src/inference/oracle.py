"""
Brute-force reference moments for small models (k <= 2).

The joint density

    q(sigma1, sigma2, beta) = sigma1^-(k+1) sigma2^-n exp(-gamma log^2 sigma1
        - sigma2^2/2 - |X beta - y|^2 / (2 sigma2^2) - |beta|^2 / (2 sigma1^2))

is summed directly on a tensor grid: trapezoid nodes in (log sigma1,
log sigma2) with the Jacobian sigma1 sigma2, and at every sigma pair a
trapezoid box in beta. The box is the affine image c + Q S t of a fixed grid
in t, where c solves the penalized normal equations, Q holds the
eigenvectors of X^t X and S the conditional standard deviations along
them, so it follows the beta mass as the scales change.

The misfit |X beta - y|^2 is expanded around c as

    |X c - y|^2 - 2 r (beta - c).c + (beta - c)^t X^t X (beta - c)

with the first term taken directly from the residual vector, so nothing
cancels when sigma2 is far below the scale of y. The sigma windows come
from a coarse scan of the same sums. No SVD and no marginal formula is
used anywhere here.
"""

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from model.types import Hyperparams, PosteriorSummary, RegressionData, validate
from utils.error_handler import OracleError
from utils.logger import get_logger

logger = get_logger("oracle")

MAX_K = 2


class OracleGrid(BaseModel):
    """
    Node counts and bounds of the brute-force grids.

    Windows left as None are located from the data by a coarse scan over
    scan_log_sigma1 x [log 1e-12, log(16 + 4 (y^t y)^(1/4))], keeping every
    node whose marginal mass is within exp(-tail_drop) of the largest.
    """
    model_config = ConfigDict(frozen=True)

    sigma_nodes: int = Field(default=128, ge=3)
    beta_nodes: int = Field(default=41, ge=3)
    beta_halfwidth: float = Field(default=8.0, gt=0)
    log_sigma1_range: Optional[Tuple[float, float]] = None
    log_sigma2_range: Optional[Tuple[float, float]] = None
    scan_nodes: int = Field(default=129, ge=9)
    scan_log_sigma1: Tuple[float, float] = (-12.0, 12.0)
    tail_drop: float = Field(default=46.0, gt=0)

    def refined(self) -> "OracleGrid":
        """Same bounds with every spacing halved."""
        return self.model_copy(update={
            'sigma_nodes': 2 * self.sigma_nodes - 1,
            'beta_nodes': 2 * self.beta_nodes - 1,
        })


def _trapezoid(lo: float, hi: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(lo, hi, count)
    weights = np.full(count, (hi - lo) / (count - 1))
    weights[[0, -1]] *= 0.5
    return nodes, weights


class _BruteForce:
    """Tensor-grid evaluation of q for one dataset."""

    def __init__(self, data: RegressionData, hyper: Hyperparams, grid: OracleGrid):
        validate(data)
        if data.k > MAX_K:
            raise OracleError(f"oracle supports k <= {MAX_K}, got k={data.k}")
        self.n, self.k = data.n, data.k
        self.gamma = hyper.gamma
        self.X, self.y = data.X, data.y
        self.yty = float(data.y @ data.y)
        eigenvalues, self.eigenvectors = np.linalg.eigh(data.X.T @ data.X)
        # eigh leaves eps * max eigenvalue of noise on null directions; those are exact zeros
        null = eigenvalues <= max(self.n, self.k) * np.finfo(float).eps * max(eigenvalues.max(), 0.0)
        self.eigenvalues = np.where(null, 0.0, eigenvalues)
        self.rotated_xty = np.where(null, 0.0, self.eigenvectors.T @ (data.X.T @ data.y))
        self.grid = grid

        t, t_weights = _trapezoid(-grid.beta_halfwidth, grid.beta_halfwidth, grid.beta_nodes)
        axes = np.meshgrid(*([t] * self.k), indexing='ij')
        self.t_points = np.stack([a.ravel() for a in axes], axis=-1)
        weight_axes = np.meshgrid(*([t_weights] * self.k), indexing='ij')
        self.log_t_weights = np.sum(np.log(np.stack([a.ravel() for a in weight_axes], axis=-1)), axis=-1)

    def beta_box(self, sigma1: float, sigma2: np.ndarray):
        """
        Box geometry for each sigma2.

        Returns:
            Tuple (centre, centre in eigen coordinates, standard deviations
            along the eigenvectors, eigenvalues shifted by r), each with a
            leading axis over sigma2
        """
        ratio = (sigma2 / sigma1) ** 2
        shifted = self.eigenvalues[None, :] + ratio[:, None]
        rotated = self.rotated_xty[None, :] / shifted
        scale = sigma2[:, None] / np.sqrt(shifted)
        return rotated @ self.eigenvectors.T, rotated, scale, shifted

    def log_weights(self, sigma1: float, sigma2: np.ndarray):
        """
        Log of q times the beta-grid weights, for one sigma1 and many sigma2.

        Returns:
            Tuple (log_w of shape (S, P), beta points of shape (S, P, k))
        """
        centre, rotated, scale, shifted = self.beta_box(sigma1, sigma2)
        offset = scale[:, None, :] * self.t_points[None, :, :]
        beta = centre[:, None, :] + offset @ self.eigenvectors.T

        residual = self.y[None, :] - centre @ self.X.T
        rss = np.sum(residual ** 2, axis=-1)[:, None]
        cross = np.sum(offset * rotated[:, None, :], axis=-1)
        curvature = self.t_points ** 2 @ (self.eigenvalues[None, :] / shifted).T

        s2_sq = sigma2[:, None] ** 2
        log_s1 = np.log(sigma1)
        log_s2 = np.log(sigma2)[:, None]
        log_q = (
            -(self.k + 1) * log_s1
            - self.n * log_s2
            - self.gamma * log_s1 ** 2
            - 0.5 * s2_sq
            - rss / (2.0 * s2_sq)
            + cross / sigma1 ** 2
            - 0.5 * curvature.T
            - np.sum(beta ** 2, axis=-1) / (2.0 * sigma1 ** 2)
        )
        log_jacobian = np.sum(np.log(scale), axis=-1)
        return log_q + self.log_t_weights[None, :] + log_jacobian[:, None], beta


def brute_conditional(data: RegressionData, hyper: Hyperparams, sigma1: float, sigma2: float,
                      grid: Optional[OracleGrid] = None) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Integrate q over beta at fixed (sigma1, sigma2).

    Returns:
        Tuple (log of the integral, E[beta | sigma], Cov[beta | sigma])
    """
    brute = _BruteForce(data, hyper, grid or OracleGrid())
    log_w, beta = brute.log_weights(float(sigma1), np.array([float(sigma2)]))
    log_w, beta = log_w[0], beta[0]
    peak = log_w.max()
    weights = np.exp(log_w - peak)
    total = weights.sum()
    mean = weights @ beta / total
    centred = beta - mean
    cov = (centred * weights[:, None]).T @ centred / total
    return float(peak + np.log(total)), mean, cov


def _trim(nodes: np.ndarray, log_mass: np.ndarray, tail_drop: float, axis: str) -> Tuple[float, float]:
    keep = np.flatnonzero(log_mass >= log_mass.max() - tail_drop)
    lo, hi = keep[0] - 2, keep[-1] + 2
    if lo < 0 or hi >= len(nodes):
        logger.warning(f"Oracle {axis} window reaches the edge of the scan range")
    return float(nodes[max(lo, 0)]), float(nodes[min(hi, len(nodes) - 1)])


def locate_windows(data: RegressionData, hyper: Hyperparams, grid: Optional[OracleGrid] = None) -> OracleGrid:
    """
    Fill in the log-sigma windows the grid leaves open.

    Args:
        data: Regression inputs with k <= 2
        hyper: Supplies gamma
        grid: Grid settings (defaults to OracleGrid())

    Returns:
        Copy of grid with both log_sigma1_range and log_sigma2_range set
    """
    grid = grid or OracleGrid()
    if grid.log_sigma1_range is not None and grid.log_sigma2_range is not None:
        return grid
    brute = _BruteForce(data, hyper, grid)
    u1 = np.linspace(*grid.scan_log_sigma1, grid.scan_nodes)
    u2 = np.linspace(np.log(1e-12), np.log(16.0 + 4.0 * brute.yty ** 0.25), grid.scan_nodes)
    sigma2_nodes = np.exp(u2)

    log_mass = np.empty((len(u1), len(u2)))
    for i, sigma1 in enumerate(np.exp(u1)):
        log_w, _ = brute.log_weights(sigma1, sigma2_nodes)
        log_mass[i] = logsumexp(log_w, axis=1) + u1[i] + u2

    update = {}
    if grid.log_sigma1_range is None:
        update['log_sigma1_range'] = _trim(u1, logsumexp(log_mass, axis=1), grid.tail_drop, "log sigma1")
    if grid.log_sigma2_range is None:
        update['log_sigma2_range'] = _trim(u2, logsumexp(log_mass, axis=0), grid.tail_drop, "log sigma2")
    located = grid.model_copy(update=update)
    logger.debug(f"Oracle windows: log sigma1 {located.log_sigma1_range}, log sigma2 {located.log_sigma2_range}")
    return located


def _accumulate(brute: _BruteForce, grid: OracleGrid):
    u1, w1 = _trapezoid(*grid.log_sigma1_range, grid.sigma_nodes)
    u2, w2 = _trapezoid(*grid.log_sigma2_range, grid.sigma_nodes)
    sigma1_nodes, sigma2_nodes = np.exp(u1), np.exp(u2)
    log_outer2 = np.log(w2 * sigma2_nodes)

    rows = []
    for i, sigma1 in enumerate(sigma1_nodes):
        log_w, beta = brute.log_weights(sigma1, sigma2_nodes)
        log_w = log_w + log_outer2[:, None] + np.log(w1[i] * sigma1)
        peak = log_w.max()
        weights = np.exp(log_w - peak)
        per_sigma2 = weights.sum(axis=1)
        flat = beta.reshape(-1, brute.k)
        weighted = weights.reshape(-1)[:, None] * flat
        rows.append((peak, {
            'mass': per_sigma2.sum(),
            'sigma1': sigma1 * per_sigma2.sum(),
            'sigma1_sq': sigma1 ** 2 * per_sigma2.sum(),
            'sigma2': per_sigma2 @ sigma2_nodes,
            'sigma2_sq': per_sigma2 @ sigma2_nodes ** 2,
            'beta': weighted.sum(axis=0),
            'beta_outer': weighted.T @ flat,
        }))

    top = max(peak for peak, _ in rows)
    totals = {}
    for peak, sums in rows:
        scale = np.exp(peak - top)
        for name, value in sums.items():
            totals[name] = totals.get(name, 0.0) + scale * value
    return totals


def brute_moments(data: RegressionData, hyper: Hyperparams, grid: Optional[OracleGrid] = None,
                  check_convergence: bool = False, tolerance: float = 1e-9) -> PosteriorSummary:
    """
    Posterior moments of (sigma1, sigma2, beta) by direct summation of q.

    Args:
        data: Regression inputs with k <= 2
        hyper: Supplies gamma
        grid: Grid settings (defaults to OracleGrid()); open windows are
            located once and shared with the refined run
        check_convergence: Also run with halved spacing and compare
        tolerance: Allowed change when checking convergence, relative to
            max(|value|, 1e-2)

    Returns:
        PosteriorSummary from the brute-force sums

    Raises:
        OracleError: k > 2, or the refined run moved a moment by more than tolerance
    """
    grid = locate_windows(data, hyper, grid)
    brute = _BruteForce(data, hyper, grid)
    summary = _summarize(_accumulate(brute, grid))

    if check_convergence:
        refined = _summarize(_accumulate(_BruteForce(data, hyper, grid.refined()), grid.refined()))
        change = _max_relative_change(summary, refined)
        if change > tolerance:
            raise OracleError(
                f"oracle not converged: halving the spacing changed a moment by {change:.3e}",
                converged=False, max_change=change,
            )
        logger.debug(f"Oracle converged: max relative change {change:.3e}")
        summary = refined

    return summary


def _summarize(totals) -> PosteriorSummary:
    mass = totals['mass']
    mean_sigma1 = totals['sigma1'] / mass
    mean_sigma2 = totals['sigma2'] / mass
    mean_beta = totals['beta'] / mass
    cov_beta = totals['beta_outer'] / mass - np.outer(mean_beta, mean_beta)
    return PosteriorSummary(
        mean_sigma1=float(mean_sigma1),
        mean_sigma2=float(mean_sigma2),
        var_sigma1=float(totals['sigma1_sq'] / mass - mean_sigma1 ** 2),
        var_sigma2=float(totals['sigma2_sq'] / mass - mean_sigma2 ** 2),
        mean_beta=mean_beta,
        cov_beta=0.5 * (cov_beta + cov_beta.T),
    )


def _max_relative_change(a: PosteriorSummary, b: PosteriorSummary) -> float:
    pairs = [
        (a.mean_sigma1, b.mean_sigma1), (a.mean_sigma2, b.mean_sigma2),
        (a.var_sigma1, b.var_sigma1), (a.var_sigma2, b.var_sigma2),
    ]
    pairs.extend(zip(a.mean_beta, b.mean_beta))
    pairs.extend(zip(a.cov_beta.ravel(), b.cov_beta.ravel()))
    return max(abs(x - y) / max(abs(y), 1e-2) for x, y in pairs)
