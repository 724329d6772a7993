"""
Random-walk Metropolis on the marginal density (the SVD-MCMC arm).

The chain runs on (log sigma1, log sigma2) with target log q~ plus the
log-Jacobian log sigma1 + log sigma2, so the support is unbounded. Beta
draws are generated afterwards from the conditional Gaussian of z at each
retained (sigma1, sigma2) and rotated back with V.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from inference.marginal import MarginalModel
from inference.quadrature import Functional, MomentAccumulator, NORMALIZER, find_mode
from utils.error_handler import BoundsSearchError, SamplerError
from utils.logger import get_logger

logger = get_logger("sampler")

ADAPT_BATCH = 50
ACCEPT_LOW, ACCEPT_HIGH = 0.2, 0.5
SHRINK, GROW = 0.6, 1.6
ACCUMULATE_CHUNK = 2048


class SamplerConfig(BaseModel):
    """Chain length, warmup and proposal settings."""
    model_config = ConfigDict(frozen=True)

    draws: int = Field(default=10000, ge=1)
    warmup: int = Field(default=1000, ge=0)
    step_scale: float = Field(default=0.3, gt=0)
    seed: int = 0
    adapt: bool = True


@dataclass(frozen=True)
class Chain:
    """Retained draws of one chain; beta_draws is filled by draw_beta."""
    sigma1_draws: np.ndarray
    sigma2_draws: np.ndarray
    log_density: np.ndarray
    accepted: int
    acceptance_rate: float
    step_scale: float
    beta_draws: Optional[np.ndarray] = None

    @property
    def draws(self) -> int:
        return int(self.sigma1_draws.shape[0])


@dataclass(frozen=True)
class MetropolisResult:
    samples: np.ndarray
    log_density: np.ndarray
    accepted: int
    step_scale: float
    warmup_acceptance: Optional[float]


def metropolis(log_target: Callable[[np.ndarray], float], initial: Sequence[float],
               config: SamplerConfig) -> MetropolisResult:
    """
    Random-walk Metropolis with isotropic Gaussian proposals.

    During warmup the proposal scale is multiplied by 0.6 after any batch of
    50 iterations with acceptance below 0.2 and by 1.6 after any batch above
    0.5; it is frozen once warmup ends.

    Args:
        log_target: Log density on R^d (may return -inf)
        initial: Starting point
        config: Draws, warmup, initial scale, seed, adaptation switch

    Returns:
        MetropolisResult with the post-warmup samples

    Raises:
        SamplerError: the start is outside the support or nothing was accepted
    """
    rng = np.random.default_rng(config.seed)
    current = np.array(initial, dtype=float)
    current_lp = log_target(current)
    if not np.isfinite(current_lp):
        raise SamplerError(f"log target is {current_lp} at the initial point {current.tolist()}")

    dim = current.shape[0]
    step = config.step_scale
    samples = np.empty((config.draws, dim))
    log_density = np.empty(config.draws)
    accepted = 0
    batch_accepted = 0
    warmup_accepted = 0

    for iteration in range(config.warmup + config.draws):
        proposal = current + step * rng.standard_normal(dim)
        proposal_lp = log_target(proposal)
        log_u = np.log(rng.uniform())
        move = bool(proposal_lp - current_lp > log_u)

        if move:
            current, current_lp = proposal, proposal_lp

        if iteration < config.warmup:
            batch_accepted += move
            warmup_accepted += move
            if config.adapt and (iteration + 1) % ADAPT_BATCH == 0:
                rate = batch_accepted / ADAPT_BATCH
                if rate < ACCEPT_LOW:
                    step *= SHRINK
                elif rate > ACCEPT_HIGH:
                    step *= GROW
                logger.debug(f"Warmup batch ending {iteration + 1}: acceptance {rate:.2f}, step {step:.4g}")
                batch_accepted = 0
        else:
            index = iteration - config.warmup
            samples[index] = current
            log_density[index] = current_lp
            accepted += move

    warmup_acceptance = warmup_accepted / config.warmup if config.warmup else None
    if accepted == 0:
        raise SamplerError(
            f"no proposal accepted in {config.draws} draws after warmup "
            f"(step scale {step:.4g}, warmup acceptance {warmup_acceptance})",
            step_scale=step, warmup_acceptance=warmup_acceptance,
        )

    return MetropolisResult(samples=samples, log_density=log_density, accepted=accepted,
                            step_scale=step, warmup_acceptance=warmup_acceptance)


def run_chain(model: MarginalModel, config: SamplerConfig,
              initial: Optional[Sequence[float]] = None) -> Chain:
    """
    Sample (sigma1, sigma2) from q~.

    Args:
        model: Marginal density
        config: Sampler settings
        initial: Optional starting (sigma1, sigma2); defaults to the mode of q~

    Returns:
        Chain of config.draws retained draws
    """
    if initial is None:
        try:
            mode1, mode2, _ = find_mode(model)
            initial = (mode1, mode2)
        except BoundsSearchError as e:
            logger.warning(f"Mode search failed ({e}); starting the chain at sigma1 = sigma2 = 1")
            initial = (1.0, 1.0)

    result = metropolis(model.log_target, np.log(np.asarray(initial, dtype=float)), config)
    sigma = np.exp(result.samples)
    chain = Chain(
        sigma1_draws=sigma[:, 0],
        sigma2_draws=sigma[:, 1],
        log_density=result.log_density,
        accepted=result.accepted,
        acceptance_rate=result.accepted / config.draws,
        step_scale=result.step_scale,
    )
    logger.info(
        f"Chain finished: {chain.draws} draws, acceptance {chain.acceptance_rate:.3f}, "
        f"step {chain.step_scale:.4g}"
    )
    return chain


def draw_beta(model: MarginalModel, chain: Chain, seed: int) -> np.ndarray:
    """
    Draw beta at every retained (sigma1, sigma2) of the chain.

    z is drawn from the conditional Gaussian of z (null-space coordinates
    included, with variance sigma1^2) and beta = V z.

    Args:
        model: Marginal model the chain was run on
        chain: Populated chain
        seed: Seed for the beta draws

    Returns:
        Array of shape (draws, k)
    """
    if chain.draws == 0:
        raise SamplerError("chain holds no draws")
    if chain.sigma1_draws.shape != chain.sigma2_draws.shape:
        raise SamplerError("chain sigma1 and sigma2 draws differ in length")

    rng = np.random.default_rng(seed)
    cond = model.conditional_z(chain.sigma1_draws, chain.sigma2_draws)
    z = cond.mean + np.sqrt(cond.variance) * rng.standard_normal(cond.mean.shape)
    return z @ model.basis.V.T


def accumulate_chain(model: MarginalModel, chain: Chain,
                     functionals: Sequence[Functional]) -> MomentAccumulator:
    """
    Average functionals of the conditional law of z along the chain.

    The result has the same layout as a quadrature accumulator (normalizer
    equal to the number of draws), so posterior_summary applies unchanged.
    """
    totals = {}
    for start in range(0, chain.draws, ACCUMULATE_CHUNK):
        sigma1 = chain.sigma1_draws[start:start + ACCUMULATE_CHUNK]
        sigma2 = chain.sigma2_draws[start:start + ACCUMULATE_CHUNK]
        cond = model.conditional_z(sigma1, sigma2)
        weights = np.ones_like(sigma1)
        for functional in list(functionals) + [NORMALIZER]:
            value = np.asarray(functional.weighted_sum(weights, sigma1, sigma2, cond), dtype=float)
            totals[functional.name] = totals[functional.name] + value if functional.name in totals else value

    normalizer = float(totals.pop(NORMALIZER.name))
    return MomentAccumulator(normalizer=normalizer, raw_moments=totals, log_scale=0.0)


def batch_means_mcse(values: np.ndarray) -> np.ndarray:
    """
    Monte Carlo standard error by batch means with floor(sqrt(N)) batches.

    Works column-wise on 2-D input.
    """
    values = np.asarray(values, dtype=float)
    count = values.shape[0]
    batches = int(np.sqrt(count))
    if batches < 2:
        return np.full(values.shape[1:], np.nan)
    size = count // batches
    means = values[:batches * size].reshape((batches, size) + values.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(batches)


@dataclass(frozen=True)
class ChainMoments:
    """Plain Monte Carlo means of a chain with their batch-means MCSE."""
    mean_sigma1: float
    mean_sigma2: float
    mcse_sigma1: float
    mcse_sigma2: float
    mean_beta: Optional[np.ndarray] = None
    mcse_beta: Optional[np.ndarray] = None


def chain_summary(chain: Chain, beta_draws: Optional[np.ndarray] = None) -> ChainMoments:
    """Means and MCSEs of sigma1, sigma2 and (when given) beta draws."""
    beta_draws = chain.beta_draws if beta_draws is None else beta_draws
    return ChainMoments(
        mean_sigma1=float(chain.sigma1_draws.mean()),
        mean_sigma2=float(chain.sigma2_draws.mean()),
        mcse_sigma1=float(batch_means_mcse(chain.sigma1_draws)),
        mcse_sigma2=float(batch_means_mcse(chain.sigma2_draws)),
        mean_beta=None if beta_draws is None else beta_draws.mean(axis=0),
        mcse_beta=None if beta_draws is None else batch_means_mcse(beta_draws),
    )
