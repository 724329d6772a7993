"""
nnpost inference package

SVD precomputation, the marginal density of (sigma1, sigma2), quadrature
and Metropolis estimators of posterior moments, and the brute-force oracle.
"""

from .svd_basis import SvdBasis, factorize, to_z, from_z
from .marginal import ConditionalGaussian, MarginalModel
from .quadrature import GridSpec, Functional, MomentAccumulator, find_mode, auto_bounds, integrate
from .moments import CovMode, moment_functionals, posterior_summary
from .sampler import SamplerConfig, Chain, run_chain, draw_beta, accumulate_chain, chain_summary

__all__ = [
    'SvdBasis', 'factorize', 'to_z', 'from_z',
    'ConditionalGaussian', 'MarginalModel',
    'GridSpec', 'Functional', 'MomentAccumulator', 'find_mode', 'auto_bounds', 'integrate',
    'CovMode', 'moment_functionals', 'posterior_summary',
    'SamplerConfig', 'Chain', 'run_chain', 'draw_beta', 'accumulate_chain', 'chain_summary',
]
