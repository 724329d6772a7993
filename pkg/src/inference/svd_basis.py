"""
SVD precomputation for the marginal model.

factorize() computes X = U D V^t once per dataset and keeps what the
marginal density needs: the full k x k right factor V, the singular values
(zero-padded to length k when n < k), w = V^t X^t y, y^t y and the least
squares residual ||y - X b||^2 computed directly from the data.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from model.types import RegressionData, validate
from utils.error_handler import DimensionError, SvdConvergenceError
from utils.logger import get_logger

logger = get_logger("svd")

_DRIVERS = ('gesdd', 'gesvd')


@dataclass(frozen=True)
class SvdBasis:
    """Right singular basis of X with the derived vector w and scalars y^t y and rss."""
    V: np.ndarray
    lam: np.ndarray
    w: np.ndarray
    yty: float
    rss: float
    n: int
    k: int

    @property
    def active(self) -> np.ndarray:
        """Mask of singular values above the rank tolerance."""
        if not self.lam.size or self.lam.max() == 0.0:
            return np.zeros(self.lam.shape, dtype=bool)
        tol = max(self.n, self.k) * np.finfo(float).eps * self.lam.max()
        return self.lam > tol

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.active))


def _lapack_svd(X: np.ndarray, driver: str, full_matrices: bool):
    routine, query = scipy.linalg.get_lapack_funcs((driver, driver + '_lwork'), (X,))
    work, info = query(X.shape[0], X.shape[1], compute_uv=1, full_matrices=int(full_matrices))
    if info != 0:
        return None, info
    u, s, vt, info = routine(X, compute_uv=1, full_matrices=int(full_matrices), lwork=int(np.real(work)))
    return (u, s, vt), info


def _svd(X: np.ndarray, full_matrices: bool):
    """Run the LAPACK drivers in turn; the info code of each failure is kept."""
    infos = {}
    for driver in _DRIVERS:
        result, info = _lapack_svd(X, driver, full_matrices)
        if info == 0:
            return result
        if info < 0:
            reason = f"illegal value in argument {-info}"
        else:
            reason = f"{info} superdiagonals did not converge"
        logger.warning(f"SVD driver {driver} failed (info={info}): {reason}")
        infos[driver] = int(info)
    summary = ", ".join(f"{driver} info={info}" for driver, info in infos.items())
    raise SvdConvergenceError(f"SVD did not converge ({summary})", drivers=_DRIVERS, info=infos)


def factorize(data: RegressionData) -> SvdBasis:
    """
    Compute the SVD basis of the design matrix.

    The right factor is always the full k x k orthogonal matrix, so when
    n < k the null space of X is carried along with lambda_i = 0 and
    w_i = 0. Each column of V is flipped so that its largest-magnitude entry
    is positive.

    Args:
        data: Regression inputs (validated here)

    Returns:
        SvdBasis for the data

    Raises:
        SvdConvergenceError: no LAPACK driver converged
    """
    validate(data)
    X, y = data.X, data.y
    n, k = X.shape
    m = min(n, k)

    # U is never needed; only request the full square factor when V would be short.
    _, s, Vt = _svd(X, full_matrices=n < k)
    V = np.array(Vt.T, copy=True)

    lam = np.zeros(k)
    lam[:m] = s

    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    V *= signs

    w = V.T @ (X.T @ y)
    w[m:] = 0.0
    yty = float(y @ y)

    # y^t y - sum w^2 / lambda^2 loses every digit once the fit is nearly exact
    basis = SvdBasis(V=V, lam=lam, w=w, yty=yty, rss=0.0, n=n, k=k)
    active = basis.active
    residual = y - X @ (V[:, active] @ (w[active] / lam[active] ** 2))
    basis = replace(basis, rss=float(residual @ residual))

    logger.debug(f"Factorized X ({n}x{k}); largest singular value {lam.max():.6g}, rss {basis.rss:.6g}")
    return basis


def _check_length(basis: SvdBasis, vector: np.ndarray, name: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (basis.k,):
        raise DimensionError(f"{name} must have length {basis.k}, got shape {vector.shape}")
    return vector


def to_z(basis: SvdBasis, beta: np.ndarray) -> np.ndarray:
    """Rotate coefficients into the singular basis: z = V^t beta."""
    return basis.V.T @ _check_length(basis, beta, "beta")


def from_z(basis: SvdBasis, z: np.ndarray) -> np.ndarray:
    """Rotate back to coefficient space: beta = V z."""
    return basis.V @ _check_length(basis, z, "z")
