"""
Two-dimensional trapezoid quadrature of q~ over (sigma1, sigma2).

auto_bounds() finds the mode of log q~ and grows a rectangle around it until
the density on every edge has dropped by tail_drop log units. integrate()
then sweeps the grid once, evaluating log q~ and the conditional law of z
row by row, and accumulates every requested functional against the same
weights. Each row is rescaled by its own maximum and rows are combined in
order, so large log-densities never overflow and results do not depend on
how the rows were scheduled.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import minimize_scalar

from inference.marginal import ConditionalGaussian, MarginalModel
from model.types import Hyperparams
from utils.error_handler import BoundsSearchError, DataValidationError, DegenerateGridError, MissingFunctionalError
from utils.logger import get_logger

logger = get_logger("quadrature")

SCAN_RANGE = (1e-3, 1e3)
SCAN_NODES = 64
MODE_LIMITS = (1e-6, 1e6)
EXPANSION_FACTOR = 1.5
MAX_EXPANSION_STEPS = 80
EDGE_SAMPLES = 129


class GridSpec(BaseModel):
    """Integration rectangle in (sigma1, sigma2) and the node count per axis."""
    model_config = ConfigDict(frozen=True)

    sigma1_range: Tuple[float, float]
    sigma2_range: Tuple[float, float]
    nodes_per_axis: int = Field(default=200, ge=2)
    spacing: Literal["linear", "log"] = "linear"

    @model_validator(mode='after')
    def _check_ranges(self):
        for name in ('sigma1_range', 'sigma2_range'):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi and np.isfinite(hi)):
                raise ValueError(f"{name} must satisfy 0 < lo < hi, got ({lo}, {hi})")
        return self

    def axis(self, which: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Nodes and trapezoid weights along one axis.

        Args:
            which: 1 for sigma1, 2 for sigma2

        Returns:
            Tuple of (nodes, weights)
        """
        lo, hi = self.sigma1_range if which == 1 else self.sigma2_range
        count = self.nodes_per_axis
        if self.spacing == "linear":
            nodes = np.linspace(lo, hi, count)
            step = (hi - lo) / (count - 1)
        else:
            u = np.linspace(np.log(lo), np.log(hi), count)
            nodes = np.exp(u)
            step = (u[-1] - u[0]) / (count - 1)
        weights = np.full(count, step)
        weights[0] = weights[-1] = 0.5 * step
        if self.spacing == "log":
            weights = weights * nodes
        return nodes, weights

    def with_nodes(self, nodes_per_axis: int) -> "GridSpec":
        return self.model_copy(update={'nodes_per_axis': nodes_per_axis})

    def to_dict(self) -> Dict:
        return {
            'sigma1_range': [float(v) for v in self.sigma1_range],
            'sigma2_range': [float(v) for v in self.sigma2_range],
            'nodes_per_axis': self.nodes_per_axis,
            'spacing': self.spacing,
        }


class Functional:
    """
    A named quantity f(sigma1, sigma2, z-law) to integrate against q~.

    __call__ receives one grid row: sigma1 and sigma2 of shape (P,) and a
    ConditionalGaussian whose arrays have shape (P, k). It returns per-point
    values with leading axis P. weighted_sum may be overridden when the
    weighted reduction has a cheaper form than materializing every value.
    """

    def __init__(self, name: str, fn: Optional[Callable] = None):
        self.name = name
        self._fn = fn

    def __call__(self, sigma1: np.ndarray, sigma2: np.ndarray, cond: ConditionalGaussian) -> np.ndarray:
        if self._fn is None:
            raise NotImplementedError(f"functional {self.name!r} has no evaluator")
        return np.asarray(self._fn(sigma1, sigma2, cond), dtype=float)

    def weighted_sum(self, weights: np.ndarray, sigma1: np.ndarray, sigma2: np.ndarray,
                     cond: ConditionalGaussian) -> np.ndarray:
        return np.tensordot(weights, self(sigma1, sigma2, cond), axes=(0, 0))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class ConstantFunctional(Functional):
    """f = 1; its integral is the normalizer."""

    def __init__(self, name: str = "one"):
        super().__init__(name)

    def __call__(self, sigma1, sigma2, cond):
        return np.ones_like(sigma1)


NORMALIZER = ConstantFunctional("__normalizer__")


@dataclass(frozen=True)
class MomentAccumulator:
    """
    Trapezoid sums of each functional times q~, all on one scale.

    Every entry, the normalizer included, is divided by exp(log_scale), the
    largest log q~ on the grid. Ratios raw_moments[name] / normalizer are the
    expectations.
    """
    normalizer: float
    raw_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    log_scale: float = 0.0

    def expectation(self, name: str) -> np.ndarray:
        """E[f] for the functional called name."""
        if name not in self.raw_moments:
            raise MissingFunctionalError(f"functional {name!r} was not integrated")
        return self.raw_moments[name] / self.normalizer

    def __contains__(self, name: str) -> bool:
        return name in self.raw_moments


def find_mode(model: MarginalModel, scan_range: Tuple[float, float] = SCAN_RANGE,
              scan_nodes: int = SCAN_NODES) -> Tuple[float, float, float]:
    """
    Locate the maximum of log q~.

    A log-spaced scan_nodes x scan_nodes scan over scan_range^2 picks a
    starting cell, then bounded golden-section/Brent line searches in
    (log sigma1, log sigma2) refine each coordinate in turn.

    Returns:
        Tuple (sigma1, sigma2, log_qtilde) at the mode

    Raises:
        BoundsSearchError: the maximum is not inside MODE_LIMITS^2
    """
    u_scan = np.linspace(np.log(scan_range[0]), np.log(scan_range[1]), scan_nodes)
    du = u_scan[1] - u_scan[0]
    s_scan = np.exp(u_scan)
    values = model.log_qtilde(s_scan[:, None], s_scan[None, :])
    values = np.where(np.isfinite(values), values, -np.inf)
    if not np.isfinite(values).any():
        raise BoundsSearchError("log q~ is not finite anywhere on the mode scan")
    i, j = np.unravel_index(np.argmax(values), values.shape)
    u = np.array([u_scan[i], u_scan[j]])

    # A maximum on the scan edge may lie further out; let the line search reach the hard limits.
    limits = np.log(MODE_LIMITS)
    search = []
    for index in (i, j):
        lo = limits[0] if index == 0 else u_scan[index] - du
        hi = limits[1] if index == scan_nodes - 1 else u_scan[index] + du
        search.append([lo, hi])

    def negative(u_pair):
        value = model.log_qtilde(np.exp(u_pair[0]), np.exp(u_pair[1]))
        return -value if np.isfinite(value) else np.inf

    best = -negative(u)
    for sweep in range(6):
        previous = u.copy()
        for axis in (0, 1):
            def line(t, axis=axis):
                trial = u.copy()
                trial[axis] = t
                return negative(trial)
            lo, hi = search[axis]
            result = minimize_scalar(line, bounds=(lo, hi), method='bounded',
                                     options={'xatol': 1e-10})
            if -result.fun >= best:
                u[axis] = result.x
                best = -result.fun
            # Re-centre the bracket so the next sweep can follow a tilted ridge.
            width = max(hi - lo, 2 * du) / 2
            search[axis] = [max(limits[0], u[axis] - width), min(limits[1], u[axis] + width)]
        if np.max(np.abs(u - previous)) < 1e-9:
            break

    edge = 1e-3
    if np.any(u <= limits[0] + edge) or np.any(u >= limits[1] - edge) or not np.isfinite(best):
        raise BoundsSearchError(
            "mode of log q~ could not be localized inside "
            f"[{MODE_LIMITS[0]:g}, {MODE_LIMITS[1]:g}]^2; supply a manual GridSpec",
            mode=(float(np.exp(u[0])), float(np.exp(u[1]))),
        )

    sigma1, sigma2 = np.exp(u)
    logger.debug(f"Mode of log q~ at sigma1={sigma1:.6g}, sigma2={sigma2:.6g} (log q~={best:.6g})")
    return float(sigma1), float(sigma2), float(best)


def _edge_max(model: MarginalModel, fixed_axis: int, fixed_value: float,
              span: Tuple[float, float]) -> float:
    varying = np.geomspace(span[0], span[1], EDGE_SAMPLES)
    if fixed_axis == 1:
        values = model.log_qtilde(fixed_value, varying)
    else:
        values = model.log_qtilde(varying, fixed_value)
    values = values[np.isfinite(values)]
    return float(values.max()) if values.size else -np.inf


def auto_bounds(model: MarginalModel, hyper: Hyperparams) -> GridSpec:
    """
    Choose an integration rectangle around the mode of q~.

    Starting from [mode/1.5, mode*1.5] on each axis, every edge whose
    largest log q~ is within tail_drop of the peak is pushed out by a factor
    1.5 (lower edges divided, never below sigma_floor) until all four edges
    satisfy the tail condition.

    Args:
        model: Marginal density
        hyper: Supplies tail_drop, sigma_floor and grid_nodes

    Returns:
        GridSpec containing the mode, with grid_nodes per axis

    Raises:
        BoundsSearchError: mode search failed or the tail condition still
            fails after MAX_EXPANSION_STEPS expansions
    """
    mode1, mode2, peak = find_mode(model)
    floor = hyper.sigma_floor
    lo = [max(mode1 / EXPANSION_FACTOR, floor), max(mode2 / EXPANSION_FACTOR, floor)]
    hi = [mode1 * EXPANSION_FACTOR, mode2 * EXPANSION_FACTOR]
    clamped_warned = [False, False]

    for step in range(MAX_EXPANSION_STEPS + 1):
        edges = {
            ('lo', 0): _edge_max(model, 1, lo[0], (lo[1], hi[1])),
            ('hi', 0): _edge_max(model, 1, hi[0], (lo[1], hi[1])),
            ('lo', 1): _edge_max(model, 2, lo[1], (lo[0], hi[0])),
            ('hi', 1): _edge_max(model, 2, hi[1], (lo[0], hi[0])),
        }
        threshold = max(peak, max(edges.values())) - hyper.tail_drop
        violating = []
        for (side, axis), value in edges.items():
            if value <= threshold:
                continue
            if side == 'lo' and lo[axis] <= floor:
                if not clamped_warned[axis]:
                    logger.warning(
                        f"Lower sigma{axis + 1} edge clamped at {floor:g} while log q~ there is only "
                        f"{peak - value:.3g} below the peak"
                    )
                    clamped_warned[axis] = True
                continue
            violating.append((side, axis))

        if not violating:
            grid = GridSpec(sigma1_range=(lo[0], hi[0]), sigma2_range=(lo[1], hi[1]),
                            nodes_per_axis=hyper.grid_nodes)
            logger.info(
                f"Integration bounds sigma1 in [{lo[0]:.4g}, {hi[0]:.4g}], "
                f"sigma2 in [{lo[1]:.4g}, {hi[1]:.4g}] after {step} expansion step(s)"
            )
            return grid

        if step == MAX_EXPANSION_STEPS:
            break
        for side, axis in violating:
            if side == 'lo':
                lo[axis] = max(lo[axis] / EXPANSION_FACTOR, floor)
            else:
                hi[axis] *= EXPANSION_FACTOR
        logger.debug(f"Bounds step {step + 1}: expanded {violating}")

    raise BoundsSearchError(
        f"tail condition (drop {hyper.tail_drop:g}) not met after {MAX_EXPANSION_STEPS} expansions",
        mode=(mode1, mode2), steps=MAX_EXPANSION_STEPS,
    )


def integrate(model, grid: GridSpec, functionals: Sequence[Functional],
              threads: Optional[int] = None) -> MomentAccumulator:
    """
    Trapezoid-rule integrals of every functional against q~.

    Args:
        model: Anything with evaluate(sigma1, sigma2) -> (log density, ConditionalGaussian),
            normally a MarginalModel
        grid: Rectangle and node count
        functionals: Quantities to integrate; names must be unique
        threads: Worker threads for the row sweep (None lets the executor decide)

    Returns:
        MomentAccumulator with one raw moment per functional

    Raises:
        DegenerateGridError: the density is zero or non-finite on the whole grid
    """
    functionals = list(functionals)
    if not functionals:
        raise DataValidationError("at least one functional is required")
    names = [f.name for f in functionals]
    if len(set(names)) != len(names):
        raise DataValidationError(f"functional names must be unique, got {names}")

    sigma1_nodes, weights1 = grid.axis(1)
    sigma2_nodes, weights2 = grid.axis(2)
    count = grid.nodes_per_axis

    def sweep_row(i: int):
        sigma1_row = np.full(count, sigma1_nodes[i])
        log_q, cond = model.evaluate(sigma1_row, sigma2_nodes)
        finite = np.isfinite(log_q)
        if not finite.any():
            return -np.inf, None
        row_max = log_q[finite].max()
        weights = np.where(finite, weights1[i] * weights2 * np.exp(np.where(finite, log_q, row_max) - row_max), 0.0)
        sums = {f.name: f.weighted_sum(weights, sigma1_row, sigma2_nodes, cond) for f in functionals}
        sums[NORMALIZER.name] = NORMALIZER.weighted_sum(weights, sigma1_row, sigma2_nodes, cond)
        return row_max, sums

    if threads == 1:
        rows = [sweep_row(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            rows = list(executor.map(sweep_row, range(count)))

    log_scale = max(row_max for row_max, _ in rows)
    if not np.isfinite(log_scale):
        raise DegenerateGridError("log q~ is not finite anywhere on the integration grid")

    totals: Dict[str, np.ndarray] = {}
    for row_max, sums in rows:
        if sums is None:
            continue
        scale = np.exp(row_max - log_scale)
        for name, value in sums.items():
            contribution = scale * np.asarray(value, dtype=float)
            totals[name] = totals[name] + contribution if name in totals else contribution

    normalizer = float(totals.pop(NORMALIZER.name))
    if not (np.isfinite(normalizer) and normalizer > 0):
        raise DegenerateGridError(f"integrated density is {normalizer!r} after rescaling")

    logger.debug(f"Integrated {count}x{count} grid for {len(functionals)} functional(s)")
    return MomentAccumulator(normalizer=normalizer, raw_moments=totals, log_scale=float(log_scale))
