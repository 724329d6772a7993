"""
Benchmark harness - accuracy and timing across problem sizes

For every (n, k) a synthetic problem is generated and fitted with the
working node count; the same rectangle is then integrated with the
reference node count, and max_error is the largest absolute deviation of
E[sigma1], E[sigma2] and E[beta_i] between the two. The SVD-MCMC arm adds
its own timing and its deviation from the same reference.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from inference.moments import CovMode
from inference.sampler import SamplerConfig
from model.datagen import generate_synthetic
from model.types import Hyperparams
from utils.error_handler import DataValidationError, get_error_handler
from utils.logger import get_logger
from workflows.pipeline import PosteriorPipeline

logger = get_logger("bench")

ARMS = ("trap", "svd-mcmc", "both")
REFERENCE_NODES = 500
BYTES_PER_ENTRY = 8 * 3


@dataclass
class BenchRow:
    """One line of the benchmark table."""
    n: int
    k: int
    nodes: int
    max_error: Optional[float] = None
    precompute_s: Optional[float] = None
    integrate_s: Optional[float] = None
    total_s: Optional[float] = None
    mcmc_s: Optional[float] = None
    mcmc_error: Optional[float] = None
    status: str = "ok"


def parse_sizes(text: str) -> List[Tuple[int, int]]:
    """
    Parse "50x5,100x10" into [(50, 5), (100, 10)].

    Raises:
        DataValidationError: an entry is not NxK with positive integers
    """
    sizes = []
    for item in text.split(','):
        item = item.strip().lower()
        if not item:
            continue
        parts = item.split('x')
        try:
            n, k = (int(p) for p in parts)
        except ValueError:
            raise DataValidationError(f"size {item!r} is not of the form NxK")
        if n < 1 or k < 1:
            raise DataValidationError(f"size {item!r} must have positive n and k")
        sizes.append((n, k))
    if not sizes:
        raise DataValidationError("no sizes given")
    return sizes


def fitted_exponents(rows: Sequence[BenchRow]) -> Optional[Dict[str, float]]:
    """
    Least-squares exponents a, b in total_s ~ C n^a k^b.

    Returns None unless at least three rows with distinct sizes ran and
    the sizes vary in both n and k.
    """
    usable = {(r.n, r.k): r.total_s for r in rows if r.status == "ok" and r.total_s and r.total_s > 0}
    if len(usable) < 3:
        return None
    sizes = np.array(list(usable.keys()), dtype=float)
    design = np.column_stack([np.ones(len(sizes)), np.log(sizes[:, 0]), np.log(sizes[:, 1])])
    if np.linalg.matrix_rank(design) < 3:
        return None
    coef, *_ = np.linalg.lstsq(design, np.log(list(usable.values())), rcond=None)
    return {'n': float(coef[1]), 'k': float(coef[2])}


class BenchmarkHarness:
    """
    Runs the accuracy and timing benchmark.

    A size that fails is logged through the error handler and recorded as
    a failed row; the remaining sizes still run.
    """

    def __init__(
        self,
        hyper: Optional[Hyperparams] = None,
        arm: str = "trap",
        seed: int = 0,
        threads: Optional[int] = None,
        reference_nodes: int = REFERENCE_NODES,
        sampler_config: Optional[SamplerConfig] = None,
        memory_limit_gb: float = 8.0
    ):
        if arm not in ARMS:
            raise DataValidationError(f"arm must be one of {', '.join(ARMS)}, got {arm!r}")
        self.hyper = hyper or Hyperparams()
        self.arm = arm
        self.seed = seed
        self.reference_nodes = reference_nodes
        self.sampler_config = sampler_config or SamplerConfig(seed=seed)
        self.memory_limit_gb = memory_limit_gb
        self.pipeline = PosteriorPipeline(self.hyper, CovMode.EXACT, threads)
        self.error_handler = get_error_handler()

    def run_size(self, n: int, k: int) -> BenchRow:
        """Benchmark one problem size."""
        row = BenchRow(n=n, k=k, nodes=self.hyper.grid_nodes)
        needed_gb = n * k * BYTES_PER_ENTRY / 1e9
        if needed_gb > self.memory_limit_gb:
            logger.warning(
                f"Skipping {n}x{k}: needs about {needed_gb:.1f} GB, over the {self.memory_limit_gb:g} GB limit. "
                f"Reduce n*k or raise memory_limit_gb."
            )
            row.status = "skipped"
            return row

        data, _ = generate_synthetic(n, k, self.seed)
        fit = self.pipeline.fit(data)
        if self.reference_nodes == fit.grid.nodes_per_axis:
            reference = fit
        else:
            reference = self.pipeline.fit(data, grid=fit.grid.with_nodes(self.reference_nodes))

        if self.arm in ("trap", "both"):
            row.max_error = fit.summary.max_abs_error(reference.summary)
            row.precompute_s = round(fit.timings.precompute, 3)
            row.integrate_s = round(fit.timings.integrate, 3)
            row.total_s = round(fit.timings.total, 3)

        if self.arm in ("svd-mcmc", "both"):
            sample = self.pipeline.sample(data, self.sampler_config)
            row.mcmc_s = round(sample.timings.total, 3)
            row.mcmc_error = sample.summary.max_abs_error(reference.summary)
            if row.total_s is None:
                row.precompute_s = round(sample.timings.precompute, 3)

        logger.info(f"Benchmarked {n}x{k}: max_error={row.max_error}, total={row.total_s}s, mcmc={row.mcmc_s}s")
        return row

    def run(self, sizes: Sequence[Tuple[int, int]]) -> List[BenchRow]:
        """
        Benchmark every size in order.

        Returns:
            One BenchRow per size, failed sizes included
        """
        self.error_handler.reset_error_counts()
        rows = []
        for n, k in sizes:
            def record_failure(error, context, n=n, k=k):
                if isinstance(error, MemoryError):
                    self.error_handler.recovery_strategies[MemoryError](error, context)
                return BenchRow(n=n, k=k, nodes=self.hyper.grid_nodes, status=f"failed: {type(error).__name__}")

            try:
                rows.append(self.run_size(n, k))
            except Exception as e:
                rows.append(self.error_handler.handle_error(
                    e, context={'size': f"{n}x{k}", 'arm': self.arm}, recovery_strategy=record_failure
                ))

        stats = self.error_handler.get_error_stats()
        if stats['error_counts']:
            failed = sum(stats['error_counts'].values())
            logger.warning(f"{failed} of {len(rows)} size(s) failed; most common: {stats['most_common_error'][0]}")
        return rows


def to_frame(rows: Sequence[BenchRow], arm: str = "both") -> pd.DataFrame:
    """Benchmark rows as a table; the MCMC columns appear only when that arm ran."""
    frame = pd.DataFrame([asdict(r) for r in rows])
    if arm == "trap":
        frame = frame.drop(columns=['mcmc_s', 'mcmc_error'])
    return frame


def write_report(rows: Sequence[BenchRow], arm: str, path: Optional[Union[str, Path]] = None) -> str:
    """
    Write the CSV (when path is given) and return the human-readable table.

    The table ends with the fitted time exponents when enough sizes ran.
    """
    frame = to_frame(rows, arm)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        logger.info(f"Benchmark table written to {path}")

    text = frame.to_string(index=False, na_rep='-')
    exponents = fitted_exponents(rows)
    if exponents is not None:
        text += f"\n\nFitted total time ~ n^{exponents['n']:.2f} k^{exponents['k']:.2f}"
    return text
