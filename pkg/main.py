"""
nnpost - Main CLI Interface

Posterior moments of normal-normal regression models: fit by quadrature,
sample by SVD-MCMC, generate synthetic data and benchmark.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

# BLAS thread pools read these when numpy is first imported.
_threads = os.environ.get('NNPOST_THREADS')
if _threads:
    for _var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
        os.environ.setdefault(_var, _threads)

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from data import read_regression_csv, write_chain_csv, write_matrix_csv, write_summary_json
from inference.moments import CovMode, sigma_central_moment
from model.datagen import generate_synthetic
from utils.config import AppConfig, load_config
from utils.error_handler import EXIT_OK, EXIT_UNEXPECTED, EXIT_USAGE, ConfigError, NnpostError, get_error_handler
from utils.logger import get_logger, setup_logging
from workflows.bench import ARMS, BenchmarkHarness, parse_sizes, write_report
from workflows.pipeline import PosteriorPipeline

logger = get_logger("cli")

# Flags that map one-to-one onto AppConfig fields.
_CONFIG_FLAGS = ('gamma', 'nodes', 'cov_mode', 'spacing', 'threads', 'draws', 'warmup',
                 'step_scale', 'seed', 'log_dir', 'log_level')


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the fit, sample, gen and bench subcommands."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='key=value settings file')
    common.add_argument('--threads', type=int, default=None,
                        help='Worker threads for quadrature (default: NNPOST_THREADS or all cores)')
    common.add_argument('--log-dir', type=str, default=None, help='Also write a detailed log file here')
    common.add_argument('--log-level', type=str, default=None, help='DEBUG, INFO, WARNING or ERROR')

    parser = argparse.ArgumentParser(
        description='Posterior moments of normal-normal regression models',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate a synthetic problem and fit it
  python main.py gen --n 100 --k 10 --seed 3 --out-dir data
  python main.py fit --x data/X.csv --y data/y.csv --out summary.json

  # Metropolis chain on the marginal density
  python main.py sample --x data/X.csv --y data/y.csv --draws 10000 --out chain.csv

  # Accuracy and timing table
  python main.py bench --sizes 50x5,100x10,500x20 --arm both --out bench.csv
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # Fit command
    fit_parser = subparsers.add_parser('fit', parents=[common], help='Posterior moments by quadrature')
    fit_parser.add_argument('--x', type=str, required=True, help='Design matrix CSV (n rows x k columns)')
    fit_parser.add_argument('--y', type=str, required=True, help='Response CSV (single column)')
    fit_parser.add_argument('--transpose', action='store_true', help='X is stored as k rows x n columns')
    fit_parser.add_argument('--gamma', type=float, default=None, help='Prior strength on log sigma1 (default: 8)')
    fit_parser.add_argument('--nodes', type=int, default=None, help='Grid nodes per axis (default: 200)')
    fit_parser.add_argument('--cov-mode', choices=['exact', 'paper', 'diag'], default=None,
                            help='Covariance assembly (default: exact)')
    fit_parser.add_argument('--spacing', choices=['linear', 'log'], default=None,
                            help='Grid node placement (default: log)')
    fit_parser.add_argument('--higher-moments', action='store_true',
                            help='Also report third and fourth central moments of sigma1 and sigma2')
    fit_parser.add_argument('--out', type=str, default=None, help='Summary JSON path (default: stdout)')

    # Sample command
    sample_parser = subparsers.add_parser('sample', parents=[common], help='SVD-MCMC chain')
    sample_parser.add_argument('--x', type=str, required=True, help='Design matrix CSV')
    sample_parser.add_argument('--y', type=str, required=True, help='Response CSV')
    sample_parser.add_argument('--transpose', action='store_true', help='X is stored as k rows x n columns')
    sample_parser.add_argument('--gamma', type=float, default=None, help='Prior strength on log sigma1 (default: 8)')
    sample_parser.add_argument('--draws', type=int, default=None, help='Retained draws (default: 10000)')
    sample_parser.add_argument('--warmup', type=int, default=None, help='Warmup iterations (default: 1000)')
    sample_parser.add_argument('--step-scale', type=float, default=None, help='Initial proposal scale (default: 0.3)')
    sample_parser.add_argument('--seed', type=int, default=None, help='Random seed (default: 0)')
    sample_parser.add_argument('--out', type=str, default=None, help='Chain CSV path')

    # Gen command
    gen_parser = subparsers.add_parser('gen', parents=[common], help='Write a synthetic problem')
    gen_parser.add_argument('--n', type=int, required=True, help='Observations')
    gen_parser.add_argument('--k', type=int, required=True, help='Predictors')
    gen_parser.add_argument('--seed', type=int, default=None, help='Random seed (default: 0)')
    gen_parser.add_argument('--out-dir', type=str, required=True, help='Directory for X.csv, y.csv, beta_true.csv')

    # Bench command
    bench_parser = subparsers.add_parser('bench', parents=[common], help='Accuracy and timing benchmark')
    bench_parser.add_argument('--sizes', type=str, required=True, help='Comma-separated NxK list, e.g. 50x5,100x10')
    bench_parser.add_argument('--arm', choices=ARMS, default='trap', help='Methods to run (default: trap)')
    bench_parser.add_argument('--nodes', type=int, default=None, help='Grid nodes per axis (default: 200)')
    bench_parser.add_argument('--seed', type=int, default=None, help='Data and chain seed (default: 0)')
    bench_parser.add_argument('--draws', type=int, default=None, help='Retained draws for svd-mcmc')
    bench_parser.add_argument('--warmup', type=int, default=None, help='Warmup iterations for svd-mcmc')
    bench_parser.add_argument('--out', type=str, default=None, help='Benchmark CSV path')

    return parser


def resolve_config(args) -> AppConfig:
    """Merge the config file, environment and flags."""
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
    return load_config(config_file=args.config, overrides=overrides)


def main(argv=None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    try:
        config = resolve_config(args)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    level = getattr(logging, config.log_level)
    setup_logging(log_dir=config.log_dir, log_level=level, console_level=level)

    handlers = {
        'fit': handle_fit,
        'sample': handle_sample,
        'gen': handle_gen,
        'bench': handle_bench,
    }

    error_handler = get_error_handler()
    try:
        return handlers[args.command](args, config)
    except (NnpostError, OSError, MemoryError) as e:
        error_handler.handle_error(e, context={'command': args.command})
        return error_handler.exit_code_for(e)
    except Exception as e:
        error_handler.handle_error(e, context={'command': args.command})
        return EXIT_UNEXPECTED


def handle_fit(args, config: AppConfig) -> int:
    """Handle the fit command."""
    data = read_regression_csv(args.x, args.y, transpose=args.transpose)
    pipeline = PosteriorPipeline(
        config.hyperparams(), config.cov_mode, config.threads,
        sigma_powers=4 if args.higher_moments else 2, spacing=config.spacing,
    )
    result = pipeline.fit(data)

    metadata = result.metadata()
    if result.cov_mode is CovMode.EXACT:
        metadata['paper_cov_deviation'] = result.paper_deviation()
    if args.higher_moments:
        metadata['central_moments'] = {
            f'sigma{which}': {
                f'order_{order}': sigma_central_moment(result.accumulator, which, order) for order in (3, 4)
            }
            for which in (1, 2)
        }

    write_summary_json(result.summary, metadata, path=args.out, stream=sys.stdout)
    return EXIT_OK


def handle_sample(args, config: AppConfig) -> int:
    """Handle the sample command."""
    data = read_regression_csv(args.x, args.y, transpose=args.transpose)
    pipeline = PosteriorPipeline(config.hyperparams(), config.cov_mode, config.threads)
    result = pipeline.sample(data, config.sampler_config())

    if args.out:
        write_chain_csv(args.out, result.chain.sigma1_draws, result.chain.sigma2_draws, result.beta_draws)

    moments = result.mcse
    print(f"acceptance rate: {result.chain.acceptance_rate:.3f}  (step scale {result.chain.step_scale:.4g})")
    print(f"{'parameter':<12}{'mean':>22}{'mcse':>14}")
    print(f"{'sigma1':<12}{moments.mean_sigma1:>22.15g}{moments.mcse_sigma1:>14.3g}")
    print(f"{'sigma2':<12}{moments.mean_sigma2:>22.15g}{moments.mcse_sigma2:>14.3g}")
    for i, (mean, mcse) in enumerate(zip(moments.mean_beta, moments.mcse_beta), start=1):
        print(f"{f'beta_{i}':<12}{mean:>22.15g}{mcse:>14.3g}")
    return EXIT_OK


def handle_gen(args, config: AppConfig) -> int:
    """Handle the gen command."""
    data, beta_true = generate_synthetic(args.n, args.k, config.seed)
    out_dir = Path(args.out_dir)
    write_matrix_csv(out_dir / 'X.csv', data.X)
    write_matrix_csv(out_dir / 'y.csv', data.y)
    write_matrix_csv(out_dir / 'beta_true.csv', beta_true)
    logger.info(f"Wrote synthetic problem n={args.n}, k={args.k}, seed={config.seed} to {out_dir}")
    return EXIT_OK


def handle_bench(args, config: AppConfig) -> int:
    """Handle the bench command."""
    sizes = parse_sizes(args.sizes)
    harness = BenchmarkHarness(
        hyper=config.hyperparams(),
        arm=args.arm,
        seed=config.seed,
        threads=config.threads,
        sampler_config=config.sampler_config(),
        memory_limit_gb=config.memory_limit_gb,
    )
    rows = harness.run(sizes)
    print(write_report(rows, args.arm, path=args.out))
    failed = [r for r in rows if r.status.startswith("failed")]
    return EXIT_UNEXPECTED if failed else EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
