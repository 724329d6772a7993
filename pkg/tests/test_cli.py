"""
End-to-end tests for the command-line interface.

Commands run in-process through main(argv) and exchange files in tmp_path.
"""

import json
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add src and the repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from main import main
from data import read_matrix_csv, read_regression_csv, read_summary_json
from inference.moments import CovMode
from utils.error_handler import EXIT_INPUT, EXIT_OK, EXIT_USAGE, CsvParseError
from workflows.pipeline import PosteriorPipeline


def generate(out_dir, n=100, k=10, seed=3):
    assert main(['gen', '--n', str(n), '--k', str(k), '--seed', str(seed), '--out-dir', str(out_dir)]) == EXIT_OK
    return out_dir / 'X.csv', out_dir / 'y.csv'


def fit(x_path, y_path, out_path, *extra):
    code = main(['fit', '--x', str(x_path), '--y', str(y_path), '--out', str(out_path), *extra])
    return code, (json.loads(out_path.read_text()) if code == EXIT_OK else None)


class TestGenAndFit:

    def test_recovers_true_coefficients(self, tmp_path):
        x_path, y_path = generate(tmp_path)
        code, document = fit(x_path, y_path, tmp_path / 'summary.json')
        assert code == EXIT_OK

        assert document['schema_version'] == "1.0"
        metadata = document['metadata']
        assert (metadata['n'], metadata['k'], metadata['gamma'], metadata['cov_mode']) == (100, 10, 8.0, 'exact')
        assert metadata['grid']['nodes_per_axis'] == 200
        assert set(metadata['timings']) == {'precompute', 'integrate', 'total'}
        assert metadata['paper_cov_deviation'] > 0.0

        beta_true = read_matrix_csv(tmp_path / 'beta_true.csv')[:, 0]
        mean_beta = np.array(document['summary']['mean_beta'])
        assert np.corrcoef(mean_beta, beta_true)[0, 1] > 0.5

        cov = np.array(document['summary']['cov_beta'])
        assert cov.shape == (10, 10)
        np.testing.assert_array_equal(cov, cov.T)

    def test_file_round_trip_matches_in_memory_fit(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=60, k=4, seed=11)
        code, _ = fit(x_path, y_path, tmp_path / 'summary.json')
        assert code == EXIT_OK

        from_file = read_summary_json(tmp_path / 'summary.json')
        in_memory = PosteriorPipeline().fit(read_regression_csv(x_path, y_path)).summary
        assert from_file.max_abs_error(in_memory) <= 1e-15
        np.testing.assert_allclose(from_file.cov_beta, in_memory.cov_beta, rtol=0, atol=1e-15)

    def test_gen_is_reproducible(self, tmp_path):
        generate(tmp_path / 'a', n=20, k=3, seed=7)
        generate(tmp_path / 'b', n=20, k=3, seed=7)
        for name in ('X.csv', 'y.csv', 'beta_true.csv'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_cov_modes_share_means(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=40, k=5, seed=2)
        _, exact = fit(x_path, y_path, tmp_path / 'exact.json')
        _, paper = fit(x_path, y_path, tmp_path / 'paper.json', '--cov-mode', CovMode.PAPER.value)
        assert paper['metadata']['cov_mode'] == 'paper'
        assert 'paper_cov_deviation' not in paper['metadata']
        assert exact['metadata']['paper_cov_deviation'] > 0.0
        np.testing.assert_allclose(paper['summary']['mean_beta'], exact['summary']['mean_beta'], rtol=0, atol=1e-12)
        assert not np.allclose(paper['summary']['cov_beta'], exact['summary']['cov_beta'], rtol=1e-6, atol=0)

    def test_transposed_input(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=30, k=3, seed=4)
        X = read_matrix_csv(x_path)
        transposed = tmp_path / 'Xt.csv'
        pd.DataFrame(X.T).to_csv(transposed, header=[f'obs{i}' for i in range(30)], index=False,
                                 float_format='%.17g')
        _, plain = fit(x_path, y_path, tmp_path / 'plain.json')
        _, flipped = fit(transposed, y_path, tmp_path / 'flipped.json', '--transpose')
        np.testing.assert_allclose(flipped['summary']['mean_beta'], plain['summary']['mean_beta'], rtol=0, atol=1e-12)

    def test_higher_moments(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=30, k=2, seed=8)
        _, document = fit(x_path, y_path, tmp_path / 'summary.json', '--higher-moments')
        fourth = document['metadata']['central_moments']['sigma2']['order_4']
        variance = document['summary']['var_sigma2']
        assert fourth > 0
        # Kurtosis is at least 1 for any distribution.
        assert fourth / variance ** 2 > 1.0


class TestInputErrors:

    def test_gen_rejects_empty_problem(self, tmp_path):
        assert main(['gen', '--n', '0', '--k', '3', '--out-dir', str(tmp_path)]) == EXIT_INPUT

    def test_malformed_row(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=10, k=2)
        lines = x_path.read_text().splitlines()
        lines[2] = 'abc,1.0'
        x_path.write_text('\n'.join(lines) + '\n')

        code, _ = fit(x_path, y_path, tmp_path / 'summary.json')
        assert code == EXIT_INPUT
        assert not (tmp_path / 'summary.json').exists()
        with pytest.raises(CsvParseError) as excinfo:
            read_matrix_csv(x_path)
        assert excinfo.value.row == 3

    def test_undecodable_input(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=10, k=2)
        x_path.write_bytes(x_path.read_bytes().replace(b"\n", b"\n\xfe", 1))
        code, _ = fit(x_path, y_path, tmp_path / 'summary.json')
        assert code == EXIT_INPUT

    def test_length_mismatch(self, tmp_path):
        x_path, _ = generate(tmp_path, n=10, k=2)
        y_path = tmp_path / 'short.csv'
        y_path.write_text('1\n2\n3\n')
        code, _ = fit(x_path, y_path, tmp_path / 'summary.json')
        assert code == EXIT_INPUT

    def test_no_command(self, capsys):
        assert main([]) == EXIT_USAGE

    def test_bad_config_file(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=10, k=2)
        config_file = tmp_path / 'nnpost.cfg'
        config_file.write_text('nodes=zero\n')
        code = main(['fit', '--x', str(x_path), '--y', str(y_path), '--config', str(config_file)])
        assert code == EXIT_USAGE


class TestConfigFile:

    def test_file_sets_defaults_flags_win(self, tmp_path):
        x_path, y_path = generate(tmp_path, n=30, k=2, seed=5)
        config_file = tmp_path / 'nnpost.cfg'
        config_file.write_text('nodes=120\ncov_mode=diag\n')

        _, document = fit(x_path, y_path, tmp_path / 'a.json', '--config', str(config_file))
        assert document['metadata']['grid']['nodes_per_axis'] == 120
        assert document['metadata']['cov_mode'] == 'diag'

        _, document = fit(x_path, y_path, tmp_path / 'b.json', '--config', str(config_file), '--nodes', '150')
        assert document['metadata']['grid']['nodes_per_axis'] == 150


class TestSample:

    def test_writes_chain(self, tmp_path, capsys):
        x_path, y_path = generate(tmp_path, n=30, k=2, seed=6)
        out = tmp_path / 'chain.csv'
        code = main(['sample', '--x', str(x_path), '--y', str(y_path), '--draws', '400', '--warmup', '200',
                     '--seed', '1', '--out', str(out)])
        assert code == EXIT_OK

        frame = pd.read_csv(out)
        assert list(frame.columns) == ['sigma1', 'sigma2', 'beta_1', 'beta_2']
        assert len(frame) == 400
        assert (frame[['sigma1', 'sigma2']] > 0).all().all()
        assert 'acceptance rate' in capsys.readouterr().out


class TestBench:

    def test_both_arms(self, tmp_path, capsys):
        out = tmp_path / 'bench.csv'
        code = main(['bench', '--sizes', '30x2,40x3', '--arm', 'both', '--draws', '300', '--warmup', '100',
                     '--out', str(out)])
        assert code == EXIT_OK

        frame = pd.read_csv(out)
        assert list(frame[['n', 'k']].itertuples(index=False, name=None)) == [(30, 2), (40, 3)]
        assert {'max_error', 'total_s', 'mcmc_s', 'mcmc_error'} <= set(frame.columns)
        assert (frame['status'] == 'ok').all()
        assert (frame['max_error'] < 1e-6).all()

    def test_trap_arm_omits_mcmc_columns(self, tmp_path, capsys):
        out = tmp_path / 'bench.csv'
        assert main(['bench', '--sizes', '20x2', '--out', str(out)]) == EXIT_OK
        assert 'mcmc_s' not in pd.read_csv(out).columns

    def test_bad_sizes(self, capsys):
        assert main(['bench', '--sizes', '30by2']) == EXIT_INPUT
