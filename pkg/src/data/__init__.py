"""
Data input and output for nnpost.
"""

from .csv_reader import read_matrix_csv, read_vector_csv, read_regression_csv
from .writers import write_matrix_csv, write_summary_json, read_summary_json, write_chain_csv

__all__ = [
    'read_matrix_csv', 'read_vector_csv', 'read_regression_csv',
    'write_matrix_csv', 'write_summary_json', 'read_summary_json', 'write_chain_csv',
]
