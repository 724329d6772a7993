"""
Writers for matrices, posterior summaries and chains.

CSV numbers use %.17g and JSON floats use Python's shortest round-trip
repr, so every double read back is bit-identical to the one written.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, TextIO, Union

import numpy as np
import pandas as pd

from model.types import PosteriorSummary
from utils.logger import get_logger

logger = get_logger("writers")

SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"


def write_matrix_csv(path: Union[str, Path], values: np.ndarray) -> Path:
    """Write a vector (one value per line) or a matrix (one row per line)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values, dtype=float)
    np.savetxt(path, values.reshape(-1, 1) if values.ndim == 1 else values,
               fmt=FLOAT_FORMAT, delimiter=',')
    return path


def summary_document(summary: PosteriorSummary, metadata: Dict[str, Any]) -> Dict[str, Any]:
    """The versioned JSON document for one fit."""
    return {
        'schema_version': SCHEMA_VERSION,
        'summary': summary.to_dict(),
        'metadata': metadata,
    }


def write_summary_json(summary: PosteriorSummary, metadata: Dict[str, Any],
                       path: Optional[Union[str, Path]] = None,
                       stream: Optional[TextIO] = None) -> Dict[str, Any]:
    """
    Serialize a summary and its metadata.

    Args:
        summary: Posterior moments
        metadata: n, k, gamma, cov_mode, grid and timings
        path: Output file; when None the document goes to stream
        stream: Text stream used when path is None

    Returns:
        The document that was written
    """
    document = summary_document(summary, metadata)
    text = json.dumps(document, indent=2, allow_nan=False)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding='utf-8')
        logger.info(f"Summary written to {path}")
    elif stream is not None:
        stream.write(text + "\n")
    return document


def read_summary_json(path: Union[str, Path]) -> PosteriorSummary:
    """Load the summary part of a document written by write_summary_json."""
    document = json.loads(Path(path).read_text(encoding='utf-8'))
    values = document['summary']
    return PosteriorSummary(
        mean_sigma1=values['mean_sigma1'],
        mean_sigma2=values['mean_sigma2'],
        var_sigma1=values['var_sigma1'],
        var_sigma2=values['var_sigma2'],
        mean_beta=np.array(values['mean_beta'], dtype=float),
        cov_beta=np.array(values['cov_beta'], dtype=float),
    )


def write_chain_csv(path: Union[str, Path], sigma1: np.ndarray, sigma2: np.ndarray,
                    beta_draws: np.ndarray) -> Path:
    """One row per draw: sigma1, sigma2, beta_1..beta_k."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({'sigma1': sigma1, 'sigma2': sigma2})
    for i in range(beta_draws.shape[1]):
        frame[f'beta_{i + 1}'] = beta_draws[:, i]
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Chain of {len(frame)} draws written to {path}")
    return path
