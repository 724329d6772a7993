"""
CSV readers for the design matrix and the response.

Files hold plain numbers separated by commas, with an optional header row.
Row numbers in error messages are 1-based line numbers of the file.
"""

import re
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from model.types import RegressionData, validate
from utils.error_handler import CsvParseError
from utils.logger import get_logger

logger = get_logger("csv")

_LINE_PATTERN = re.compile(r"line (\d+)")


def _load_cells(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=False,
                            keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise CsvParseError(str(path), "file is empty")
    except pd.errors.ParserError as e:
        match = _LINE_PATTERN.search(str(e))
        row = int(match.group(1)) if match else None
        raise CsvParseError(str(path), f"inconsistent number of fields: {e}", row=row)
    except UnicodeDecodeError as e:
        raise CsvParseError(str(path), f"not UTF-8 text ({e.reason})", row=_undecodable_line(path))

    # Blank lines come back as rows of empty strings; the index keeps the line numbers.
    blank = (frame.fillna('').apply(lambda col: col.str.strip()) == '').all(axis=1)
    return frame[~blank]


def _undecodable_line(path: Path):
    for number, line in enumerate(path.read_bytes().split(b"\n"), start=1):
        try:
            line.decode("utf-8")
        except UnicodeDecodeError:
            return number
    return None


def _to_float(cell) -> float:
    # float() rounds correctly, so %.17g text reads back bit-identical.
    try:
        return float(cell)
    except (TypeError, ValueError):
        return np.nan


def _looks_numeric(cells) -> bool:
    return pd.to_numeric(pd.Series(cells).str.strip(), errors='coerce').notna().all()


def _parse_numbers(path: Path, frame: pd.DataFrame) -> np.ndarray:
    if frame.empty:
        raise CsvParseError(str(path), "no data rows")

    first = frame.iloc[0].fillna('').tolist()
    if not _looks_numeric(first):
        logger.debug(f"{path}: treating line {frame.index[0] + 1} as a header")
        frame = frame.iloc[1:]
        if frame.empty:
            raise CsvParseError(str(path), "header but no data rows")

    numbers = frame.apply(lambda col: col.map(_to_float))
    values = numbers.to_numpy(dtype=float)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, j = bad[0]
        cell = frame.iat[i, j]
        description = "missing value" if pd.isna(cell) or str(cell).strip() == '' else f"{cell!r} is not a finite number"
        raise CsvParseError(str(path), description, row=int(frame.index[i]) + 1, column=int(j) + 1)
    return values


def read_matrix_csv(path: Union[str, Path], transpose: bool = False) -> np.ndarray:
    """
    Read a numeric matrix.

    Args:
        path: CSV file with one row per observation
        transpose: The file stores the matrix as k rows of n values

    Returns:
        2-D float array

    Raises:
        CsvParseError: empty file, ragged rows or a non-numeric cell
        FileNotFoundError: path does not exist
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    values = _parse_numbers(path, _load_cells(path))
    logger.debug(f"Read {values.shape[0]}x{values.shape[1]} matrix from {path}")
    return values.T.copy() if transpose else values


def read_vector_csv(path: Union[str, Path]) -> np.ndarray:
    """
    Read a numeric vector stored as a single column (or a single row).

    Raises:
        CsvParseError: more than one column and more than one row
    """
    values = read_matrix_csv(path)
    if values.shape[1] == 1:
        return values[:, 0]
    if values.shape[0] == 1:
        return values[0]
    raise CsvParseError(str(path), f"expected a single column, got {values.shape[1]} columns")


def read_regression_csv(x_path: Union[str, Path], y_path: Union[str, Path],
                        transpose: bool = False) -> RegressionData:
    """
    Read X and y and check them together.

    Args:
        x_path: Design matrix CSV
        y_path: Response CSV
        transpose: X is stored k x n

    Returns:
        Validated RegressionData
    """
    data = RegressionData(X=read_matrix_csv(x_path, transpose=transpose), y=read_vector_csv(y_path))
    validate(data)
    logger.info(f"Loaded data: n={data.n}, k={data.k}")
    return data

