"""
This module contains utilities for time series file validation.
"""

from pathlib import Path
from typing import List

import numpy as np

from mdm_ipa.util.exceptions import DataError

# shortest series for which the residual autocorrelation checks are meaningful
MIN_MONITOR_LENGTH = 20

# files above this size are flagged, not refused
MAX_FILE_SIZE = 100 * 1024 * 1024


def validate_file_size(file: Path, size_limit: int) -> List[str]:
    """
    Check that the file size is no larger than the expected size.

    Parameters
    ----------
    file: `Path`
        A file path.
    size_limit: `int`
        The expected maximum size of the file in bytes.

    Returns
    -------
    List of strings, each in the format "WarningType: message", describing potential validation issues. Returns an empty list if no warnings are issued.
    """
    validation_warnings = []
    actual_size = Path(file).stat().st_size
    if actual_size > size_limit:
        validation_warnings.append(
            f"FileSizeWarning: File size {actual_size} bytes exceeds expected size "
            f"of {size_limit} bytes."
        )
    return validation_warnings


def validate_constant_columns(data: np.ndarray, names: List[str]) -> List[str]:
    """
    Check that no node series is constant. A constant series has a degenerate
    forecast variance for every parent set it takes part in.
    """
    validation_warnings = []
    for j, name in enumerate(names):
        if np.ptp(data[:, j]) == 0:
            validation_warnings.append(
                f"ConstantSeriesWarning: Column {j + 1} ({name}) is constant."
            )
    return validation_warnings


def validate_duplicate_columns(data: np.ndarray, names: List[str]) -> List[str]:
    """Check that no two node series are identical."""
    validation_warnings = []
    n = data.shape[1]
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(data[:, i], data[:, j]):
                validation_warnings.append(
                    f"DuplicateSeriesWarning: Columns {i + 1} ({names[i]}) and "
                    f"{j + 1} ({names[j]}) are identical."
                )
    return validation_warnings


def validate_length(data: np.ndarray, names: List[str]) -> List[str]:
    validation_warnings = []
    if data.shape[0] < MIN_MONITOR_LENGTH:
        validation_warnings.append(
            f"ShortSeriesWarning: {data.shape[0]} time points, residual checks "
            f"need at least {MIN_MONITOR_LENGTH}."
        )
    return validation_warnings


def validate(
    file, custom_validators: List[callable] = None, size_limit: int = MAX_FILE_SIZE
) -> List[str]:
    """
    Validate a time series CSV file, capturing any parse errors it generates.
    This function checks:

    - the file is no larger than ``size_limit`` bytes
    - the file parses as a complete numeric table
    - no series is constant and no two series are identical
    - the series is long enough for the residual checks

    Parameters
    ----------
    file: `Path`
        A file path.
    custom_validators: `List[callable]`, optional
        List of custom validation functions that take the data matrix and the column names as input and return a list of warnings
    size_limit: `int`, optional
        Largest expected file size in bytes.

    Returns
    -------
    List of strings, each in the format "WarningType: message", describing
    potential validation issues. Returns an empty list if no warnings are issued.
    """
    from mdm_ipa.io.file_tools import read_series

    validation_warnings = validate_file_size(file, size_limit)
    try:
        data, names = read_series(file)
    except DataError as err:
        return validation_warnings + [f"{type(err).__name__}: {err}"]
    for validator in [validate_constant_columns, validate_duplicate_columns, validate_length]:
        validation_warnings.extend(validator(data, names))
    if custom_validators:
        for validator in custom_validators:
            # Execute Custom Validator
            custom_warnings = validator(data, names)
            validation_warnings.extend(custom_warnings)

    return validation_warnings
