"""
This module provides errors/exceptions and warnings of general use.

This code is based on that provided by SunPy see
    licenses/SUNPY.rst
"""

import warnings

__all__ = [
    "MDMWarning",
    "MDMUserWarning",
    "warn_user",
    "MDMError",
    "DataError",
    "ParseError",
    "NumericalError",
    "ResourceLimitError",
    "SearchLimitReached",
]


class MDMWarning(Warning):
    """
    The base warning class from which all mdm_ipa warnings should inherit.

    Any warning inheriting from this class is handled by the mdm_ipa
    logger. This warning should not be issued in normal code. Use
    "MDMUserWarning" instead or a specific sub-class.
    """


class MDMUserWarning(UserWarning, MDMWarning):
    """
    The primary warning class for mdm_ipa.

    Use this if you do not need a specific type of warning.
    """


class MDMError(Exception):
    """
    The base error class from which all mdm_ipa errors inherit.
    """


class DataError(MDMError, ValueError):
    """
    Input data cannot be used: empty or incomplete series, mismatched
    dimensions between a design and its prior, inconsistent node counts.
    """


class ParseError(DataError):
    """
    A text input (time series CSV, score file, edge list) is malformed.

    Parameters
    ----------
    msg : str
        Description of the problem.
    line : int, optional
        1-based line (or row) of the offending input.
    column : int, optional
        1-based column of the offending input.
    """

    def __init__(self, msg, line=None, column=None):
        self.line = line
        self.column = column
        location = ""
        if line is not None:
            location += f"line {line}"
        if column is not None:
            location += f"{', ' if location else ''}column {column}"
        super().__init__(f"{location}: {msg}" if location else msg)


class NumericalError(MDMError, ArithmeticError):
    """
    A numerical computation broke down.

    Parameters
    ----------
    msg : str
        Description of the problem.
    report : dict, optional
        Condition report (e.g. the offending forecast variance or solver status).
    """

    def __init__(self, msg, report=None):
        self.report = report or {}
        super().__init__(msg if not self.report else f"{msg} {self.report}")


class ResourceLimitError(MDMError):
    """
    A size, iteration or time limit was exceeded.
    """


class SearchLimitReached(ResourceLimitError):
    """
    The structure search stopped on an iteration or time cap.

    The best DAG found so far is available as ``result`` and is flagged
    as not proven optimal.
    """

    def __init__(self, msg, result=None):
        self.result = result
        super().__init__(msg)


def warn_user(msg, stacklevel=1):
    """
    Raise a `MDMUserWarning`.

    Parameters
    ----------
    msg : str
        Warning message.
    stacklevel : int
        This is interpreted relative to the call to this function,
        e.g. ``stacklevel=1`` (the default) sets the stack level in the
        code that calls this function.
    """
    warnings.warn(msg, MDMUserWarning, stacklevel + 1)

