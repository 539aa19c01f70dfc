from typing import Callable, Optional, Tuple
from functools import wraps
import logging
import traceback

import numpy as np

logger = logging.getLogger(__name__)


class HawkesError(Exception):
    """Base exception with an error code used by the CLI exit handler."""
    code_name = "HAWKES_ERROR"

    def __init__(self, message: str):
        self.message = message
        self.code = ERROR_CODES.get(self.code_name, 1000)
        super().__init__(self.message)


class NonFiniteLikelihood(HawkesError):
    """An intensity at an event time is not strictly positive and finite."""
    code_name = "NON_FINITE_LIKELIHOOD"


class SimulationCapExceeded(HawkesError):
    """Thinning produced far more events than the model predicts."""
    code_name = "SIMULATION_CAP_EXCEEDED"


class DegenerateTruth(HawkesError):
    code_name = "DEGENERATE_TRUTH"


class EmptySplit(HawkesError):
    code_name = "EMPTY_SPLIT"


class ParseError(HawkesError):
    """Malformed input file; carries the 1-based line number."""
    code_name = "PARSE_ERROR"

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(HawkesError):
    """A data invariant is violated; `invariant` names it."""
    code_name = "VALIDATION_ERROR"

    def __init__(self, message: str, invariant: str = ""):
        self.invariant = invariant
        if invariant:
            message = f"{invariant}: {message}"
        super().__init__(message)


class ConfigError(HawkesError):
    code_name = "CONFIG_ERROR"


# Error codes
ERROR_CODES = {
    "HAWKES_ERROR": 1000,
    "NON_FINITE_LIKELIHOOD": 1001,
    "SIMULATION_CAP_EXCEEDED": 1002,
    "DEGENERATE_TRUTH": 1003,
    "EMPTY_SPLIT": 1004,
    "PARSE_ERROR": 1005,
    "VALIDATION_ERROR": 1006,
    "CONFIG_ERROR": 1007,
    "UNEXPECTED_ERROR": 1099,
}


def get_error_info(error: Exception) -> dict:
    """
    Get standardized error information for status files and result rows.
    Errors from outside the library report their class name as the type.
    """
    if isinstance(error, HawkesError):
        return {
            "error_code": error.code,
            "error_type": error.code_name,
            "message": error.message,
        }
    return {
        "error_code": ERROR_CODES["UNEXPECTED_ERROR"],
        "error_type": type(error).__name__,
        "message": str(error),
    }


def handle_errors(f: Callable[..., int]) -> Callable[..., int]:
    """
    Decorator for CLI commands.
    Library errors become a warning and exit status 2, anything else is
    logged with its traceback and exits with status 1.
    """
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except HawkesError as e:
            logger.warning(f"{e.code_name} ({e.code}): {e.message}")
            return 2
        except Exception as e:
            logger.error(f"Unexpected error: {str(e)}")
            logger.error(traceback.format_exc())
            return 1
    return wrapper


def derive_seed(seed: int, *keys: int) -> np.random.SeedSequence:
    """
    Child seed for a task identified by integer keys.

    The rule is numpy's SeedSequence spawn key: (seed, spawn_key=keys). It is
    portable across platforms and independent of scheduling order.
    """
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))


def make_rng(seed, *keys: int) -> np.random.Generator:
    """PCG64 generator from a seed (or a SeedSequence) and optional task keys."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))


def format_duration(seconds: float) -> str:
    """Format seconds as MM:SS.ss or HH:MM:SS for log messages."""
    minutes, secs = divmod(float(seconds), 60)
    hours, minutes = divmod(minutes, 60)
    if hours > 0:
        return f"{int(hours):02d}:{int(minutes):02d}:{int(secs):02d}"
    return f"{int(minutes):02d}:{secs:05.2f}"


def parse_options(text: str) -> Tuple[str, dict]:
    """
    Split a `name:key=value,key=value` option string.

    Values are converted to int or float when possible.
    """
    text = text.strip()
    if ":" in text:
        name, _, rest = text.partition(":")
    else:
        name, rest = text, ""
    options = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        if "=" not in item:
            raise ConfigError(f"Expected key=value in '{text}', got '{item}'")
        key, _, value = item.partition("=")
        options[key.strip()] = _coerce(value.strip())
    return name.strip().lower(), options


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value
