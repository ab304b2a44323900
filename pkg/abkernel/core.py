import copy
import json
import logging
import os
import pathlib

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_SEED = 42

# Exit codes of the command line interface.
EXIT_OK = 0
EXIT_INVALID_FLAGS = 1
EXIT_METHOD_DISAGREEMENT = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_CHECK_FAILED = 4
EXIT_EMPTY_REGIME = 5
EXIT_INADMISSIBLE = 6

THREADS_ENV_VAR = "ABKERNEL_THREADS"


__version__ = "undefined"
try:
    from . import _version

    __version__ = _version.version
except ImportError:
    pass


class AbkernelError(Exception):
    """
    Base class for all errors raised by abkernel.
    """


class DomainError(AbkernelError, ValueError):
    """
    An argument lies outside the domain on which the quantity is defined.
    """


class BesselOverflowError(AbkernelError, OverflowError):
    """
    The requested Bessel or Gamma function value is not representable in
    double precision.
    """


class QuadratureError(AbkernelError, ArithmeticError):
    """
    A quadrature failed to reach its tolerance.
    """


class NonConvergenceError(AbkernelError, ArithmeticError):
    """
    A series or extrapolation did not meet its stopping rule within its cap.
    """


class RegionOverlapError(DomainError):
    pass


class GridTooSmallError(AbkernelError, ValueError):
    pass


class EmptyRegimeError(DomainError):
    pass


class AdmissibilityError(DomainError):
    pass


# All tunable defaults. A JSON file passed with --config is merged into a
# copy of this dictionary; unknown keys are rejected.
DEFAULTS = {
    "modes": {"k_min": -32, "k_max": 32, "m_max": 64},
    "quadrature": {
        "order": 16,
        "panels": 48,
        "grading_levels": 12,
        "grading_ratio": 0.2,
        "n_theta": 256,
        "tol": 1e-8,
    },
    "sup_grid": {"n_r": 200, "n_theta": 256},
    "tolerances": {
        "series_tail": 1e-14,
        "closed_quad": 1e-12,
        "cross_method": 1e-6,
        "bessel": 1e-10,
        "bessel_identity": 1e-8,
        "semigroup": 1e-5,
        "subordination_heat": 1e-10,
        "subordination_halfwave": 1e-4,
        "gram": 1e-8,
        "norm_formula": 1e-8,
        "refinement": 0.05,
        "energy": 1e-12,
        "unitarity": 1e-12,
        "jump": 1e-4,
    },
    "heat": {"method": "both"},
    "decay": {"j": 4, "tmin": 0.0625, "tmax": 1.0, "samples": 16, "y0": [1.0, 0.0]},
    "strichartz": {"q": 8.0, "p": 4.0, "T": 1.0, "data": "gaussian", "nt": 33},
    "bounds": {"times": [0.05, 0.2, 1.0], "r_max": 3.0, "n_r": 7, "n_theta": 8},
}


def merge_config(base, overrides, path=""):
    """
    Returns a deep copy of base with the values in overrides applied. Keys
    not present in base raise a DomainError.
    """
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        name = f"{path}{key}"
        if key not in merged:
            raise DomainError(f"Unknown configuration key '{name}'")
        if isinstance(merged[key], dict):
            if not isinstance(value, dict):
                raise DomainError(f"Configuration key '{name}' must be a mapping")
            merged[key] = merge_config(merged[key], value, path=f"{name}.")
        else:
            merged[key] = value
    return merged


def load_config(path=None, tolerance_overrides=None):
    """
    Returns the effective configuration: DEFAULTS, updated by the JSON file
    at path (if given), updated by the name -> value tolerance overrides.
    """
    config = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(pathlib.Path(path)) as f:
            overrides = json.load(f)
        logger.info(f"Loaded configuration overrides from {path}")
        config = merge_config(config, overrides)
    if tolerance_overrides:
        config = merge_config(config, {"tolerances": dict(tolerance_overrides)})
    return config


def resolve_threads(threads=None):
    if threads is None:
        value = os.environ.get(THREADS_ENV_VAR)
        if value is not None:
            try:
                threads = int(value)
            except ValueError:
                raise DomainError(f"{THREADS_ENV_VAR} must be an integer, got {value}")
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise DomainError(f"Number of threads must be >= 1, got {threads}")
    return threads
