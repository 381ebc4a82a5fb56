import logging
from enum import Enum
from pathlib import Path

import numpy as np

# Electron gyromagnetic ratio gamma_e / 2pi in Hz/T; all Hz <-> T conversions go through it.
GYROMAGNETIC_RATIO_HZ_PER_T = 28e9
# Angular form gamma_e in rad/(s T), as it enters the gradiometry phase depth.
GYROMAGNETIC_RATIO_ANGULAR = 2 * np.pi * GYROMAGNETIC_RATIO_HZ_PER_T

# Zero-field resonance of the NV ground state; only used as carrier metadata.
ZERO_FIELD_FREQUENCY = 2.87e9

# NV optical response time, and the shortest sweep period we accept without a warning.
NV_RESPONSE_TIME = 1e-6
MIN_SWEEP_PERIOD = 100e-6

# The dwell may be at most this fraction of the sweep period
MAX_DWELL_FRACTION = 0.1

# Relative tolerance when deciding whether a duration spans whole periods
PERIOD_TOLERANCE = 1e-6

LOGGER_NAME = "spectrum_demod"


class SpectrumDemodError(Exception):
    """Base class of all errors raised by the package."""


class ConfigError(SpectrumDemodError, ValueError):
    """Invalid parameters or violated preconditions (CLI exit code 2)."""


class NumericalError(SpectrumDemodError, ArithmeticError):
    """A numerical procedure failed beyond recovery (CLI exit code 3)."""


class NoiseMode(Enum):
    SHOT = "shot"
    NONE = "none"

    def __str__(self) -> str:
        return str(self.value)

    def __eq__(self, __value: object) -> bool:
        if isinstance(__value, str):
            return self.value == __value
        return super().__eq__(__value)

    def __hash__(self) -> int:
        return hash(self.value)


class EstimatorMethod(Enum):
    PHASE = "phase"
    LSTSQ = "lstsq"

    def __str__(self) -> str:
        return str(self.value)

    def __eq__(self, __value: object) -> bool:
        if isinstance(__value, str):
            return self.value == __value
        return super().__eq__(__value)

    def __hash__(self) -> int:
        return hash(self.value)


class EstimateFlag(Enum):
    """Conditions attached to estimates instead of raising."""

    NO_LOCK = "no_lock"
    ILL_CONDITIONED = "ill_conditioned"
    NOT_CONVERGED = "not_converged"
    SINGULAR = "singular"
    PERIODS_TRUNCATED = "periods_truncated"
    BEYOND_SMALL_ANGLE = "beyond_small_angle"
    WINDOW_EXPANDED = "window_expanded"

    def __str__(self) -> str:
        return str(self.value)


def flags_to_str(flags) -> str:
    """Join flags for a table cell; an empty set becomes an empty string."""
    return "|".join(sorted(str(flag) for flag in flags))


def flags_from_str(text: str) -> frozenset:
    text = str(text).strip()
    if not text or text in ("--", "nan"):
        return frozenset()
    return frozenset(EstimateFlag(part) for part in text.split("|"))


def wrap_phase(phi):
    """Wrap a phase (scalar or array) into [-pi, pi)."""
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


def configure_logging(verbosity: int = 0) -> logging.Logger:
    """Set up the package logger: WARNING by default, INFO for -v, DEBUG for -vv."""
    logger = logging.getLogger(LOGGER_NAME)
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        logger.addHandler(handler)
    return logger


def ask_overwrite(fpath: Path, max_tries: int = 5) -> bool:
    """Whether `fpath` may be written.
    A missing file may always be written. For an existing one the user is
    prompted; without a clear yes within `max_tries` answers the file is kept.
    """
    if not fpath.exists():
        return True
    prompt = f"Output file {fpath} exists, replace it? [y/n] "
    for _ in range(max_tries):
        answer = input(prompt).strip().lower()
        if answer in ("y", "yes"):
            return True
        if answer in ("n", "no"):
            return False
        prompt = "Answer 'y' or 'n': "
    print(f"No valid answer, keeping {fpath}.")
    return False
