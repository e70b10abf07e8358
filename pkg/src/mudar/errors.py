"""Exception hierarchy for the mudar toolkit.

Every error raised deliberately by the library derives from MudarError so
callers (and the CLI) can tell library failures from programming mistakes.
"""

from __future__ import annotations


class MudarError(Exception):
    """Base class for all mudar errors."""


class InvalidInputError(MudarError, ValueError):
    """An argument violates a documented precondition."""


class InputTooShortError(InvalidInputError):
    """A signal or sequence is shorter than the operation requires."""


class FormatError(MudarError, ValueError):
    """A file or byte stream does not match its declared format."""


class ConfigError(MudarError, ValueError):
    """A configuration file or option set is unusable."""


class DegenerateLabelsError(MudarError, ValueError):
    """Training labels contain only one class."""


class EmptyTrackError(InvalidInputError):
    """A rhythm track with no keypoints was given where some are required."""


class InsufficientRhythmError(MudarError, ValueError):
    """Too few keypoints to carry out an alignment or retiming."""


class NoValidShiftError(MudarError, ValueError):
    """No temporal shift survives the beat-aliasing exclusion."""


class NoValidNegativeError(MudarError, ValueError):
    """No candidate negative passed the rhythm mismatch gate."""


class InvalidPathError(MudarError, ValueError):
    """A warp path violates monotonicity or its boundary conditions."""


class NumericError(MudarError, ArithmeticError):
    """A computation produced non-finite values."""
