"""Exception types raised by elblock."""


class ElblockError(Exception):
    """Base class for all package errors."""


class DesignError(ElblockError, ValueError):
    """Invalid or unusable block design input."""


class DuplicateCellError(DesignError):
    """A (block, treatment) cell was supplied more than once."""


class UnidentifiedHypothesisError(ElblockError, ValueError):
    """A hypothesis involves a treatment that is never observed, or spans
    disconnected parts of the design."""


class CalibrationError(ElblockError, RuntimeError):
    """Cutoff calibration could not be completed."""


class BootstrapRedrawError(CalibrationError):
    """Too many consecutive degenerate bootstrap resamples."""


class NumericalError(ElblockError, RuntimeError):
    """A numerical routine failed to reach a certified answer."""
