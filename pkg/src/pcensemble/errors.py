"""Exception types shared across the package."""


class PCEnsembleError(Exception):
    """Base class for all package errors."""


class DegenerateCloudError(PCEnsembleError):
    """Cloud has zero radius (all points coincide); cannot be normalized."""


class BadKError(PCEnsembleError):
    """A neighbor/sample count k is outside its valid range."""


class TooFewPointsError(PCEnsembleError):
    """A drop corruption schedule would leave fewer than the minimum points."""


class NonFiniteLossError(PCEnsembleError):
    """Training produced a NaN/Inf loss; aborted with diagnostics."""


class LengthMismatchError(PCEnsembleError):
    """Paired sequences (predictions/labels, model/reference) differ in shape."""


class EmptyEvalError(PCEnsembleError):
    """An evaluation was requested over an empty collection."""


class ZeroReferenceError(PCEnsembleError):
    """A corruption family's reference error sum is zero; CE is undefined."""


class FormatError(PCEnsembleError):
    """A binary file does not follow its declared format."""


class BadConfigError(PCEnsembleError):
    """A configuration value or key is invalid."""
