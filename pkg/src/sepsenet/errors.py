"""Exception types used across the package.

Each name matches the failure it reports; callers are expected to catch
the specific class, so these stay flat and data-free.
"""


class SepsenetError(Exception):
    """Base class for all package errors."""


# -- tensor construction / serialization --------------------------------

class LengthMismatch(SepsenetError):
    """Value list length does not equal the shape's element count."""


class BadDistributionParams(SepsenetError):
    """Random fill parameters outside the distribution's domain."""


class BadMagic(SepsenetError):
    """File does not start with the expected magic bytes."""


class TruncatedPayload(SepsenetError):
    """File ended before the declared payload was complete."""


class RankOutOfRange(SepsenetError):
    """Tensor rank outside the supported 1..4 range."""


# -- kernel / layer shape contracts -------------------------------------

class ChannelMismatch(SepsenetError):
    """Channel dimensions of input and weights disagree."""


class ShapeMismatch(SepsenetError):
    """Array shapes incompatible with the operation's contract."""


class WindowTooLarge(SepsenetError):
    """Pooling window does not fit inside the input even once."""


class DegenerateBatch(SepsenetError):
    """Batch statistics requested over fewer than two elements."""


class BackwardBeforeForward(SepsenetError):
    """backward() called with no cached forward activations."""


# -- model configuration / checkpoints ----------------------------------

class BadConfig(SepsenetError):
    """Model or run configuration violates an invariant."""


class ConfigMismatch(SepsenetError):
    """Checkpoint contents do not match the architecture they claim."""


# -- loss / gradient checking --------------------------------------------

class NotOneHot(SepsenetError):
    """Label rows are not one-hot vectors."""


class NotDistribution(SepsenetError):
    """Probability rows do not sum to one."""


class NonDeterministicForward(SepsenetError):
    """Two identical forward passes disagreed; gradient check invalid."""


# -- data pipeline --------------------------------------------------------

class NoClassesFound(SepsenetError):
    """Dataset root has no class subdirectories."""


class UnsupportedFormat(SepsenetError):
    """Image file is not one of the supported raster formats."""


class CorruptFile(SepsenetError):
    """Image file exists but cannot be decoded."""


class BadTarget(SepsenetError):
    """Resize target has a zero dimension."""


class BadFraction(SepsenetError):
    """Split fraction outside [0, 1)."""


# -- metrics ---------------------------------------------------------------

class LabelOutOfRange(SepsenetError):
    """A label index falls outside [0, num_classes)."""


class EmptyMatrix(SepsenetError):
    """Metric requested on a confusion matrix with zero total count."""


class EmptyDataset(SepsenetError):
    """Operation requires at least one sample."""


class EmptyClassWarning(UserWarning):
    """A class directory contained no readable images (non-fatal)."""
