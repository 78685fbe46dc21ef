"""Exception types shared across the pipeline."""


class PawmatchError(Exception):
    """Base class for errors raised by this package."""


class BoundsError(PawmatchError, ValueError):
    """A crop box or geo box lies outside the valid region."""


class FormatError(PawmatchError, ValueError):
    """A binary or JSON artifact does not match its declared format."""


class UnsupportedVersionError(FormatError):
    """A binary artifact carries a format version this build cannot read."""


class EmptyCorpusError(PawmatchError):
    """Ingestion produced no usable images."""


class NoPetFoundError(PawmatchError):
    """The detector found no acceptable pet in an image."""


class NonFiniteError(PawmatchError, FloatingPointError):
    """A forward/backward pass or optimizer step produced NaN or Inf."""
