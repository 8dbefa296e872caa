"""Domain error types shared across the package.

Every error raised for a violated contract derives from FacerankError so the
CLI can map the whole family onto a single exit code.
"""


class FacerankError(Exception):
    """Base class for all domain errors raised by facerank."""


class OutOfBounds(FacerankError):
    """A rectangle or window reaches past the extent of the underlying map."""


class DimensionMismatch(FacerankError):
    """Maps that must share a grid shape do not."""


class DuplicateChannel(FacerankError):
    """The same part channel appears more than once in a map stack."""


class ChannelMismatch(FacerankError):
    """A channel tag does not match the data it is being applied to."""


class BadMagic(FacerankError):
    """A map file does not start with a recognizable header."""


class TruncatedPayload(FacerankError):
    """A map file payload is shorter than its header promises (or corrupt)."""


class NegativeValue(FacerankError):
    """Response values must be non-negative."""


class NonFiniteValue(FacerankError):
    """Response values must be finite."""


class EmptyScoreSet(FacerankError):
    """No per-part scores were available to aggregate."""


class DegenerateLabels(FacerankError):
    """Fitting needs at least one positive and one negative sample."""


class IdMismatch(FacerankError):
    """Window ids and score ids do not line up."""


class EmptyGroundTruth(FacerankError):
    """Evaluation against an empty ground-truth set is undefined."""


class InvalidSpec(FacerankError):
    """A synthetic scene specification violates its invariants."""
