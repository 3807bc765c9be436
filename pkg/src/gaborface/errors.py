"""Exception hierarchy shared by all pipeline stages."""


class GaborFaceError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(GaborFaceError, ValueError):
    """A configuration or operation parameter is out of its stated domain."""


class InvalidInputError(GaborFaceError, ValueError):
    """Input data violates a precondition (empty, degenerate, wrong rank)."""


class ShapeError(GaborFaceError, ValueError):
    """Array dimensions do not agree between cooperating inputs."""


class NormalizationError(GaborFaceError):
    """Geometric normalization cannot produce a valid canonical face."""


class FormatError(GaborFaceError):
    """A persisted artifact is malformed or has the wrong version/magic."""


class ProvenanceError(GaborFaceError):
    """Artifacts from different pipeline lineages were mixed."""


class UnattainableTargetError(GaborFaceError, ValueError):
    """A requested cumulative-rate target exceeds the attainable maximum."""
