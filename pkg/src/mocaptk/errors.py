"""Exception types shared across the toolchain."""


class ToolchainError(Exception):
    """Base class for all toolchain errors."""


class BehindCamera(ToolchainError):
    """Point has non-positive depth in the camera frame."""


class InsufficientViews(ToolchainError):
    """Fewer than two usable views for triangulation."""


class DegenerateGeometry(ToolchainError):
    """Triangulation system is rank-deficient (e.g. coincident camera centers)."""


class AnnotationFailed(ToolchainError):
    """Camera-selection loop exhausted its threshold budget for a keypoint."""


class BoneNeverObserved(ToolchainError):
    """A bone has no frame in which both endpoints are present."""


class OptimizationDiverged(ToolchainError):
    """Objective increased beyond tolerance or produced NaN."""


class NoTargets(ToolchainError):
    """Keypoint energy evaluated with no present targets."""


class EmptyVertexSet(ToolchainError):
    """Chamfer energy evaluated on an empty vertex set."""


class InsufficientCorrespondences(ToolchainError):
    """ICP matched fewer pairs than the configured minimum."""


class DisconnectedGraph(ToolchainError):
    """View-overlap graph does not connect all cameras."""


class NegativeRoundTrip(ToolchainError):
    """Round-trip time passed as a negative duration."""


class CapacityExceeded(ToolchainError):
    """More devices requested than the exposure schedule can hold."""


class ResolutionMismatch(ToolchainError):
    """Image dimensions disagree with the camera or the paired image."""


class TooFewPoints(ToolchainError):
    """Cloud smaller than the neighbor count needed by the filter."""


class ShapeMismatch(ToolchainError):
    """Array shapes disagree."""


class DegenerateConfiguration(ToolchainError):
    """Joint set too degenerate (collinear) for Procrustes alignment."""
