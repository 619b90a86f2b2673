"""Shared exception types for the hsdtile package."""


class HsdTileError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(HsdTileError):
    """Operands have incompatible dimensions."""


class NotInvertible(HsdTileError):
    """Affine map has no integer inverse (non-square or |det| != 1)."""

    def __init__(self, message, det=None):
        super().__init__(message)
        self.det = det


class UnboundedDomain(HsdTileError):
    """Integer point enumeration hit a dimension without finite bounds."""

    def __init__(self, message, dim_index=None):
        super().__init__(message)
        self.dim_index = dim_index


class ExprError(HsdTileError):
    """Affine expression or constraint string failed to parse."""

    def __init__(self, message, text=None, pos=None):
        if text is not None and pos is not None:
            message = f"{message} (in {text!r} at offset {pos})"
        super().__init__(message)
        self.text = text
        self.pos = pos


class PrdgFormatError(HsdTileError):
    """Structurally invalid PRDG description."""


class UnknownNodeError(PrdgFormatError):
    """Edge or schedule refers to an undeclared node."""


class NonUniformDependence(HsdTileError):
    """Dependence is not of the form z -> z + d (or exceeds tiling limits)."""


class NonRectangularDomain(HsdTileError):
    """Domain is not a rectangular box where one is required."""


class ScheduleFormatError(HsdTileError):
    """Structurally invalid schedule description."""


class CoordinateMismatch(HsdTileError):
    """Inputs are not expressed in the same coordinate system."""


class MonotonicityViolation(HsdTileError):
    """A state entry was published with a non-increasing time tuple."""


class KernelFailure(HsdTileError):
    """A tile kernel raised during execution."""


class CycleDetected(HsdTileError):
    """Tile dependence graph contains a cycle."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle


class UnsupportedTarget(HsdTileError):
    """Requested emission target is not available."""
