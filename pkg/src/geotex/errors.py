"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2), numerical
breakdowns from :class:`NumericalError` (CLI exit code 3).
"""


class GeotexError(Exception):
    """Base class for all library errors.

    ``stage`` is filled in by the pipeline when an error crosses a stage
    boundary, so callers can tell where a retexture job failed.
    """

    stage = None

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class InputError(GeotexError, ValueError):
    pass


class NumericalError(GeotexError, ArithmeticError):
    pass


class MaskTooThinError(InputError):
    """Morphological opening removed every foreground pixel."""


class InvalidMaskError(InputError):
    """Mask does not hold exactly one usable foreground component."""


class DegenerateContourError(InputError):
    """Contour collapses along an axis and cannot be normalized."""


class EmptySurfaceError(InputError):
    """Too few valid depth samples to build a surface."""


class SolveFailedError(NumericalError):
    def __init__(self, msg, condition=None):
        super().__init__(msg)
        self.condition = condition


class RegistrationDivergedError(NumericalError):
    pass
