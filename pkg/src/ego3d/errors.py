"""Exception hierarchy shared by every module."""


class Ego3DError(Exception):
    """Base class for all errors raised by ego3d."""


class InputError(Ego3DError):
    """Bad or inconsistent caller input."""


class NumericError(Ego3DError):
    """A numerical procedure could not produce a meaningful result."""


# geometry
class NonPositiveDepth(NumericError):
    pass


class DegenerateConfiguration(NumericError):
    pass


class DegenerateInput(NumericError):
    pass


DegenerateRotation = DegenerateInput


# triangulation
class InsufficientViews(InputError):
    pass


class DegenerateGeometry(NumericError):
    pass


class NoConsensus(NumericError):
    pass


# pose refinement / body fitting
class InvalidJoint(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class NonFiniteLoss(NumericError):
    pass


# bev
class OutOfRange(InputError):
    pass


class EmptyHeatmap(InputError):
    pass


# tracker
class SingularInnovation(NumericError):
    pass


class EmptyBbox(InputError):
    pass


# metrics
class EmptySequence(InputError):
    pass


class EmptySet(InputError):
    pass


# sim / cli
class InvalidConfig(InputError):
    pass


class MissingInput(InputError):
    pass


class ParseError(InputError):
    pass
