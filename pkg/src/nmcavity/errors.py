"""Exception types shared across the package."""


class NMCavityError(Exception):
    """Base class for all errors raised by nmcavity."""


class NonPositiveParameter(NMCavityError, ValueError):
    def __init__(self, field):
        super().__init__(f"parameter {field!r} must be positive")
        self.field = field


class InvalidGrid(NMCavityError, ValueError):
    pass


class DomainError(NMCavityError, ValueError):
    pass


class NumericalInstability(NMCavityError, ArithmeticError):
    pass


class PoleAt(NMCavityError):
    """Flag raised by :func:`nmcavity.volterra.log_derivative` at an amplitude zero.

    Not a failure: carries the node index and the local slope ``rdot`` so that
    callers can model the ``1/(t - t*)`` behaviour analytically.
    """

    def __init__(self, index, slope):
        super().__init__(f"amplitude zero at node {index}")
        self.index = index
        self.slope = slope


class GridMismatch(NMCavityError, ValueError):
    pass


class NoPoles(NMCavityError, ValueError):
    pass


class SingularIntermediateMap(NMCavityError, ArithmeticError):
    pass


class NotHermitian(NMCavityError, ValueError):
    pass


class NotPSD(NMCavityError, ValueError):
    pass


class DegenerateWeight(NMCavityError, ValueError):
    pass


class NonIntegrablePole(NMCavityError, ArithmeticError):
    pass


class PoleOrderMismatch(NMCavityError, ValueError):
    pass


class NotApplicable(NMCavityError, ValueError):
    pass


class NoSignChange(NMCavityError, ValueError):
    pass


class BracketNotUnimodal(NMCavityError, ValueError):
    pass
