"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`MdpcgError`
so callers (the CLI in particular) can map failures to exit codes.
"""


class MdpcgError(Exception):
    """Base class for all package errors."""


# model construction / validation
class KernelNotStochastic(MdpcgError):
    pass


class RankDeficient(MdpcgError):
    pass


class NegativeMass(MdpcgError):
    pass


class CostNotMonotone(MdpcgError):
    """Cost Jacobian has a symmetric part that is not positive definite."""


# solvers
class SolverError(MdpcgError):
    pass


class NotInterior(SolverError):
    """The stationary point of the equality-constrained KKT system has a
    nonpositive coordinate, so it is not the equilibrium.

    ``y`` holds that stationary point for diagnostics.
    """

    def __init__(self, message, y=None):
        super().__init__(message)
        self.y = y


class SingularSystem(SolverError):
    pass


class MaxIterations(SolverError):
    def __init__(self, message, equilibrium=None, gap=None):
        super().__init__(message)
        self.equilibrium = equilibrium
        self.gap = gap


class DegenerateOracle(SolverError):
    pass


class OracleNoConverge(SolverError):
    pass


class NegativeMultiplier(SolverError):
    pass


# sensitivity
class NotStrictlyPositive(MdpcgError):
    def __init__(self, message, y=None):
        super().__init__(message)
        self.y = y


class IllConditioned(MdpcgError):
    pass


# cycle game
class SelfLoopUnsupported(MdpcgError):
    pass


class NotInvertible(MdpcgError):
    def __init__(self, message, num_edges=None, num_arcs=None):
        super().__init__(message)
        self.num_edges = num_edges
        self.num_arcs = num_arcs


# files
class ParseError(MdpcgError):
    pass
