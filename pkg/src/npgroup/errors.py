"""Exception hierarchy.

Validation problems (bad input, too little data) derive from
:class:`ValidationError` and map to CLI exit code 2; numerical breakdowns
derive from :class:`NumericalError` and map to exit code 3.
"""


class NpgroupError(Exception):
    """Base class for all package errors."""


class ValidationError(NpgroupError, ValueError):
    pass


class NumericalError(NpgroupError, ArithmeticError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class MissingColumn(ValidationError):
    def __init__(self, name):
        super().__init__(f"column not found: {name!r}")
        self.name = name


class OverlappingGroups(ValidationError):
    pass


class UnassignedColumn(ValidationError):
    pass


class TooFewObservations(ValidationError):
    pass


class TooFewCells(ValidationError):
    pass


class EmptyGroup(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class InfeasibleRates(ValidationError):
    def __init__(self, r, q):
        super().__init__(
            f"no bandwidth exponent satisfies both rate conditions for r={r}, q={q}"
        )
        self.r = r
        self.q = q


class SingularFit(NumericalError):
    def __init__(self, point_index):
        super().__init__(
            f"local normal matrix singular at design point {point_index}; "
            "bandwidth too small for local support"
        )
        self.point_index = point_index


class DegenerateVariance(NumericalError):
    pass


class DegenerateCovariance(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class DegenerateGroup(NumericalError):
    pass
