"""Exception hierarchy shared by all qsrmix modules."""


class QsrError(Exception):
    """Base class for every error raised by qsrmix."""

    code = "qsr_error"


class InvalidCoordinateError(QsrError, ValueError):
    code = "invalid_coordinate"


class DegeneratePairError(QsrError, ValueError):
    """Known and unknown points coincide, so orientation is undefined."""

    code = "degenerate_pair"


class DegenerateDataError(QsrError, ValueError):
    """A sample dimension has zero variance."""

    code = "degenerate_data"


class SingularCovarianceError(QsrError, ValueError):
    code = "singular_covariance"


class ZeroDensityError(QsrError, ArithmeticError):
    """A data point has zero density under the model."""

    code = "zero_density"

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"density underflows to zero at point index {index}")


class CollapsedComponentError(QsrError, ArithmeticError):
    code = "collapsed_component"

    def __init__(self, component, mass):
        self.component = component
        self.mass = mass
        super().__init__(
            f"component {component} collapsed (responsibility mass {mass:.3g})"
        )


class InsufficientDataError(QsrError, ValueError):
    code = "insufficient_data"


class InfeasibleFusionError(QsrError, ValueError):
    code = "infeasible_fusion"

    def __init__(self, observation, message=None):
        self.observation = observation
        super().__init__(
            message or f"observation {observation} assigns zero mass to every cell"
        )


class ParseError(QsrError, ValueError):
    """Malformed input file; carries a 1-based line number when known."""

    code = "parse_error"

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class UnsupportedVersionError(ParseError):
    code = "unsupported_version"
