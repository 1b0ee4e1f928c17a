"""Exception hierarchy shared by all qseig modules."""


class QseigError(Exception):
    """Base class for all qseig errors."""


class DimensionMismatch(QseigError):
    """Operand shapes are incompatible with the discretization or each other."""


class GridTooSmall(QseigError):
    """Grid has fewer interior points than the discretization supports."""


class SingularPotential(QseigError):
    """Potential evaluates to a singularity at a grid node."""


class NotPositiveDefinite(QseigError):
    """Operator (or small Gram matrix) is not symmetric positive definite."""


class NoConvergence(QseigError):
    """An iterative kernel exhausted its iteration budget."""


class RankDeficient(QseigError):
    """Block state does not have full column rank."""


class SmallSolveSingular(QseigError):
    """The 2N x 2N predictor system is singular (tau pathological or rank collapse)."""


class MissingLambda1(QseigError):
    """Step-size bounds require lambda1_est; run estimate_lambda1 first."""


class ZeroReference(QseigError):
    """Reference state has (numerically) zero norm."""


class InsufficientData(QseigError):
    """Too few usable points for a fit."""


class BracketNotSPD(QseigError):
    """Closed-form bracket matrix lost positivity; state outside existence envelope."""


class NonFinite(QseigError):
    """A trajectory produced NaN/Inf entries."""


class ConfigError(QseigError):
    """Malformed or inconsistent run configuration."""


class TauRejected(QseigError):
    """Time step exceeds the stability safeguard and enforce_bounds is 'reject'."""


class GapTooSmallWarning(UserWarning):
    """Ritz values indicate the target window may close a degenerate cluster."""
