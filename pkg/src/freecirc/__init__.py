"""B-circular operators over step functions on [0, 1]: moments, transforms,
random matrix models and hyperinvariant-subspace diagnostics."""

__version__ = "0.1.0"

from .errors import ConvergenceError, FreeCircError, NumericalError, SingularityError, ValidationError
from .step_algebra import BlockDensity, CovariancePair, StepFunction, make_preset
from .moment_engine import StarWord, moment, parse_word, trace_moment

__all__ = [
    "__version__",
    "FreeCircError", "ValidationError", "NumericalError", "SingularityError", "ConvergenceError",
    "BlockDensity", "CovariancePair", "StepFunction", "make_preset",
    "StarWord", "moment", "parse_word", "trace_moment",
]
