"""Error and warning taxonomy shared across the package."""


class BplabError(Exception):
    """Base class for all package-specific failures."""


class NonpositiveDepthError(BplabError):
    """Rest depth h_b = 1 - beta*b is not strictly positive somewhere."""


class LogDomainError(BplabError):
    """Surface state leaves the domain of the logarithmic change of variables."""


class DryStateError(BplabError):
    """Total water height reached zero or below during evolution."""


class SolverDivergenceError(BplabError):
    """Iterative elliptic solve stalled above its residual tolerance."""


class InsufficientSamplesError(BplabError):
    """A fit was requested on fewer oscillation periods / points than required."""


class DegenerateFitError(BplabError):
    """Convergence-order fit attempted on degenerate data (noise floor or zeros)."""


class NoShockError(BplabError):
    """Initial slope never negative: no gradient blow-up in finite time."""


class SizeLimitError(BplabError):
    """Dense assembly or eigen-solve requested beyond the supported size cap."""


class NotSPDError(BplabError):
    """Matrix expected symmetric positive definite failed its factorization."""


class ConfigError(BplabError):
    """Experiment configuration file is malformed or inconsistent."""


class CFLWarning(UserWarning):
    """Time step close to or beyond the linear stability limit."""


class RegimeWarning(UserWarning):
    """Parameter combination outside the weakly-nonlinear regime the models assume."""


class AdmissibilityWarning(UserWarning):
    """Surface state close to the admissibility boundary of a change of variables."""
