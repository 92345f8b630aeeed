"""Exception hierarchy shared across the package.

Error classes map onto CLI exit codes: ConfigError -> 2, solver
non-convergence -> 3, instance-generation failure -> 4.
"""


class SparseSpikeError(Exception):
    """Base class for all package errors."""


class ConfigError(SparseSpikeError):
    """Invalid experiment configuration (bad field, missing key, bad grid)."""


class GenerationError(SparseSpikeError):
    """Base for graph/instance generation failures."""


class InfeasibleSequence(GenerationError):
    """Degree sequence cannot correspond to any simple graph (e.g. a degree >= N)."""


class RestartBudgetExhausted(GenerationError):
    """Stub-matching restarts exhausted; sequence is near-infeasible for rejection sampling."""


class SolverError(SparseSpikeError):
    """Base for iterative-solver failures."""


class NotConverged(SolverError):
    """Krylov eigensolver failed to reach the residual tolerance within max_iter."""


class CapExceeded(SolverError):
    """Dense-path operation requested above its size cap."""


class NoConvergence(SolverError):
    """Scalar fixed-point iteration failed to converge (lambda inadmissible)."""


class NegativeDenominator(SolverError):
    """A resolvent denominator lambda - k*E[W^2]*m crossed zero during iteration."""


class RootNotBracketed(SolverError):
    """Bisection target not bracketed (signal strength at or below threshold)."""


class NonPositiveOmega(SolverError):
    """A population update produced omega <= 0; lambda is below the admissible region."""


class NonPositiveDenominator(SolverError):
    """A Monte Carlo estimator denominator lambda - {W^2/omega}_k came out <= 0."""


class MaxSweepsExceeded(SolverError):
    """Population moments failed to plateau within the sweep budget."""


class MaxRescalesExceeded(SolverError):
    """(q, lambda) rescaling loop failed to converge within the outer budget."""
