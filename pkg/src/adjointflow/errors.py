"""Exception types shared across the package."""

from __future__ import annotations


class AdjointFlowError(Exception):
    """Base class for all package-specific failures."""


class ConformabilityError(AdjointFlowError):
    """Two objects live on different grids or have mismatched shapes."""


class EllipticityError(AdjointFlowError):
    """Diffusion tensor is not positive definite at some sampled node."""


class DissipativityError(AdjointFlowError):
    """Symmetric-part spectrum reaches zero or below; relaxation cannot contract.

    Carries the offending eigenvalue estimate in ``lambda_min``.
    """

    def __init__(self, lambda_min: float, message: str | None = None):
        self.lambda_min = float(lambda_min)
        super().__init__(message or f"symmetric-part lower eigenvalue {lambda_min:.6e} <= 0")


class EstimationError(AdjointFlowError):
    """An eigenvalue iteration failed to settle."""


class StabilityError(AdjointFlowError):
    """Explicit step size violates the stability bound."""


class NonConvergenceError(AdjointFlowError):
    """Iterative solver stopped above the requested residual.

    Carries ``residual`` (relative) and ``iterations`` actually spent.
    """

    def __init__(self, residual: float, iterations: int, message: str | None = None):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            message
            or f"solver stalled at relative residual {residual:.3e} after {iterations} iterations"
        )


class DivergenceError(AdjointFlowError):
    """Non-finite state detected during explicit time stepping.

    ``step_index`` is the first step at which a non-finite value was seen;
    ``trace`` holds whatever diagnostics rows were completed before that.
    """

    def __init__(self, step_index: int, trace=None, message: str | None = None):
        self.step_index = int(step_index)
        self.trace = trace
        super().__init__(message or f"non-finite state at step {step_index}")


class ScheduleComplianceError(AdjointFlowError):
    """Learning-rate schedule fails the decay conditions required for a run."""


class BoundaryDataError(AdjointFlowError):
    """A field does not carry the boundary values the problem prescribes."""


class ConfigError(AdjointFlowError):
    """Bad experiment configuration (unknown keys, missing keys, bad values)."""


class FitError(AdjointFlowError):
    """A rate fit or ratio bound was requested on unusable data."""
