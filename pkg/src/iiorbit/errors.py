"""Exception hierarchy shared by all modules."""

from __future__ import annotations

import numpy as np


class IIOrbitError(Exception):
    """Base class for all package errors."""


class DomainError(IIOrbitError, ValueError):
    """Non-finite or out-of-domain input."""


class SynthesisError(IIOrbitError, ValueError):
    """The chosen K / s_frak pair does not define a valid controller."""


class AssumptionViolation(SynthesisError):
    """One of the standing assumptions (A2, A3) fails on the operating interval."""


class SingularityError(IIOrbitError, ArithmeticError):
    """|s_frak(x1)| fell below the singularity threshold; the control law is undefined."""

    def __init__(self, message: str, x1: float | None = None):
        super().__init__(message)
        self.x1 = x1


class StepUnderflowError(IIOrbitError, RuntimeError):
    """Adaptive step size collapsed; carries the last accepted state."""

    def __init__(self, message: str, t: float, state: np.ndarray):
        super().__init__(message)
        self.t = t
        self.state = np.array(state, copy=True)
        self.partial = None  # accepted steps up to the failure, when available


class AnalysisError(IIOrbitError, ValueError):
    """Post-processing could not be performed (e.g. too few section crossings)."""


class DegenerateOrbitError(AnalysisError):
    """Initial condition sits at an equilibrium: the orbit is a point."""


class ConfigError(IIOrbitError, ValueError):
    """Unparseable or invalid scenario configuration."""
