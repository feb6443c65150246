"""Immersion-and-invariance orbital stabilisation of two-link underactuated mechanical systems.

Build a model (:mod:`mechmodel`), synthesise a controller (:mod:`synthesis`),
simulate the closed loop (:mod:`simcore`) and certify it (:mod:`verify`).
"""

from .config import ScenarioConfig, build_scenario, demo_config
from .errors import (
    AnalysisError,
    AssumptionViolation,
    ConfigError,
    DegenerateOrbitError,
    DomainError,
    IIOrbitError,
    SingularityError,
    StepUnderflowError,
    SynthesisError,
)
from .integrators import IntegratorConfig
from .mechmodel import MechanicalSystem, default_furuta, default_pendubot, furuta_system, pendubot_system
from .simcore import Trajectory, extract_steady_orbit, simulate_closed_loop
from .synthesis import SynthesisProfile, furuta_profile, pendubot_profile
from .verify import CertReport, certify

__version__ = "0.1.0"
