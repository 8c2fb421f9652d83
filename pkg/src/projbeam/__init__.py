"""Pareto-optimal beamforming for multicell MISO interference channels
via distributed projection algorithms."""

__version__ = "0.1.0"

from .model import (
    BeamformerSet,
    Scenario,
    check_power,
    compute_rates,
    compute_sinr,
    is_pareto_dominated,
    load_scenario,
    random_scenario,
    save_scenario,
)
from .transform import (
    FeasibilityTarget,
    LiftedInstance,
    RateProfile,
    build_lifted,
    make_betas,
)

__all__ = [
    "__version__",
    "BeamformerSet",
    "Scenario",
    "check_power",
    "compute_rates",
    "compute_sinr",
    "is_pareto_dominated",
    "load_scenario",
    "random_scenario",
    "save_scenario",
    "FeasibilityTarget",
    "LiftedInstance",
    "RateProfile",
    "build_lifted",
    "make_betas",
]
