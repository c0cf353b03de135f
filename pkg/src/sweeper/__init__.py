"""Two-beam flux-map simulator for strongly attenuated double-slit beams."""

__version__ = "0.1.0"

from .model import (AttenuationConfig, AttenuationMode, Grid, PhysicalParams, ScenarioError,
                    SlitBeam, ValidatedScenario, default_scenario, validate_scenario)
from .fields import sample_frame, total_intensity, total_velocity
from .trajectories import integrate, run_ensemble, seed_ensemble
