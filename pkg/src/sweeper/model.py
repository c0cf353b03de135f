"""Scenario definition: constants, slit beams, attenuation and the sampling grid.

All quantities are dimensionless by default (hbar = m = 1).  Beams are indexed
0 (left slit) and 1 (right slit); in output files they appear as ``R1``/``R2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np


class ScenarioError(ValueError):
    """Raised when a scenario violates one or more invariants.

    ``problems`` holds ``(field_name, message)`` pairs, one per violation.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"{name}: {msg}" for name, msg in self.problems)
        super().__init__(text)


class AttenuationMode(enum.Enum):
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"det": cls.DETERMINISTIC, "deterministic": cls.DETERMINISTIC,
                   "chopper": cls.DETERMINISTIC, "stoch": cls.STOCHASTIC,
                   "stochastic": cls.STOCHASTIC, "absorber": cls.STOCHASTIC}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown attenuation mode {value!r}") from None


@dataclass(frozen=True)
class PhysicalParams:
    hbar: float = 1.0
    mass: float = 1.0


@dataclass(frozen=True)
class SlitBeam:
    center: float
    sigma0: float = 1.0
    drift: float = 0.0
    # only used to label the propagation axis of outputs (z = forward_speed * t)
    forward_speed: float = 1.0


@dataclass(frozen=True)
class AttenuationConfig:
    factor: float = 1.0
    mode: AttenuationMode = AttenuationMode.STOCHASTIC
    which_beam: int = 1

    @classmethod
    def from_chopper(cls, t_open, t_closed, which_beam=1):
        """Deterministic attenuation from a chopper's open/closed times."""
        return cls(t_open / (t_open + t_closed), AttenuationMode.DETERMINISTIC, which_beam)

    @classmethod
    def from_absorber(cls, intensity, intensity0, which_beam=1):
        """Stochastic attenuation from transmitted vs. unattenuated intensity."""
        return cls(intensity / intensity0, AttenuationMode.STOCHASTIC, which_beam)


@dataclass(frozen=True)
class Grid:
    x_min: float = -120.0
    x_max: float = 120.0
    nx: int = 1201
    t_min: float = 0.0
    t_max: float = 40.0
    nt: int = 401

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self):
        return (self.t_max - self.t_min) / (self.nt - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def t(self):
        return np.linspace(self.t_min, self.t_max, self.nt)


@dataclass(frozen=True)
class Branch:
    """One coherent configuration of the two beams.

    ``amplitudes`` are the beam amplitude weights (w1, w2); ``probability`` is
    the incoherent mixing weight of the branch.
    """

    name: str
    probability: float
    amplitudes: tuple


@dataclass(frozen=True)
class ValidatedScenario:
    params: PhysicalParams
    beams: tuple
    atten: AttenuationConfig
    grid: Grid
    branches: tuple = field(compare=True)
    p_floor: float = 1e-30

    @property
    def strong(self):
        return 1 - self.atten.which_beam

    @property
    def weak(self):
        return self.atten.which_beam

    def with_attenuation(self, factor=None, mode=None):
        atten = self.atten
        if factor is not None:
            atten = replace(atten, factor=float(factor))
        if mode is not None:
            atten = replace(atten, mode=AttenuationMode.parse(mode))
        return validate_scenario(self.params, self.beams, atten, self.grid, p_floor=self.p_floor)

    def with_grid(self, **changes):
        return validate_scenario(self.params, self.beams, self.atten,
                                 replace(self.grid, **changes), p_floor=self.p_floor)

    def with_beams(self, beams):
        return validate_scenario(self.params, tuple(beams), self.atten, self.grid,
                                 p_floor=self.p_floor)

    def mirrored(self):
        """Reflect x -> -x: beams swap slots, centers and drifts change sign."""
        b0, b1 = self.beams
        flip = lambda b: replace(b, center=-b.center, drift=-b.drift)
        atten = replace(self.atten, which_beam=1 - self.atten.which_beam)
        g = self.grid
        grid = replace(g, x_min=-g.x_max, x_max=-g.x_min)
        return validate_scenario(self.params, (flip(b1), flip(b0)), atten, grid,
                                 p_floor=self.p_floor)


def beam_weights(atten):
    """Coherent branches reproducing the attenuation law of ``atten``.

    Stochastic attenuation reduces the amplitude of the attenuated beam by
    sqrt(a): one coherent branch, cross term ~ sqrt(a).  Deterministic
    attenuation is an incoherent mixture: with probability a both beams pass
    at full amplitude (branch "A"), otherwise only the unattenuated beam
    (branch "B"), so the cross term scales with a.
    Branches with zero probability are dropped.
    """
    a = float(atten.factor)
    weak = atten.which_beam

    def amps(w_weak):
        w = [1.0, 1.0]
        w[weak] = w_weak
        return tuple(w)

    if atten.mode is AttenuationMode.STOCHASTIC:
        return (Branch("coherent", 1.0, amps(math.sqrt(a))),)
    branches = []
    if a > 0.0:
        branches.append(Branch("A", a, amps(1.0)))
    if a < 1.0:
        branches.append(Branch("B", 1.0 - a, amps(0.0)))
    return tuple(branches)


def _finite(x):
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def validate_scenario(params, beams, atten, grid, p_floor=1e-30):
    """Check every invariant and return an immutable :class:`ValidatedScenario`.

    All violations are collected; a :class:`ScenarioError` lists each one with
    its field name.  Nothing is clamped.
    """
    problems = []
    if not (_finite(params.hbar) and params.hbar > 0):
        problems.append(("hbar", "must be > 0"))
    if not (_finite(params.mass) and params.mass > 0):
        problems.append(("mass", "must be > 0"))

    beams = tuple(beams)
    if len(beams) != 2:
        problems.append(("beams", f"expected 2 beams, got {len(beams)}"))
    for i, b in enumerate(beams):
        tag = f"beam{i + 1}"
        if not _finite(b.center):
            problems.append((f"{tag}.center", "must be finite"))
        if not (_finite(b.sigma0) and b.sigma0 > 0):
            problems.append((f"{tag}.sigma0", "must be > 0"))
        if not _finite(b.drift):
            problems.append((f"{tag}.drift", "must be finite"))
        if not _finite(b.forward_speed):
            problems.append((f"{tag}.forward_speed", "must be finite"))
    if len(beams) == 2 and beams[0].center == beams[1].center:
        problems.append(("beam2.center", "coincident slit centers"))

    if not (_finite(atten.factor) and 0.0 <= atten.factor <= 1.0):
        problems.append(("attenuation.factor", "factor out of [0,1]"))
    if not isinstance(atten.mode, AttenuationMode):
        problems.append(("attenuation.mode", f"unknown mode {atten.mode!r}"))
    if atten.which_beam not in (0, 1):
        problems.append(("attenuation.which_beam", "must be 0 or 1"))

    if not (_finite(grid.x_min) and _finite(grid.x_max) and grid.x_min < grid.x_max):
        problems.append(("grid.x_min", "x_min must be < x_max"))
    if not (isinstance(grid.nx, (int, np.integer)) and grid.nx >= 2):
        problems.append(("grid.nx", "must be an integer >= 2"))
    if not (_finite(grid.t_min) and grid.t_min >= 0):
        problems.append(("grid.t_min", "must be >= 0"))
    if not (_finite(grid.t_max) and _finite(grid.t_min) and grid.t_min < grid.t_max):
        problems.append(("grid.t_max", "t_min must be < t_max"))
    if not (isinstance(grid.nt, (int, np.integer)) and grid.nt >= 2):
        problems.append(("grid.nt", "must be an integer >= 2"))

    if not (_finite(p_floor) and p_floor >= 0):
        problems.append(("p_floor", "must be >= 0"))

    if problems:
        raise ScenarioError(problems)

    return ValidatedScenario(
        params=params,
        beams=beams,
        atten=atten,
        grid=grid,
        branches=beam_weights(atten),
        p_floor=float(p_floor),
    )


def default_scenario(factor=1e-4, mode=AttenuationMode.STOCHASTIC, **grid_changes):
    """The reference two-slit setup used by the CLI and the test-suite.

    Gaussian beams of unit width at x = -5 and x = +5 drifting towards the
    axis at 0.15; the right beam is attenuated.  The centers meet at t = 100/3,
    well inside the default time range.
    """
    beams = (SlitBeam(center=-5.0, sigma0=1.0, drift=0.15),
             SlitBeam(center=5.0, sigma0=1.0, drift=-0.15))
    atten = AttenuationConfig(factor, AttenuationMode.parse(mode), which_beam=1)
    return validate_scenario(PhysicalParams(), beams, atten, Grid(**grid_changes))
