"""Flat ``key = value`` scenario files.

Example::

    # reference setup, weak right beam
    hbar = 1.0
    mass = 1.0
    beam1.center = -5
    beam1.sigma0 = 1.0
    beam1.drift = 0.15
    beam2.center = 5
    beam2.drift = -0.15
    attenuation.factor = 1e-4
    attenuation.mode = stochastic      # or deterministic / det / stoch
    attenuation.which_beam = 1         # 0 = beam1 (left), 1 = beam2 (right)
    grid.x_min = -120
    grid.nt = 401
    trajectories.n = 400

Unset keys keep the defaults of :func:`sweeper.model.default_scenario`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import (AttenuationConfig, AttenuationMode, Grid, PhysicalParams,
                    default_scenario, validate_scenario)


class ConfigError(ValueError):
    def __init__(self, message, path=None, line=None):
        self.path, self.line, self.message = path, line, message
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


def _factors(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text}")
    return int(value)


_SCHEMA = {
    "hbar": float, "mass": float,
    "attenuation.factor": float, "attenuation.mode": AttenuationMode.parse,
    "attenuation.which_beam": _int,
    "grid.x_min": float, "grid.x_max": float, "grid.nx": _int,
    "grid.t_min": float, "grid.t_max": float, "grid.nt": _int,
    "fields.p_floor": float,
    "trajectories.n": _int, "trajectories.seed": _int,
    "output.t_stride": _int, "output.x_stride": _int,
    "sweep.factors": _factors,
}
for _b in ("beam1", "beam2"):
    for _k in ("center", "sigma0", "drift", "forward_speed"):
        _SCHEMA[f"{_b}.{_k}"] = float


@dataclass(frozen=True)
class RunOptions:
    n_trajectories: int = 400
    seed: int | None = None
    t_stride: int = 10
    x_stride: int = 1
    sweep_factors: tuple = (1.0, 1e-2, 1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class LoadedConfig:
    scenario: object
    options: RunOptions
    values: dict = field(default_factory=dict)


def parse_config(text, path=None):
    """Parse ``key = value`` lines into a dict of typed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        try:
            values[key] = _SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", path, lineno) from None
    return values


def build(values, factor=None, mode=None, n_trajectories=None):
    """Turn parsed values plus command-line overrides into a scenario and options."""
    base = default_scenario()
    params = PhysicalParams(values.get("hbar", base.params.hbar), values.get("mass", base.params.mass))
    beams = []
    for i, tag in enumerate(("beam1", "beam2")):
        b = base.beams[i]
        beams.append(replace(b, **{k: values[f"{tag}.{k}"]
                                   for k in ("center", "sigma0", "drift", "forward_speed")
                                   if f"{tag}.{k}" in values}))
    atten = AttenuationConfig(
        factor=values.get("attenuation.factor", base.atten.factor) if factor is None else factor,
        mode=values.get("attenuation.mode", base.atten.mode) if mode is None
        else AttenuationMode.parse(mode),
        which_beam=values.get("attenuation.which_beam", base.atten.which_beam),
    )
    grid = replace(Grid(), **{k.split(".", 1)[1]: v for k, v in values.items()
                              if k.startswith("grid.")})
    scenario = validate_scenario(params, beams, atten, grid,
                                 p_floor=values.get("fields.p_floor", base.p_floor))
    defaults = RunOptions()
    options = RunOptions(
        n_trajectories=n_trajectories or values.get("trajectories.n", defaults.n_trajectories),
        seed=values.get("trajectories.seed"),
        t_stride=values.get("output.t_stride", defaults.t_stride),
        x_stride=values.get("output.x_stride", defaults.x_stride),
        sweep_factors=values.get("sweep.factors", defaults.sweep_factors),
    )
    return LoadedConfig(scenario, options, values)


def load(path=None, **overrides):
    if path is None:
        return build({}, **overrides)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return build(parse_config(text, path), **overrides)
