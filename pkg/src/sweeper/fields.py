"""Closed-form two-beam fields: envelopes, phases, intensity and velocities.

Each beam is a freely dispersing Gaussian.  Only its real amplitude R_i and
phase S_i are ever evaluated; the total density and current are assembled from
them directly, including the cross (interference) terms:

    P = w1^2 R1^2 + w2^2 R2^2 + 2 w1 w2 R1 R2 cos(phi)
    J = w1^2 R1^2 v1 + w2^2 R2^2 v2
        + w1 w2 R1 R2 (v1 + v2) cos(phi) - sin(phi) * J_ent

with phi = (S1 - S2)/hbar and J_ent = w1 w2 (hbar/m)(R1 dR2 - R2 dR1).
All spatial derivatives are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .model import AttenuationConfig, Branch, beam_weights

__all__ = [
    "FieldFrame", "Velocity", "sigma_t", "spread_rate", "beam_center", "envelope",
    "envelope_gradient", "phase", "phase_difference", "osmotic_velocity",
    "convective_velocity", "entangling_current", "branch_intensity",
    "branch_current", "branch_velocity", "total_intensity", "total_velocity",
    "sample_frame", "write_frames_csv", "FRAME_HEADER",
]

FRAME_HEADER = "t,x,P,phi,R1,R2,v_tot,u1,u2,J_ent"


def _spread_const(params, beam):
    # hbar / (2 m sigma0^2): inverse dispersion time of the beam
    return params.hbar / (2.0 * params.mass * beam.sigma0 ** 2)


def sigma_t(params, beam, t):
    """Envelope width sigma0 * sqrt(1 + (hbar t / 2 m sigma0^2)^2)."""
    k = _spread_const(params, beam)
    return beam.sigma0 * np.sqrt(1.0 + (k * np.asarray(t, dtype=float)) ** 2)


def spread_rate(params, beam, t):
    """Relative spreading rate (d sigma_t / dt) / sigma_t."""
    k = _spread_const(params, beam)
    t = np.asarray(t, dtype=float)
    return t * k ** 2 / (1.0 + (k * t) ** 2)


def beam_center(beam, t):
    return beam.center + beam.drift * np.asarray(t, dtype=float)


def _log_envelope(params, beam, x, t):
    s = sigma_t(params, beam, t)
    y = np.asarray(x, dtype=float) - beam_center(beam, t)
    return -0.25 * np.log(2.0 * np.pi * s ** 2) - y ** 2 / (4.0 * s ** 2)


def envelope(params, beam, x, t):
    """Normalized Gaussian amplitude R(x, t); R**2 integrates to one."""
    return np.exp(_log_envelope(params, beam, x, t))


def envelope_gradient(params, beam, x, t):
    s = sigma_t(params, beam, t)
    y = np.asarray(x, dtype=float) - beam_center(beam, t)
    return -y / (2.0 * s ** 2) * envelope(params, beam, x, t)


def phase(params, beam, x, t):
    """Phase S(x, t) of a dispersing Gaussian (units of action).

    The global constant follows the usual convention psi(x, 0) = R exp(i m v (x - c) / hbar).
    """
    m, hbar = params.mass, params.hbar
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    y = x - beam_center(beam, t)
    k = _spread_const(params, beam)
    return (m * beam.drift * (x - beam.center)
            + 0.5 * m * y ** 2 * spread_rate(params, beam, t)
            - 0.5 * hbar * np.arctan(k * t)
            - 0.5 * m * beam.drift ** 2 * t)


def phase_difference(params, beams, x, t):
    """phi = (S1 - S2) / hbar in radians."""
    b1, b2 = beams
    return (phase(params, b1, x, t) - phase(params, b2, x, t)) / params.hbar


def osmotic_velocity(params, beam, x, t):
    """u = -(hbar/2m) grad(R^2)/R^2, directed away from the beam center."""
    s = sigma_t(params, beam, t)
    y = np.asarray(x, dtype=float) - beam_center(beam, t)
    return params.hbar / (2.0 * params.mass) * y / s ** 2


def convective_velocity(params, beam, x, t):
    """v = grad(S)/m = drift + (x - center(t)) * spread_rate."""
    y = np.asarray(x, dtype=float) - beam_center(beam, t)
    return beam.drift + y * spread_rate(params, beam, t)


def entangling_current(params, beams, weights, x, t):
    """w1 w2 (hbar/m) (R1 grad R2 - R2 grad R1), before the sin(phi) factor."""
    b1, b2 = beams
    w1, w2 = weights
    if w1 == 0.0 or w2 == 0.0:
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
    r1, r2 = envelope(params, b1, x, t), envelope(params, b2, x, t)
    g1 = envelope_gradient(params, b1, x, t)
    g2 = envelope_gradient(params, b2, x, t)
    return w1 * w2 * params.hbar / params.mass * (r1 * g2 - r2 * g1)


def _branches(atten):
    if isinstance(atten, AttenuationConfig):
        return beam_weights(atten)
    if isinstance(atten, Branch):
        return (atten,)
    return tuple(atten)


def branch_intensity(params, beams, weights, x, t):
    """Density of one coherent configuration with amplitude weights (w1, w2)."""
    b1, b2 = beams
    w1, w2 = weights
    r1, r2 = w1 * envelope(params, b1, x, t), w2 * envelope(params, b2, x, t)
    p = r1 ** 2 + r2 ** 2
    if w1 != 0.0 and w2 != 0.0:
        p = p + 2.0 * r1 * r2 * np.cos(phase_difference(params, beams, x, t))
    # the exact expression is >= 0; this only removes negative round-off at nodes
    return np.maximum(p, 0.0)


def _scaled_terms(params, beams, weights, x, t):
    """Density and current divided by a common factor exp(2M), plus M.

    Working relative to the larger weighted envelope keeps J/P accurate where
    both densities underflow.
    """
    b1, b2 = beams
    w1, w2 = weights
    x = np.asarray(x, dtype=float)
    v1, v2 = convective_velocity(params, b1, x, t), convective_velocity(params, b2, x, t)
    with np.errstate(divide="ignore"):
        l1 = _log_envelope(params, b1, x, t) + np.log(abs(w1))
        l2 = _log_envelope(params, b2, x, t) + np.log(abs(w2))
    top = np.maximum(l1, l2)
    r1, r2 = np.exp(l1 - top), np.copysign(np.exp(l2 - top), w1 * w2)
    p = r1 ** 2 + r2 ** 2
    j = r1 ** 2 * v1 + r2 ** 2 * v2
    if w1 != 0.0 and w2 != 0.0:
        phi = phase_difference(params, beams, x, t)
        u1, u2 = osmotic_velocity(params, b1, x, t), osmotic_velocity(params, b2, x, t)
        cos, sin = np.cos(phi), np.sin(phi)
        p = p + 2.0 * r1 * r2 * cos
        # r1 r2 (u1 - u2) is the scaled entangling current
        j = j + r1 * r2 * ((v1 + v2) * cos - (u1 - u2) * sin)
    return np.maximum(p, 0.0), j, top


def branch_current(params, beams, weights, x, t):
    """Probability current J of one coherent configuration."""
    _, j, top = _scaled_terms(params, beams, weights, x, t)
    return j * np.exp(2.0 * top)


class Velocity(NamedTuple):
    v: np.ndarray
    starved: np.ndarray


def branch_velocity(params, beams, weights, x, t, p_floor=1e-30):
    """Total velocity J/P of one coherent configuration.

    ``starved`` marks points with P below ``p_floor``; their velocity is still
    returned where the ratio is defined and is NaN at exact nodes.
    """
    p_s, j_s, top = _scaled_terms(params, beams, weights, x, t)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = np.where(p_s > 0.0, j_s / p_s, np.nan)
        p = p_s * np.exp(2.0 * top)
    starved = ~(p >= p_floor) | ~np.isfinite(v)
    return Velocity(v, starved)


def total_intensity(params, beams, atten, x, t):
    """Screen intensity, mixing incoherent branches by probability."""
    return sum(b.probability * branch_intensity(params, beams, b.amplitudes, x, t)
               for b in _branches(atten))


def total_velocity(params, beams, atten, x, t, p_floor=1e-30):
    """Velocity field of the scenario.

    For a single coherent branch this is J/P.  For the deterministic mixture it
    is the mean drift of the mixture, sum(p_b J_b) / sum(p_b P_b); trajectory
    work uses :func:`branch_velocity` per branch instead.
    """
    branches = _branches(atten)
    if len(branches) == 1:
        return branch_velocity(params, beams, branches[0].amplitudes, x, t, p_floor)
    p = sum(b.probability * branch_intensity(params, beams, b.amplitudes, x, t)
            for b in branches)
    j = sum(b.probability * branch_current(params, beams, b.amplitudes, x, t)
            for b in branches)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(p > 0.0, j / p, np.nan)
    return Velocity(v, ~(p >= p_floor) | ~np.isfinite(v))


@dataclass(frozen=True)
class FieldFrame:
    t: float
    x: np.ndarray
    R: np.ndarray          # shape (2, nx), unweighted envelopes
    phi: np.ndarray
    P: np.ndarray
    v_conv: np.ndarray     # shape (2, nx)
    u_osm: np.ndarray      # shape (2, nx)
    J_ent: np.ndarray
    v_tot: np.ndarray
    starved: np.ndarray
    branch_P: dict = field(default_factory=dict)
    branch_v: dict = field(default_factory=dict)
    branch_J_ent: dict = field(default_factory=dict)

    def for_branch(self, name):
        """The frame of one coherent branch alone (P, v_tot, J_ent unmixed)."""
        v, starved = self.branch_v[name]
        return replace(self, P=self.branch_P[name], v_tot=v, starved=starved,
                       J_ent=self.branch_J_ent[name])

    def rows(self):
        """Columns in CSV order (see FRAME_HEADER)."""
        n = self.x.size
        return np.column_stack([np.full(n, self.t), self.x, self.P, self.phi,
                                self.R[0], self.R[1], self.v_tot,
                                self.u_osm[0], self.u_osm[1], self.J_ent])


def sample_frame(scenario, t):
    """Evaluate every field quantity on the scenario's x grid at time ``t``."""
    g = scenario.grid
    if not (g.t_min <= t <= g.t_max):
        raise ValueError(f"t={t} outside grid time range [{g.t_min}, {g.t_max}]")
    params, beams = scenario.params, scenario.beams
    x = g.x
    R = np.stack([envelope(params, b, x, t) for b in beams])
    v_conv = np.stack([convective_velocity(params, b, x, t) for b in beams])
    u_osm = np.stack([osmotic_velocity(params, b, x, t) for b in beams])
    phi = phase_difference(params, beams, x, t)

    branch_P, branch_v, branch_J = {}, {}, {}
    J_ent = np.zeros_like(x)
    for b in scenario.branches:
        branch_P[b.name] = branch_intensity(params, beams, b.amplitudes, x, t)
        branch_v[b.name] = branch_velocity(params, beams, b.amplitudes, x, t, scenario.p_floor)
        branch_J[b.name] = entangling_current(params, beams, b.amplitudes, x, t)
        J_ent = J_ent + b.probability * branch_J[b.name]
    P = sum(b.probability * branch_P[b.name] for b in scenario.branches)
    if len(scenario.branches) == 1:
        v_tot, starved = branch_v[scenario.branches[0].name]
    else:
        v_tot, starved = total_velocity(params, beams, scenario.branches, x, t, scenario.p_floor)
    return FieldFrame(float(t), x, R, phi, P, v_conv, u_osm, J_ent, v_tot, starved,
                      branch_P, branch_v, branch_J)


def write_frames_csv(frames, path, x_stride=1):
    """Write frames as CSV rows ``t,x,P,phi,R1,R2,v_tot,u1,u2,J_ent``."""
    with open(path, "w", newline="") as fh:
        fh.write(FRAME_HEADER + "\n")
        for fr in frames:
            np.savetxt(fh, fr.rows()[::x_stride], fmt="%.17g", delimiter=",")
