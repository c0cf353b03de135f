"""Observables: fringe visibility, sweeper boundary, weak-beam displacement, audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (beam_center, convective_velocity, envelope,
                     osmotic_velocity, total_intensity)
from .model import AttenuationMode, beam_weights

__all__ = [
    "VisibilityResult", "BoundaryCurve", "DisplacementStats", "CrossingReport",
    "NoFringeError", "visibility_law", "synthesize_screen", "fringe_visibility",
    "screen_visibility", "osmotic_balance", "sweeper_boundary", "weak_beam_displacement",
    "no_crossing_report", "flux_tv_distance", "flux_boundary", "write_boundary_csv",
]


class NoFringeError(ValueError):
    pass


# ---------------------------------------------------------------- visibility

@dataclass(frozen=True)
class VisibilityResult:
    visibility: float
    i_max: float
    i_min: float
    mode: object = None
    factor: float | None = None


def visibility_law(factor, mode):
    """Ideal fringe contrast: 2a/(1+a) for a chopper, 2 sqrt(a)/(1+a) for an absorber."""
    a = float(factor)
    if AttenuationMode.parse(mode) is AttenuationMode.DETERMINISTIC:
        return 2.0 * a / (1.0 + a)
    return 2.0 * math.sqrt(a) / (1.0 + a)


def synthesize_screen(atten, phi):
    """Intensity vs phase for two beams of equal envelope, mixed per branch."""
    phi = np.asarray(phi, dtype=float)
    out = np.zeros_like(phi)
    for b in beam_weights(atten):
        w1, w2 = b.amplitudes
        out += b.probability * (w1 * w1 + w2 * w2 + 2.0 * w1 * w2 * np.cos(phi))
    return out


def _refine(y, i):
    """Vertex value of the parabola through samples i-1, i, i+1."""
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    curv = y0 - 2.0 * y1 + y2
    if curv == 0.0:
        return y1
    return y1 - (y0 - y2) ** 2 / (8.0 * curv)


def fringe_visibility(screen, coord=None, near=None, mode=None, factor=None):
    """(I_max - I_min)/(I_max + I_min) from one fringe peak and its adjacent valley.

    The peak is the interior local maximum closest to ``near`` (in ``coord``
    units), or the highest one.  The valley is the nearer of the two
    neighbouring local minima.  Both extrema are refined parabolically,
    assuming evenly spaced samples.
    """
    y = np.asarray(screen, dtype=float)
    c = np.arange(y.size, dtype=float) if coord is None else np.asarray(coord, dtype=float)
    inner = np.arange(1, y.size - 1)
    maxima = inner[(y[inner] >= y[inner - 1]) & (y[inner] > y[inner + 1])]
    minima = inner[(y[inner] <= y[inner - 1]) & (y[inner] < y[inner + 1])]
    if maxima.size == 0 or minima.size == 0:
        raise NoFringeError("no fringe found: need an interior maximum and minimum")
    if near is None:
        peak = maxima[np.argmax(y[maxima])]
    else:
        peak = maxima[np.argmin(np.abs(c[maxima] - near))]
    left, right = minima[minima < peak], minima[minima > peak]
    candidates = ([left[-1]] if left.size else []) + ([right[0]] if right.size else [])
    valley = min(candidates, key=lambda j: abs(c[j] - c[peak]))
    i_max = _refine(y, peak)
    # a quadratic through a node can dip below zero by round-off
    i_min = max(_refine(y, valley), 0.0)
    vis = (i_max - i_min) / (i_max + i_min)
    return VisibilityResult(float(vis), float(i_max), float(i_min), mode, factor)


def _closest_approach(scenario):
    b0, b1 = scenario.beams
    g = scenario.grid
    dv = b1.drift - b0.drift
    t = g.t_min if dv == 0.0 else -(b1.center - b0.center) / dv
    return min(max(t, g.t_min), g.t_max)


def _equal_envelope_point(scenario, t):
    p, (b0, b1) = scenario.params, scenario.beams
    c0, c1 = beam_center(b0, t), beam_center(b1, t)
    if c0 == c1:
        return c0
    lo, hi = min(c0, c1), max(c0, c1)
    f = lambda x: math.log(envelope(p, b0, x, t)) - math.log(envelope(p, b1, x, t))
    return _bisect(f, lo, hi, 1e-10)


def screen_visibility(scenario, t=None, fringes=3, samples=4001, normalize=False):
    """Fringe contrast of the simulated screen where the two envelopes are equal.

    ``t`` defaults to the moment the beam centers pass closest to each other.
    The screen spans ``fringes`` local fringe periods on either side.  With
    ``normalize`` the intensity is divided by the incoherent sum of the beam
    densities, removing the envelope from the extrema.
    """
    if t is None:
        t = _closest_approach(scenario)
    p, beams = scenario.params, scenario.beams
    x0 = _equal_envelope_point(scenario, t)
    k = abs(convective_velocity(p, beams[0], x0, t) - convective_velocity(p, beams[1], x0, t))
    k *= p.mass / p.hbar
    if k == 0.0:
        raise NoFringeError("beams have no relative phase gradient at the screen point")
    half = fringes * 2.0 * math.pi / k
    x = np.linspace(x0 - half, x0 + half, samples)
    screen = total_intensity(p, beams, scenario.branches, x, t)
    if normalize:
        inc = sum(b.probability * (b.amplitudes[0] ** 2 * envelope(p, beams[0], x, t) ** 2
                                   + b.amplitudes[1] ** 2 * envelope(p, beams[1], x, t) ** 2)
                  for b in scenario.branches)
        screen = screen / inc
    return fringe_visibility(screen, x, near=x0, mode=scenario.atten.mode,
                             factor=scenario.atten.factor)


# ----------------------------------------------------------------- boundary

@dataclass(frozen=True)
class BoundaryCurve:
    points: list
    slope_estimate: float
    omitted: int = 0

    @property
    def t(self):
        return np.array([p[0] for p in self.points])

    @property
    def x(self):
        return np.array([p[1] for p in self.points])

    def at(self, t):
        for tp, xb in self.points:
            if tp == t:
                return xb
        return None


def osmotic_balance(params, beams, amplitudes, x, t):
    """Density-weighted osmotic flux w1^2 R1^2 u1 + w2^2 R2^2 u2."""
    out = 0.0
    for w, b in zip(amplitudes, beams):
        if w != 0.0:
            out = out + w * w * envelope(params, b, x, t) ** 2 * osmotic_velocity(params, b, x, t)
    return out


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    if flo == 0.0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _two_beam_branch(scenario):
    for b in scenario.branches:
        if b.amplitudes[0] != 0.0 and b.amplitudes[1] != 0.0:
            return b
    return None


def sweeper_boundary(scenario, frames=None, balance=osmotic_balance, tol=1e-8,
                     min_samples=4001):
    """Track where the two beams' osmotic pushes meet, slice by slice.

    Between the strong and the weak beam center, ``balance`` (by default the
    density-weighted osmotic flux) is scanned for the sign change from
    pointing towards the weak beam to pointing towards the strong beam; the
    root is refined by bisection to ``tol``.  The two-beam branch is used
    (the coherent branch, or branch A of a chopper mixture).  Slices without
    such a change are omitted and counted.  ``frames`` may be FieldFrames,
    times, or None for every grid time.
    """
    if frames is None:
        times = scenario.grid.t
    else:
        times = [getattr(f, "t", f) for f in frames]
    branch = _two_beam_branch(scenario)
    params, beams = scenario.params, scenario.beams
    points, omitted = [], 0
    if branch is None:
        return BoundaryCurve([], float("nan"), len(times))
    amps = branch.amplitudes
    strong, weak = beams[scenario.strong], beams[scenario.weak]
    dx = scenario.grid.dx
    for t in times:
        xs, xw = float(beam_center(strong, t)), float(beam_center(weak, t))
        if xs == xw:
            omitted += 1
            continue
        orient = 1.0 if xw > xs else -1.0
        n = max(min_samples, int(abs(xw - xs) / dx) + 1)
        # scan from the strong side towards the weak side
        xg = np.linspace(xs, xw, n)
        g = lambda x: orient * balance(params, beams, amps, x, t)
        s = np.sign(g(xg))
        hits = np.flatnonzero((s[:-1] > 0) & (s[1:] <= 0))
        if hits.size == 0:
            omitted += 1
            continue
        i = hits[0]
        j = i + 1
        if s[j] == 0.0:
            root = float(xg[j])
        else:
            lo, hi = sorted((float(xg[i]), float(xg[j])))
            root = _bisect(lambda x: balance(params, beams, amps, x, t), lo, hi, tol)
        points.append((float(t), root))
    return BoundaryCurve(points, _late_slope(points), omitted)


def _late_slope(points):
    if len(points) < 2:
        return float("nan")
    t = np.array([p[0] for p in points])
    x = np.array([p[1] for p in points])
    late = t >= t[0] + 0.5 * (t[-1] - t[0])
    if late.sum() < 2:
        late = np.ones_like(t, dtype=bool)
    return float(np.polyfit(t[late], x[late], 1)[0])


def flux_boundary(ensemble, branch=None):
    """Dividing line between strong- and weak-seeded trajectories over time.

    Midpoint between the outermost strong trajectory and the innermost weak
    one; no-crossing keeps the two populations on their own sides.
    """
    sc = ensemble.scenario
    br = branch or (_two_beam_branch(sc).name if _two_beam_branch(sc) else None)
    if br is None:
        return BoundaryCurve([], float("nan"), ensemble.t.size)
    strong = ensemble.x[ensemble.select(br, "strong")]
    weak = ensemble.x[ensemble.select(br, "weak")]
    if strong.size == 0 or weak.size == 0:
        return BoundaryCurve([], float("nan"), ensemble.t.size)
    if weak[:, 0].mean() > strong[:, 0].mean():
        xb = 0.5 * (strong.max(axis=0) + weak.min(axis=0))
    else:
        xb = 0.5 * (strong.min(axis=0) + weak.max(axis=0))
    points = list(zip(ensemble.t.tolist(), xb.tolist()))
    return BoundaryCurve(points, _late_slope(points), 0)


def write_boundary_csv(curve, path):
    with open(path, "w", newline="") as fh:
        fh.write("t,x_b\n")
        for t, x in curve.points:
            fh.write(f"{t:.17g},{x:.17g}\n")


# ------------------------------------------------------------- displacement

@dataclass(frozen=True)
class DisplacementStats:
    """Final positions of one seeded population, measured away from the other beam.

    ``displacement`` is (x(t_max) - center_other(t_max)) signed positive in the
    direction the population started in relative to the other beam.
    """

    population: str
    count: int
    mean: float
    quantiles: dict
    mean_position: float
    reference: float


QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


def weak_beam_displacement(ensemble, population="weak", branch=None):
    """Displacement statistics at t_max for trajectories seeded under one beam hump.

    Populations are defined by where trajectories start, not where they end.
    """
    sc = ensemble.scenario
    mask = ensemble.select(branch, population)
    if not mask.any():
        raise ValueError(f"ensemble has no {population!r} trajectories"
                         + (f" in branch {branch!r}" if branch else ""))
    own = sc.strong if population == "strong" else sc.weak
    other = sc.beams[1 - own]
    g = sc.grid
    orient = 1.0 if sc.beams[own].center > other.center else -1.0
    ref = float(beam_center(other, g.t_max))
    final = ensemble.x[mask, -1]
    disp = orient * (final - ref)
    qs = {q: float(np.quantile(disp, q)) for q in QUANTILE_LEVELS}
    return DisplacementStats(population, int(mask.sum()), float(disp.mean()), qs,
                             float(final.mean()), ref)


# ------------------------------------------------------------------- audits

@dataclass
class CrossingReport:
    violations: int
    pairs_checked_per_step: int
    steps: int
    worst: tuple | None = None          # (branch, k, k+1, t, gap)
    listing: list = field(default_factory=list)

    @property
    def ok(self):
        return self.violations == 0


def no_crossing_report(ensemble, max_listing=50):
    """Check ordering of neighbouring trajectories within each branch at every step.

    Trajectories are stored in order of initial position, so checking adjacent
    pairs covers every pair.  Violations are counted and listed, never hidden.
    """
    violations, pairs, worst, listing = 0, 0, None, []
    for b in ensemble.branches:
        idx = np.flatnonzero(ensemble.select(branch=b))
        if idx.size < 2:
            continue
        x = ensemble.x[idx]
        gap = np.diff(x, axis=0)
        pairs += idx.size - 1
        bad = np.argwhere(gap <= 0.0)
        violations += len(bad)
        for k, s in bad[:max_listing]:
            listing.append((b, int(idx[k]), int(idx[k + 1]), float(ensemble.t[s]), float(gap[k, s])))
        if len(bad):
            k, s = np.unravel_index(np.argmin(gap), gap.shape)
            cand = (b, int(idx[k]), int(idx[k + 1]), float(ensemble.t[s]), float(gap[k, s]))
            if worst is None or cand[4] < worst[4]:
                worst = cand
    return CrossingReport(violations, pairs, ensemble.t.size, worst, listing)


def flux_tv_distance(ensemble, bins=50, samples=200001):
    """Total-variation distance between the weighted endpoint histogram and P(x, t_max).

    Bins span the occupied range of endpoints; the density is integrated over
    each bin by the trapezoid rule on a fine grid.  Both sides are normalised
    to unit mass on that range.
    """
    sc = ensemble.scenario
    final = ensemble.x[:, -1]
    lo, hi = float(final.min()), float(final.max())
    edges = np.linspace(lo, hi, bins + 1)
    hist, _ = np.histogram(final, bins=edges, weights=ensemble.weight)
    hist = hist / hist.sum()
    x = np.linspace(lo, hi, samples)
    p = total_intensity(sc.params, sc.beams, sc.branches, x, sc.grid.t_max)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(x))])
    mass = np.diff(np.interp(edges, x, cum))
    mass = mass / mass.sum()
    return float(0.5 * np.abs(hist - mass).sum())
