"""Compiled inner loop for trajectory integration.

Scalar re-statement of :func:`sweeper.fields.branch_velocity` plus the
adaptive RK4 driver.  Falls back to plain Python when numba is unavailable.
"""

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True)
def velocity(x, t, hbar, m, centers, sigmas, drifts, amps, floor):
    """Return (v, starved) for one point of one coherent branch."""
    logr0 = -np.inf
    logr1 = -np.inf
    v0 = v1 = u0 = u1 = s_0 = s_1 = 0.0
    for i in range(2):
        k = hbar / (2.0 * m * sigmas[i] ** 2)
        kt2 = (k * t) ** 2
        s2 = sigmas[i] ** 2 * (1.0 + kt2)
        rate = t * k * k / (1.0 + kt2)
        y = x - (centers[i] + drifts[i] * t)
        lr = -math.inf
        if amps[i] != 0.0:
            lr = -0.25 * math.log(TWO_PI * s2) - y * y / (4.0 * s2) + math.log(abs(amps[i]))
        v = drifts[i] + y * rate
        u = hbar / (2.0 * m) * y / s2
        s = (m * drifts[i] * (x - centers[i]) + 0.5 * m * y * y * rate
             - 0.5 * hbar * math.atan(k * t) - 0.5 * m * drifts[i] ** 2 * t)
        if i == 0:
            logr0, v0, u0, s_0 = lr, v, u, s
        else:
            logr1, v1, u1, s_1 = lr, v, u, s
    top = max(logr0, logr1)
    r0 = math.exp(logr0 - top)
    r1 = math.exp(logr1 - top)
    if amps[0] * amps[1] < 0.0:
        r1 = -r1
    p = r0 * r0 + r1 * r1
    j = r0 * r0 * v0 + r1 * r1 * v1
    if amps[0] != 0.0 and amps[1] != 0.0:
        phi = (s_0 - s_1) / hbar
        c = math.cos(phi)
        sn = math.sin(phi)
        p += 2.0 * r0 * r1 * c
        j += r0 * r1 * ((v0 + v1) * c - (u0 - u1) * sn)
    if p < 0.0:
        p = 0.0
    if p > 0.0:
        v = j / p
    else:
        v = math.nan
    dens = p * math.exp(2.0 * top)
    starved = not (dens >= floor) or not math.isfinite(v)
    return v, starved


@njit(cache=True, nogil=True)
def _rk4(x, t, h, hbar, m, centers, sigmas, drifts, amps, floor):
    k1, b1 = velocity(x, t, hbar, m, centers, sigmas, drifts, amps, floor)
    k2, b2 = velocity(x + 0.5 * h * k1, t + 0.5 * h, hbar, m, centers, sigmas, drifts, amps, floor)
    k3, b3 = velocity(x + 0.5 * h * k2, t + 0.5 * h, hbar, m, centers, sigmas, drifts, amps, floor)
    k4, b4 = velocity(x + h * k3, t + h, hbar, m, centers, sigmas, drifts, amps, floor)
    slope = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    bad = b1 or b2 or b3 or b4 or not math.isfinite(slope)
    return x + h * slope, bad


@njit(cache=True, nogil=True)
def integrate_block(x0, times, hbar, m, centers, sigmas, drifts, amps, floor,
                    rate, min_fraction, xs, flags):
    """Fill ``xs``/``flags`` (n, nt) for trajectories starting at ``x0``.

    Inside each grid interval every trajectory takes RK4 sub-steps h chosen
    by step doubling: a sub-step is accepted when the full step and two half
    steps agree to rate*h (Richardson estimate), and the corrected two-half
    value is kept.  A sub-step touching a starved point is replaced by
    ballistic motion at the last good velocity and flagged.
    """
    eps = 2.220446049250313e-16
    nt = times.size
    for n in range(x0.size):
        x = x0[n]
        xs[n, 0] = x
        v_last, bad0 = velocity(x, times[0], hbar, m, centers, sigmas, drifts, amps, floor)
        flags[n, 0] = bad0
        if not math.isfinite(v_last):
            v_last = 0.0
        h = times[1] - times[0]
        for k in range(nt - 1):
            t0 = times[k]
            t1 = times[k + 1]
            span = t1 - t0
            h_min = span * min_fraction
            if h > span:
                h = span
            t = t0
            starved = False
            while t < t1:
                remaining = t1 - t
                hh = min(h, remaining)
                last = hh >= remaining
                full, bf = _rk4(x, t, hh, hbar, m, centers, sigmas, drifts, amps, floor)
                mid, ba = _rk4(x, t, 0.5 * hh, hbar, m, centers, sigmas, drifts, amps, floor)
                half, bb = _rk4(mid, t + 0.5 * hh, 0.5 * hh, hbar, m, centers, sigmas, drifts,
                                amps, floor)
                bad = bf or ba or bb
                err = abs(half - full) / 15.0
                tol = rate * hh + 8.0 * eps * max(abs(x), 1.0)
                if bad or err <= tol or hh <= h_min:
                    if bad:
                        x_new = x + hh * v_last
                        starved = True
                    else:
                        x_new = half + (half - full) / 15.0
                        v_last = (x_new - x) / hh
                    x = x_new
                    t = t1 if last else t + hh
                    accepted = True
                else:
                    accepted = False
                grow = 1.0
                if not bad:
                    if err > 0.0:
                        grow = min(4.0, max(0.2, 0.9 * (tol / err) ** 0.2))
                    else:
                        grow = 4.0
                # a step cut short only to land on t1 must not shrink the next one
                if not (accepted and last and grow >= 1.0):
                    h = max(hh * grow, h_min)
            xs[n, k + 1] = x
            flags[n, k + 1] = starved
