"""Acceptance criteria, one test each, with the stated tolerances and time limits.

Run alone with ``python3 -m pytest tests/test_acceptance.py -v -s`` (or
``python3 tests/test_acceptance.py``); every criterion prints one PASS/FAIL line.
"""

import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import oracle  # noqa: E402
from conftest import single_beam  # noqa: E402
from sweeper import cli  # noqa: E402
from sweeper.analysis import (fringe_visibility, flux_tv_distance, no_crossing_report,  # noqa: E402
                              screen_visibility, sweeper_boundary, synthesize_screen,
                              visibility_law, weak_beam_displacement)
from sweeper.fields import (beam_center, branch_intensity, branch_velocity, sigma_t,  # noqa: E402
                            total_intensity)
from sweeper.model import (AttenuationConfig, AttenuationMode, Grid, PhysicalParams,  # noqa: E402
                           SlitBeam, default_scenario, validate_scenario)
from sweeper.trajectories import integrate, run_ensemble  # noqa: E402

DET, STOCH = AttenuationMode.DETERMINISTIC, AttenuationMode.STOCHASTIC


class Criterion:
    """Times a criterion and prints its verdict whatever happens."""

    def __init__(self, number, title, limit, capsys):
        self.number, self.title, self.limit, self.capsys = number, title, limit, capsys
        self.details = []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, kind, exc, tb):
        elapsed = time.perf_counter() - self.t0
        over = self.limit is not None and elapsed >= self.limit
        ok = kind is None and not over
        verdict = "PASS" if ok else "FAIL"
        limit = f" (limit {self.limit:g} s)" if self.limit else ""
        why = ""
        if kind is not None:
            why = f" [{kind.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}]"
        elif over:
            why = " [time limit exceeded]"
        with self.capsys.disabled():
            print(f"\nCRITERION {self.number} {verdict}: {self.title}; "
                  f"{'; '.join(self.details)}; {elapsed:.2f} s{limit}{why}")
        if kind is None and over:
            pytest.fail(f"criterion {self.number} took {elapsed:.2f} s >= {self.limit} s")
        return False


def _far_field(a, mode):
    # slits far apart with fast opposite drifts: fringes much finer than the envelope
    beams = (SlitBeam(-5000.0, 1.0, 50.0), SlitBeam(5000.0, 1.0, -50.0))
    return validate_scenario(PhysicalParams(), beams, AttenuationConfig(a, mode),
                             Grid(-10000.0, 10000.0, 101, 0.0, 120.0, 13))


def test_criterion_1_visibility_laws(capsys):
    with Criterion(1, "visibility laws", 1.0, capsys) as c:
        phi = np.linspace(-3 * np.pi, 3 * np.pi, 6001)
        worst_ideal = worst_sim = 0.0
        for mode in (DET, STOCH):
            for a in (1.0, 0.25, 1e-2, 1e-4):
                screen = synthesize_screen(AttenuationConfig(a, mode), phi)
                v = fringe_visibility(screen, phi).visibility
                worst_ideal = max(worst_ideal, abs(v - visibility_law(a, mode)) / visibility_law(a, mode))
            for a in (1.0, 0.25, 0.1, 1e-2, 1e-4):
                v = screen_visibility(_far_field(a, mode)).visibility
                worst_sim = max(worst_sim, abs(v - visibility_law(a, mode)) / visibility_law(a, mode))
        c.note(f"ideal screens worst rel err {worst_ideal:.2e} (< 1e-10)")
        c.note(f"simulated far-field screens worst rel err {worst_sim:.2e} (< 1e-2)")
        assert worst_ideal < 1e-10
        assert worst_sim < 1e-2


def test_criterion_2_oracle_equivalence(capsys):
    with Criterion(2, "oracle equivalence", 10.0, capsys) as c:
        worst_p = worst_v = 0.0
        checked = 0
        for a in (1.0, 1e-4):
            sc = default_scenario(factor=a)
            g = sc.grid
            x = np.linspace(g.x_min, g.x_max, 256)
            hbar, m, beams = oracle.from_scenario(sc)
            w = sc.branches[0].amplitudes
            for t in np.linspace(g.t_min, g.t_max, 128):
                P = branch_intensity(sc.params, sc.beams, w, x, t)
                v, _ = branch_velocity(sc.params, sc.beams, w, x, t, sc.p_floor)
                Pr = oracle.density(hbar, m, beams, w, x, t)
                vr = oracle.velocity(hbar, m, beams, w, x, t)
                ok = Pr > 1e-20
                checked += int(ok.sum())
                worst_p = max(worst_p, float(np.max(np.abs(P[ok] - Pr[ok]) / Pr[ok])))
                worst_v = max(worst_v, float(np.max(np.abs(v[ok] - vr[ok]))))
        c.note(f"{checked} points with P > 1e-20")
        c.note(f"max rel |P - |psi|^2| {worst_p:.2e} (< 1e-9)")
        c.note(f"max |v - v_oracle| {worst_v:.2e} (< 1e-4)")
        assert worst_p < 1e-9
        assert worst_v < 1e-4


def _continuity_residual(sc, amplitudes, h):
    xs = np.linspace(-20.0, 20.0, 161) + 0.0123
    ts = np.linspace(4.0, 36.0, 17)
    p, beams = sc.params, sc.beams

    def flux(x, t):
        P = branch_intensity(p, beams, amplitudes, x, t)
        v, _ = branch_velocity(p, beams, amplitudes, x, t, 0.0)
        return P * v

    worst = 0.0
    for t in ts:
        dp = (branch_intensity(p, beams, amplitudes, xs, t + h)
              - branch_intensity(p, beams, amplitudes, xs, t - h)) / (2 * h)
        dj = (flux(xs + h, t) - flux(xs - h, t)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(dp + dj))))
    return worst


def test_criterion_3_conservation_and_continuity(capsys):
    with Criterion(3, "conservation and continuity", 30.0, capsys) as c:
        drift = 0.0
        x = np.linspace(-400.0, 400.0, 16001)
        for a, mode in ((1.0, STOCH), (1e-4, STOCH), (1e-8, STOCH), (0.3, DET)):
            sc = default_scenario(factor=a, mode=mode)
            for br in sc.branches:
                mass = [np.trapezoid(branch_intensity(sc.params, sc.beams, br.amplitudes, x, t), x)
                        for t in sc.grid.t]
                drift = max(drift, (max(mass) - min(mass)) / mass[0])
        c.note(f"max relative mass drift over t in [0, 40] {drift:.2e} (< 1e-6)")
        worst_ratio = math.inf
        for a in (1.0, 1e-4):
            sc = default_scenario(factor=a)
            res = [_continuity_residual(sc, sc.branches[0].amplitudes, h) for h in (0.2, 0.1, 0.05)]
            ratios = [res[0] / res[1], res[1] / res[2]]
            worst_ratio = min(worst_ratio, *ratios)
            c.note(f"a={a:g} residuals {', '.join(f'{r:.2e}' for r in res)}")
        c.note(f"worst decay per halving {worst_ratio:.2f} (>= 3.5)")
        assert drift < 1e-6
        assert worst_ratio >= 3.5


def test_criterion_4_trajectory_correctness(capsys):
    with Criterion(4, "trajectory correctness", 60.0, capsys) as c:
        base = default_scenario()
        worst = 0.0
        for drift in (0.0, 0.15):
            sc = single_beam(base, drift=drift)
            beam = sc.beams[sc.strong]
            t = sc.grid.t
            for offset in (-3.0, -1.0, 0.5, 1.0, 2.0, 4.0):
                tr = integrate(sc, beam.center + offset)
                exact = beam_center(beam, t) + offset * sigma_t(sc.params, beam, t) / beam.sigma0
                worst = max(worst, float(np.max(np.abs(tr.x - exact))))
        c.note(f"single-beam max deviation {worst:.2e} (< 1e-8)")
        violations = {}
        for a in (1.0, 1e-4, 1e-8):
            violations[a] = no_crossing_report(run_ensemble(default_scenario(factor=a), 2000)).violations
        c.note("crossing violations n=2000: "
               + ", ".join(f"a={a:g}: {v}" for a, v in violations.items()))
        assert worst < 1e-8
        assert all(v == 0 for v in violations.values())


def test_criterion_5_flux_map_consistency(capsys):
    with Criterion(5, "flux-map consistency", 120.0, capsys) as c:
        tv = flux_tv_distance(run_ensemble(default_scenario(), 10_000), bins=50)
        c.note(f"default scenario n=10000, 50 bins: TV distance {tv:.4f} (< 0.03)")
        assert tv < 0.03


def test_criterion_6_sweeper_phenomenology(capsys):
    with Criterion(6, "sweeper phenomenology", 120.0, capsys) as c:
        ladder = (1e-2, 1e-4, 1e-6, 1e-8)
        means = [weak_beam_displacement(run_ensemble(default_scenario(a), 400)).mean
                 for a in ladder]
        c.note("(a) weak mean displacement " + ", ".join(f"{m:.3f}" for m in means))
        grows = all(b > a for a, b in zip(means, means[1:]))

        curves = {a: sweeper_boundary(default_scenario(a)) for a in (1.0,) + ladder}
        axis = curves[1.0]
        on_axis = len(axis.points) > 0 and float(np.max(np.abs(axis.x))) < 1e-8
        common = sorted(set.intersection(*(set(cv.t.tolist()) for cv in curves.values())))
        monotone = len(common) > 0 and all(
            all(b > a for a, b in zip(xs, xs[1:]))
            for xs in ([curves[a].at(t) for a in (1.0,) + ladder] for t in common))
        c.note(f"(b) a=1 boundary max |x_b| {float(np.max(np.abs(axis.x))):.1e}; "
               f"weak-ward ordering holds on {len(common)} common slices: {monotone}; "
               "x_b(t=0) " + ", ".join(f"{curves[a].at(0.0):.4f}" for a in (1.0,) + ladder))

        sto = sweeper_boundary(default_scenario(1e-4, STOCH)).slope_estimate
        det = sweeper_boundary(default_scenario(1e-4, DET)).slope_estimate
        differ = math.isfinite(sto) and math.isfinite(det) and (
            np.sign(sto) != np.sign(det) or abs(sto - det) > 0.1)
        c.note(f"(c) boundary slope stochastic {sto:.4f} vs deterministic {det:.2e}")
        assert grows, means
        assert on_axis and monotone
        assert differ


def _figure1(out):
    assert cli.main(["figure1", "--out", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_7_determinism(tmp_path, capsys):
    with Criterion(7, "determinism of figure1", None, capsys) as c:
        first, second = _figure1(tmp_path / "one"), _figure1(tmp_path / "two")
        data = [n for n in first if n != "manifest.json"]
        same = [n for n in data if first[n] == second.get(n)]
        c.note(f"{len(same)}/{len(data)} data files byte-identical")
        import json
        m1, m2 = (json.loads(d["manifest.json"]) for d in (first, second))
        c.note("manifest digests equal; only stage timings differ"
               if m1["files"] == m2["files"] else "manifest digests differ")
        assert set(first) == set(second)
        assert same == data and len(data) == 7
        assert m1["files"] == m2["files"]
        assert {k: v for k, v in m1.items() if k != "timings_s"} == \
            {k: v for k, v in m2.items() if k != "timings_s"}


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
