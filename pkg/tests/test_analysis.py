import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sweeper.analysis import (NoFringeError, fringe_visibility, flux_boundary, flux_tv_distance,
                              no_crossing_report, osmotic_balance, screen_visibility,
                              sweeper_boundary, synthesize_screen, visibility_law,
                              weak_beam_displacement, write_boundary_csv)
from sweeper.fields import beam_center, sample_frame, sigma_t
from sweeper.model import AttenuationConfig, AttenuationMode, default_scenario
from sweeper.trajectories import TrajectoryEnsemble, run_ensemble

DET, STOCH = AttenuationMode.DETERMINISTIC, AttenuationMode.STOCHASTIC
PHI = np.linspace(-3 * np.pi, 3 * np.pi, 6001)


def _screen_v(a, mode):
    return fringe_visibility(synthesize_screen(AttenuationConfig(a, mode), PHI), PHI).visibility


@pytest.mark.parametrize("mode", [DET, STOCH])
def test_full_transmission_has_full_contrast(mode):
    assert _screen_v(1.0, mode) == pytest.approx(1.0, abs=1e-12)


def test_visibility_examples():
    assert _screen_v(0.01, STOCH) == pytest.approx(0.198020, abs=5e-7)
    assert _screen_v(0.01, DET) == pytest.approx(0.019802, abs=5e-7)
    assert visibility_law(0.01, STOCH) == pytest.approx(0.2 / 1.01, rel=1e-15)
    assert visibility_law(0.01, "det") == pytest.approx(0.02 / 1.01, rel=1e-15)


@given(a=st.floats(1e-8, 1.0), mode=st.sampled_from([DET, STOCH]))
def test_synthesized_screens_follow_the_law(a, mode):
    res = fringe_visibility(synthesize_screen(AttenuationConfig(a, mode), PHI), PHI)
    assert 0.0 <= res.visibility <= 1.0
    assert res.i_max >= res.i_min >= 0.0
    assert res.visibility == pytest.approx(visibility_law(a, mode), rel=1e-10)


def test_no_fringe():
    with pytest.raises(NoFringeError, match="no fringe found"):
        fringe_visibility(np.linspace(0, 1, 50))
    with pytest.raises(NoFringeError):
        fringe_visibility(np.exp(-np.linspace(-3, 3, 101) ** 2))


def test_visibility_picks_fringe_nearest_request():
    x = np.linspace(0, 20, 4001)
    screen = (1 + 0.5 * np.cos(2 * np.pi * x)) * (1 + 0.5 * np.cos(2 * np.pi * x / 40))
    near_start = fringe_visibility(screen, x, near=1.0)
    near_end = fringe_visibility(screen, x, near=19.0)
    assert near_start.visibility > near_end.visibility


@pytest.mark.parametrize("a", [0.1, 1e-2, 1e-4])
@pytest.mark.parametrize("mode", [DET, STOCH])
def test_normalised_screen_of_default_scenario(a, mode):
    res = screen_visibility(default_scenario(factor=a, mode=mode), normalize=True)
    assert res.visibility == pytest.approx(visibility_law(a, mode), rel=1e-8)
    assert res.factor == a and res.mode is mode


def test_boundary_on_axis_for_equal_beams(symmetric):
    curve = sweeper_boundary(symmetric)
    assert len(curve.points) > 10
    assert np.all(np.abs(curve.x) < 1e-8)
    assert curve.points[0][0] == 0.0
    assert np.all(np.diff(curve.t) > 0)
    assert curve.omitted + len(curve.points) == symmetric.grid.nt


@pytest.mark.parametrize("a", [1.0, 1e-2, 1e-4, 1e-8])
def test_boundary_mirrors_with_scenario(a):
    sc = default_scenario(factor=a)
    direct = sweeper_boundary(sc)
    mirror = sweeper_boundary(sc.mirrored())
    assert direct.t.tolist() == mirror.t.tolist()
    np.testing.assert_allclose(mirror.x, -direct.x, rtol=0, atol=2e-8)


def test_boundary_moves_weakward_with_smaller_factor():
    ladder = [1.0, 1e-2, 1e-4, 1e-6, 1e-8]
    curves = [sweeper_boundary(default_scenario(factor=a)) for a in ladder]
    common = set.intersection(*(set(c.t.tolist()) for c in curves))
    assert 0.0 in common
    for t in sorted(common):
        xs = [c.at(t) for c in curves]
        assert all(b > a for a, b in zip(xs, xs[1:])), (t, xs)
    # the latest slice both of the two smallest factors still have
    late = max(set(curves[2].t.tolist()) & set(curves[4].t.tolist()))
    assert curves[4].at(late) > curves[2].at(late)


def test_boundary_is_a_root_of_the_balance():
    sc = default_scenario(factor=1e-4)
    for t, xb in sweeper_boundary(sc).points:
        left = osmotic_balance(sc.params, sc.beams, sc.branches[0].amplitudes, xb - 1e-6, t)
        right = osmotic_balance(sc.params, sc.beams, sc.branches[0].amplitudes, xb + 1e-6, t)
        assert left > 0 >= right


def test_boundary_from_frames_and_custom_balance(scenario):
    frames = [sample_frame(scenario, t) for t in (0.0, 1.0, 2.0)]
    curve = sweeper_boundary(scenario, frames)
    assert curve.t.tolist() == [0.0, 1.0, 2.0]

    def unweighted(params, beams, amplitudes, x, t):
        # |u2| - |u1|: positive near the strong beam, negative near the weak one
        from sweeper.fields import osmotic_velocity
        u1, u2 = (osmotic_velocity(params, b, x, t) for b in beams)
        return np.abs(u2) - np.abs(u1)

    flat = sweeper_boundary(scenario, [0.0], balance=unweighted)
    # ignoring densities puts the balance midway between the centers
    assert flat.at(0.0) == pytest.approx(0.0, abs=1e-8)


def test_boundary_slopes_differ_between_modes():
    sto = sweeper_boundary(default_scenario(1e-4, STOCH))
    det = sweeper_boundary(default_scenario(1e-4, DET))
    assert math.isfinite(sto.slope_estimate) and math.isfinite(det.slope_estimate)
    assert sto.slope_estimate > 0.5
    assert abs(det.slope_estimate) < 1e-6


def test_boundary_without_two_beams():
    curve = sweeper_boundary(default_scenario(0.0, DET))
    assert curve.points == [] and curve.omitted == 401 and math.isnan(curve.slope_estimate)


def test_boundary_csv(tmp_path, symmetric):
    curve = sweeper_boundary(symmetric, [0.0, 1.0])
    write_boundary_csv(curve, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "t,x_b"


def test_displacement_symmetric_case(symmetric):
    ens = run_ensemble(symmetric, 200)
    weak = weak_beam_displacement(ens)
    strong = weak_beam_displacement(ens, "strong")
    assert weak.mean == pytest.approx(strong.mean, abs=1e-6)
    assert weak.mean_position == pytest.approx(-strong.mean_position, abs=1e-6)
    assert weak.count == 100 and set(weak.quantiles) == {0.05, 0.25, 0.5, 0.75, 0.95}


def test_displacement_grows_as_factor_drops():
    means = [weak_beam_displacement(run_ensemble(default_scenario(a), 200)).mean
             for a in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(b > a for a, b in zip(means, means[1:])), means


def test_displacement_without_weak_beam():
    sc = default_scenario(0.0)
    ens = run_ensemble(sc, 101)
    with pytest.raises(ValueError, match="no 'weak' trajectories"):
        weak_beam_displacement(ens)
    stats = weak_beam_displacement(ens, "strong")
    # free dispersion of the lone beam, measured from the other slit's center
    beam, other, T = sc.beams[0], sc.beams[1], sc.grid.t_max
    q = (np.arange(101) + 0.5) / 101
    from scipy.special import ndtri
    final = beam_center(beam, T) + ndtri(q) * sigma_t(sc.params, beam, T)
    disp = -(final - beam_center(other, T))
    assert stats.mean == pytest.approx(disp.mean(), abs=1e-8)
    assert stats.quantiles[0.5] == pytest.approx(np.median(disp), abs=1e-8)


def test_no_crossing_on_default_run(scenario):
    rep = no_crossing_report(run_ensemble(scenario, 300))
    assert rep.ok and rep.violations == 0 and rep.worst is None
    assert rep.pairs_checked_per_step == 299 and rep.steps == 401


def test_coarse_run_reports_crossings(symmetric):
    coarse = symmetric.with_grid(nt=5)  # dt x 100
    ens = run_ensemble(coarse, 400, error_rate=math.inf)
    rep = no_crossing_report(ens, max_listing=5)
    assert rep.violations > 0 and not rep.ok
    assert len(rep.listing) == 5
    branch, k, j, t, gap = rep.worst
    assert j == k + 1 and gap <= 0 and t in coarse.grid.t
    assert ens.x[j, list(coarse.grid.t).index(t)] <= ens.x[k, list(coarse.grid.t).index(t)]


def test_two_trajectories_one_pair(scenario):
    rep = no_crossing_report(run_ensemble(scenario, 2))
    assert rep.pairs_checked_per_step == 1 and rep.ok


def test_crossings_in_constructed_ensemble(scenario):
    t = np.arange(3.0)
    x = np.array([[0.0, 1.0, 2.0], [1.0, 0.5, 3.0], [2.0, 2.0, 4.0]])
    ens = TrajectoryEnsemble(scenario, t, x, np.array(["c"] * 3), np.array(["strong"] * 3),
                             np.ones(3), np.zeros((3, 3), bool))
    rep = no_crossing_report(ens)
    assert rep.violations == 1
    assert rep.listing == [("c", 0, 1, 1.0, -0.5)]


def test_flux_map_matches_density(scenario):
    ens = run_ensemble(scenario, 2000)
    assert flux_tv_distance(ens) < 0.03


def test_flux_boundary_separates_populations(scenario):
    ens = run_ensemble(scenario, 200)
    fb = flux_boundary(ens)
    strong = ens.x[ens.select(population="strong")]
    weak = ens.x[ens.select(population="weak")]
    assert np.all(strong.max(axis=0) < fb.x) and np.all(fb.x < weak.min(axis=0))


def test_weak_flux_bunches_at_tiny_factor():
    sc = default_scenario(1e-8)
    ens = run_ensemble(sc, 400)
    stats = weak_beam_displacement(ens)
    spread = stats.quantiles[0.95] - stats.quantiles[0.05]
    free = 2 * 1.6448536269514722 * sigma_t(sc.params, sc.beams[sc.weak], sc.grid.t_max)
    assert spread < free / 5
