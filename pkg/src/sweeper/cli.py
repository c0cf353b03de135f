"""Command-line front end.

    sweeper fields        --config run.cfg --out out/
    sweeper trajectories  --config run.cfg --out out/ --n-trajectories 400
    sweeper analyze       --config run.cfg --out out/
    sweeper sweep         --config run.cfg --out out/
    sweeper figure1       --out out/

Every run writes CSV data plus ``manifest.json`` (scenario echo, version,
sha256 of each output file, per-stage wall-clock timings).  On failure the
exit status is non-zero and stderr carries one JSON line ``{"error": ...}``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (NoFringeError, flux_boundary, no_crossing_report, screen_visibility,
                       sweeper_boundary, visibility_law, weak_beam_displacement,
                       write_boundary_csv)
from .config import ConfigError, RunOptions, load
from .fields import sample_frame, write_frames_csv
from .model import AttenuationMode, ScenarioError
from .trajectories import SeedingError, run_ensemble, write_trajectories_csv

FIGURE1_FACTORS = (1e-4, 1e-8)
FIGURE1_LABEL = ("qualitative reconstruction: trajectory and intensity data at a = 1e-4 and "
                 "a = 1e-8; slit parameters are configuration defaults, not fitted values")


class Run:
    """Collects output files and timings for the manifest."""

    def __init__(self, out, scenario, options, command):
        self.out = Path(out)
        self.scenario = scenario
        self.options = options
        self.command = command
        self.files = []
        self.timings = {}

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p

    def stage(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = run.timings.get(name, 0.0) + time.perf_counter() - self.t0
        return _Timer()

    def write_manifest(self):
        inventory = []
        for p in self.files:
            inventory.append({"file": p.name, "bytes": p.stat().st_size,
                              "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        manifest = {
            "tool": "sweeper",
            "version": __version__,
            "command": self.command,
            "scenario": scenario_echo(self.scenario),
            "options": asdict(self.options),
            "files": inventory,
            "timings_s": {k: round(v, 6) for k, v in self.timings.items()},
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
        return manifest


def scenario_echo(s):
    return {
        "hbar": s.params.hbar, "mass": s.params.mass,
        "beams": [asdict(b) for b in s.beams],
        "attenuation": {"factor": s.atten.factor, "mode": s.atten.mode.value,
                        "which_beam": s.atten.which_beam},
        "grid": asdict(s.grid),
        "branches": [{"name": b.name, "probability": b.probability,
                      "amplitudes": list(b.amplitudes)} for b in s.branches],
        "p_floor": s.p_floor,
    }


def _tag(a):
    return f"a{a:.0e}".replace("+", "")


def _frame_times(scenario, stride):
    t = scenario.grid.t
    idx = list(range(0, t.size, stride))
    if idx[-1] != t.size - 1:
        idx.append(t.size - 1)
    return t[idx]


def write_fields(run, scenario, options, prefix="fields"):
    with run.stage("fields"):
        frames = [sample_frame(scenario, t) for t in _frame_times(scenario, options.t_stride)]
        write_frames_csv(frames, run.path(f"{prefix}.csv"), options.x_stride)
        if len(scenario.branches) > 1:
            for b in scenario.branches:
                write_frames_csv([f.for_branch(b.name) for f in frames],
                                 run.path(f"{prefix}_branch{b.name}.csv"), options.x_stride)
    return frames


def write_trajectories(run, scenario, options, threads, name="trajectories.csv"):
    with run.stage("trajectories"):
        ens = run_ensemble(scenario, options.n_trajectories, threads=threads, seed=options.seed)
        write_trajectories_csv(ens, run.path(name), options.t_stride)
    return ens


def _fmt(v):
    return "nan" if v is None else f"{v:.10g}"


def analysis_lines(scenario, ens):
    """Plain-text analysis block for one scenario and its ensemble."""
    a, mode = scenario.atten.factor, scenario.atten.mode
    lines = [f"attenuation: a = {a:.6g}, mode = {mode.value}, weak beam = beam{scenario.weak + 1}"]
    law = visibility_law(a, mode)
    try:
        meas = screen_visibility(scenario, normalize=True).visibility
    except NoFringeError:
        meas = None
    lines.append("visibility:")
    lines.append(f"  law        {law:.10g}")
    lines.append(f"  measured   {_fmt(meas)}")
    if meas is not None and law > 0:
        lines.append(f"  rel_error  {abs(meas - law) / law:.3e}")

    curve = sweeper_boundary(scenario)
    lines.append("osmotic-balance boundary:")
    lines.append(f"  slices with boundary {len(curve.points)}, omitted {curve.omitted}")
    if curve.points:
        lines.append(f"  first (t, x_b) = ({curve.points[0][0]:.6g}, {curve.points[0][1]:.10g})")
        lines.append(f"  last  (t, x_b) = ({curve.points[-1][0]:.6g}, {curve.points[-1][1]:.10g})")
        lines.append(f"  late-time slope {curve.slope_estimate:.10g}")

    rep = no_crossing_report(ens)
    lines.append("trajectories:")
    lines.append(f"  count {len(ens)}, branches {', '.join(ens.branches)}")
    lines.append(f"  no-crossing violations {rep.violations} "
                 f"({rep.pairs_checked_per_step} neighbour pairs x {rep.steps} steps)")
    if rep.worst:
        b, k, j, t, gap = rep.worst
        lines.append(f"  worst: branch {b}, trajectories {k}/{j} at t = {t:.6g}, gap {gap:.3e}")
    for b, info in ens.starvation_report().items():
        lines.append(f"  branch {b}: {info['starved']} of {info['trajectories']} "
                     f"trajectories touched a starved region")
    for pop in ("weak", "strong"):
        if not ens.select(population=pop).any():
            continue
        st = weak_beam_displacement(ens, pop)
        qs = ", ".join(f"q{int(q * 100):02d}={v:.6g}" for q, v in st.quantiles.items())
        lines.append(f"  {pop}-seeded displacement from the other beam at t_max: "
                     f"mean {st.mean:.10g} (n={st.count}); {qs}")
    fb = flux_boundary(ens)
    if fb.points:
        lines.append(f"  flux dividing line at t_max: x = {fb.points[-1][1]:.10g}")
    return lines, curve


def cmd_fields(run, scenario, options, threads):
    write_fields(run, scenario, options)


def cmd_trajectories(run, scenario, options, threads):
    ens = write_trajectories(run, scenario, options, threads)
    rep = no_crossing_report(ens)
    if not rep.ok:
        print(f"warning: {rep.violations} trajectory ordering violations", file=sys.stderr)


def cmd_analyze(run, scenario, options, threads):
    ens = write_trajectories(run, scenario, options, threads)
    with run.stage("analysis"):
        lines, curve = analysis_lines(scenario, ens)
        write_boundary_csv(curve, run.path("boundary.csv"))
        write_boundary_csv(flux_boundary(ens), run.path("flux_boundary.csv"))
        _write_text(run.path("summary.txt"), ["sweeper analysis", ""] + lines)


def cmd_sweep(run, scenario, options, threads):
    header = ("a,mode,visibility_law,visibility_measured,rel_error,boundary_x_t0,"
              "boundary_slices,boundary_slope,weak_mean_displacement,crossing_violations")
    rows, lines = [], ["sweeper sweep", ""]
    for a in options.sweep_factors:
        sc = scenario.with_attenuation(a)
        with run.stage("trajectories"):
            ens = run_ensemble(sc, options.n_trajectories, threads=threads, seed=options.seed)
        with run.stage("analysis"):
            law = visibility_law(a, sc.atten.mode)
            try:
                meas = screen_visibility(sc, normalize=True).visibility
            except NoFringeError:
                meas = float("nan")
            rel = abs(meas - law) / law if law > 0 else float("nan")
            curve = sweeper_boundary(sc)
            x0 = curve.at(sc.grid.t_min)
            disp = (weak_beam_displacement(ens).mean
                    if ens.select(population="weak").any() else float("nan"))
            rep = no_crossing_report(ens)
            rows.append(f"{a:.17g},{sc.atten.mode.value},{law:.17g},{meas:.17g},{rel:.17g},"
                        f"{float('nan') if x0 is None else x0:.17g},{len(curve.points)},"
                        f"{curve.slope_estimate:.17g},{disp:.17g},{rep.violations}")
            lines.append(f"a = {a:.3g}: V_law = {law:.8g}, V_measured = {meas:.8g}, "
                         f"weak displacement = {disp:.8g}, crossings = {rep.violations}")
    out = run.path("sweep.csv")
    out.write_text(header + "\n" + "\n".join(rows) + "\n")
    _write_text(run.path("sweep.txt"), lines)


def cmd_figure1(run, scenario, options, threads):
    lines = ["sweeper figure1", "", FIGURE1_LABEL, ""]
    means = {}
    for a in FIGURE1_FACTORS:
        sc = scenario.with_attenuation(a)
        tag = _tag(a)
        write_fields(run, sc, options, prefix=f"intensity_{tag}")
        ens = write_trajectories(run, sc, options, threads, name=f"trajectories_{tag}.csv")
        with run.stage("analysis"):
            block, curve = analysis_lines(sc, ens)
            write_boundary_csv(flux_boundary(ens), run.path(f"flux_boundary_{tag}.csv"))
        lines += [f"[a = {a:.0e}]"] + block + [""]
        if ens.select(population="weak").any():
            means[a] = weak_beam_displacement(ens).mean
    if len(means) == len(FIGURE1_FACTORS):
        lo, hi = FIGURE1_FACTORS
        holds = means[hi] > means[lo]
        lines.append(f"displacement ordering: weak-beam mean displacement at a = {hi:.0e} "
                     f"({means[hi]:.6g}) {'>' if holds else '<='} at a = {lo:.0e} "
                     f"({means[lo]:.6g}): {'holds' if holds else 'VIOLATED'}")
    _write_text(run.path("summary.txt"), lines)


def _write_text(path, lines):
    path.write_text("\n".join(lines) + "\n")


COMMANDS = {"fields": cmd_fields, "trajectories": cmd_trajectories, "analyze": cmd_analyze,
            "sweep": cmd_sweep, "figure1": cmd_figure1}


def _threads(value):
    if value == "auto":
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'auto'")
    return n


def make_parser():
    ap = argparse.ArgumentParser(prog="sweeper", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="scenario file (key = value lines); defaults if omitted")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--n-trajectories", type=int, help="trajectories per branch")
    ap.add_argument("--threads", type=_threads, default=1, help="worker threads or 'auto'")
    ap.add_argument("--a", type=float, dest="factor", help="override transmission factor")
    ap.add_argument("--mode", choices=["det", "stoch", "deterministic", "stochastic"],
                    help="override attenuation mode")
    return ap


def _fail(kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load(args.config, factor=args.factor, mode=args.mode,
                   n_trajectories=args.n_trajectories)
        if cfg.options.n_trajectories < 2:
            raise ConfigError("trajectories.n must be >= 2", args.config)
        if cfg.options.t_stride < 1 or cfg.options.x_stride < 1:
            raise ConfigError("output strides must be >= 1", args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(out, cfg.scenario, cfg.options, args.command)
        COMMANDS[args.command](run, cfg.scenario, cfg.options, args.threads)
        run.write_manifest()
    except ConfigError as exc:
        _fail("config", exc.message, path=exc.path, line=exc.line)
        return 2
    except ScenarioError as exc:
        _fail("scenario", str(exc), problems=[{"field": f, "message": m} for f, m in exc.problems])
        return 3
    except SeedingError as exc:
        _fail("seeding", str(exc))
        return 4
    except OSError as exc:
        _fail("io", exc.strerror or str(exc), path=exc.filename)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
