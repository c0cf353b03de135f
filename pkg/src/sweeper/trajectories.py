"""Trajectory ensembles: integral curves of the two-beam velocity field.

Trajectories are flux-map curves of the probability density, seeded by
stratified quantiles of the initial density and advanced with classic RK4.
The velocity is evaluated in closed form at every sub-step, so there is no
interpolation error.  Each coherent branch is integrated separately; the
deterministic (chopper) mixture therefore yields two sub-ensembles.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import _kernel
from .fields import beam_center, branch_intensity, sigma_t

__all__ = ["Trajectory", "TrajectoryEnsemble", "SeedingError", "seed_ensemble",
           "integrate", "run_ensemble", "write_trajectories_csv", "TRAJECTORY_HEADER"]

TRAJECTORY_HEADER = "traj_id,branch,weight,t,x,starved"

# Trajectories per work unit handed to a thread.
CHUNK = 512


class SeedingError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    branch: str
    population: str
    t: np.ndarray
    x: np.ndarray
    weight: float
    starved: np.ndarray

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.x.tolist()))

    @property
    def ever_starved(self):
        return bool(self.starved.any())


@dataclass
class TrajectoryEnsemble:
    """Trajectories stored as arrays, ordered by branch then initial position.

    ``x`` has shape (n_traj, nt); ``branch``, ``population`` and ``weight``
    are per-trajectory.  ``population`` records which beam's hump a
    trajectory was seeded under ("strong" or "weak").
    """

    scenario: object
    t: np.ndarray
    x: np.ndarray
    branch: np.ndarray
    population: np.ndarray
    weight: np.ndarray
    starved: np.ndarray
    seeding: dict = field(default_factory=dict)

    def __len__(self):
        return self.x.shape[0]

    @property
    def trajectories(self):
        return [Trajectory(str(self.branch[i]), str(self.population[i]), self.t, self.x[i],
                           float(self.weight[i]), self.starved[i]) for i in range(len(self))]

    @property
    def branches(self):
        return list(dict.fromkeys(self.branch.tolist()))

    def select(self, branch=None, population=None):
        mask = np.ones(len(self), dtype=bool)
        if branch is not None:
            mask &= self.branch == branch
        if population is not None:
            mask &= self.population == population
        return mask

    def starvation_report(self):
        """Per-branch count of trajectories that touched a starved region."""
        report = {}
        for b in self.branches:
            m = self.select(branch=b)
            hit = self.starved[m].any(axis=1)
            report[b] = {"trajectories": int(m.sum()), "starved": int(hit.sum()),
                         "starved_steps": int(self.starved[m].sum())}
        return report


def _branch(scenario, branch):
    if branch is None:
        if len(scenario.branches) != 1:
            raise ValueError("scenario has several branches; name one")
        return scenario.branches[0]
    if not isinstance(branch, str):
        return branch
    for b in scenario.branches:
        if b.name == branch:
            return b
    raise ValueError(f"no branch {branch!r} in scenario "
                     f"(have {[b.name for b in scenario.branches]})")


def _beam_index(scenario, population):
    if population in ("strong", "weak"):
        return scenario.strong if population == "strong" else scenario.weak
    return int(population)


def _levels(n, seed):
    if seed is None:
        return (np.arange(n) + 0.5) / n
    return np.sort(np.random.default_rng(seed).uniform(size=n))


def _numeric_quantiles(scenario, amplitudes, q):
    g = scenario.grid
    x = np.linspace(g.x_min, g.x_max, max(64 * g.nx, 80001))
    p = branch_intensity(scenario.params, scenario.beams, amplitudes, x, g.t_min)
    peak = p.max()
    if not peak > 0:
        raise SeedingError("initial density vanishes on the grid")
    if max(p[0], p[-1]) > 1e-12 * peak:
        raise SeedingError("initial density not bracketed: grid too narrow "
                           f"(edge density {max(p[0], p[-1]):.3g} vs peak {peak:.3g})")
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(x))])
    mass = cdf[-1]
    return np.interp(q * mass, cdf, x), mass


def seed_ensemble(scenario, n, branch=None, population=None, seed=None):
    """Initial positions and weights for ``n`` trajectories of one branch.

    Position k is the quantile at level (k + 0.5)/n of the initial density.
    With ``population`` ("strong", "weak" or a beam index) only that beam's
    hump w_i^2 R_i^2 is sampled, using its exact Gaussian quantiles;
    otherwise the full branch density is inverted numerically on the grid.
    ``seed`` switches to sorted pseudo-random levels.

    Weights are equal and sum to branch probability times sampled mass.
    """
    if n < (2 if population is None else 1):
        raise ValueError("need n >= 2 trajectories (n >= 1 for a single population)")
    br = _branch(scenario, branch)
    q = _levels(n, seed)
    g = scenario.grid
    if population is None:
        x0, mass = _numeric_quantiles(scenario, br.amplitudes, q)
    else:
        i = _beam_index(scenario, population)
        mass = br.amplitudes[i] ** 2
        if mass == 0.0:
            raise SeedingError(f"beam {i} carries no amplitude in branch {br.name}")
        beam = scenario.beams[i]
        s = sigma_t(scenario.params, beam, g.t_min)
        x0 = beam_center(beam, g.t_min) + s * ndtri(q)
        if x0[0] < g.x_min or x0[-1] > g.x_max:
            raise SeedingError("initial density not bracketed: grid too narrow")
    if np.any(np.diff(x0) <= 0):
        raise SeedingError("seed positions not strictly increasing; grid too coarse")
    weights = np.full(n, br.probability * mass / n)
    return x0, weights


# Local error allowance per unit time (absolute, units of x).
ERROR_RATE = 1e-10
# Smallest RK4 sub-step as a fraction of the grid step.
MIN_FRACTION = 2.0 ** -40


def _integrate_many(scenario, amplitudes, x0, threads=1, rate=ERROR_RATE):
    """Integrate trajectories from ``x0``; returns positions and starved flags.

    Positions are recorded exactly at the grid times.  Between them each
    trajectory takes adaptive classic-RK4 sub-steps (step doubling, see
    :func:`sweeper._kernel.integrate_block`), so near-node velocity spikes are
    resolved without refining the output grid.
    """
    times = scenario.grid.t
    x0 = np.asarray(x0, dtype=float)
    n, nt = x0.size, times.size
    xs = np.empty((n, nt))
    flags = np.zeros((n, nt), dtype=bool)
    p, beams = scenario.params, scenario.beams
    args = (times, float(p.hbar), float(p.mass),
            np.array([b.center for b in beams], dtype=float),
            np.array([b.sigma0 for b in beams], dtype=float),
            np.array([b.drift for b in beams], dtype=float),
            np.array(amplitudes, dtype=float),
            float(scenario.p_floor), float(rate), MIN_FRACTION)

    def work(lo):
        hi = min(lo + CHUNK, n)
        _kernel.integrate_block(x0[lo:hi], *args, xs[lo:hi], flags[lo:hi])

    starts = range(0, n, CHUNK)
    if threads and threads > 1 and n > CHUNK:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for lo in starts:
            work(lo)
    return xs, flags


def integrate(scenario, x0, branch=None, weight=1.0):
    """Integrate one trajectory dx/dt = v(x, t) from ``x0`` over the grid times."""
    g = scenario.grid
    if not (g.x_min <= x0 <= g.x_max):
        raise ValueError(f"x0={x0} outside grid [{g.x_min}, {g.x_max}]")
    br = _branch(scenario, branch)
    xs, flags = _integrate_many(scenario, br.amplitudes, [x0])
    return Trajectory(br.name, "", g.t, xs[0], float(weight), flags[0])


def run_ensemble(scenario, n, threads=1, seed=None, error_rate=ERROR_RATE):
    """Seed and integrate every branch of the scenario.

    ``error_rate`` is the local error allowance per unit time of the adaptive
    sub-stepping; ``math.inf`` disables adaptation (one step-doubled RK4 step
    per grid interval), which is only useful for audit experiments.

    Within a branch, each beam carrying amplitude is sampled as its own
    population (n split evenly between two beams), so the attenuated beam is
    represented however small ``a`` is; weights restore the true mixture.
    """
    if n < 2:
        raise ValueError("need n >= 2 trajectories per branch")
    branch_l, pop_l, w_l, x0_l = [], [], [], []
    for br in scenario.branches:
        pops = [p for p in ("strong", "weak")
                if br.amplitudes[_beam_index(scenario, p)] != 0.0]
        counts = {"strong": n} if pops == ["strong"] else {"weak": n} if pops == ["weak"] \
            else {"strong": n - n // 2, "weak": n // 2}
        xs, ws, ps = [], [], []
        for p in pops:
            x0, w = seed_ensemble(scenario, counts[p], br, p, seed)
            xs.append(x0)
            ws.append(w)
            ps += [p] * counts[p]
        x0 = np.concatenate(xs)
        order = np.argsort(x0, kind="stable")
        x0_l.append(x0[order])
        w_l.append(np.concatenate(ws)[order])
        pop_l.append(np.asarray(ps)[order])
        branch_l.append(np.full(x0.size, br.name))

    xs, flags = [], []
    for br, x0 in zip(scenario.branches, x0_l):
        x, f = _integrate_many(scenario, br.amplitudes, x0, threads, error_rate)
        xs.append(x)
        flags.append(f)
    return TrajectoryEnsemble(
        scenario=scenario,
        t=scenario.grid.t,
        x=np.concatenate(xs),
        branch=np.concatenate(branch_l),
        population=np.concatenate(pop_l),
        weight=np.concatenate(w_l),
        starved=np.concatenate(flags),
        seeding={"method": "stratified-quantile" if seed is None else "random",
                 "seed": seed, "n_per_branch": n},
    )


def write_trajectories_csv(ensemble, path, t_stride=1):
    """One row per (trajectory, recorded time): ``traj_id,branch,weight,t,x,starved``."""
    idx = np.arange(0, ensemble.t.size, t_stride)
    if idx[-1] != ensemble.t.size - 1:
        idx = np.append(idx, ensemble.t.size - 1)
    with open(path, "w", newline="") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for i in range(len(ensemble)):
            w = f"{ensemble.weight[i]:.17g}"
            b = ensemble.branch[i]
            lines = [f"{i},{b},{w},{t:.17g},{x:.17g},{int(s)}"
                     for t, x, s in zip(ensemble.t[idx], ensemble.x[i, idx], ensemble.starved[i, idx])]
            fh.write("\n".join(lines) + "\n")
