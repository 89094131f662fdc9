"""Simulation harness: sensitivity, utility, tangent-bound, projection and circle runs.

Every replicate draws from its own generator, seeded by
:func:`stream_seed` from the master seed, the sample size and the replicate
index. Runs are therefore reproducible row by row, independent of how the
replicates are batched.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from . import mechanism as mech
from . import sphere as sphere_geom
from . import spdm as spdm_geom
from .errors import DomainError
from .frechet import MeanSolverOptions, frechet_mean_array
from .geometry import SPDM, SPHERE, BallSpec, Point, sphere_manifold, spdm_manifold

log = logging.getLogger(__name__)

EXPERIMENTS = ("sensitivity", "utility", "tangent-bound", "projection", "circle-demo",
               "mean", "privatize")

CSV_COLUMNS = {
    "sensitivity": ["n", "replicate", "distance", "bound_theoretical", "bound_empirical",
                    "converged"],
    "utility": ["n", "replicate", "dist_intrinsic", "dist_euclidean", "off_manifold",
                "sigma_intrinsic", "sigma_euclidean"],
    "tangent-bound": ["r", "two_r", "lemma_bound", "empirical"],
    "projection": ["d", "D", "sigma", "n_draws", "estimate", "analytic", "rel_err"],
    "circle-demo": ["n", "max_sensitivity"],
}

UTILITY_SUMMARY_COLUMNS = ["n", "replicates", "mean_intrinsic", "se_intrinsic",
                           "mean_euclidean", "se_euclidean", "relative_reduction",
                           "off_manifold_fraction"]

_MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """SplitMix64 finaliser: a fixed bijective 64-bit mixer."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_seed(seed: int, n: int, replicate: int) -> int:
    """Per-replicate stream id: mix64(seed XOR mix64(n * 2^32 + replicate))."""
    return mix64((seed & _MASK64) ^ mix64(((n & 0xFFFFFFFF) << 32) | (replicate & 0xFFFFFFFF)))


def replicate_rng(seed: int, n: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, n, replicate))


@dataclass
class ExperimentConfig:
    """Settings for one harness run.

    ``r`` and ``n_grid`` default per experiment and manifold when left as
    ``None`` (sphere: r = pi/8, spdm: r = 1.5; n in 20, 40, ..., 200; the
    circle demo uses n in 4, 8, 16, 32).
    """

    experiment: str = "sensitivity"
    manifold: str = SPHERE
    n_grid: list | None = None
    replicates: int = 1000
    epsilon: float = 1.0
    r: float | None = None
    df: int | None = None
    k: int = 2
    seed: int = 0
    out_path: str | None = None
    # mechanism overrides
    scale_rule: str = mech.HOMOGENEOUS
    sensitivity_source: str = mech.AUTO
    grid_n: int = 720
    condition_on_ball: bool = False
    burn_in: int = 10_000
    thinning: int = 100
    # tangent-bound scan
    r_points: int = 50
    # projection check
    d: int = 3
    D: int = 6
    sigma: float = 1.0
    n_draws: int = 1_000_000
    # mean / privatize input
    data_path: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")
        if self.manifold not in (SPHERE, SPDM):
            raise DomainError(f"unknown manifold {self.manifold!r}")
        if self.n_grid is None:
            self.n_grid = ([4, 8, 16, 32] if self.experiment == "circle-demo"
                           else list(range(20, 201, 20)))
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or min(self.n_grid) < 2:
            raise DomainError("n_grid entries must be at least 2")
        if self.replicates < 1:
            raise DomainError("replicates must be at least 1")
        if self.r is None:
            self.r = math.pi / 8 if self.manifold == SPHERE else 1.5
        if self.df is None:
            self.df = self.k
        if not 0 <= int(self.seed) <= _MASK64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)
        self.mechanism()  # validates the mechanism fields

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise DomainError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def mechanism(self) -> mech.MechanismConfig:
        return mech.MechanismConfig(
            epsilon=self.epsilon, scale_rule=self.scale_rule,
            sensitivity_source=self.sensitivity_source, grid_n=self.grid_n,
            condition_on_ball=self.condition_on_ball, burn_in=self.burn_in,
            thinning=self.thinning)

    def manifold_descriptor(self):
        return sphere_manifold(2) if self.manifold == SPHERE else spdm_manifold(self.k)

    def ball(self) -> BallSpec:
        m = self.manifold_descriptor()
        center = sphere_geom.NORTH_POLE if m.kind == SPHERE else np.eye(m.order)
        return BallSpec(Point(m, center), self.r)


def sample_dataset(cfg: ExperimentConfig, ball: BallSpec, n: int, rng) -> np.ndarray:
    """n points in the ball: polar-cap draws on the sphere, conditioned Wishart draws on SPD."""
    if cfg.manifold == SPHERE:
        return sphere_geom.sample_polar_cap(cfg.r, rng, size=n)
    return spdm_geom.sample_ball_wishart(ball, cfg.df, rng, size=n)


# --- sensitivity --------------------------------------------------------------

def run_sensitivity(cfg: ExperimentConfig, opts: MeanSolverOptions = MeanSolverOptions()):
    """Distances between Fréchet means of neighbouring datasets, with their bounds.

    For each (n, replicate) a dataset of n points is drawn, its last point is
    replaced by a fresh draw, and both means are computed.
    """
    m = cfg.manifold_descriptor()
    ball = cfg.ball()
    kappa = m.kappa_upper
    rows = []
    for n in cfg.n_grid:
        bound = mech.sensitivity(n, cfg.r, kappa)
        if m.kind == SPHERE:
            bound_emp = mech.empirical_sensitivity(n, ball, cfg.grid_n)
        else:
            bound_emp = bound  # h = 1: the theoretical bound is already the tight one
        for rep in range(cfg.replicates):
            rng = replicate_rng(cfg.seed, n, rep)
            data = sample_dataset(cfg, ball, n + 1, rng)
            d1, d2 = data[:n], np.concatenate([data[:n - 1], data[n:]])
            x1, _, ok1, _, _ = frechet_mean_array(m, d1, opts)
            x2, _, ok2, _, _ = frechet_mean_array(m, d2, opts)
            if not (ok1 and ok2):
                log.warning("mean solver did not converge (n=%d, replicate=%d)", n, rep)
            dist = float(m.kernel.dist(x1, x2)) * m.length_scale
            rows.append({"n": n, "replicate": rep, "distance": dist,
                         "bound_theoretical": bound, "bound_empirical": bound_emp,
                         "converged": int(ok1 and ok2)})
    return rows


# --- utility ------------------------------------------------------------------

def run_utility(cfg: ExperimentConfig, opts: MeanSolverOptions = MeanSolverOptions()):
    """Intrinsic vs ambient Laplace releases of the Fréchet mean.

    Both releases are compared to the mean in the ambient embedding
    (Cartesian coordinates for the sphere, vech for SPD matrices). The
    ambient baseline uses the flat-space sensitivity 2 r_E / n, with r_E the
    radius of the smallest ambient ball containing the data ball.
    """
    m = cfg.manifold_descriptor()
    ball = cfg.ball()
    mcfg = cfg.mechanism()
    kern = m.kernel
    rows = []
    for n in cfg.n_grid:
        sigma_i = mech.calibrate(m, n, ball, mcfg)["sigma"]
        sigma_e = mech.euclidean_noise_scale(m, cfg.r, n, mcfg)
        rngs, means, releases, on = [], [], [], []
        for rep in range(cfg.replicates):
            rng = replicate_rng(cfg.seed, n, rep)
            data = sample_dataset(cfg, ball, n, rng)
            x, _, ok, _, _ = frechet_mean_array(m, data, opts)
            if not ok:
                log.warning("mean solver did not converge (n=%d, replicate=%d)", n, rep)
            y, on_m = mech.euclidean_release(m, x, sigma_e, rng)
            rngs.append(rng)
            means.append(x)
            releases.append(y)
            on.append(on_m)
        means = np.stack(means)
        draws, acc = mech.laplace_chains(
            m, means, np.full(len(means), sigma_i), rngs, burn_in=mcfg.burn_in,
            thinning=mcfg.thinning, n_samples=1,
            ball=ball if mcfg.condition_on_ball else None)
        log.info("utility n=%d: sampler acceptance %.3f", n, float(acc.mean()))
        emb_mean = kern.embed(means)
        d_int = np.linalg.norm(kern.embed(draws[:, 0]) - emb_mean, axis=-1)
        d_euc = np.linalg.norm(np.stack(releases) - emb_mean, axis=-1)
        for rep in range(cfg.replicates):
            rows.append({"n": n, "replicate": rep, "dist_intrinsic": float(d_int[rep]),
                         "dist_euclidean": float(d_euc[rep]),
                         "off_manifold": int(not on[rep]),
                         "sigma_intrinsic": sigma_i, "sigma_euclidean": sigma_e})
    return rows


def summarize_utility(rows):
    """Per-n means, standard errors (sd / sqrt(replicates)) and off-manifold fraction."""
    out = []
    for n in sorted({r["n"] for r in rows}):
        sub = [r for r in rows if r["n"] == n]
        a = np.array([r["dist_intrinsic"] for r in sub])
        b = np.array([r["dist_euclidean"] for r in sub])
        k = len(sub)
        se = (lambda v: float(v.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0)
        out.append({"n": n, "replicates": k,
                    "mean_intrinsic": float(a.mean()), "se_intrinsic": se(a),
                    "mean_euclidean": float(b.mean()), "se_euclidean": se(b),
                    "relative_reduction": float(1.0 - a.mean() / b.mean()),
                    "off_manifold_fraction": float(np.mean([r["off_manifold"] for r in sub]))})
    return out


# --- tangent bound ------------------------------------------------------------

def tangent_bound_radii(r_points: int = 50, r_max: float = math.pi / 4):
    return np.linspace(0.0, r_max, r_points + 1)[1:]


def run_tangent_bound(cfg: ExperimentConfig):
    """2r, the lemma bound 2r(2 - h) and the empirical boundary spread over a radius grid in (0, pi/4]."""
    rows = []
    for r in tangent_bound_radii(cfg.r_points):
        r = float(r)
        rows.append({"r": r, "two_r": 2 * r,
                     "lemma_bound": mech.tangent_bound_theoretical(r, 1.0),
                     "empirical": mech.empirical_tangent_bound_at(r, cfg.grid_n)})
    return rows


# --- projection ---------------------------------------------------------------

def run_projection(cfg: ExperimentConfig):
    rng = replicate_rng(cfg.seed, cfg.D, cfg.d)
    est = mech.project_subspace_noise(cfg.d, cfg.D, cfg.sigma, cfg.n_draws, rng)
    analytic = cfg.sigma ** 2 * cfg.d * (cfg.D + 1)
    rel = abs(est - analytic) / analytic if analytic > 0 else abs(est)
    return [{"d": cfg.d, "D": cfg.D, "sigma": cfg.sigma, "n_draws": cfg.n_draws,
             "estimate": est, "analytic": analytic, "rel_err": rel}]


# --- circle demonstration -----------------------------------------------------

def circle_distance(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % (2 * math.pi)
    return np.minimum(d, 2 * math.pi - d)


def circle_mean_over_data(angles):
    """Data point minimising the Fréchet energy on the circle."""
    angles = np.asarray(angles, dtype=float)
    energy = (circle_distance(angles[:, None], angles[None, :]) ** 2).sum(axis=1)
    return angles[int(np.argmin(energy))]


def circle_max_sensitivity(n: int) -> float:
    """Largest mean displacement when the duplicated point of the evenly spaced configuration moves.

    Points sit at 2 pi i / (n - 1), i = 1..n-1, and the n-th point duplicates
    one of them; the mean follows the duplicate.
    """
    if n < 3:
        raise DomainError("need n >= 3")
    base = 2 * math.pi * np.arange(1, n) / (n - 1)
    means = np.array([circle_mean_over_data(np.append(base, base[i])) for i in range(n - 1)])
    return float(circle_distance(means[:, None], means[None, :]).max())


def run_circle_demo(cfg: ExperimentConfig):
    rows = []
    for n in cfg.n_grid:
        if n % 2:
            raise DomainError(f"circle demo needs even n, got {n}")
        rows.append({"n": n, "max_sensitivity": circle_max_sensitivity(n)})
    return rows


RUNNERS = {
    "sensitivity": run_sensitivity,
    "utility": run_utility,
    "tangent-bound": run_tangent_bound,
    "projection": run_projection,
    "circle-demo": run_circle_demo,
}


def run(cfg: ExperimentConfig):
    return RUNNERS[cfg.experiment](cfg)


def write_csv(rows, columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ValueError(f"non-finite value in output: {v}")
        return repr(float(v))
    return v
