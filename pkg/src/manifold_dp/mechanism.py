"""Sensitivity calibration and the Laplace mechanisms.

The intrinsic mechanism releases a draw from the Riemannian Laplace law
``exp(-rho(eta, x) / sigma)`` (density w.r.t. the volume measure), centred at
the Fréchet mean. Draws come from a Metropolis-Hastings random walk, so the
privacy guarantee only holds up to the sampler's approximation error: this is
an experimental testbed, not a certified release system.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import sphere as sphere_geom
from . import spdm as spdm_geom
from .errors import (AssumptionViolation, DomainError, InvariantViolation,
                     MixingFailure, SamplerStuck, UnsupportedDimension)
from .frechet import Dataset, MeanSolverOptions, frechet_mean_array
from .geometry import SPHERE, BallSpec, ManifoldDescriptor, Point

log = logging.getLogger(__name__)

HOMOGENEOUS = "homogeneous"
GENERAL = "general"
THEORETICAL = "theoretical"
EMPIRICAL = "empirical"
AUTO = "auto"

PRIVACY_CAVEAT = ("MCMC draws are approximate; the epsilon guarantee holds exactly "
                  "only for exact Laplace draws")

# Metropolis-Hastings safety limits
MIXING_WINDOW = 10_000
MIN_ACCEPTANCE = 1e-4
MAX_CONDITIONING_REJECTIONS = 100_000
_BLOCK = 1024


@dataclass(frozen=True)
class MechanismConfig:
    """Privacy budget, noise calibration and sampler settings.

    ``sensitivity_source="auto"`` uses the empirical tangent bound on the
    sphere and the (already tight) theoretical bound on SPD matrices.
    """

    epsilon: float = 1.0
    scale_rule: str = HOMOGENEOUS
    sensitivity_source: str = AUTO
    grid_n: int = 720
    condition_on_ball: bool = False
    burn_in: int = 10_000
    thinning: int = 100

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.scale_rule not in (HOMOGENEOUS, GENERAL):
            raise DomainError(f"unknown scale rule {self.scale_rule!r}")
        if self.sensitivity_source not in (AUTO, THEORETICAL, EMPIRICAL):
            raise DomainError(f"unknown sensitivity source {self.sensitivity_source!r}")
        if self.burn_in < 0 or self.thinning < 1:
            raise DomainError("need burn_in >= 0 and thinning >= 1")
        if self.grid_n < 8:
            raise DomainError("grid_n must be at least 8")

    def resolved_source(self, manifold: ManifoldDescriptor) -> str:
        if self.sensitivity_source != AUTO:
            return self.sensitivity_source
        return EMPIRICAL if manifold.kind == SPHERE else THEORETICAL


# --- sensitivity ------------------------------------------------------------

def curvature_factor(r: float, kappa: float) -> float:
    """h(r, kappa) = 2 r sqrt(kappa) cot(2 r sqrt(kappa)) for kappa > 0, else 1.

    Defined on the closed range 2 r sqrt(kappa) <= pi / 2, where it takes
    values in [0, 1]; beyond that an :class:`AssumptionViolation` is raised.
    """
    if r < 0:
        raise DomainError(f"radius must be non-negative, got {r}")
    if kappa <= 0:
        return 1.0
    a = 2.0 * r * math.sqrt(kappa)
    if a > math.pi / 2:
        raise AssumptionViolation(f"2 r sqrt(kappa) = {a:.6g} exceeds pi/2")
    if a == math.pi / 2:
        return 0.0
    if a < 1e-4:
        # x cot x = 1 - x^2/3 - x^4/45 - ...
        return 1.0 - a * a / 3.0 - a ** 4 / 45.0
    return a / math.tan(a)


def tangent_bound_theoretical(r: float, kappa: float) -> float:
    """Uniform bound 2 r (2 - h) on |log_m x - log_m y| over the ball."""
    return 2.0 * r * (2.0 - curvature_factor(r, kappa))


def sensitivity(n: int, r: float, kappa: float) -> float:
    """Global sensitivity bound 2 r (2 - h) / (n h) of the Fréchet mean."""
    if n < 1:
        raise DomainError("n must be at least 1")
    h = curvature_factor(r, kappa)
    if h <= 0:
        raise AssumptionViolation("h(r, kappa) = 0: radius too large for a finite bound")
    return 2.0 * r * (2.0 - h) / (n * h)


@functools.lru_cache(maxsize=256)
def _empirical_tangent_bound(angle: float, grid_n: int) -> float:
    phi = 2.0 * math.pi * np.arange(grid_n) / grid_n
    boundary = sphere_geom.polar_to_cartesian(np.full(grid_n, angle), phi)
    foot = boundary[0]
    logs = sphere_geom.log_map(np.broadcast_to(foot, boundary.shape), boundary)
    return float(pdist(logs).max())


def empirical_tangent_bound_at(r: float, grid_n: int = 720, kappa: float = 1.0) -> float:
    """Empirical tangent bound for a cap of radius ``r`` on the 2-sphere of curvature ``kappa``.

    Unlike :func:`tangent_bound_empirical` this takes a bare radius, so the
    closed end 2 r sqrt(kappa) = pi / 2 of a radius scan is allowed.
    """
    if grid_n < 8:
        raise DomainError("grid_n must be at least 8")
    if not 0 < r * math.sqrt(kappa) < math.pi / 2:
        raise DomainError(f"radius {r} outside (0, pi / (2 sqrt(kappa)))")
    ls = 1.0 / math.sqrt(kappa)
    return _empirical_tangent_bound(float(r / ls), int(grid_n)) * ls


def tangent_bound_empirical(ball: BallSpec, grid_n: int = 720) -> float:
    """Largest tangent-space spread of the ball boundary seen from a boundary point.

    ``grid_n`` equally spaced points on the boundary circle of the ball are
    mapped to the tangent space at the first of them, and the largest
    pairwise distance between the images is returned. By rotational symmetry
    the value does not depend on the ball's centre or on which boundary
    point is used as footpoint.
    """
    m = ball.manifold
    if m.kind != SPHERE or m.dim != 2:
        raise UnsupportedDimension("empirical tangent bound is only available on S^2")
    return empirical_tangent_bound_at(ball.radius, grid_n, m.kappa_upper)


def empirical_sensitivity(n: int, ball: BallSpec, grid_n: int = 720) -> float:
    h = curvature_factor(ball.radius, ball.manifold.kappa_upper)
    return tangent_bound_empirical(ball, grid_n) / (n * h)


def noise_scale(delta: float, epsilon: float, rule: str = HOMOGENEOUS) -> float:
    """sigma = delta / epsilon (homogeneous spaces) or 2 delta / epsilon."""
    if rule == HOMOGENEOUS:
        return delta / epsilon
    if rule == GENERAL:
        return 2.0 * delta / epsilon
    raise DomainError(f"unknown scale rule {rule!r}")


# --- Euclidean Laplace ------------------------------------------------------

def sample_euclidean_laplace(center, sigma, dim, rng, size=None):
    """Draw from the density proportional to exp(-|y - center|_2 / sigma) on R^dim.

    The radius is Gamma(dim, 1) distributed and the direction is a
    normalised standard Gaussian.

    Parameters
    ----------
    center : array_like, shape (dim,)
    sigma : float
        Scale; ``0`` returns ``center`` unchanged.
    dim : int
    rng : numpy.random.Generator
    size : int or None
        Number of draws. ``None`` returns one ``(dim,)`` vector.
    """
    if sigma < 0:
        raise DomainError("sigma must be non-negative")
    if dim < 1:
        raise DomainError("dim must be at least 1")
    center = np.asarray(center, dtype=float)
    if center.shape != (dim,):
        raise InvariantViolation(f"center must have shape ({dim},)")
    shape = (dim,) if size is None else (size, dim)
    if sigma == 0:
        return np.broadcast_to(center, shape).copy()
    x = rng.standard_normal(shape)
    u = x / np.linalg.norm(x, axis=-1, keepdims=True)
    radius = rng.gamma(dim, 1.0, size=None if size is None else (size, 1))
    return center + sigma * radius * u


def project_subspace_noise(dim_d, dim_D, sigma, n_draws, rng, chunk=1 << 18):
    """Monte Carlo estimate of E|P(Y) - center|^2 for a dim_D Laplace projected to dim_d coordinates."""
    if not 1 <= dim_d <= dim_D:
        raise DomainError("need 1 <= d <= D")
    total = 0.0
    done = 0
    zero = np.zeros(dim_D)
    while done < n_draws:
        m = min(chunk, n_draws - done)
        y = sample_euclidean_laplace(zero, sigma, dim_D, rng, size=m)
        total += float(np.sum(y[:, :dim_d] ** 2))
        done += m
    return total / n_draws


# --- Riemannian Laplace via Metropolis-Hastings ------------------------------

def _proposal_length(manifold, sigma):
    # proposals are drawn in kernel (unit-sphere) coordinates
    return sigma / manifold.length_scale


def laplace_chains(manifold: ManifoldDescriptor, etas, sigmas, rngs, *, burn_in=10_000,
                   thinning=100, n_samples=1, ball: BallSpec | None = None):
    """Run one Metropolis-Hastings chain per footpoint, in lockstep.

    Chain ``j`` starts at ``etas[j]`` and consumes random numbers only from
    ``rngs[j]``, in fixed blocks, so its output does not depend on how many
    other chains share the batch.

    Parameters
    ----------
    manifold : ManifoldDescriptor
    etas : ndarray, shape (m, *coord_shape)
        Footpoints; each chain is initialised at its footpoint.
    sigmas : array_like, shape (m,)
        Laplace rates, also used as proposal step lengths.
    rngs : sequence of numpy.random.Generator, length m
    burn_in, thinning : int
        The i-th retained state is the one after ``burn_in + i * thinning`` steps.
    n_samples : int
        Retained states per chain.
    ball : BallSpec, optional
        If given, retained states outside the ball are discarded and the chain
        moves on to the next thinning point.

    Returns
    -------
    samples : ndarray, shape (m, n_samples, *coord_shape)
    acceptance : ndarray, shape (m,)
        Fraction of accepted proposals per chain.
    """
    kern = manifold.kernel
    scale = manifold.length_scale
    etas = np.array(etas, dtype=float)
    m = len(etas)
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (m,))
    if np.any(sigmas <= 0):
        raise DomainError("sigma must be positive")
    if len(rngs) != m:
        raise DomainError("need one rng per chain")
    shape = etas.shape[1:]
    bshape = (m,) + (1,) * len(shape)
    step_len = _proposal_length(manifold, sigmas)

    dist_eta = kern.distance_from(etas)
    rate = scale / sigmas
    x = etas.copy()
    cur = np.zeros(m)  # rho(eta, x) / sigma
    samples = np.empty((m, n_samples) + shape)
    kept = np.zeros(m, dtype=int)
    rejected_draws = np.zeros(m, dtype=int)
    accepted = np.zeros(m, dtype=np.int64)
    window_acc = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    steps = 0
    next_keep = burn_in

    if burn_in == 0:
        active = _retain(x, samples, kept, rejected_draws, active, ball, n_samples)
        next_keep += thinning

    while active.any():
        z_blk = np.stack([g.standard_normal((_BLOCK,) + shape) for g in rngs], axis=1)
        w_blk = kern.proposal_directions(z_blk)
        log_u_blk = np.log(np.stack([g.random(_BLOCK) for g in rngs], axis=1))
        for b in range(_BLOCK):
            prop = kern.random_step(x, w_blk[b], step_len)
            new = dist_eta(prop) * rate
            ok = log_u_blk[b] < cur - new
            ok &= active
            x = np.where(ok.reshape(bshape), prop, x)
            cur = np.where(ok, new, cur)
            accepted += ok
            window_acc += ok
            steps += 1
            if steps % MIXING_WINDOW == 0:
                low = active & (window_acc < MIN_ACCEPTANCE * MIXING_WINDOW)
                if low.any():
                    raise MixingFailure(
                        f"acceptance below {MIN_ACCEPTANCE} over {MIXING_WINDOW} steps",
                        {"chains": np.flatnonzero(low).tolist(), "steps": steps,
                         "window_acceptance": (window_acc[low] / MIXING_WINDOW).tolist(),
                         "sigma": sigmas[low].tolist()})
                window_acc[:] = 0
            if steps == next_keep:
                active = _retain(x, samples, kept, rejected_draws, active, ball, n_samples)
                next_keep += thinning
                if not active.any():
                    break
    rate = accepted / max(steps, 1)
    log.debug("laplace chains: %d steps, mean acceptance %.3f", steps, float(rate.mean()))
    return samples, rate


def _retain(x, samples, kept, rejected_draws, active, ball, n_samples):
    take = active.copy()
    if ball is not None:
        kern = ball.manifold.kernel
        d = kern.dist(np.broadcast_to(ball.center.coords, x.shape), x) * ball.manifold.length_scale
        inside = d < ball.radius
        rejected_draws += take & ~inside
        if np.any(rejected_draws > MAX_CONDITIONING_REJECTIONS):
            raise SamplerStuck("conditioned sampler keeps landing outside the ball")
        take &= inside
    idx = np.flatnonzero(take)
    samples[idx, kept[idx]] = x[idx]
    kept[idx] += 1
    return active & (kept < n_samples)


def sample_riemannian_laplace(eta: Point, sigma: float, cfg: MechanismConfig, rng,
                              ball: BallSpec | None = None, size: int | None = None):
    """Draw from the Laplace law with footpoint ``eta`` and rate ``sigma``.

    With ``cfg.condition_on_ball`` the draws are restricted to ``ball``.
    Returns a :class:`Point`, or an array of ``size`` coordinate draws.
    """
    if cfg.condition_on_ball and ball is None:
        raise DomainError("condition_on_ball needs a ball")
    samples, _ = laplace_chains(
        eta.manifold, eta.coords[None], [sigma], [rng], burn_in=cfg.burn_in,
        thinning=cfg.thinning, n_samples=1 if size is None else size,
        ball=ball if cfg.condition_on_ball else None)
    if size is None:
        return Point(eta.manifold, samples[0, 0])
    return samples[0]


# --- end-to-end releases -----------------------------------------------------

def calibrate(manifold: ManifoldDescriptor, n: int, ball: BallSpec, cfg: MechanismConfig) -> dict:
    """Audit record: sensitivity, curvature factor and noise scale for ``n`` points."""
    r = ball.radius
    kappa = manifold.kappa_upper
    h = curvature_factor(r, kappa)
    source = cfg.resolved_source(manifold)
    if source == EMPIRICAL:
        delta = empirical_sensitivity(n, ball, cfg.grid_n)
    else:
        delta = sensitivity(n, r, kappa)
    sigma = noise_scale(delta, cfg.epsilon, cfg.scale_rule)
    return {"n": n, "r": r, "kappa": kappa, "h": h, "delta": delta,
            "epsilon": cfg.epsilon, "sigma": sigma, "sensitivity_source": source,
            "conditioned": cfg.condition_on_ball, "scale_rule": cfg.scale_rule,
            "note": PRIVACY_CAVEAT}


def privatize_frechet_mean(data: Dataset, cfg: MechanismConfig, rng,
                           opts: MeanSolverOptions = MeanSolverOptions()):
    """Release a Laplace draw centred at the Fréchet mean of ``data``.

    Returns ``(point, audit)`` where ``audit`` records the calibration.
    """
    m = data.manifold
    mean, iters, converged, _, _ = frechet_mean_array(m, data.array(), opts)
    audit = calibrate(m, data.n, data.ball, cfg)
    audit["mean_iterations"] = iters
    audit["mean_converged"] = converged
    eta = Point(m, mean)
    return sample_riemannian_laplace(eta, audit["sigma"], cfg, rng, ball=data.ball), audit


def ambient_ball_radius(manifold: ManifoldDescriptor, r: float) -> float:
    """Radius of the ambient Euclidean ball matched to a geodesic ball of radius r."""
    if manifold.kind == SPHERE:
        ls = manifold.length_scale
        return sphere_geom.chord_radius(r / ls) * ls
    return spdm_geom.ambient_radius(r)


def euclidean_noise_scale(manifold: ManifoldDescriptor, r: float, n: int,
                          cfg: MechanismConfig) -> float:
    """Noise scale of the ambient baseline: flat-space sensitivity 2 r_E / n."""
    delta_e = 2.0 * ambient_ball_radius(manifold, r) / n
    return noise_scale(delta_e, cfg.epsilon, cfg.scale_rule)


def euclidean_release(manifold: ManifoldDescriptor, mean, sigma_e: float, rng):
    """Perturb the ambient embedding of ``mean``; also report whether it stays on the manifold."""
    if manifold.kind == SPHERE:
        base = np.asarray(mean, dtype=float)
    else:
        base = spdm_geom.vech(mean)
    y = sample_euclidean_laplace(base, sigma_e, base.size, rng)
    if manifold.kind == SPHERE:
        on = abs(float(np.linalg.norm(y)) - 1.0) <= 1e-10
    else:
        mat = spdm_geom.unvech(y)
        on = bool(np.linalg.eigvalsh(mat)[0] > spdm_geom.EIG_FLOOR)
    return y, on


def privatize_euclidean_baseline(data: Dataset, cfg: MechanismConfig, rng,
                                 opts: MeanSolverOptions = MeanSolverOptions()):
    """Ambient-space Laplace release of the Fréchet mean.

    The sphere mean is perturbed in R^(d+1); an SPD mean is perturbed through
    its half-vectorisation. Returns ``(vector, on_manifold)``.
    """
    m = data.manifold
    mean = frechet_mean_array(m, data.array(), opts)[0]
    sigma_e = euclidean_noise_scale(m, data.ball.radius, data.n, cfg)
    return euclidean_release(m, mean, sigma_e, rng)


def config_dict(cfg: MechanismConfig) -> dict:
    return asdict(cfg)
