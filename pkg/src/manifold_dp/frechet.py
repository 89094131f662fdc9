"""Fréchet mean by Riemannian gradient descent."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InvariantViolation
from .geometry import BallSpec, ManifoldDescriptor, Point, TangentVector, in_ball

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanSolverOptions:
    """Gradient-descent settings.

    ``init`` selects the starting iterate: a data index, or ``"medoid"`` for
    the data point of least energy.
    """

    step: float = 0.5
    tol: float = 1e-5
    max_iter: int = 500
    init: int | str = 0

    def __post_init__(self):
        if not 0 < self.step <= 1:
            raise DomainError(f"step must lie in (0, 1], got {self.step}")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Points on one manifold together with a ball certificate containing them."""

    points: tuple
    ball: BallSpec

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise DomainError("dataset must contain at least one point")
        m = self.ball.manifold
        for p in pts:
            if p.manifold != m:
                raise InvariantViolation("dataset points and ball live on different manifolds")
            if not in_ball(self.ball, p):
                raise InvariantViolation("data point outside the certified ball")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_arrays(cls, coords, ball: BallSpec) -> "Dataset":
        return cls(tuple(Point(ball.manifold, c) for c in np.asarray(coords, dtype=float)), ball)

    @property
    def manifold(self) -> ManifoldDescriptor:
        return self.ball.manifold

    @property
    def n(self) -> int:
        return len(self.points)

    def array(self) -> np.ndarray:
        return np.stack([p.coords for p in self.points])


class FrechetResult(NamedTuple):
    mean: Point
    iterations: int
    converged: bool
    gradient_norm: float
    energies: tuple = ()


# --- array level ----------------------------------------------------------

def energy_array(manifold: ManifoldDescriptor, data, x) -> float:
    d = manifold.kernel.dist(np.asarray(x)[None], data) * manifold.length_scale
    return float(np.sum(d * d) / (2 * len(data)))


def descent_direction_array(manifold: ManifoldDescriptor, data, x):
    """Average of log_x(x_i): the negative Riemannian gradient of the energy."""
    kern = manifold.kernel
    x = np.asarray(x)
    logs = kern.log_map(np.broadcast_to(x, data.shape), data)
    return logs.mean(axis=0)


def _initial_index(manifold, data, init):
    if init == "medoid":
        energies = [energy_array(manifold, data, p) for p in data]
        return int(np.argmin(energies))
    idx = int(init)
    if not -len(data) <= idx < len(data):
        raise DomainError(f"init index {idx} out of range for {len(data)} points")
    return idx


def frechet_mean_array(manifold: ManifoldDescriptor, data, opts: MeanSolverOptions = MeanSolverOptions(),
                       record_energy: bool = False):
    """Gradient descent on raw coordinates.

    Parameters
    ----------
    manifold : ManifoldDescriptor
    data : ndarray, shape (n, *manifold.coord_shape)
    opts : MeanSolverOptions
    record_energy : bool
        Keep the energy of every iterate (starting with the initial one).

    Returns
    -------
    x : ndarray
        Final iterate.
    iterations : int
    converged : bool
        True when the step length fell below ``opts.tol`` within ``max_iter``.
    gradient_norm : float
        Metric norm of the last descent direction.
    energies : tuple
    """
    data = np.asarray(data, dtype=float)
    kern = manifold.kernel
    scale = manifold.length_scale
    if len(data) == 0:
        raise DomainError("empty dataset")
    x = data[_initial_index(manifold, data, opts.init)]
    energies = [energy_array(manifold, data, x)] if record_energy else []
    if len(data) == 1:
        return x, 0, True, 0.0, tuple(energies)

    gnorm = np.inf
    for it in range(1, opts.max_iter + 1):
        v = descent_direction_array(manifold, data, x)
        gnorm = float(np.sqrt(max(kern.inner(x, v, v), 0.0))) * scale
        x_new = kern.exp_map(x, opts.step * v)
        moved = float(kern.dist(x, x_new)) * scale
        x = x_new
        if record_energy:
            energies.append(energy_array(manifold, data, x))
        if moved < opts.tol:
            log.debug("frechet mean converged in %d iterations (|grad| %.3g)", it, gnorm)
            return x, it, True, gnorm, tuple(energies)
    log.warning("frechet mean did not converge in %d iterations (|grad| %.3g)",
                opts.max_iter, gnorm)
    return x, opts.max_iter, False, gnorm, tuple(energies)


# --- Point level ----------------------------------------------------------

def energy(data: Dataset, x: Point) -> float:
    """F_2(x) = (1 / 2n) * sum of squared geodesic distances to the data."""
    if x.manifold != data.manifold:
        raise InvariantViolation("x is not on the dataset's manifold")
    return energy_array(data.manifold, data.array(), x.coords)


def gradient_step_direction(data: Dataset, x: Point) -> TangentVector:
    if x.manifold != data.manifold:
        raise InvariantViolation("x is not on the dataset's manifold")
    return TangentVector(x, descent_direction_array(data.manifold, data.array(), x.coords))


def frechet_mean(data: Dataset, opts: MeanSolverOptions = MeanSolverOptions(),
                 record_energy: bool = False) -> FrechetResult:
    """Sample Fréchet mean of ``data``.

    Non-convergence is reported through ``converged=False`` together with the
    last iterate rather than raised.
    """
    x, it, ok, gnorm, energies = frechet_mean_array(
        data.manifold, data.array(), opts, record_energy=record_energy)
    return FrechetResult(Point(data.manifold, x), it, ok, gnorm, energies)

