"""Manifold descriptors, points, tangent vectors and the shared operations.

Heavy lifting lives in the array-level kernels (:mod:`manifold_dp.sphere`
and :mod:`manifold_dp.spdm`). This module validates inputs, wraps raw arrays
into :class:`Point` / :class:`TangentVector` values and dispatches on the
manifold kind.
"""

from __future__ import annotations

import importlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FootpointMismatch, InvariantViolation

SPHERE = "sphere"
SPDM = "spdm"

# tolerance used when comparing footpoints of tangent vectors
FOOTPOINT_TOL = 1e-10


@dataclass(frozen=True)
class ManifoldDescriptor:
    """Static description of a manifold.

    ``order`` is the ambient size: ``d + 1`` for the sphere (vectors in
    R^(d+1)) and ``k`` for SPD matrices (k x k arrays).
    """

    kind: str
    dim: int
    kappa_upper: float
    injectivity_radius: float
    order: int

    def __post_init__(self):
        if self.kind == SPHERE:
            if self.dim < 1 or not self.kappa_upper > 0:
                raise InvariantViolation("sphere needs d >= 1 and kappa > 0")
        elif self.kind == SPDM:
            if self.order < 2 or self.kappa_upper > 0:
                raise InvariantViolation("spdm needs k >= 2 and kappa <= 0")
        else:
            raise InvariantViolation(f"unknown manifold kind {self.kind!r}")

    @property
    def r_star(self) -> float:
        """Largest admissible data radius, 0.5 * min(inj, pi / (2 sqrt(kappa)))."""
        if self.kappa_upper <= 0:
            return 0.5 * self.injectivity_radius
        return 0.5 * min(self.injectivity_radius,
                         0.5 * math.pi / math.sqrt(self.kappa_upper))

    @property
    def length_scale(self) -> float:
        """Factor turning unit-sphere lengths into lengths of this manifold."""
        if self.kind == SPHERE:
            return 1.0 / math.sqrt(self.kappa_upper)
        return 1.0

    @property
    def coord_shape(self) -> tuple:
        if self.kind == SPHERE:
            return (self.order,)
        return (self.order, self.order)

    @property
    def kernel(self):
        """Array-level implementation module for this manifold kind."""
        return importlib.import_module(f"manifold_dp.{self.kind}")


def sphere_manifold(d: int = 2, kappa: float = 1.0) -> ManifoldDescriptor:
    """The d-sphere of constant curvature ``kappa`` (radius kappa^-1/2)."""
    return ManifoldDescriptor(SPHERE, d, float(kappa), math.pi / math.sqrt(kappa), d + 1)


def spdm_manifold(k: int = 2) -> ManifoldDescriptor:
    """k x k SPD matrices with the affine-invariant metric."""
    return ManifoldDescriptor(SPDM, k * (k + 1) // 2, 0.0, math.inf, k)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Point:
    """A validated location on a manifold.

    Sphere inputs within 1e-8 of unit norm are renormalised and SPD inputs
    within 1e-8 of symmetric are symmetrised; anything further off raises
    :class:`InvariantViolation`.
    """

    manifold: ManifoldDescriptor
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        shape = self.manifold.coord_shape
        if coords.shape != shape:
            if coords.size == math.prod(shape):
                coords = coords.reshape(shape)  # row-major flat input
            else:
                raise InvariantViolation(
                    f"expected coordinates of shape {shape}, got {coords.shape}")
        coords = self.manifold.kernel.validate_point(coords)
        object.__setattr__(self, "coords", _frozen(coords))

    def __repr__(self):
        return f"Point({self.manifold.kind}, {self.coords.tolist()})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Ambient coordinates of an element of the tangent space at ``footpoint``."""

    footpoint: Point
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != self.footpoint.coords.shape:
            raise InvariantViolation(
                f"tangent shape {coords.shape} != footpoint shape "
                f"{self.footpoint.coords.shape}")
        kern = self.footpoint.manifold.kernel
        coords = kern.validate_tangent(self.footpoint.coords, coords)
        object.__setattr__(self, "coords", _frozen(coords))

    @property
    def manifold(self) -> ManifoldDescriptor:
        return self.footpoint.manifold

    def __repr__(self):
        return f"TangentVector(at={self.footpoint.coords.tolist()}, {self.coords.tolist()})"


@dataclass(frozen=True, eq=False)
class BallSpec:
    """Open geodesic ball B_r(m0) certifying where the data live."""

    center: Point
    radius: float

    def __post_init__(self):
        r = float(self.radius)
        if not r > 0:
            raise DomainError(f"ball radius must be positive, got {r}")
        r_star = self.center.manifold.r_star
        if not r < r_star:
            raise DomainError(f"ball radius {r} is not below r* = {r_star}")
        object.__setattr__(self, "radius", r)

    @property
    def manifold(self) -> ManifoldDescriptor:
        return self.center.manifold


def _check_same_manifold(*points):
    first = points[0].manifold
    for p in points[1:]:
        if p.manifold != first:
            raise InvariantViolation("points live on different manifolds")
    return first


def distance(p: Point, q: Point) -> float:
    """Geodesic distance between two points."""
    m = _check_same_manifold(p, q)
    return float(m.kernel.dist(p.coords, q.coords)) * m.length_scale


def exp(p: Point, v: TangentVector) -> Point:
    """Riemannian exponential map at ``p``."""
    if not same_point(p, v.footpoint):
        raise FootpointMismatch("tangent vector is not based at p")
    return Point(p.manifold, p.manifold.kernel.exp_map(p.coords, v.coords))


def log(p: Point, q: Point) -> TangentVector:
    """Inverse exponential map: the tangent vector at ``p`` pointing to ``q``."""
    _check_same_manifold(p, q)
    return TangentVector(p, p.manifold.kernel.log_map(p.coords, q.coords))


def same_point(p: Point, q: Point, tol: float = FOOTPOINT_TOL) -> bool:
    return (p.manifold == q.manifold
            and float(np.max(np.abs(p.coords - q.coords))) <= tol)


def metric_inner(v: TangentVector, w: TangentVector) -> float:
    """Riemannian inner product of two tangent vectors at the same footpoint.

    Sphere: scaled ambient dot product. SPDM: Tr(p^-1 v p^-1 w).
    """
    if not same_point(v.footpoint, w.footpoint):
        raise FootpointMismatch("tangent vectors have different footpoints")
    m = v.manifold
    val = m.kernel.inner(v.footpoint.coords, v.coords, w.coords)
    return float(val) * m.length_scale ** 2


def tangent_norm(v: TangentVector) -> float:
    return math.sqrt(max(metric_inner(v, v), 0.0))


def geodesic_point(p: Point, q: Point, t: float) -> Point:
    """Point a fraction ``t`` of the way along the geodesic from p to q."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    _check_same_manifold(p, q)
    kern = p.manifold.kernel
    v = kern.log_map(p.coords, q.coords)
    return Point(p.manifold, kern.exp_map(p.coords, t * v))


def in_ball(ball: BallSpec, p: Point) -> bool:
    return distance(ball.center, p) < ball.radius


# --- serialisation --------------------------------------------------------

def point_to_json(p: Point) -> dict:
    return {"manifold": p.manifold.kind, "coords": p.coords.ravel().tolist()}


def point_from_json(obj: dict, manifold: ManifoldDescriptor | None = None) -> Point:
    """Inverse of :func:`point_to_json`.

    Without an explicit descriptor the dimension is inferred from the number
    of coordinates (sphere: d + 1 entries, spdm: k * k entries, kappa = 1).
    """
    kind = obj["manifold"]
    coords = np.asarray(obj["coords"], dtype=float).ravel()
    if manifold is None:
        if kind == SPHERE:
            manifold = sphere_manifold(coords.size - 1)
        elif kind == SPDM:
            k = math.isqrt(coords.size)
            if k * k != coords.size:
                raise InvariantViolation(f"{coords.size} entries is not a square matrix")
            manifold = spdm_manifold(k)
        else:
            raise InvariantViolation(f"unknown manifold kind {kind!r}")
    elif manifold.kind != kind:
        raise InvariantViolation(f"expected {manifold.kind} point, got {kind}")
    return Point(manifold, coords)
