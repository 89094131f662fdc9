"""Closed-form geometry of the unit sphere S^d embedded in R^(d+1).

The array functions broadcast over leading axes, so a stack of points with
shape ``(..., d + 1)`` can be processed at once.
"""

import math

import numpy as np

from . import geometry
from .errors import DomainError, InvariantViolation, LogUndefined, UnsupportedDimension

NORTH_POLE = np.array([0.0, 0.0, 1.0])

_UNIT_TOL = 1e-10
_REPAIR_TOL = 1e-8
# below this angle theta / sin(theta) is evaluated by its series
_SERIES_CUTOFF = 1e-6
_ANTIPODAL_TOL = 1e-8


def validate_point(x):
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > _REPAIR_TOL:
        raise InvariantViolation(f"not a unit vector (norm {norm!r})")
    if abs(norm - 1.0) > _UNIT_TOL * 0.01:
        x = x / norm
    return x


def validate_tangent(x, v):
    dot = float(np.dot(x, v))
    if abs(dot) > _REPAIR_TOL * max(1.0, np.linalg.norm(v)):
        raise InvariantViolation(f"vector is not tangent (<v, x> = {dot!r})")
    if dot != 0.0:
        v = v - dot * x
    return v


def _norm(a):
    return np.sqrt((a * a).sum(axis=-1))


def dist(x, y):
    """Great-circle distance.

    Uses ``2 atan2(|x - y|, |x + y|)``, which equals ``arccos(<x, y>)`` but
    keeps full precision for nearly equal or nearly antipodal points.
    """
    return 2.0 * np.arctan2(_norm(x - y), _norm(x + y))


def inner(x, u, v):
    return np.sum(u * v, axis=-1)


def exp_map(x, v):
    n = _norm(v)[..., None]
    # sin(n) / n, with the n = 0 case harmless because then v = 0
    out = np.cos(n) * x + (np.sin(n) / np.where(n > 0, n, 1.0)) * v
    return out / _norm(out)[..., None]


def log_map(x, y):
    theta = dist(x, y)
    if np.any(np.pi - theta < _ANTIPODAL_TOL):
        raise LogUndefined("log map undefined for antipodal points")
    cos_t = np.sum(x * y, axis=-1)
    u = y - cos_t[..., None] * x
    # enforce tangency exactly before rescaling
    u = u - np.sum(u * x, axis=-1)[..., None] * x
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(theta < _SERIES_CUTOFF,
                          1.0 + theta * theta / 6.0,
                          theta / np.sin(theta))
    return factor[..., None] * u


def embed(x):
    """Cartesian coordinates in R^(d+1) (the identity)."""
    return np.asarray(x, dtype=float)


def project_tangent(x, z):
    return z - (z * x).sum(axis=-1)[..., None] * x


def proposal_directions(z):
    """Normalise ambient Gaussian draws to unit length (zero draws stay zero)."""
    nz = _norm(z)[..., None]
    return np.divide(z, nz, out=np.zeros_like(z), where=nz > 0)


def tangent_from_direction(x, w, length):
    """Scale the unit ambient direction ``w`` to ``length`` and project onto T_x.

    A direction parallel to ``x`` projects to the zero vector; in a Metropolis
    chain that is a (symmetric) null move, so it is not redrawn there.
    """
    return project_tangent(x, w * np.asarray(length)[..., None])


def random_step(x, w, length):
    """Proposal point exp_x of the tangent step built from direction ``w``."""
    return exp_map(x, tangent_from_direction(x, w, length))


def distance_from(x):
    """Return ``y -> dist(x, y)`` with ``x`` fixed."""
    x = np.asarray(x, dtype=float)
    return lambda y: dist(x, y)


def tangent_proposal(x, z, length):
    return tangent_from_direction(x, proposal_directions(z), length)


def draw_tangent_proposal(x, sigma, rng):
    """One proposal vector at ``x`` of ambient length at most ``sigma``.

    A standard Gaussian in R^(d+1) is rescaled to length ``sigma`` and then
    projected onto the tangent space, so the result is symmetric in law
    (``v`` and ``-v`` are equally likely).
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    while True:
        v = tangent_proposal(x, rng.standard_normal(x.shape), sigma)
        if np.any(v != 0.0):
            return v


def polar_to_cartesian(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = np.sin(theta)
    return np.stack([s * np.cos(phi), s * np.sin(phi), np.cos(theta)], axis=-1)


def sample_polar_cap(r, rng, size=None, d=2):
    """Sample points around the north pole of S^2 with polar angle <= r.

    Angles are drawn uniformly, theta on [0, r] and phi on [0, 2 pi). The
    result is therefore denser near the pole than an area-uniform cap.

    Parameters
    ----------
    r : float
        Cap radius in (0, pi].
    rng : numpy.random.Generator
    size : int or None
        Number of points; ``None`` returns a single ``(3,)`` vector.
    d : int
        Sphere dimension. Only ``d = 2`` is supported.

    Returns
    -------
    ndarray, shape (3,) or (size, 3)
    """
    if d != 2:
        raise UnsupportedDimension("polar cap sampling is only available on S^2")
    if not 0 < r <= math.pi:
        raise DomainError(f"cap radius must lie in (0, pi], got {r}")
    theta = rng.uniform(0.0, r, size=size)
    phi = rng.uniform(0.0, 2 * math.pi, size=size)
    return polar_to_cartesian(theta, phi)


def chord_radius(r):
    """Euclidean radius of the smallest ambient ball containing a geodesic cap of radius ``r``."""
    if not 0 <= r <= math.pi:
        raise DomainError(f"r must lie in [0, pi], got {r}")
    return 2.0 * math.sin(r / 2.0)


def rotation_matrix(axis, angle):
    """Rotation about ``axis`` by ``angle`` (Rodrigues), for 3-vectors."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


# --- Point-level wrappers ---------------------------------------------------

def _require_sphere(p):
    if p.manifold.kind != geometry.SPHERE:
        raise InvariantViolation("expected a point on the sphere")


def sphere_exp(p, v):
    _require_sphere(p)
    return geometry.exp(p, v)


def sphere_log(p, q):
    _require_sphere(p)
    return geometry.log(p, q)


def sphere_distance(p, q):
    _require_sphere(p)
    return geometry.distance(p, q)
