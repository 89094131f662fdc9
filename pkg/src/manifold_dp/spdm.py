"""SPD matrices under the affine-invariant (Rao-Fisher) metric.

All matrix functions go through a symmetric eigendecomposition; nothing
here uses a power series. Array functions accept stacks ``(..., k, k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import DomainError, InvariantViolation, SamplerStuck

_SYM_TOL = 1e-10
_REPAIR_TOL = 1e-8
EIG_FLOOR = 1e-12
MAX_REJECTIONS = 10**6


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition ``Q diag(w) Q^T`` with ascending eigenvalues."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def apply(self, func):
        """Return ``Q diag(func(w)) Q^T``, symmetrised."""
        q = self.eigenvectors
        out = (q * func(self.eigenvalues)[..., None, :]) @ _t(q)
        return _sym(out)


def sym_eig(a) -> SymEigen:
    w, q = np.linalg.eigh(a)
    return SymEigen(w, q)


def _t(a):
    return np.swapaxes(a, -1, -2)


def _sym(a):
    return 0.5 * (a + _t(a))


def is_spd(a, floor=EIG_FLOOR) -> bool:
    """Symmetric with smallest eigenvalue above ``floor``."""
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a - _t(a)) > _SYM_TOL:
        return False
    return bool(np.linalg.eigvalsh(_sym(a))[..., 0] > floor)


def validate_point(a):
    asym = np.linalg.norm(a - a.T)
    if asym > _REPAIR_TOL:
        raise InvariantViolation(f"matrix is not symmetric (asymmetry {asym:.3g})")
    a = _sym(a)
    lam_min = np.linalg.eigvalsh(a)[0]
    if not lam_min > EIG_FLOOR:
        raise InvariantViolation(f"matrix is not positive definite (min eigenvalue {lam_min:.3g})")
    return a


def validate_tangent(x, v):
    asym = np.linalg.norm(v - v.T)
    if asym > _REPAIR_TOL:
        raise InvariantViolation(f"tangent matrix is not symmetric (asymmetry {asym:.3g})")
    return _sym(v)


def sym_exp(a):
    return sym_eig(a).apply(np.exp)


def sym_log(a):
    return sym_eig(a).apply(np.log)


def _sqrt_pair(x):
    """(x^1/2, x^-1/2) from one decomposition."""
    e = sym_eig(x)
    return e.apply(np.sqrt), e.apply(lambda w: 1.0 / np.sqrt(w))


def exp_map(x, v):
    s, si = _sqrt_pair(x)
    return _sym(s @ sym_exp(_sym(si @ v @ si)) @ s)


def log_map(x, y):
    s, si = _sqrt_pair(x)
    return _sym(s @ sym_log(_sym(si @ y @ si)) @ s)


def dist(x, y):
    _, si = _sqrt_pair(x)
    w = np.linalg.eigvalsh(_sym(si @ y @ si))
    return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))


def inner(x, u, v):
    xi = np.linalg.inv(x)
    return np.einsum("...ij,...ji->...", xi @ u, xi @ v)


def proposal_directions(z):
    """Symmetrise ambient Gaussian draws and normalise them in Frobenius norm.

    ``(z + z^T) / 2`` is isotropic for the trace inner product, so the result
    is uniform on the unit sphere of the tangent space at the identity.
    """
    s_mat = _sym(z)
    nz = np.sqrt(np.einsum("...ij,...ij->...", s_mat, s_mat))[..., None, None]
    return np.divide(s_mat, nz, out=np.zeros_like(s_mat), where=nz > 0)


def tangent_from_direction(x, w, length):
    """Carry a unit direction at the identity to T_x (congruence by x^1/2), scaled to ``length``."""
    s, _ = _sqrt_pair(x)
    return _sym(s @ (w * np.asarray(length)[..., None, None]) @ s)


def random_step(x, w, length):
    """Proposal point exp_x(x^1/2 (length w) x^1/2) = x^1/2 Exp(length w) x^1/2."""
    s, _ = _sqrt_pair(x)
    return _sym(s @ sym_exp(w * np.asarray(length)[..., None, None]) @ s)


def distance_from(x):
    """Return ``y -> dist(x, y)`` with the whitening of ``x`` computed once."""
    _, si = _sqrt_pair(np.asarray(x, dtype=float))
    return lambda y: np.sqrt(np.sum(np.log(np.linalg.eigvalsh(_sym(si @ y @ si))) ** 2, axis=-1))


def tangent_proposal(x, z, length):
    return tangent_from_direction(x, proposal_directions(z), length)


def embed(x):
    return vech(x)


def vech(a):
    """Stack the lower triangle column by column (no off-diagonal weighting)."""
    a = np.asarray(a, dtype=float)
    k = a.shape[-1]
    cols, rows = np.triu_indices(k)
    return a[..., rows, cols]


def unvech(x):
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    k = (math.isqrt(8 * m + 1) - 1) // 2
    if k * (k + 1) // 2 != m or m == 0:
        raise InvariantViolation(f"length {m} is not a triangular number")
    cols, rows = np.triu_indices(k)
    out = np.zeros(x.shape[:-1] + (k, k))
    out[..., rows, cols] = x
    out[..., cols, rows] = x
    return out


def ambient_radius(r):
    """Frobenius radius around I of the smallest ball containing B_r(I): e^r - 1."""
    if r < 0:
        raise DomainError(f"radius must be non-negative, got {r}")
    return math.expm1(r)


def wishart_sample(k, df, rng, scale=None):
    """Draw from W(V, df) as a sum of ``df`` Gaussian outer products.

    ``V`` defaults to ``I_k / k`` so that the mean ``df * V`` equals I when
    ``df = k``.
    """
    if int(df) != df or df < k:
        raise DomainError(f"need integer df >= k, got df={df}, k={k}")
    df = int(df)
    if scale is None:
        chol = np.eye(k) / math.sqrt(k)
    else:
        chol = np.linalg.cholesky(scale)
    z = rng.standard_normal((df, k)) @ chol.T
    return _sym(z.T @ z)


def sample_ball_wishart(ball, df, rng, size=None, max_rejections=MAX_REJECTIONS):
    """Wishart W(I/k, df) draws conditioned on lying in ``ball`` (centred at I).

    Candidates are generated in chunks but accepted in generation order, so
    the output has the law of sequential rejection sampling.

    Returns one ``(k, k)`` matrix, or ``(size, k, k)`` when ``size`` is given.
    """
    k = ball.manifold.order
    if not np.allclose(ball.center.coords, np.eye(k), atol=1e-12):
        raise DomainError("ball must be centred at the identity")
    if int(df) != df or df < k:
        raise DomainError(f"need integer df >= k, got df={df}, k={k}")
    want = 1 if size is None else int(size)
    out = []
    misses = 0
    while len(out) < want:
        chunk = max(2 * (want - len(out)), 8)
        z = rng.standard_normal((chunk, int(df), k)) / math.sqrt(k)
        x = _sym(_t(z) @ z)
        lam = np.linalg.eigvalsh(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.sqrt(np.sum(np.log(lam) ** 2, axis=-1))
        good = (lam[:, 0] > EIG_FLOOR) & (rho < ball.radius)
        for i in range(chunk):
            if good[i]:
                out.append(x[i])
                misses = 0
                if len(out) == want:
                    break
            else:
                misses += 1
                if misses >= max_rejections:
                    raise SamplerStuck(
                        f"{max_rejections} consecutive rejections for radius {ball.radius}")
    if size is None:
        return out[0]
    return np.stack(out)


# --- Point-level wrappers ---------------------------------------------------

def _require_spdm(p):
    if p.manifold.kind != geometry.SPDM:
        raise InvariantViolation("expected an SPD matrix point")


def spdm_exp(p, v):
    _require_spdm(p)
    return geometry.exp(p, v)


def spdm_log(q, p):
    _require_spdm(q)
    return geometry.log(q, p)


def spdm_distance(q, p):
    _require_spdm(q)
    return geometry.distance(q, p)
