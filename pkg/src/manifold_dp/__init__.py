"""Differential privacy for Fréchet means on Riemannian manifolds."""

from .errors import (AssumptionViolation, DomainError, FootpointMismatch, InvariantViolation,
                     LogUndefined, ManifoldError, MixingFailure, SamplerStuck,
                     UnsupportedDimension)
from .geometry import (BallSpec, ManifoldDescriptor, Point, TangentVector, distance, exp,
                       geodesic_point, in_ball, log, metric_inner, point_from_json,
                       point_to_json, sphere_manifold, spdm_manifold, tangent_norm)
from .frechet import Dataset, FrechetResult, MeanSolverOptions, energy, frechet_mean, gradient_step_direction
from .mechanism import (MechanismConfig, curvature_factor, privatize_euclidean_baseline,
                        privatize_frechet_mean, project_subspace_noise,
                        sample_euclidean_laplace, sample_riemannian_laplace, sensitivity,
                        tangent_bound_empirical, tangent_bound_theoretical)

__version__ = "0.1.0"
