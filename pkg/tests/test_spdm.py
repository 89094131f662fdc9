import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm, logm

from manifold_dp import BallSpec, Point, TangentVector, in_ball, spdm_manifold
from manifold_dp import spdm
from manifold_dp.errors import DomainError, InvariantViolation, SamplerStuck
from manifold_dp.spdm import (ambient_radius, sample_ball_wishart, spdm_distance, spdm_exp,
                              spdm_log, sym_eig, unvech, vech, wishart_sample)

from conftest import random_spd, random_sym

seeds = st.integers(min_value=0, max_value=2**32 - 1)
P2 = spdm_manifold(2)


def _pt(a, m=P2):
    return Point(m, a)


class TestSymEigen:
    @settings(max_examples=50, deadline=None)
    @given(seeds, st.integers(2, 5))
    def test_reconstruction(self, seed, k):
        rng = np.random.default_rng(seed)
        a = random_sym(rng, k, scale=3.0)
        e = sym_eig(a)
        q, w = e.eigenvectors, e.eigenvalues
        assert np.all(np.diff(w) >= 0)
        assert np.linalg.norm(q @ np.diag(w) @ q.T - a) <= 1e-9 * max(np.linalg.norm(a), 1e-300)
        assert np.linalg.norm(q.T @ q - np.eye(k)) <= 1e-10

    def test_matches_scipy(self, rng):
        a = random_sym(rng, 3)
        assert np.allclose(spdm.sym_exp(a), expm(a), atol=1e-12)
        b = random_spd(rng, 3)
        assert np.allclose(spdm.sym_log(b), logm(b).real, atol=1e-10)


class TestExpLog:
    def test_identity(self):
        p = _pt(np.eye(2))
        assert np.allclose(spdm_exp(p, TangentVector(p, np.zeros((2, 2)))).coords, np.eye(2))

    def test_diagonal(self):
        p = _pt(np.eye(2))
        q = spdm_exp(p, TangentVector(p, np.diag([0.3, -1.2])))
        assert np.allclose(q.coords, np.diag(np.exp([0.3, -1.2])), atol=1e-14)

    def test_log_same(self, rng):
        p = _pt(random_spd(rng))
        assert np.allclose(spdm_log(p, p).coords, 0, atol=1e-12)

    def test_log_diag(self):
        v = spdm_log(_pt(np.eye(2)), _pt(np.diag([math.e, math.e])))
        assert np.allclose(v.coords, np.eye(2), atol=1e-14)

    def test_non_symmetric_tangent(self):
        p = _pt(np.eye(2))
        with pytest.raises(InvariantViolation):
            TangentVector(p, [[0, 1], [0, 0]])

    @settings(max_examples=60, deadline=None)
    @given(seeds, st.integers(2, 4))
    def test_roundtrips(self, seed, k):
        rng = np.random.default_rng(seed)
        p, q = random_spd(rng, k), random_spd(rng, k)
        # tangent vector of moderate length in the metric at p
        s, _ = spdm._sqrt_pair(p)
        u = random_sym(rng, k)
        v = s @ (u * (3.0 / np.linalg.norm(u))) @ s
        assert np.allclose(spdm.log_map(p, spdm.exp_map(p, v)), v, atol=1e-8)
        assert np.allclose(spdm.exp_map(p, spdm.log_map(p, q)), q, atol=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_exp_at_identity_is_matrix_exp(self, seed):
        rng = np.random.default_rng(seed)
        v = random_sym(rng, 3)
        assert np.allclose(spdm.exp_map(np.eye(3), v), expm(v), atol=1e-9, rtol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_log_norm_equals_distance(self, seed):
        rng = np.random.default_rng(seed)
        p, q = random_spd(rng, 3), random_spd(rng, 3)
        v = spdm.log_map(p, q)
        assert math.sqrt(spdm.inner(p, v, v)) == pytest.approx(spdm.dist(p, q), abs=1e-8)


class TestDistance:
    def test_examples(self):
        i = _pt(np.eye(2))
        assert spdm_distance(i, i) == pytest.approx(0, abs=1e-15)
        assert spdm_distance(i, _pt(np.diag([math.e, math.e]))) == pytest.approx(math.sqrt(2))

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_generalised_eigenvalues(self, seed):
        rng = np.random.default_rng(seed)
        p, q = random_spd(rng, 3), random_spd(rng, 3)
        lam = np.linalg.eigvals(np.linalg.solve(q, p)).real
        assert spdm.dist(q, p) == pytest.approx(np.sqrt(np.sum(np.log(lam) ** 2)), abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_affine_invariance(self, seed):
        rng = np.random.default_rng(seed)
        p, q = random_spd(rng, 3), random_spd(rng, 3)
        a = rng.standard_normal((3, 3)) + 2 * np.eye(3)
        if abs(np.linalg.det(a)) < 1e-2:
            return
        assert spdm.dist(a @ p @ a.T, a @ q @ a.T) == pytest.approx(spdm.dist(p, q), abs=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_inversion_invariance(self, seed):
        rng = np.random.default_rng(seed)
        p, q = random_spd(rng, 3), random_spd(rng, 3)
        d = spdm.dist(np.linalg.inv(p), np.linalg.inv(q))
        assert d == pytest.approx(spdm.dist(p, q), abs=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_distance_from_identity_is_log_norm(self, seed):
        rng = np.random.default_rng(seed)
        x = random_spd(rng, 3)
        assert spdm.dist(np.eye(3), x) == pytest.approx(np.linalg.norm(logm(x).real), abs=1e-9)

    def test_distance_from_closure(self, rng):
        p = random_spd(rng, 3)
        ys = np.stack([random_spd(rng, 3) for _ in range(20)])
        assert np.allclose(spdm.distance_from(p)(ys), spdm.dist(p, ys), atol=1e-12)


class TestVech:
    def test_identity(self):
        assert vech(np.eye(2)).tolist() == [1, 0, 1]

    def test_order(self):
        a = np.array([[1, 2, 4], [2, 3, 5], [4, 5, 6]], dtype=float)
        assert vech(a).tolist() == [1, 2, 4, 3, 5, 6]

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.integers(2, 5))
    def test_roundtrip(self, seed, k):
        a = random_sym(np.random.default_rng(seed), k)
        assert len(vech(a)) == k * (k + 1) // 2
        assert np.array_equal(unvech(vech(a)), a)

    def test_bad_length(self):
        with pytest.raises(InvariantViolation):
            unvech(np.zeros(4))

    def test_unweighted_off_diagonal(self):
        # off-diagonals are counted once, so the vech distance is below Frobenius
        a = np.array([[0, 1], [1, 0]], dtype=float)
        assert np.linalg.norm(vech(a)) == pytest.approx(1.0)
        assert np.linalg.norm(a) == pytest.approx(math.sqrt(2))


class TestAmbientRadius:
    def test_examples(self):
        assert ambient_radius(1.5) == pytest.approx(3.481689, abs=1e-6)
        assert ambient_radius(0) == 0

    def test_negative(self):
        with pytest.raises(DomainError):
            ambient_radius(-1)

    def test_brute_force(self):
        # sample symmetric logs inside the Frobenius ball, push through exp
        rng = np.random.default_rng(3)
        r = 1.5
        n = 100_000
        s = rng.standard_normal((n, 2, 2))
        s = 0.5 * (s + np.swapaxes(s, 1, 2))
        s /= np.linalg.norm(s, axis=(1, 2))[:, None, None]
        s *= (r * rng.uniform(size=n) ** (1 / 3))[:, None, None]
        w, q = np.linalg.eigh(s)
        x = (q * np.exp(w)[:, None, :]) @ np.swapaxes(q, 1, 2)
        dev = np.linalg.norm(x - np.eye(2), axis=(1, 2))
        assert dev.max() <= ambient_radius(r) + 1e-12
        extreme = np.linalg.norm(np.diag([math.exp(r), 1.0]) - np.eye(2))
        assert extreme == pytest.approx(ambient_radius(r), abs=1e-6)


class TestWishart:
    def test_mean(self):
        rng = np.random.default_rng(5)
        draws = np.stack([wishart_sample(2, 2, rng) for _ in range(100_000)])
        se = draws.std(axis=0) / math.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - np.eye(2)) < 3 * se)
        assert np.all(np.linalg.eigvalsh(draws)[:, 0] > 0)

    def test_valid_points(self, rng):
        for _ in range(200):
            Point(P2, wishart_sample(2, 2, rng))

    def test_rank_deficient(self, rng):
        with pytest.raises(DomainError):
            wishart_sample(3, 2, rng)

    def test_ball_members(self, spd_ball):
        rng = np.random.default_rng(6)
        xs = sample_ball_wishart(spd_ball, 2, rng, size=2000)
        assert all(in_ball(spd_ball, _pt(x)) for x in xs)
        assert sample_ball_wishart(spd_ball, 2, rng).shape == (2, 2)

    def test_acceptance_rate_positive(self, spd_ball):
        rng = np.random.default_rng(9)
        z = rng.standard_normal((20_000, 2, 2)) / math.sqrt(2)
        x = np.swapaxes(z, 1, 2) @ z
        rate = np.mean(spdm.dist(np.eye(2), x) < spd_ball.radius)
        assert rate > 0.05

    def test_stuck(self):
        tiny = BallSpec(_pt(np.eye(2)), 1e-6)
        with pytest.raises(SamplerStuck):
            sample_ball_wishart(tiny, 2, np.random.default_rng(0), max_rejections=200)

    def test_off_center(self, rng):
        ball = BallSpec(_pt(2 * np.eye(2)), 1.0)
        with pytest.raises(DomainError):
            sample_ball_wishart(ball, 2, rng)

    def test_sequential_law(self):
        # chunked generation must reproduce plain sequential rejection exactly
        ball = BallSpec(_pt(np.eye(2)), 1.5)
        a = sample_ball_wishart(ball, 2, np.random.default_rng(4), size=5)
        z = np.random.default_rng(4).standard_normal((1000, 2, 2)) / math.sqrt(2)
        cand = np.swapaxes(z, 1, 2) @ z
        keep = cand[spdm.dist(np.eye(2), cand) < 1.5][:5]
        assert np.allclose(a, keep, atol=1e-14)


class TestProposal:
    def test_symmetric_unit_direction(self, rng):
        w = spdm.proposal_directions(rng.standard_normal((1000, 2, 2)))
        assert np.allclose(np.linalg.norm(w, axis=(1, 2)), 1.0)
        assert np.allclose(w, np.swapaxes(w, 1, 2))

    def test_step_length(self, rng):
        x = random_spd(rng)
        w = spdm.proposal_directions(rng.standard_normal((50, 2, 2)))
        y = spdm.random_step(np.broadcast_to(x, (50, 2, 2)), w, 0.3)
        assert np.allclose(spdm.dist(np.broadcast_to(x, (50, 2, 2)), y), 0.3, atol=1e-10)
