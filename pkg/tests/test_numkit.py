import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corectron.numkit import (
    CholFactor,
    DegenerateGramError,
    GramMatrix,
    SpdInverse,
    chol_extend,
    effective_dimension,
    log_det_ratio,
    project_ball_mahalanobis,
    project_ellipsoid_coeff,
    sm_inverse_update,
    solve_spd,
)


def random_spd(rng, d, spread=1.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    evals = rng.uniform(0.5, 0.5 + 3.0 * spread, d)
    return (q * evals).dot(q.T)


# ---------------------------------------------------------------------------
# rank-one inverse updates


class TestSmInverseUpdate:
    def test_identity_plus_e1(self):
        state = SpdInverse.from_ridge(2, 1.0)
        out = sm_inverse_update(state, np.array([1.0, 0.0]))
        # direct inversion of [[2, 0], [0, 1]]
        np.testing.assert_allclose(out.inv, [[0.5, 0.0], [0.0, 1.0]], atol=1e-14)

    def test_zero_vector_is_noop(self):
        rng = np.random.default_rng(1)
        state = SpdInverse(5, np.linalg.inv(random_spd(rng, 5)))
        state.inv = 0.5 * (state.inv + state.inv.T)
        out = sm_inverse_update(state, np.zeros(5))
        np.testing.assert_array_equal(out.inv, state.inv)

    def test_matches_direct_inversion(self):
        rng = np.random.default_rng(2)
        A = random_spd(rng, 5)
        g = rng.standard_normal(5)
        state = SpdInverse(5, np.linalg.inv(A))
        out = sm_inverse_update(state, g)
        direct = np.linalg.inv(A + np.outer(g, g))
        err = np.abs(out.inv - direct).max() / np.abs(direct).max()
        assert err < 1e-10

    def test_dimension_mismatch(self):
        state = SpdInverse.from_ridge(3, 1.0)
        with pytest.raises(ValueError):
            sm_inverse_update(state, np.ones(4))

    def test_returns_pre_update_quadratic_form(self):
        state = SpdInverse.from_ridge(2, 1.0)
        lev = state.rank_one_update(np.array([1.0, 0.0]))
        assert lev == pytest.approx(1.0)

    @settings(deadline=None, max_examples=25)
    @given(st.integers(1, 8), st.integers(0, 12), st.integers(0, 2**32 - 1))
    def test_chain_inverse_property(self, d, t, seed):
        rng = np.random.default_rng(seed)
        ridge = float(rng.uniform(0.2, 3.0))
        state = SpdInverse.from_ridge(d, ridge)
        A = ridge * np.eye(d)
        for _ in range(t):
            g = rng.standard_normal(d)
            state.rank_one_update(g)
            A += np.outer(g, g)
        resid = np.abs(state.inv.dot(A) - np.eye(d)).max()
        assert resid < 1e-8

    def test_long_chain_stays_inverse(self):
        # chain of 200 rank-one terms in dimension 50
        rng = np.random.default_rng(3)
        d, t, ridge = 50, 200, 1.0
        state = SpdInverse.from_ridge(d, ridge)
        A = ridge * np.eye(d)
        for _ in range(t):
            g = rng.standard_normal(d)
            state.rank_one_update(g)
            A += np.outer(g, g)
        resid = np.abs(state.inv.dot(A) - np.eye(d)).max()
        assert resid < 1e-8
        sym = np.abs(state.inv - state.inv.T).max() / np.abs(state.inv).max()
        assert sym < 1e-10


# ---------------------------------------------------------------------------
# incremental Cholesky


class TestCholFactor:
    def test_first_entry(self):
        f = CholFactor()
        f.extend(np.empty(0), 9.0)
        np.testing.assert_allclose(f.L, [[3.0]])

    def test_diagonal_extension(self):
        f = CholFactor()
        f.extend(np.empty(0), 1.0)
        out = chol_extend(f, np.array([0.0]), 4.0)
        np.testing.assert_allclose(out.L, [[1.0, 0.0], [0.0, 2.0]])
        assert f.size == 1  # functional form leaves the input untouched

    def test_chain_matches_fresh_factorization(self):
        rng = np.random.default_rng(4)
        t, ridge = 200, 0.5
        vecs = rng.standard_normal((t, 7))  # rank-deficient Gram, ridge fixes it
        K = vecs.dot(vecs.T)
        f = CholFactor()
        for i in range(t):
            f.extend(K[i, :i], K[i, i] + ridge)
        fresh = np.linalg.cholesky(K + ridge * np.eye(t))
        err = np.abs(f.L - fresh).max() / np.abs(fresh).max()
        assert err < 1e-8

    def test_solve_examples(self):
        f = CholFactor()
        f.extend(np.empty(0), 9.0)
        np.testing.assert_allclose(solve_spd(f, np.array([9.0])), [1.0])
        f2 = CholFactor()
        f2.extend(np.empty(0), 1.0)
        f2.extend(np.array([0.0]), 4.0)
        np.testing.assert_allclose(solve_spd(f2, np.array([1.0, 4.0])), [1.0, 1.0])

    def test_solve_residual(self):
        rng = np.random.default_rng(5)
        t = 40
        vecs = rng.standard_normal((t, t))
        K = vecs.dot(vecs.T)
        f = CholFactor()
        for i in range(t):
            f.extend(K[i, :i], K[i, i] + 1.0)
        b = rng.standard_normal(t)
        x = solve_spd(f, b)
        M = K + np.eye(t)
        assert np.linalg.norm(M.dot(x) - b) <= 1e-9 * np.linalg.norm(b)

    def test_degenerate_extension_raises(self):
        f = CholFactor()
        f.extend(np.empty(0), 1.0)
        with pytest.raises(DegenerateGramError):
            f.extend(np.array([2.0]), 1.0)  # pivot^2 = 1 - 4 < 0 beyond jitter

    def test_jitter_rescues_borderline_pivot(self):
        # duplicated point: exact pivot is sqrt(ridge), tiny ridge makes the
        # subtraction borderline but jitter keeps the factor usable
        f = CholFactor()
        f.extend(np.empty(0), 1.0 + 1e-13)
        y, pivot = f.extend(np.array([1.0]), 1.0 + 1e-13)
        assert pivot > 0

    def test_dimension_mismatch(self):
        f = CholFactor()
        f.extend(np.empty(0), 1.0)
        with pytest.raises(ValueError):
            f.solve(np.ones(3))
        with pytest.raises(ValueError):
            f.extend(np.ones(2), 1.0)


# ---------------------------------------------------------------------------
# Mahalanobis ball projection


def grid_oracle_ball_2d(metric, point, radius, n_grid=200_000):
    """Dense angular sweep of the circle plus golden-section refinement."""
    def objective(theta):
        w = radius * np.array([np.cos(theta), np.sin(theta)])
        d = w - point
        return float(d.dot(metric.dot(d)))

    thetas = np.linspace(0.0, 2.0 * np.pi, n_grid, endpoint=False)
    pts = radius * np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    diffs = pts - point
    vals = np.einsum("ij,jk,ik->i", diffs, metric, diffs)
    k = int(np.argmin(vals))
    lo, hi = thetas[k] - 2.0 * np.pi / n_grid, thetas[k] + 2.0 * np.pi / n_grid
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(80):
        if objective(c) < objective(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    theta = 0.5 * (a + b)
    return radius * np.array([np.cos(theta), np.sin(theta)])


def pgd_oracle_ball(metric, point, radius, steps=60_000):
    """Projected gradient descent with Euclidean clipping onto the ball."""
    lip = 2.0 * np.linalg.eigvalsh(metric)[-1]
    w = np.zeros_like(point)
    for _ in range(steps):
        w = w - (2.0 / lip) * metric.dot(w - point)
        nrm = np.linalg.norm(w)
        if nrm > radius:
            w *= radius / nrm
    return w


class TestProjectBall:
    def test_feasible_point_is_trivial(self):
        out = project_ball_mahalanobis(np.eye(3), np.array([0.1, 0.2, 0.1]), 1.0)
        assert out.trivial
        assert out.multiplier == 0.0
        np.testing.assert_array_equal(out.point, [0.1, 0.2, 0.1])

    def test_euclidean_case(self):
        out = project_ball_mahalanobis(np.eye(2), np.array([2.0, 0.0]), 1.0)
        np.testing.assert_allclose(out.point, [1.0, 0.0], atol=1e-10)
        assert not out.trivial

    def test_against_angular_grid(self):
        metric = np.diag([4.0, 1.0])
        point = np.array([2.0, 2.0])
        out = project_ball_mahalanobis(metric, point, 1.0)
        oracle = grid_oracle_ball_2d(metric, point, 1.0)
        assert np.abs(out.point - oracle).max() < 1e-4

    def test_against_pgd_dim4(self):
        rng = np.random.default_rng(6)
        metric = random_spd(rng, 4)
        point = rng.standard_normal(4) * 3.0
        out = project_ball_mahalanobis(metric, point, 1.0)
        oracle = pgd_oracle_ball(metric, point, 1.0)
        assert np.abs(out.point - oracle).max() < 1e-4

    def test_non_spd_rejected(self):
        bad = np.diag([1.0, -1.0])
        with pytest.raises(ValueError):
            project_ball_mahalanobis(bad, np.array([3.0, 3.0]), 1.0)

    @settings(deadline=None, max_examples=25)
    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_feasibility_and_kkt(self, d, seed):
        rng = np.random.default_rng(seed)
        metric = random_spd(rng, d)
        point = rng.standard_normal(d) * rng.uniform(0.1, 5.0)
        radius = float(rng.uniform(0.2, 2.0))
        out = project_ball_mahalanobis(metric, point, radius)
        assert np.linalg.norm(out.point) <= radius * (1.0 + 1e-9)
        assert out.multiplier >= 0.0
        stat = metric.dot(out.point - point) + out.multiplier * out.point
        scale = 1.0 + np.abs(metric).max() * np.linalg.norm(point)
        assert np.linalg.norm(stat) <= 1e-7 * scale


# ---------------------------------------------------------------------------
# ellipsoid-constrained projection in coefficient space


def _euclidean_ellipsoid_clip(shape, c, radius):
    """Euclidean projection onto {c : c^T shape c <= radius^2} via brentq."""
    from scipy.optimize import brentq

    val = float(c.dot(shape.dot(c)))
    if val <= radius * radius:
        return c
    evals, vecs = np.linalg.eigh(shape)
    evals = np.clip(evals, 0.0, None)
    ct = vecs.T.dot(c)

    def constraint(mu):
        w = ct / (1.0 + mu * evals)
        return float(np.sum(evals * w * w)) - radius * radius

    hi = 1.0
    while constraint(hi) > 0:
        hi *= 2.0
    mu = brentq(constraint, 0.0, hi, xtol=1e-15, rtol=1e-14)
    return vecs.dot(ct / (1.0 + mu * evals))


def pgd_oracle_ellipsoid(metric, shape, point, radius, steps=60_000):
    lip = 2.0 * np.linalg.eigvalsh(metric)[-1]
    c = np.zeros_like(point)
    for _ in range(steps):
        c = c - (2.0 / lip) * metric.dot(c - point)
        c = _euclidean_ellipsoid_clip(shape, c, radius)
    return c


class TestProjectEllipsoid:
    def test_feasible_point_is_trivial(self):
        shape = np.diag([1.0, 4.0])
        out = project_ellipsoid_coeff(np.eye(2), shape, np.array([0.1, 0.1]), 1.0)
        assert out.trivial

    def test_reduces_to_ball_with_identity_shape(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            metric = random_spd(rng, 3)
            point = rng.standard_normal(3) * 2.0
            ball = project_ball_mahalanobis(metric, point, 1.0)
            ell = project_ellipsoid_coeff(metric, np.eye(3), point, 1.0)
            assert np.abs(ball.point - ell.point).max() < 1e-8

    def test_against_pgd_dim4(self):
        rng = np.random.default_rng(8)
        metric = random_spd(rng, 4)
        shape = random_spd(rng, 4, spread=0.5)
        point = rng.standard_normal(4) * 3.0
        out = project_ellipsoid_coeff(metric, shape, point, 1.0)
        oracle = pgd_oracle_ellipsoid(metric, shape, point, 1.0)
        assert np.abs(out.point - oracle).max() < 1e-4

    def test_constraint_active_at_solution(self):
        rng = np.random.default_rng(9)
        metric = random_spd(rng, 5)
        shape = random_spd(rng, 5)
        point = rng.standard_normal(5) * 4.0
        out = project_ellipsoid_coeff(metric, shape, point, 1.0)
        val = float(out.point.dot(shape.dot(out.point)))
        assert val == pytest.approx(1.0, rel=1e-8)
        assert out.multiplier > 0

    def test_singular_shape_direction_unconstrained(self):
        # the constraint ignores the nullspace of shape
        metric = np.eye(2)
        shape = np.diag([1.0, 0.0])
        point = np.array([3.0, 5.0])
        out = project_ellipsoid_coeff(metric, shape, point, 1.0)
        assert abs(out.point[0]) <= 1.0 + 1e-9
        assert out.point[1] == pytest.approx(5.0, rel=1e-9)


# ---------------------------------------------------------------------------
# spectral functionals


class TestSpectralFunctionals:
    def test_zero_matrix(self):
        assert log_det_ratio(np.zeros((4, 4)), 2.0) == 0.0
        assert effective_dimension(np.zeros((4, 4)), 2.0) == 0.0

    def test_single_eigenvalue_equal_to_ridge(self):
        assert log_det_ratio(np.array([[2.5]]), 2.5) == pytest.approx(np.log(2.0))

    def test_diagonal_closed_form(self):
        sig = np.array([0.3, 1.0, 4.2, 9.9])
        lam = 1.7
        expect = float(np.sum(np.log1p(sig / lam)))
        assert log_det_ratio(np.diag(sig), lam) == pytest.approx(expect, rel=1e-12)

    def test_effective_dimension_ridge_identity(self):
        T = 6
        assert effective_dimension(np.eye(T) * 3.0, 3.0) == pytest.approx(T / 2.0)

    def test_effective_dimension_direct_solve(self):
        rng = np.random.default_rng(10)
        vecs = rng.standard_normal((8, 5))
        K = vecs.dot(vecs.T)
        lam = 0.9
        direct = float(np.trace(K.dot(np.linalg.inv(K + lam * np.eye(8)))))
        assert effective_dimension(K, lam) == pytest.approx(direct, abs=1e-10)

    def test_non_symmetric_rejected(self):
        with pytest.raises(ValueError):
            log_det_ratio(np.array([[1.0, 2.0], [0.0, 1.0]]), 1.0)

    def test_gram_matrix_container(self):
        g = GramMatrix()
        g.append(np.empty(0), 2.0)
        g.append(np.array([1.0]), 3.0)
        np.testing.assert_allclose(g.entries, [[2.0, 1.0], [1.0, 3.0]])
        assert log_det_ratio(g, 1.0) > 0

    @settings(deadline=None, max_examples=30)
    @given(st.integers(1, 10), st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_logdet_effective_dim_inequality(self, rank, t, seed):
        # log det(I + K/lam) <= d_eff * (1 + log(1 + opnorm/lam))
        rng = np.random.default_rng(seed)
        vecs = rng.standard_normal((t, rank))
        K = vecs.dot(vecs.T)
        lam = float(rng.uniform(0.1, 5.0))
        lhs = log_det_ratio(K, lam)
        opnorm = float(np.clip(np.linalg.eigvalsh(K), 0, None)[-1])
        rhs = effective_dimension(K, lam) * (1.0 + np.log1p(opnorm / lam))
        assert lhs <= rhs + 1e-9 * (1.0 + abs(rhs))


def test_leverage_product_matches_gram_determinant():
    # chained pre-update quadratic forms reproduce det(I + K/ridge)
    rng = np.random.default_rng(11)
    d, t, ridge = 6, 30, 0.8
    state = SpdInverse.from_ridge(d, ridge)
    vecs = rng.standard_normal((t, d))
    log_prod = 0.0
    for g in vecs:
        log_prod += np.log1p(state.rank_one_update(g))
    K = vecs.dot(vecs.T)
    logdet = log_det_ratio(K, ridge)
    assert abs(log_prod - logdet) < 1e-6
