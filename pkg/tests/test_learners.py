import numpy as np
import pytest

from corectron.environment import ActionSetSpec, top_m_oracle
from corectron.learners import KONS, OGD, ONS, CoRectron, CoRectronK
from corectron.lifting import KernelSpec, LiftSpec


def unit_context(rng, p):
    z = rng.standard_normal(p)
    return z / max(1.0, np.linalg.norm(z))


class TestCoRectron:
    def test_fresh_prediction_is_zero(self):
        learner = CoRectron(LiftSpec.identity(3), 1.0)
        np.testing.assert_array_equal(learner.predict_lifted(), np.zeros(3))

    def test_prediction_after_one_residual(self):
        learner = CoRectron(LiftSpec.identity(2), 1.0)
        learner.update(None, np.array([1.0, 0.0]))
        np.testing.assert_allclose(learner.predict_lifted(), [-0.5, 0.0], atol=1e-14)

    def test_prediction_after_one_residual_ridge_two(self):
        learner = CoRectron(LiftSpec.identity(2), 2.0)
        learner.update(None, np.array([1.0, 1.0]))
        np.testing.assert_allclose(learner.predict_lifted(), [-0.25, -0.25], atol=1e-14)

    def test_first_round_diagnostics(self):
        learner = CoRectron(LiftSpec.identity(2), 1.0)
        diag = learner.update(None, np.array([1.0, 0.0]))
        assert diag.leverage == pytest.approx(1.0)
        assert diag.alignment == 0.0
        assert not diag.projected

    def test_zero_residual_is_noop(self):
        learner = CoRectron(LiftSpec.identity(2), 1.0)
        learner.update(None, np.array([1.0, 0.5]))
        before = learner.predict_lifted().copy()
        pot = learner.update(None, np.zeros(2)).potential
        diag = learner.update(None, np.zeros(2))
        assert diag.leverage == 0.0
        assert diag.alignment == 0.0
        assert diag.potential == pot
        np.testing.assert_array_equal(learner.predict_lifted(), before)

    def test_rejects_kernel_lift(self):
        with pytest.raises(ValueError):
            CoRectron(LiftSpec.kernelized(2, 2, KernelSpec.rbf(1.0)), 1.0)

    def test_linear_lift_prediction_shape(self):
        rng = np.random.default_rng(0)
        learner = CoRectron(LiftSpec.linear(3, 2), 1.0)
        z = unit_context(rng, 2)
        learner.update(z, rng.standard_normal(3))
        assert learner.predict(z).shape == (3,)

    def test_potential_increment_matches_direct(self):
        rng = np.random.default_rng(1)
        learner = CoRectron(LiftSpec.identity(4), 0.7)
        prev_direct = 0.0
        for _ in range(50):
            diag = learner.update(None, rng.standard_normal(4) * 0.5)
            direct = learner.potential_direct()
            step = direct - prev_direct
            expected = (diag.leverage + 2 * diag.alignment - diag.alignment**2) / (
                1 + diag.leverage
            )
            assert abs(step - expected) < 1e-8 * (1 + abs(expected))
            prev_direct = direct

    def test_post_round_leverage_identity(self):
        rng = np.random.default_rng(2)
        learner = CoRectron(LiftSpec.identity(4), 1.5)
        for _ in range(30):
            diag = learner.update(None, rng.standard_normal(4))
            post = learner.post_round_leverage()
            assert post == pytest.approx(diag.leverage / (1 + diag.leverage), abs=1e-10)


class TestCoRectronK:
    def kernel_spec(self):
        return LiftSpec.kernelized(3, 2, KernelSpec.rbf(1.0))

    def test_first_round_prediction_zero(self):
        learner = CoRectronK(self.kernel_spec(), 1.0)
        np.testing.assert_array_equal(learner.predict(np.zeros(2)), np.zeros(3))

    def test_zero_residual_round(self):
        # a vanishing residual appends a decoupled row: pivot sqrt(ridge),
        # coefficient 1/ridge, prediction and potential unchanged
        lam = 2.0
        learner = CoRectronK(self.kernel_spec(), lam)
        rng = np.random.default_rng(3)
        z = unit_context(rng, 2)
        learner.update(z, rng.standard_normal(3))
        before = learner.predict(z).copy()
        pot = learner.potential_direct()
        diag = learner.update(z, np.zeros(3))
        assert diag.leverage == 0.0
        assert learner.gram_factor.L[-1, -1] == pytest.approx(np.sqrt(lam))
        assert learner.coefficients[-1] == pytest.approx(1.0 / lam)
        np.testing.assert_allclose(learner.predict(z), before, atol=1e-12)
        assert learner.potential_direct() == pytest.approx(pot, abs=1e-12)

    def test_coefficients_solve_ones_system(self):
        rng = np.random.default_rng(4)
        learner = CoRectronK(self.kernel_spec(), 0.9)
        K = None
        hist = []
        for t in range(20):
            z = unit_context(rng, 2)
            g = rng.standard_normal(3) * 0.4
            learner.update(z, g)
            hist.append((z, g))
        kern = learner.lift_spec.kernel
        K = np.array(
            [
                [kern.value(zs, zt) * float(gs.dot(gt)) for zt, gt in hist]
                for zs, gs in hist
            ]
        )
        c = np.linalg.solve(K + 0.9 * np.eye(len(hist)), np.ones(len(hist)))
        np.testing.assert_allclose(learner.coefficients, c, rtol=1e-8, atol=1e-10)


class TestRepresenterEquivalence:
    def test_matches_explicit_on_dot_kernel(self):
        # dot-product kernel in representer form reproduces the explicit
        # learner on the outer-product lift, round for round
        rng = np.random.default_rng(5)
        n, p, lam, T = 4, 3, 6.0, 120
        explicit = CoRectron(LiftSpec.linear(n, p), lam)
        rep = CoRectronK(LiftSpec.kernelized(n, p, KernelSpec.linear_dot()), lam)
        spec = ActionSetSpec.top_m(n, 2)
        for _ in range(T):
            z = unit_context(rng, p)
            w1, w2 = explicit.predict(z), rep.predict(z)
            assert np.abs(w1 - w2).max() < 1e-7
            assert np.array_equal(top_m_oracle(w1, spec), top_m_oracle(w2, spec))
            u = rng.standard_normal(n)
            x = top_m_oracle(u, spec)
            g = top_m_oracle(w1, spec) - x
            d1, d2 = explicit.update(z, g), rep.update(z, g)
            assert d1.leverage == pytest.approx(d2.leverage, abs=1e-9)
            assert d1.alignment == pytest.approx(d2.alignment, abs=1e-9)


class TestSignCondition:
    def run_stream(self, learner, feedback_rng, rounds=80, swap=False):
        spec = ActionSetSpec.top_m(5, 2)
        worst = -np.inf
        for _ in range(rounds):
            z = unit_context(feedback_rng, 3)
            w = learner.predict(z)
            xhat = top_m_oracle(w, spec)
            u = feedback_rng.standard_normal(5)
            x = top_m_oracle(u, spec)
            if swap and feedback_rng.random() < 0.5:
                # arbitrary feasible (suboptimal) feedback
                x = top_m_oracle(feedback_rng.standard_normal(5), spec)
            diag = learner.update(z, xhat - x)
            worst = max(worst, diag.alignment - 1e-9 * diag.alignment_scale)
        return worst

    def test_explicit_all_feedback(self):
        for swap in (False, True):
            learner = CoRectron(LiftSpec.linear(5, 3), 2.0)
            assert self.run_stream(learner, np.random.default_rng(6), swap=swap) <= 0

    def test_representer_all_feedback(self):
        for swap in (False, True):
            learner = CoRectronK(
                LiftSpec.kernelized(5, 3, KernelSpec.rbf(1.0)), 2.0
            )
            assert self.run_stream(learner, np.random.default_rng(7), swap=swap) <= 0


def test_recommendations_scale_invariant():
    # the oracle's argmax, including tie-breaking, ignores positive scaling
    rng = np.random.default_rng(8)
    spec = ActionSetSpec.top_m(6, 3)
    for _ in range(50):
        w = rng.standard_normal(6)
        w[rng.integers(6)] = w[rng.integers(6)]  # inject occasional ties
        for s in (1e-6, 0.5, 3.0, 1e6):
            np.testing.assert_array_equal(
                top_m_oracle(w, spec), top_m_oracle(s * w, spec)
            )


class TestOGD:
    def test_zero_gradient_noop(self):
        learner = OGD(LiftSpec.identity(2), 0.5)
        learner.update(None, np.zeros(2))
        np.testing.assert_array_equal(learner.weights, np.zeros(2))

    def test_interior_step(self):
        learner = OGD(LiftSpec.identity(2), 0.5)
        learner.update(None, np.array([1.0, 0.0]))
        np.testing.assert_allclose(learner.weights, [-0.5, 0.0])

    def test_clipped_to_boundary(self):
        learner = OGD(LiftSpec.identity(2), 1.0)
        learner._w = np.array([0.9, 0.0])
        learner.update(None, np.array([-1.0, 0.0]))
        np.testing.assert_allclose(learner.weights, [1.0, 0.0])

    def test_norm_invariant(self):
        rng = np.random.default_rng(9)
        learner = OGD(LiftSpec.identity(4), 2.0)
        for _ in range(100):
            learner.update(None, rng.standard_normal(4))
            assert np.linalg.norm(learner.weights) <= 1.0 + 1e-12


class TestONS:
    def test_zero_gradient_noop(self):
        learner = ONS(LiftSpec.identity(2), ridge=1.0)
        diag = learner.update(None, np.zeros(2))
        np.testing.assert_array_equal(learner.weights, np.zeros(2))
        assert not diag.projected

    def test_scalar_example(self):
        learner = ONS(LiftSpec.identity(1), ridge=1.0, surrogate_scale=1.0, step_coeff=0.5)
        diag = learner.update(None, np.array([0.1]))
        assert learner.weights[0] == pytest.approx(-0.2 / 1.01)
        assert not diag.projected

    def test_forced_projection_hits_boundary(self):
        learner = ONS(LiftSpec.identity(2), ridge=0.01, surrogate_scale=1.0, step_coeff=0.5)
        projected = False
        for _ in range(5):
            diag = learner.update(None, np.array([1.0, 0.0]))
            projected = projected or diag.projected
        assert projected
        assert np.linalg.norm(learner.weights) <= 1.0 + 1e-9

    def test_norm_invariant(self):
        rng = np.random.default_rng(10)
        learner = ONS(LiftSpec.identity(3), ridge=0.5)
        for _ in range(150):
            learner.update(None, rng.standard_normal(3) * 0.6)
            assert np.linalg.norm(learner.weights) <= 1.0 + 1e-9


class TestKONS:
    def kernel_spec(self):
        return LiftSpec.kernelized(3, 2, KernelSpec.rbf(1.0))

    def test_zero_first_residual_keeps_zero_function(self):
        learner = KONS(self.kernel_spec(), ridge=1.0)
        diag = learner.update(np.zeros(2), np.zeros(3))
        assert not diag.projected
        np.testing.assert_array_equal(learner.predict(np.zeros(2)), np.zeros(3))
        assert learner.rkhs_norm_sq() == 0.0

    def test_feasible_step_not_flagged(self):
        rng = np.random.default_rng(11)
        learner = KONS(self.kernel_spec(), ridge=100.0)
        diag = learner.update(unit_context(rng, 2), rng.standard_normal(3) * 0.1)
        assert not diag.projected

    def test_rkhs_norm_invariant(self):
        rng = np.random.default_rng(12)
        learner = KONS(self.kernel_spec(), ridge=0.05, surrogate_scale=1.0)
        saw_projection = False
        for _ in range(60):
            z = unit_context(rng, 2)
            diag = learner.update(z, rng.standard_normal(3))
            saw_projection = saw_projection or diag.projected
            assert learner.rkhs_norm_sq() <= 1.0 + 1e-9
        assert saw_projection

    def test_matches_explicit_ons_on_dot_kernel(self):
        # agreement holds on streams where the ball constraint never binds
        rng = np.random.default_rng(13)
        n, p, T = 3, 2, 60
        explicit = ONS(LiftSpec.linear(n, p), ridge=50.0)
        rep = KONS(LiftSpec.kernelized(n, p, KernelSpec.linear_dot()), ridge=50.0)
        spec = ActionSetSpec.top_m(n, 1)
        for _ in range(T):
            z = unit_context(rng, p)
            w1, w2 = explicit.predict(z), rep.predict(z)
            assert np.abs(w1 - w2).max() < 1e-6
            assert np.array_equal(top_m_oracle(w1, spec), top_m_oracle(w2, spec))
            u = rng.standard_normal(n)
            g = top_m_oracle(w1, spec) - top_m_oracle(u, spec)
            d1 = explicit.update(z, g)
            d2 = rep.update(z, g)
            assert not d1.projected and not d2.projected
