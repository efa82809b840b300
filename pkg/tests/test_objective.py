"""KL objective, exact and Monte Carlo gradients, descent loop."""

import math

import numpy as np
import pytest

from natgradnet import nets
from natgradnet.dag_model import Dag, DagModel, TABULAR_LOGIT
from natgradnet.objective import (
    NumericsError,
    TrainConfig,
    euclidean_grad_exact,
    euclidean_grad_mc,
    kl_divergence,
    natural_grad,
    objective_E,
    target_weighted_joint,
    train,
)
from natgradnet.sampler import exact_posterior_sampler
from natgradnet.state_space import StateSpace

KL_HALF_VS_QUARTER = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)  # 0.143841...


class TestKlDivergence:
    def test_identical_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        got = kl_divergence(np.array([0.5, 0.5]), np.array([0.25, 0.75]))
        assert got == pytest.approx(KL_HALF_VS_QUARTER, abs=1e-15)
        assert got == pytest.approx(0.143841, abs=1e-6)

    def test_asymmetry(self):
        p, q = np.array([0.5, 0.5]), np.array([0.25, 0.75])
        assert kl_divergence(p, q) != pytest.approx(kl_divergence(q, p), abs=1e-3)

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.random(4) + 0.01
            q = rng.random(4) + 0.01
            assert kl_divergence(p / p.sum(), q / q.sum()) >= 0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([1.0]), np.array([0.5, 0.5]))

    def test_nonpositive_q(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))


class TestObjective:
    def test_zero_at_matching_marginal(self):
        rng = np.random.default_rng(1)
        model = nets.random_sigmoid_net(4, rng)
        params = nets.random_params(model, rng)
        from natgradnet.dag_model import visible_marginal

        target = visible_marginal(model, params).probs
        assert objective_E(model, params, target) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            model = nets.random_sigmoid_net(4, rng)
            params = nets.random_params(model, rng)
            assert objective_E(model, params, nets.random_target(model, rng)) >= 0

    def test_hand_computed_one_visible_one_hidden(self):
        """Enumerated objective for a 2-unit net against scalar arithmetic."""
        model = nets.sigmoid_net([(), (0,)], visible=(1,))
        theta0, w, theta1 = 0.3, 0.7, -0.1
        params = np.array([theta0, w, theta1])
        target = np.array([0.6, 0.4])

        def sig(a):
            return 1.0 / (1.0 + math.exp(-a))

        p_vis_plus = sum(
            sig(s0 * (-theta0)) * sig(1 * (w * s0 - theta1)) for s0 in (-1, 1)
        )
        expected = target[0] * math.log(target[0] / (1 - p_vis_plus)) + target[1] * math.log(
            target[1] / p_vis_plus
        )
        assert objective_E(model, params, target) == pytest.approx(expected, abs=1e-12)


class TestExactGradient:
    def test_single_neuron_threshold_gradient(self):
        """All target mass on +1, zero field: dE/dtheta = 1/(1+e^0) = 1/2."""
        model = nets.sigmoid_net([()], visible=(0,))
        grad = euclidean_grad_exact(model, np.zeros(1), np.array([0.0, 1.0]))
        assert grad[0] == pytest.approx(0.5, abs=1e-14)

    def test_zero_gradient_at_tabular_optimum(self):
        space = StateSpace((4,), (0,), ())
        model = DagModel(space, Dag(((),)), [TABULAR_LOGIT])
        target = np.array([0.1, 0.2, 0.3, 0.4])
        params = np.log(target)
        grad = euclidean_grad_exact(model, params, target)
        np.testing.assert_allclose(grad, 0.0, atol=1e-14)

    def test_matches_finite_differences(self):
        from natgradnet.verify import fd_gradient

        rng = np.random.default_rng(3)
        for _ in range(10):
            model = nets.random_sigmoid_net(int(rng.integers(2, 11)), rng)
            params = nets.random_params(model, rng, -1.0, 1.0)
            target = nets.random_target(model, rng)
            g = euclidean_grad_exact(model, params, target)
            g_fd = fd_gradient(model, params, target)
            assert np.linalg.norm(g - g_fd) / np.linalg.norm(g) < 1e-6

    def test_target_weighted_joint_normalised(self):
        rng = np.random.default_rng(4)
        model = nets.random_sigmoid_net(5, rng)
        params = nets.random_params(model, rng)
        pstar = target_weighted_joint(model, params, nets.random_target(model, rng))
        assert abs(pstar.sum() - 1.0) < 1e-12
        assert np.all(pstar > 0)

    def test_edgeless_component_reads_only_own_block(self):
        rng = np.random.default_rng(5)
        model = nets.sigmoid_net([(), ()], visible=(0, 1))
        target = nets.random_target(model, rng)
        params = nets.random_params(model, rng)
        g0 = euclidean_grad_exact(model, params, target)[model.block_slice(0)]
        for _ in range(10):
            other = params.copy()
            other[model.block_slice(1)] = rng.uniform(-2, 2, model.block_dims[1])
            g = euclidean_grad_exact(model, other, target)[model.block_slice(0)]
            np.testing.assert_allclose(g, g0, atol=1e-12)


class TestMcGradient:
    def test_consistency_with_exact(self):
        """Exact-conditional sampler at n = 10^5: within 4 standard errors."""
        rng = np.random.default_rng(6)
        model = nets.random_sigmoid_net(5, rng, n_visible=3)
        params = nets.random_params(model, rng)
        target = nets.random_target(model, rng)
        exact = euclidean_grad_exact(model, params, target)
        sampler = exact_posterior_sampler(model, params, target)
        n = 100_000
        states = sampler(n, rng)
        scores = model.config_scores(params, states)
        est = -scores.mean(axis=0)
        se = scores.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(est - exact) <= 4 * np.maximum(se, 1e-12))

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(7)
        model = nets.random_sigmoid_net(4, rng)
        params = nets.random_params(model, rng)
        target = nets.random_target(model, rng)
        sampler = exact_posterior_sampler(model, params, target)
        a = euclidean_grad_mc(model, params, target, sampler, 100, np.random.default_rng(9))
        b = euclidean_grad_mc(model, params, target, sampler, 100, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_single_sample_finite(self):
        rng = np.random.default_rng(8)
        model = nets.random_sigmoid_net(4, rng)
        params = nets.random_params(model, rng)
        target = nets.random_target(model, rng)
        sampler = exact_posterior_sampler(model, params, target)
        g = euclidean_grad_mc(model, params, target, sampler, 1, rng)
        assert np.all(np.isfinite(g))

    def test_rejects_zero_samples(self):
        rng = np.random.default_rng(9)
        model = nets.random_sigmoid_net(3, rng)
        params = nets.random_params(model, rng)
        target = nets.random_target(model, rng)
        with pytest.raises(ValueError):
            euclidean_grad_mc(model, params, target, lambda n, r: None, 0, rng)


class TestNaturalGradient:
    def test_identity_blocks_reduce_to_euclidean(self):
        """When every Fisher block is the identity the solve is a no-op."""
        rng = np.random.default_rng(10)
        grad = rng.standard_normal(5)
        from natgradnet.fisher import BlockMatrix, block_pseudoinverse

        bm = BlockMatrix([np.eye(2), np.eye(3)])
        out = block_pseudoinverse(bm).dense() @ grad
        np.testing.assert_allclose(out, grad, atol=1e-14)

    def test_simplex_direction_matches_closed_form(self):
        """Full tabular node: natural gradient is p - p* on the simplex."""
        from natgradnet import geometry as geo

        rng = np.random.default_rng(11)
        space = StateSpace((5,), (0,), ())
        model = DagModel(space, Dag(((),)), [TABULAR_LOGIT])
        params = rng.uniform(-1, 1, 5)
        target = nets.random_target(model, rng)
        L = natural_grad(model, params, target)
        induced = geo.model_jacobian(geo.model_family(model), params) @ L
        p = model.joint_probs(params)
        np.testing.assert_allclose(induced, p - target, atol=1e-8)

    def test_mc_mode_requires_sampler(self):
        rng = np.random.default_rng(12)
        model = nets.random_sigmoid_net(3, rng)
        params = nets.random_params(model, rng)
        target = nets.random_target(model, rng)
        with pytest.raises(ValueError):
            natural_grad(model, params, target, mode="mc")


class TestTrain:
    def test_zero_step_keeps_params(self):
        rng = np.random.default_rng(13)
        model = nets.acceptance_net()
        params0 = nets.init_params(model, rng)
        target = nets.random_target(model, rng)
        traj = train(model, params0, target, TrainConfig(step_size=0.0, max_iters=5))
        np.testing.assert_array_equal(traj.params[0], traj.params[-1])
        assert np.all(traj.E == traj.E[0])

    def test_E_non_increasing_small_step(self):
        rng = np.random.default_rng(14)
        model = nets.acceptance_net()
        traj = train(
            model,
            nets.init_params(model, rng),
            nets.random_target(model, rng),
            TrainConfig(step_size=0.05, max_iters=500),
        )
        assert np.all(np.diff(traj.E) <= 1e-12)

    def test_natural_and_euclidean_reach_low_E(self):
        rng = np.random.default_rng(15)
        model = nets.acceptance_net()
        target = nets.random_target(model, rng)
        params0 = nets.init_params(model, rng)
        for mode in ("euclidean", "natural"):
            traj = train(
                model,
                params0,
                target,
                TrainConfig(step_size=0.05, max_iters=2000, grad_mode=mode),
            )
            assert traj.E[-1] < 0.1 * traj.E[0]

    def test_stop_tol_halts_early(self):
        rng = np.random.default_rng(16)
        model = nets.acceptance_net()
        from natgradnet.dag_model import visible_marginal

        params0 = nets.init_params(model, rng)
        target = visible_marginal(model, params0).probs  # already optimal
        traj = train(model, params0, target, TrainConfig(max_iters=100, stop_tol=1e-6))
        assert traj.iters[-1] < 100

    @pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
    def test_nan_guard(self):
        model = nets.acceptance_net()
        params0 = np.full(model.param_count, 1e308)
        target = np.full(4, 0.25)
        with pytest.raises(NumericsError):
            train(model, params0, target, TrainConfig(max_iters=3, step_size=1e300))
