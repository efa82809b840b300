"""Recognition models, wake/sleep gradients, and phase-scheduled training."""

import numpy as np
import pytest

from natgradnet import nets
from natgradnet import objective as obj
from natgradnet.dag_model import Config, conditional, joint_table
from natgradnet.state_space import enumerate_configs
from natgradnet.wake_sleep import (
    RecognitionModel,
    RepresentabilityError,
    WakeSleepSchedule,
    chain_recognition,
    exact_posterior_fit,
    recog_conditional,
    recog_fisher_block,
    recognition_gap,
    sleep_gradient,
    wake_gradient,
    wake_sleep_train,
)


class TestRecognitionModel:
    def test_uniform_logits_give_uniform(self):
        model = nets.acceptance_net()
        recog = chain_recognition(model)
        eta = np.zeros(recog.param_count)
        q = recog_conditional(recog, eta, Config((2, 3), (0, 1)))
        np.testing.assert_allclose(q, 0.25, atol=1e-15)

    def test_factorisation_of_log_conditional(self):
        rng = np.random.default_rng(0)
        model = nets.acceptance_net()
        recog = chain_recognition(model)
        eta = rng.uniform(-1, 1, recog.param_count)
        cond_z = recog.cond_probs(eta)
        cfgs = enumerate_configs(model.space)
        for k, row in enumerate(cfgs):
            log_sum = 0.0
            for j, r in enumerate(recog.hidden):
                ktab = recog.kernel_table(j, eta)
                from natgradnet.state_space import _strides

                strides = _strides(recog.parent_cards(j))
                pa_idx = sum(
                    int(row[p]) * int(strides[pos]) for pos, p in enumerate(recog.parents[j])
                )
                log_sum += np.log(ktab[pa_idx, row[r]])
            assert np.log(cond_z[k]) == pytest.approx(log_sum, abs=1e-12)

    def test_conditional_sums_to_one(self):
        rng = np.random.default_rng(1)
        model = nets.acceptance_net()
        recog = chain_recognition(model)
        eta = rng.uniform(-1, 1, recog.param_count)
        for vis in enumerate_configs(model.space, model.space.visible):
            q = recog_conditional(recog, eta, Config((2, 3), tuple(int(v) for v in vis)))
            assert abs(q.sum() - 1.0) < 1e-12

    def test_hidden_cycle_rejected(self):
        model = nets.acceptance_net()
        with pytest.raises(Exception):
            RecognitionModel(model.space, [(1, 2, 3), (0, 2, 3)])


class TestExactPosteriorFit:
    def test_independent_posterior_fit_by_factorised_recognition(self):
        # no hidden-hidden edge needed when the posterior factorises
        model = nets.sigmoid_net([(), (), (0,), (1,)], visible=(2, 3))
        rng = np.random.default_rng(2)
        xi = nets.random_params(model, rng)
        recog = RecognitionModel(model.space, [(2, 3), (2, 3)])
        eta = exact_posterior_fit(model, xi, recog)
        assert recognition_gap(model, xi, recog, eta) < 1e-12

    def test_generic_net_with_chain_recognition(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            model = nets.random_sigmoid_net(int(rng.integers(3, 6)), rng)
            xi = nets.random_params(model, rng)
            recog = chain_recognition(model)
            eta = exact_posterior_fit(model, xi, recog)
            assert recognition_gap(model, xi, recog, eta) < 1e-10

    def test_fit_reproduces_exact_posterior_tables(self):
        rng = np.random.default_rng(4)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        recog = chain_recognition(model)
        eta = exact_posterior_fit(model, xi, recog)
        jt = joint_table(model, xi)
        for vis in enumerate_configs(model.space, model.space.visible):
            clamp = Config((2, 3), tuple(int(v) for v in vis))
            want = conditional(jt, (0, 1), clamp).probs
            got = recog_conditional(recog, eta, clamp)
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_explaining_away_defeats_factorised_recognition(self):
        """A v-structure posterior couples the hidden causes."""
        model = nets.sigmoid_net([(), (), (0, 1)], visible=(2,))
        xi = np.array([0.0, 0.0, 2.0, 2.0, -1.0])
        recog = RecognitionModel(model.space, [(2,), (2,)])
        with pytest.raises(RepresentabilityError) as exc:
            exact_posterior_fit(model, xi, recog)
        assert exc.value.gap > 1e-8


class TestRecognitionGap:
    def test_matched_eta_gives_zero(self):
        rng = np.random.default_rng(5)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        recog = chain_recognition(model)
        eta = exact_posterior_fit(model, xi, recog)
        assert recognition_gap(model, xi, recog, eta) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(6)
        model = nets.acceptance_net()
        recog = chain_recognition(model)
        for _ in range(20):
            xi = nets.random_params(model, rng)
            eta = rng.uniform(-1, 1, recog.param_count)
            assert recognition_gap(model, xi, recog, eta) >= 0

    def test_hand_computed_two_unit_net(self):
        """1 visible, 1 hidden: the gap reduces to one weighted KL term."""
        import math

        model = nets.sigmoid_net([(), (0,)], visible=(1,))
        xi = np.array([0.3, 0.8, -0.2])
        recog = RecognitionModel(model.space, [(1,)])
        eta = np.array([0.0, 0.4, 0.7, -0.1])  # logits (vis state, hidden state)

        def sig(a):
            return 1.0 / (1.0 + math.exp(-a))

        expected = 0.0
        for v in (0, 1):
            sv = 2 * v - 1
            p_joint = []
            for h in (0, 1):
                sh = 2 * h - 1
                p_joint.append(sig(sh * (-0.3)) * sig(sv * (0.8 * sh - (-0.2))))
            p_v = sum(p_joint)
            for h in (0, 1):
                post = p_joint[h] / p_v
                logits = eta[2 * v : 2 * v + 2]
                q = math.exp(logits[h]) / (math.exp(logits[0]) + math.exp(logits[1]))
                expected += p_v * post * math.log(post / q)
        assert recognition_gap(model, xi, recog, eta) == pytest.approx(expected, abs=1e-12)


class TestWakeGradient:
    def test_exact_at_matched_eta(self):
        rng = np.random.default_rng(7)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        target = nets.random_target(model, rng)
        recog = chain_recognition(model)
        eta = exact_posterior_fit(model, xi, recog)
        g = wake_gradient(model, xi, recog, eta, target, "exact")
        np.testing.assert_allclose(
            g, obj.euclidean_grad_exact(model, xi, target), atol=1e-12
        )

    def test_mc_consistent_with_exact(self):
        rng = np.random.default_rng(8)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        target = nets.random_target(model, rng)
        recog = chain_recognition(model)
        eta = rng.uniform(-0.5, 0.5, recog.param_count)
        exact = wake_gradient(model, xi, recog, eta, target, "exact")
        n = 100_000
        mc = wake_gradient(model, xi, recog, eta, target, "mc", n, rng)
        # score components are bounded by 1 for sigmoid kernels
        assert np.abs(mc - exact).max() < 4.0 / np.sqrt(n) * 10

    def test_block_reads_only_local_weights(self):
        """The (r; .) block is unchanged when other blocks of xi move."""
        rng = np.random.default_rng(9)
        model = nets.acceptance_net()
        target = nets.random_target(model, rng)
        recog = chain_recognition(model)
        eta = rng.uniform(-0.5, 0.5, recog.param_count)
        xi = nets.random_params(model, rng)
        g0 = wake_gradient(model, xi, recog, eta, target, "exact")[model.block_slice(2)]
        for _ in range(5):
            other = xi.copy()
            for r in (0, 1, 3):
                other[model.block_slice(r)] = rng.uniform(-1, 1, model.block_dims[r])
            g = wake_gradient(model, other, recog, eta, target, "exact")[model.block_slice(2)]
            np.testing.assert_allclose(g, g0, atol=1e-12)


class TestSleepGradient:
    def test_zero_at_fit_point(self):
        rng = np.random.default_rng(10)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        recog = chain_recognition(model)
        eta = exact_posterior_fit(model, xi, recog)
        np.testing.assert_allclose(
            sleep_gradient(model, xi, recog, eta, "exact"), 0.0, atol=1e-10
        )

    def test_matches_gap_finite_differences(self):
        rng = np.random.default_rng(11)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        recog = chain_recognition(model)
        eta = rng.uniform(-0.5, 0.5, recog.param_count)
        g = sleep_gradient(model, xi, recog, eta, "exact")
        h = 1e-5
        fd = np.zeros_like(g)
        for i in range(len(eta)):
            ep, em = eta.copy(), eta.copy()
            ep[i] += h
            em[i] -= h
            fd[i] = (
                recognition_gap(model, xi, recog, ep) - recognition_gap(model, xi, recog, em)
            ) / (2 * h)
        assert np.linalg.norm(fd - g) / np.linalg.norm(g) < 1e-6

    def test_ignores_target_entirely(self):
        rng = np.random.default_rng(12)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        recog = chain_recognition(model)
        eta = rng.uniform(-0.5, 0.5, recog.param_count)
        a = sleep_gradient(model, xi, recog, eta, "mc", 500, np.random.default_rng(1))
        b = sleep_gradient(model, xi, recog, eta, "mc", 500, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    def test_mc_consistent(self):
        rng = np.random.default_rng(13)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        recog = chain_recognition(model)
        eta = rng.uniform(-0.5, 0.5, recog.param_count)
        exact = sleep_gradient(model, xi, recog, eta, "exact")
        mc = sleep_gradient(model, xi, recog, eta, "mc", 100_000, rng)
        assert np.abs(mc - exact).max() < 0.05


class TestRecogFisher:
    def test_blocks_psd_and_match_extension_gram(self):
        from natgradnet import geometry as geo

        rng = np.random.default_rng(14)
        model = nets.acceptance_net()
        xi = nets.random_params(model, rng)
        recog = chain_recognition(model)
        eta = rng.uniform(-0.5, 0.5, recog.param_count)
        ext = geo.product_extension_assemble(
            model, geo.recognition_conditional_family(recog), xi, eta
        )
        for k in range(len(recog.hidden)):
            block = recog_fisher_block(model, xi, recog, eta, k)
            lam = np.linalg.eigvalsh(block)
            assert lam.min() >= -1e-10 * max(lam.max(), 1e-300)
            sl = recog.block_slice(k)
            np.testing.assert_allclose(block, ext.gv[sl, sl], atol=1e-12)


class TestWakeSleepTraining:
    def test_zero_iters_keeps_parameters(self):
        rng = np.random.default_rng(15)
        model = nets.acceptance_net()
        target = nets.random_target(model, rng)
        recog = chain_recognition(model)
        xi0 = nets.init_params(model, rng)
        eta0 = rng.uniform(-0.5, 0.5, recog.param_count)
        traj = wake_sleep_train(
            model, xi0, recog, eta0, target, WakeSleepSchedule(iters=0), rng
        )
        np.testing.assert_array_equal(traj.xi[-1], xi0)
        np.testing.assert_array_equal(traj.eta[-1], eta0)

    def test_exact_resleep_tracks_plain_descent(self):
        rng = np.random.default_rng(16)
        model = nets.acceptance_net()
        target = nets.random_target(model, rng)
        xi0 = nets.init_params(model, rng)
        recog = chain_recognition(model)
        traj = wake_sleep_train(
            model,
            xi0,
            recog,
            np.zeros(recog.param_count),
            target,
            WakeSleepSchedule(iters=40, step_xi=0.05, exact_resleep=True),
        )
        gd = obj.train(
            model, xi0, target, obj.TrainConfig(step_size=0.05, max_iters=40, stop_tol=0.0)
        )
        for k in range(41):
            assert np.abs(traj.xi[k] - gd.params[k]).max() < 1e-8

    def test_asymmetric_schedule_reduces_E(self):
        rng = np.random.default_rng(17)
        model = nets.acceptance_net()
        target = nets.random_target(model, rng)
        recog = chain_recognition(model)
        sched = WakeSleepSchedule(iters=500, k_sleep_per_wake=25, step_xi=0.05, step_eta=0.05)
        traj = wake_sleep_train(
            model,
            nets.init_params(model, rng),
            recog,
            np.zeros(recog.param_count),
            target,
            sched,
        )
        assert traj.E[-1] < 0.15 * traj.E[0]
        assert traj.gap[-1] < traj.gap[1]

    def test_natural_variant_runs_and_descends(self):
        rng = np.random.default_rng(18)
        model = nets.acceptance_net()
        target = nets.random_target(model, rng)
        recog = chain_recognition(model)
        sched = WakeSleepSchedule(
            iters=100, k_sleep_per_wake=10, step_xi=0.1, step_eta=0.1, natural=True
        )
        traj = wake_sleep_train(
            model,
            nets.init_params(model, rng),
            recog,
            np.zeros(recog.param_count),
            target,
            sched,
        )
        assert traj.E[-1] < traj.E[0]

    def test_sleep_gap_tol_short_circuits(self):
        rng = np.random.default_rng(19)
        model = nets.acceptance_net()
        target = nets.random_target(model, rng)
        recog = chain_recognition(model)
        sched = WakeSleepSchedule(
            iters=3, k_sleep_per_wake=500, step_eta=0.3, sleep_gap_tol=1e-3
        )
        traj = wake_sleep_train(
            model,
            nets.init_params(model, rng),
            recog,
            np.zeros(recog.param_count),
            target,
            sched,
        )
        assert traj.gap[-1] < 2e-3
