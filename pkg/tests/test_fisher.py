"""Fisher blocks vs the brute-force oracle, pseudoinverses, sparsity counts."""

import numpy as np
import pytest

from natgradnet import nets
from natgradnet.dag_model import Dag, DagModel, TABULAR_LOGIT, exp_family
from natgradnet.fisher import (
    BlockMatrix,
    block_fisher,
    block_pseudoinverse,
    expfam_fisher_block,
    full_fisher_oracle,
    local_fisher_block,
    model_fisher_oracle,
    parent_marginal,
    pseudoinverse,
    rbm_joint_fisher,
    sparsity_report,
    structural_zero_mask,
    weight_coordinate_indices,
)
from natgradnet.state_space import StateSpace


class TestLocalFisherBlock:
    def test_isolated_sigmoid_block_is_quarter(self):
        """Uniform kernel: score is +-1/2, so the 1x1 block is 1/4."""
        model = nets.sigmoid_net([()], visible=(0,))
        block = local_fisher_block(model, np.zeros(1), 0)
        np.testing.assert_allclose(block, [[0.25]], atol=1e-15)

    def test_constant_statistic_gives_zero_block(self):
        space = StateSpace((2,), (0,), ())
        model = DagModel(space, Dag(((),)), [exp_family(np.ones((1, 1, 2)))])
        block = local_fisher_block(model, np.array([0.3]), 0)
        np.testing.assert_allclose(block, 0.0, atol=1e-15)

    def test_blocks_match_oracle_sub_blocks(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            model = nets.random_sigmoid_net(6, rng)
            params = nets.random_params(model, rng, -1.0, 1.0)
            G = model_fisher_oracle(model, params)
            for r in range(6):
                sl = model.block_slice(r)
                np.testing.assert_allclose(
                    local_fisher_block(model, params, r), G[sl, sl], atol=1e-10
                )

    def test_parent_marginal_matches_enumeration(self):
        from natgradnet.dag_model import joint_table, marginal

        rng = np.random.default_rng(1)
        model = nets.random_sigmoid_net(5, rng)
        params = nets.random_params(model, rng)
        for r in range(5):
            pa = model.dag.parents[r]
            got = parent_marginal(model, params, r)
            if not pa:
                np.testing.assert_allclose(got, [1.0], atol=1e-12)
            elif pa == tuple(sorted(pa)):
                want = marginal(joint_table(model, params), pa).probs
                np.testing.assert_allclose(got, want, atol=1e-12)


class TestBlockFisherStructure:
    def test_edgeless_blocks_are_single_node_fishers(self):
        rng = np.random.default_rng(2)
        model = nets.sigmoid_net([(), (), ()], visible=(0, 1))
        params = nets.random_params(model, rng)
        bm = block_fisher(model, params)
        for r in range(3):
            single = nets.sigmoid_net([()], visible=(0,))
            want = local_fisher_block(single, params[model.block_slice(r)], 0)
            np.testing.assert_allclose(bm.blocks[r], want, atol=1e-12)

    def test_shallow_architecture_block_shapes(self):
        model = nets.shallow_architecture(3, 3)
        params = np.zeros(model.param_count)
        dims = block_fisher(model, params).dims
        # 9 parentless hidden units (threshold only), 3 visible with 9+1 params
        assert dims == (1,) * 9 + (10,) * 3

    def test_deep_architecture_block_shapes(self):
        model = nets.deep_architecture(3, 3)
        dims = block_fisher(model, np.zeros(model.param_count)).dims
        assert dims == (1,) * 3 + (4,) * 9

    def test_off_block_entries_vanish(self):
        rng = np.random.default_rng(3)
        model = nets.random_sigmoid_net(8, rng)
        params = nets.random_params(model, rng, -1.0, 1.0)
        G = model_fisher_oracle(model, params)
        D = block_fisher(model, params).dense()
        np.testing.assert_allclose(G, D, atol=1e-10)


class TestFullFisherOracle:
    def test_softmax_fisher_at_uniform(self):
        """One binary tabular node at equal logits: known degenerate 2x2."""
        space = StateSpace((2,), (0,), ())
        model = DagModel(space, Dag(((),)), [TABULAR_LOGIT])
        G = model_fisher_oracle(model, np.zeros(2))
        np.testing.assert_allclose(G, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-14)

    def test_matches_finite_difference_fisher(self):
        """g_ij from FD of the probability vector, then the metric sum."""
        rng = np.random.default_rng(4)
        model = nets.random_sigmoid_net(4, rng)
        params = nets.random_params(model, rng)
        G = model_fisher_oracle(model, params)
        h = 1e-5
        p = model.joint_probs(params)
        cols = []
        for i in range(model.param_count):
            pp, pm = params.copy(), params.copy()
            pp[i] += h
            pm[i] -= h
            cols.append((model.joint_probs(pp) - model.joint_probs(pm)) / (2 * h))
        J = np.stack(cols, axis=1)
        G_fd = J.T @ (J / p[:, None])
        np.testing.assert_allclose(G, G_fd, atol=1e-5)

    def test_generic_family_route(self):
        dist = lambda t: np.array([0.2, 0.3, 0.5])
        log_grad = lambda t: np.zeros((3, 2))
        np.testing.assert_allclose(full_fisher_oracle(dist, np.zeros(2), log_grad), 0.0)


class TestExpFamilyBlock:
    def test_single_spin_statistic_variance_one(self):
        """phi = x_r on an isolated binary node at natural parameter 0."""
        space = StateSpace((2,), (0,), ())
        spec = exp_family(np.array([[[-1.0, 1.0]]]))
        model = DagModel(space, Dag(((),)), [spec])
        np.testing.assert_allclose(
            expfam_fisher_block(model, np.zeros(1), 0), [[1.0]], atol=1e-14
        )

    def test_covariance_form_equals_score_form(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            model = nets.random_mixed_net(5, rng)
            params = nets.random_params(model, rng)
            from natgradnet.dag_model import KernelFamily

            for r in range(5):
                if model.kernels[r].family is KernelFamily.TABULAR_LOGIT:
                    continue
                np.testing.assert_allclose(
                    expfam_fisher_block(model, params, r),
                    local_fisher_block(model, params, r),
                    atol=1e-12,
                )

    def test_tabular_rejected(self):
        space = StateSpace((2,), (0,), ())
        model = DagModel(space, Dag(((),)), [TABULAR_LOGIT])
        with pytest.raises(ValueError):
            expfam_fisher_block(model, np.zeros(2), 0)


class TestRbmFisher:
    def test_identity_at_zero_weights(self):
        F = rbm_joint_fisher(2, 2, np.zeros((2, 2)))
        np.testing.assert_allclose(F, np.eye(4), atol=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        F = rbm_joint_fisher(2, 3, rng.uniform(-1, 1, (2, 3)))
        np.testing.assert_allclose(F, F.T, atol=1e-14)

    def test_densely_nonzero_for_random_weights(self):
        rng = np.random.default_rng(7)
        W = rng.uniform(0.5, 1.5, (2, 2)) * rng.choice([-1.0, 1.0], (2, 2))
        F = rbm_joint_fisher(2, 2, W)
        assert (np.abs(F) > 1e-6).mean() >= 0.99

    def test_no_node_block_structure(self):
        """Unlike DAG models, some entry across distinct weight pairs is large."""
        rng = np.random.default_rng(8)
        W = rng.uniform(0.5, 1.5, (2, 2))
        F = rbm_joint_fisher(2, 2, W)
        off = [
            abs(F[a, b])
            for a in range(4)
            for b in range(4)
            if divmod(a, 2)[0] != divmod(b, 2)[0] and divmod(a, 2)[1] != divmod(b, 2)[1]
        ]
        assert max(off) > 1e-3


class TestPseudoinverse:
    def test_diagonal(self):
        np.testing.assert_allclose(
            pseudoinverse(np.diag([4.0, 0.0])), np.diag([0.25, 0.0]), atol=1e-15
        )

    def test_invertible_matches_inverse(self):
        rng = np.random.default_rng(9)
        B = rng.standard_normal((5, 5))
        A = B @ B.T + 0.5 * np.eye(5)
        np.testing.assert_allclose(pseudoinverse(A), np.linalg.inv(A), atol=1e-10)

    def test_penrose_identities_rank_deficient(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            n = int(rng.integers(2, 8))
            B = rng.standard_normal((n, int(rng.integers(1, n + 1))))
            G = B @ B.T
            Gp = pseudoinverse(G)
            assert np.abs(G @ Gp @ G - G).max() < 1e-9
            assert np.abs(Gp @ G @ Gp - Gp).max() < 1e-9
            assert np.abs((G @ Gp).T - G @ Gp).max() < 1e-8
            assert np.abs((Gp @ G).T - Gp @ G).max() < 1e-8

    def test_scaling_homogeneity(self):
        """(cG)^+ (c grad) = G^+ grad: the block solve is scale free."""
        rng = np.random.default_rng(11)
        B = rng.standard_normal((4, 2))
        G = B @ B.T
        v = rng.standard_normal(4)
        c = 7.3
        np.testing.assert_allclose(
            pseudoinverse(c * G) @ (c * v), pseudoinverse(G) @ v, atol=1e-10
        )

    def test_non_symmetric_rejected(self):
        with pytest.raises(ValueError):
            pseudoinverse(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_zero_matrix(self):
        np.testing.assert_array_equal(pseudoinverse(np.zeros((3, 3))), np.zeros((3, 3)))


class TestBlockPseudoinverse:
    def test_identity_blocks(self):
        bm = BlockMatrix([np.eye(2), np.eye(3)])
        np.testing.assert_allclose(block_pseudoinverse(bm).dense(), np.eye(5), atol=1e-14)

    def test_matches_dense_pinv(self):
        rng = np.random.default_rng(12)
        blocks = []
        for _ in range(4):
            n = int(rng.integers(1, 5))
            B = rng.standard_normal((n, int(rng.integers(1, n + 1))))
            blocks.append(B @ B.T)
        bm = BlockMatrix(blocks)
        np.testing.assert_allclose(
            block_pseudoinverse(bm).dense(), pseudoinverse(bm.dense()), atol=1e-10
        )

    def test_zero_block_stays_zero(self):
        bm = BlockMatrix([np.zeros((2, 2)), np.eye(1)])
        out = block_pseudoinverse(bm)
        np.testing.assert_array_equal(out.blocks[0], np.zeros((2, 2)))


class TestSparsityCounts:
    def _zeros(self, model, seed, draws=5):
        rng = np.random.default_rng(seed)
        idx = weight_coordinate_indices(model)
        mats = [
            model_fisher_oracle(model, nets.random_params(model, rng, -1.0, 1.0))[
                np.ix_(idx, idx)
            ]
            for _ in range(draws)
        ]
        return structural_zero_mask(mats, 1e-10)

    def test_shallow_3x9_counts(self):
        mask = self._zeros(nets.shallow_architecture(3, 3), seed=0)
        assert mask.shape == (27, 27)
        assert int(mask.sum()) == 486

    def test_deep_3x9_counts(self):
        mask = self._zeros(nets.deep_architecture(3, 3), seed=1)
        assert mask.shape == (27, 27)
        assert int(mask.sum()) == 648

    def test_difference_162(self):
        shallow = int(self._zeros(nets.shallow_architecture(3, 3), 2).sum())
        deep = int(self._zeros(nets.deep_architecture(3, 3), 3).sum())
        assert deep - shallow == 162

    def test_small_formula_counts(self):
        """n = l = 2: 32 shallow vs 16 deep nonzero weight entries."""
        shallow = self._zeros(nets.shallow_architecture(2, 2), 4)
        deep = self._zeros(nets.deep_architecture(2, 2), 5)
        assert shallow.size - int(shallow.sum()) == 32  # l^2 n^3
        assert deep.size - int(deep.sum()) == 16  # l n^3

    def test_report_fields(self):
        M = np.array([[1.0, 0.0], [0.0, 1e-12]])
        rep = sparsity_report(M, 1e-10, block_dims=(1, 1))
        assert rep["total"] == 4 and rep["zeros"] == 3 and rep["nonzeros"] == 1
        assert rep["per_block"][1]["zeros"] == 1


class TestFisherPsd:
    def test_blocks_positive_semidefinite(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            model = nets.random_mixed_net(int(rng.integers(2, 7)), rng)
            params = nets.random_params(model, rng)
            for b in block_fisher(model, params).blocks:
                lam = np.linalg.eigvalsh(b)
                assert lam.min() >= -1e-10 * max(lam.max(), 1e-300)
