import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import block_diag

from hinfconnect.analysis import h2_norm_squared, hinf_norm, in_kgamma
from hinfconnect.certify import bounded_real_certificate, bounded_real_matrix
from hinfconnect.errors import (CertificateError, InvalidInputError,
                                InvariantViolation, SingularInputError)
from hinfconnect.liftmap import (FPoint, LiftedPoint, component_sign,
                                 congruence_factor, eval_M_gamma, eval_M_lqg,
                                 in_F_gamma, in_F_lqg, lift, lift_h2,
                                 reconstruct, transform_lifted)
from hinfconnect.lmi import synthesize_lifted
from hinfconnect.model import (EXAMPLE1_K1, EXAMPLE1_K2, Plant, close_loop,
                               example1_plant, similarity_transform)
from hinfconnect.numerics import max_eig_sym
from instances import random_lqg_member, random_member, rel_err

seeds = st.integers(0, 2**32 - 1)
GAMMA = 3.33


def zero_point(n=1, n_u=1, n_y=1):
    Z = np.zeros((n, n))
    return FPoint(Z, Z, Z, np.zeros((n, n_y)), np.zeros((n_u, n)), np.zeros((n_u, n_y)))


def witness_from(Z):
    """Recover ``P`` from ``P^{-1} = [[X, Pi'], [Pi, Xhat]]`` and the lifted blocks."""
    Xhat = -np.linalg.solve(Z.Xi, Z.Y @ Z.Pi.T)
    Yhat = -Z.Xi.T @ Z.X @ np.linalg.inv(Z.Pi)
    Pinv = np.block([[Z.X, Z.Pi.T], [Z.Pi, Xhat]])
    P = np.block([[Z.Y, Z.Xi], [Z.Xi.T, Yhat]])
    return P, Pinv


def unit_plant(a=0.0):
    one = np.ones((1, 1))
    return Plant(A=a * one, B1=one, B2=one, C1=one, C2=one,
                 D11=0 * one, D12=one, D21=one)


class TestEvalM:
    def test_zero_point_example(self):
        M = eval_M_gamma(example1_plant(), zero_point(), 1.0)
        expected = np.array([[0, 1, 1, 0],
                             [1, 0, 0, 1],
                             [1, 0, -1, 0],
                             [0, 1, 0, -1]], dtype=float)
        np.testing.assert_array_equal(M, expected)

    def test_symmetric_exactly(self):
        rng = np.random.default_rng(0)
        plant, K, gamma = random_member(rng)
        Z = lift(plant, K, gamma)
        M = eval_M_gamma(plant, Z.fpoint, gamma)
        np.testing.assert_array_equal(M, M.T)

    def test_lifted_example_negative(self):
        Z = lift(example1_plant(), EXAMPLE1_K1, GAMMA)
        assert max_eig_sym(eval_M_gamma(example1_plant(), Z.fpoint, GAMMA)) < 0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            eval_M_gamma(example1_plant(), zero_point(n=2), 1.0)

    def test_affine(self):
        rng = np.random.default_rng(1)
        plant = random_member(rng)[0]
        n, _, n_u, n_y, _ = plant.dims

        def rand():
            S = rng.normal(size=(n, n))
            return FPoint(S + S.T, S @ S.T, rng.normal(size=(n, n)), rng.normal(size=(n, n_y)),
                          rng.normal(size=(n_u, n)), rng.normal(size=(n_u, n_y)))
        p, q = rand(), rand()
        z = zero_point(n, n_u, n_y)
        lhs = eval_M_gamma(plant, p.blend(q, 0.3), 2.0)
        rhs = 0.7 * eval_M_gamma(plant, p, 2.0) + 0.3 * eval_M_gamma(plant, q, 2.0)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + np.max(np.abs(rhs)))
        assert eval_M_gamma(plant, z, 2.0).shape[0] == 2 * n + plant.dims[1] + plant.dims[4]


class TestFGamma:
    def test_lifted_point_member(self):
        Z = lift(example1_plant(), EXAMPLE1_K1, GAMMA)
        assert in_F_gamma(example1_plant(), Z.fpoint, GAMMA)
        assert in_F_gamma(example1_plant(), Z.fpoint, GAMMA, strictly_proper=True)

    def test_zero_point_not_member(self):
        assert not in_F_gamma(example1_plant(), zero_point(), 100.0)

    def test_convex_combinations(self):
        plant = example1_plant()
        p = lift(plant, EXAMPLE1_K1, GAMMA).fpoint
        q = lift(plant, EXAMPLE1_K2, GAMMA).fpoint
        for t in np.linspace(0, 1, 11):
            assert in_F_gamma(plant, p.blend(q, t), GAMMA)

    @given(seeds)
    @settings(max_examples=10, deadline=None)
    def test_convexity_random(self, seed):
        rng = np.random.default_rng(seed)
        plant, K, gamma = random_member(rng, max_n=3)
        p = lift(plant, K, gamma).fpoint
        q = synthesize_lifted(plant, gamma, seed=int(rng.integers(1000))).lifted.fpoint
        for t in np.linspace(0, 1, 11):
            assert in_F_gamma(plant, p.blend(q, t), gamma)

    def test_strictly_proper_flag(self):
        Z = lift(example1_plant(), EXAMPLE1_K1, GAMMA)
        p = FPoint(Z.X, Z.Y, Z.Ahat, Z.Bhat, Z.Chat, Z.Dhat + 0.01)
        assert not in_F_gamma(example1_plant(), p, GAMMA, strictly_proper=True)


class TestLift:
    def test_example_round_trip(self):
        plant = example1_plant()
        for K in (EXAMPLE1_K1, EXAMPLE1_K2):
            Z = lift(plant, K, GAMMA)
            assert Z.coupling_residual() <= 1e-9
            assert rel_err(reconstruct(plant, Z), K) <= 1e-8
            assert np.array_equal(Z.Dhat, K.D_K)

    def test_example_components_differ(self):
        plant = example1_plant()
        s1 = component_sign(lift(plant, EXAMPLE1_K1, GAMMA))
        s2 = component_sign(lift(plant, EXAMPLE1_K2, GAMMA))
        assert s1 * s2 == -1

    def test_below_norm_propagates(self):
        with pytest.raises(CertificateError):
            lift(example1_plant(), EXAMPLE1_K1, 3.3)

    def test_supplied_witness(self):
        plant = example1_plant()
        cert = bounded_real_certificate(plant, EXAMPLE1_K1, GAMMA)
        Z = lift(plant, EXAMPLE1_K1, GAMMA, P=cert.P)
        assert rel_err(reconstruct(plant, Z), EXAMPLE1_K1) <= 1e-8

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_round_trip_random(self, seed):
        plant, K, gamma = random_member(np.random.default_rng(seed))
        Z = lift(plant, K, gamma)
        bound = 1e-9 * (1 + np.linalg.norm(Z.Y, 2) * np.linalg.norm(Z.X, 2))
        assert Z.coupling_residual() <= bound
        assert in_F_gamma(plant, Z.fpoint, gamma)
        assert rel_err(reconstruct(plant, Z), K) <= 1e-8

    def test_deterministic(self):
        plant, K, gamma = random_member(np.random.default_rng(5))
        a, b = lift(plant, K, gamma, seed=3), lift(plant, K, gamma, seed=3)
        np.testing.assert_array_equal(a.Pi, b.Pi)

    @given(seeds)
    @settings(max_examples=10, deadline=None)
    def test_congruence_identity(self, seed):
        plant, K, gamma = random_member(np.random.default_rng(seed), max_n=3)
        Z = lift(plant, K, gamma)
        P, Pinv = witness_from(Z)
        n = plant.n_x
        assert np.max(np.abs(P @ Pinv - np.eye(2 * n))) <= 1e-8 * (1 + np.abs(P).max())
        T = congruence_factor(Z)
        _, n_w, _, _, n_z = plant.dims
        S = block_diag(T, np.eye(n_w), np.eye(n_z))
        rhs = S.T @ bounded_real_matrix(P, close_loop(plant, K), gamma) @ S
        lhs = eval_M_gamma(plant, Z.fpoint, gamma)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8 * (1 + np.max(np.abs(lhs)))

    @given(seeds)
    @settings(max_examples=15, deadline=None)
    def test_determinant_identity(self, seed):
        plant, K, gamma = random_member(np.random.default_rng(seed))
        Z = lift(plant, K, gamma)
        n = plant.n_x
        lhs = np.linalg.det(Z.Xi @ Z.Pi)
        rhs = np.linalg.det(np.eye(n) - Z.Y @ Z.X)
        assert abs(lhs - rhs) <= 1e-9 * max(abs(rhs), 1.0) * (1 + np.linalg.cond(Z.Pi))


class TestReconstruct:
    def test_hand_zero(self):
        Z = LiftedPoint([[2.0]], [[2.0]], [[0.0]], [[0.0]], [[0.0]], [[0.0]],
                        [[1.0]], [[-3.0]])
        K = reconstruct(unit_plant(), Z)
        np.testing.assert_array_equal(K.matrix(), np.zeros((2, 2)))

    def test_hand_expansion(self):
        # [[1,0],[2,-3]]^-1 [[1,1],[1,1]] [[1,2],[0,1]]^-1 = [[1,-1],[1/3,-1/3]]
        Z = LiftedPoint([[2.0]], [[2.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]],
                        [[1.0]], [[-3.0]])
        K = reconstruct(unit_plant(), Z)
        np.testing.assert_allclose(K.matrix(), [[1, -1], [1 / 3, -1 / 3]], rtol=1e-14)

    def test_singular_rejected(self):
        Z = LiftedPoint([[1.0]], [[1.0]], [[0.0]], [[0.0]], [[0.0]], [[0.0]],
                        [[1.0]], [[0.0]])
        with pytest.raises(SingularInputError):
            reconstruct(unit_plant(), Z)

    @pytest.mark.parametrize("seed", range(10))
    def test_surjectivity(self, seed):
        rng = np.random.default_rng(seed)
        plant, _, gamma = random_member(rng, max_n=3)
        Z = synthesize_lifted(plant, gamma, seed=seed).lifted
        n = plant.n_x
        Pi = rng.normal(size=(n, n)) + 2 * np.eye(n)
        Z2 = LiftedPoint.from_fpoint(Z.fpoint, Pi)
        assert Z2.coupling_residual() <= 1e-9 * (1 + np.abs(Z2.Pi).max() * np.abs(Z2.Xi).max())
        K = reconstruct(plant, Z2)
        assert in_kgamma(plant, K, gamma)
        assert hinf_norm(close_loop(plant, K)).hi < gamma


class TestComponentSign:
    def base(self, Pi):
        n = Pi.shape[0]
        I = np.eye(n)
        return LiftedPoint.from_fpoint(FPoint(2 * I, 2 * I, 0 * I, I[:, :1], I[:1], [[0.0]]),
                                       Pi)

    def test_plus(self):
        assert component_sign(self.base(np.eye(2))) == 1

    def test_minus(self):
        assert component_sign(self.base(np.diag([-1.0, 1.0]))) == -1

    def test_degenerate(self):
        Z = self.base(np.eye(2))
        Z = LiftedPoint(Z.X, Z.Y, Z.Ahat, Z.Bhat, Z.Chat, Z.Dhat, np.zeros((2, 2)), Z.Xi)
        with pytest.raises(InvariantViolation):
            component_sign(Z)


class TestTransform:
    def test_identity(self):
        Z = lift(example1_plant(), EXAMPLE1_K1, GAMMA)
        Z2 = transform_lifted(Z, np.eye(1))
        np.testing.assert_array_equal(Z2.Pi, Z.Pi)
        np.testing.assert_array_equal(Z2.Xi, Z.Xi)

    def test_negative_determinant_flips(self):
        Z = lift(example1_plant(), EXAMPLE1_K1, GAMMA)
        assert component_sign(transform_lifted(Z, [[-0.5]])) == -component_sign(Z)

    def test_singular(self):
        Z = lift(example1_plant(), EXAMPLE1_K1, GAMMA)
        with pytest.raises(SingularInputError):
            transform_lifted(Z, [[0.0]])

    @pytest.mark.parametrize("seed", range(20))
    def test_commuting_square(self, seed):
        rng = np.random.default_rng(seed)
        plant, K, gamma = random_member(rng)
        Z = lift(plant, K, gamma)
        n = plant.n_x
        T = rng.normal(size=(n, n)) + 2 * np.eye(n)
        lhs = reconstruct(plant, transform_lifted(Z, T))
        rhs = similarity_transform(reconstruct(plant, Z), T)
        assert rel_err(lhs, rhs) <= 1e-8
        assert transform_lifted(Z, T).coupling_residual() <= 1e-9 * (
            1 + np.linalg.norm(Z.Y, 2) * np.linalg.norm(Z.X, 2)) * np.linalg.cond(T)

    def test_lift_of_transformed_controller(self):
        plant = example1_plant()
        Z = lift(plant, EXAMPLE1_K1, GAMMA)
        Zt = lift(plant, similarity_transform(EXAMPLE1_K1, [[-1.0]]), GAMMA)
        assert component_sign(Zt) == -component_sign(Z)


class TestLqg:
    def test_zero_point_blocks(self):
        block1, block2, tr = eval_M_lqg(example1_plant(), zero_point(), [[1.0]])
        np.testing.assert_array_equal(block1, [[0, 1, 1], [1, 0, 0], [1, 0, -1]])
        np.testing.assert_array_equal(block2, [[0, 1, 0], [1, 0, 1], [0, 1, 1]])
        assert tr == 1.0

    def test_trace_sum(self):
        _, _, tr = eval_M_lqg(example1_plant(), zero_point(), [[0.1]])
        assert tr == 0.1

    def test_nonzero_dhat_rejected(self):
        p = FPoint(*zero_point().as_tuple()[:5], [[1.0]])
        with pytest.raises(InvalidInputError):
            eval_M_lqg(example1_plant(), p, [[1.0]])

    def test_gamma_shape_checked(self):
        with pytest.raises(InvalidInputError):
            eval_M_lqg(example1_plant(), zero_point(), np.eye(2))

    def test_scalar_round_trip(self):
        plant, K, _ = random_lqg_member(np.random.default_rng(3), max_n=1)
        gamma = 2 * h2_norm_squared(close_loop(plant, K))
        Z, Gamma = lift_h2(plant, K, gamma)
        assert np.array_equal(Z.Dhat, np.zeros_like(K.D_K))
        assert Z.coupling_residual() <= 1e-9
        assert in_F_lqg(plant, Z.fpoint, Gamma, gamma)
        assert rel_err(reconstruct(plant, Z), K) <= 1e-8

    @given(seeds)
    @settings(max_examples=15, deadline=None)
    def test_round_trip_random(self, seed):
        plant, K, gamma = random_lqg_member(np.random.default_rng(seed))
        Z, Gamma = lift_h2(plant, K, gamma)
        block1, block2, tr = eval_M_lqg(plant, Z.fpoint, Gamma)
        assert max_eig_sym(block1) < 0 and max_eig_sym(-block2) < 0 and tr < gamma
        assert rel_err(reconstruct(plant, Z), K) <= 1e-8
