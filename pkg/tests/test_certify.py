import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import block_diag

from hinfconnect.analysis import h2_norm_squared, hinf_norm
from hinfconnect.certify import (bounded_real_certificate,
                                 bounded_real_certificate_for,
                                 bounded_real_matrix, certifies, h2_certificate,
                                 h2_certificate_for, verify_bounded_real,
                                 verify_h2)
from hinfconnect.errors import CertificateError, PreconditionError
from hinfconnect.model import (EXAMPLE1_K1, EXAMPLE1_K2, ClosedLoop, close_loop,
                               example1_plant, scalar_controller,
                               similarity_transform)
from hinfconnect.numerics import DEFAULT_TOL
from instances import observer_controller, random_lqg_member, random_member
from oracles import sdp_hinf

seeds = st.integers(0, 2**32 - 1)


def scalar_loop(a, b, c, d):
    return ClosedLoop([[a]], [[b]], [[c]], [[d]])


class TestBoundedReal:
    @pytest.mark.parametrize("K", [EXAMPLE1_K1, EXAMPLE1_K2])
    def test_example_controllers(self, K):
        cert = bounded_real_certificate(example1_plant(), K, 3.33)
        lam, p_min = verify_bounded_real(cert.P, close_loop(example1_plant(), K), 3.33)
        assert lam < 0 and p_min > 0
        assert cert.gamma == 3.33

    def test_scalar_hand_minors(self):
        # [[-2P, P, 1], [P, -2, 0], [1, 0, -2]] is negative definite iff
        # P > 0, 4P - P^2 > 0 and 2P^2 - 8P + 2 < 0, i.e. P in (2 - sqrt3, 2 + sqrt3).
        cert = bounded_real_certificate_for(scalar_loop(-1, 1, 1, 0), 2.0)
        P = float(cert.P[0, 0])
        assert 2 - np.sqrt(3) < P < 2 + np.sqrt(3)
        assert 4 * P - P**2 > 0 and 2 * P**2 - 8 * P + 2 < 0

    def test_below_norm_fails(self):
        with pytest.raises(CertificateError):
            bounded_real_certificate(example1_plant(), EXAMPLE1_K1, 3.3)

    def test_feedthrough_at_level_fails(self):
        with pytest.raises(CertificateError):
            bounded_real_certificate_for(scalar_loop(-1, 0, 0, 2), 2.0)

    def test_unstable_rejected(self):
        with pytest.raises(PreconditionError):
            bounded_real_certificate(example1_plant(), scalar_controller(-2, 0, 0), 10.0)

    def test_zero_P_never_certifies(self):
        lam, _ = verify_bounded_real(np.zeros((1, 1)), scalar_loop(-1, 1, 1, 0), 1.0)
        assert lam >= 0

    def test_decoupled_scalar(self):
        lam, p_min = verify_bounded_real(np.eye(1), scalar_loop(-1, 0, 0, 0), 1.0)
        assert lam == pytest.approx(-1.0) and p_min == 1.0

    def test_matrix_layout(self):
        M = bounded_real_matrix(np.eye(1), scalar_loop(-1, 2, 3, 4), 5.0)
        np.testing.assert_array_equal(M, [[-2, 2, 3], [2, -5, 4], [3, 4, -5]])

    @given(seeds)
    @settings(max_examples=25, deadline=None)
    def test_soundness(self, seed):
        plant, K, gamma = random_member(np.random.default_rng(seed), max_n=4)
        cert = bounded_real_certificate(plant, K, gamma)
        lam, p_min = verify_bounded_real(cert.P, close_loop(plant, K), gamma)
        assert abs(-lam - cert.lmi_margin_achieved) <= 1e-10 * (1 + abs(lam))
        assert abs(p_min - cert.pos_def_margin) <= 1e-10 * (1 + abs(p_min))
        assert lam < 0 and p_min > 0

    @pytest.mark.parametrize("seed", range(50))
    def test_succeeds_above_norm(self, seed):
        plant, K, gamma = random_member(np.random.default_rng(seed), factor=1.05)
        cert = bounded_real_certificate(plant, K, gamma)
        assert certifies(cert.P, close_loop(plant, K), gamma)

    @pytest.mark.parametrize("seed", range(10))
    def test_refuses_below_norm(self, seed):
        plant, K, gamma = random_member(np.random.default_rng(seed), factor=0.95)
        with pytest.raises(CertificateError):
            bounded_real_certificate(plant, K, gamma)

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_similarity_congruence(self, seed):
        rng = np.random.default_rng(seed)
        plant, K, gamma = random_member(rng, max_n=3)
        n = plant.n_x
        T = rng.normal(size=(n, n)) + 3 * np.eye(n)
        cert = bounded_real_certificate(plant, K, gamma)
        S = block_diag(np.eye(n), np.linalg.inv(T))
        P_t = S.T @ cert.P @ S
        lam, p_min = verify_bounded_real(P_t, close_loop(plant, similarity_transform(K, T)),
                                         gamma)
        assert lam < 0 and p_min > 0

    @pytest.mark.parametrize("seed", range(3))
    def test_sdp_level_consistent(self, seed):
        plant, K, _ = random_member(np.random.default_rng(seed), max_n=3)
        sys = close_loop(plant, K)
        level = sdp_hinf(sys)
        assert level == pytest.approx(hinf_norm(sys).value, rel=1e-4)
        bounded_real_certificate_for(sys, 1.05 * level)


class TestH2:
    def scalar_case(self):
        plant, K, _ = random_lqg_member(np.random.default_rng(3), max_n=1)
        return plant, K

    def test_double_level_verifies(self):
        plant, K = self.scalar_case()
        h2 = h2_norm_squared(close_loop(plant, K))
        cert = h2_certificate(plant, K, 2 * h2)
        lam1, lam2, tr = verify_h2(cert.P, cert.Gamma, close_loop(plant, K))
        assert lam1 < 0 and lam2 > 0 and tr < 2 * h2
        assert cert.trace_slack == pytest.approx(2 * h2 - tr)

    def test_barely_above_fails(self):
        plant, K = self.scalar_case()
        h2 = h2_norm_squared(close_loop(plant, K))
        with pytest.raises(CertificateError):
            h2_certificate(plant, K, (1 + 1e-9) * h2)

    def test_below_rejected(self):
        plant, K = self.scalar_case()
        h2 = h2_norm_squared(close_loop(plant, K))
        with pytest.raises(PreconditionError):
            h2_certificate(plant, K, 0.5 * h2)

    def test_proper_controller_rejected(self):
        plant, K = self.scalar_case()
        K = K.__class__(K.A_K, K.B_K, K.C_K, np.full_like(K.D_K, 0.1))
        with pytest.raises(PreconditionError):
            h2_certificate(plant, K, 1e6)

    def test_first_order_closed_form(self):
        # ||1/(s+1)||_2^2 = 1/2.
        cert = h2_certificate_for(scalar_loop(-1, 1, 1, 0), 1.0)
        assert np.trace(cert.Gamma) < 1.0
        assert np.trace(cert.Gamma) > 0.5

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_soundness(self, seed):
        plant, K, gamma = random_lqg_member(np.random.default_rng(seed))
        cert = h2_certificate(plant, K, gamma)
        lam1, lam2, tr = verify_h2(cert.P, cert.Gamma, close_loop(plant, K))
        assert abs(-lam1 - cert.lmi_margin_achieved) <= 1e-10 * (1 + abs(lam1))
        assert abs(lam2 - cert.pos_def_margin) <= 1e-10 * (1 + abs(lam2))
        assert lam1 < 0 and lam2 > 0 and tr < gamma

    def test_observer_controller(self):
        from hinfconnect.model import LqgWeights, lqg_plant
        w = LqgWeights(W=[[1.0]], V=[[1.0]], Q=[[1.0]], R=[[1.0]])
        plant = lqg_plant([[1.0]], [[1.0]], [[1.0]], w)
        K = observer_controller(plant)
        h2 = h2_norm_squared(close_loop(plant, K))
        cert = h2_certificate(plant, K, 2 * h2)
        assert cert.lmi_margin_achieved > DEFAULT_TOL.lmi_margin
