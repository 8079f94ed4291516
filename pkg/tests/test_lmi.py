import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hinfconnect.analysis import (h2_norm_squared, hinf_norm, in_kgamma,
                                  in_lgamma)
from hinfconnect.errors import (AssumptionViolationError, InvalidInputError,
                                SynthesisError)
from hinfconnect.liftmap import component_sign, in_F_gamma
from hinfconnect.lmi import (FEASIBLE, INFEASIBLE, AffineLmi, VarSpec,
                             affinity_defect, analytic_center,
                             assemble_h2_synthesis_lmi, assemble_synthesis_lmi,
                             gamma_star, solve_feasibility, synthesize,
                             synthesize_h2, synthesize_lifted)
from hinfconnect.model import Plant, close_loop, example1_plant
from hinfconnect.numerics import DEFAULT_TOL, max_eig_sym
from instances import random_lqg_member, random_member
from oracles import GAMMA_STAR_EXAMPLE1

seeds = st.integers(0, 2**32 - 1)


def interval_lmi():
    """``z - 1 < 0`` as a one-variable affine LMI."""
    return AffineLmi.from_functions([VarSpec("z", (1, 1))],
                                    [lambda v: v["z"] - np.eye(1)])


class TestAssembly:
    def test_dimension_count(self):
        assert assemble_synthesis_lmi(example1_plant(), 3.33).dim == 6
        assert assemble_synthesis_lmi(example1_plant(), 3.33, strictly_proper=True).dim == 5

    def test_dimension_count_general(self):
        plant = random_member(np.random.default_rng(0))[0]
        n, _, n_u, n_y, _ = plant.dims
        expected = n * (n + 1) + n * n + n * n_y + n_u * n + n_u * n_y
        assert assemble_synthesis_lmi(plant, 1.0).dim == expected

    @given(seeds)
    @settings(max_examples=10, deadline=None)
    def test_affinity(self, seed):
        rng = np.random.default_rng(seed)
        plant = random_member(rng, max_n=3)[0]
        lmi = assemble_synthesis_lmi(plant, 2.0)
        z1, z2 = rng.normal(size=lmi.dim), rng.normal(size=lmi.dim)
        assert affinity_defect(lmi, z1, z2) <= 1e-12 * (1 + np.abs(z1).max() + np.abs(z2).max())

    def test_h2_affinity(self):
        rng = np.random.default_rng(2)
        plant = random_lqg_member(rng, max_n=2)[0]
        lmi = assemble_h2_synthesis_lmi(plant, 5.0)
        z1, z2 = rng.normal(size=lmi.dim), rng.normal(size=lmi.dim)
        assert affinity_defect(lmi, z1, z2) <= 1e-11

    def test_pack_round_trip(self):
        lmi = assemble_synthesis_lmi(example1_plant(), 3.33)
        z = np.arange(lmi.dim, dtype=float)
        np.testing.assert_array_equal(lmi.pack(lmi.unpack(z)), z)

    def test_symmetric_basis(self):
        lmi = assemble_synthesis_lmi(random_member(np.random.default_rng(1))[0], 2.0)
        for F0, basis in lmi.constraints:
            np.testing.assert_array_equal(F0, F0.T)
            np.testing.assert_array_equal(basis, np.swapaxes(basis, 1, 2))

    def test_rejects_bad_gamma(self):
        with pytest.raises(InvalidInputError):
            assemble_synthesis_lmi(example1_plant(), 0.0)


class TestFeasibility:
    def test_interval(self):
        res = solve_feasibility(interval_lmi())
        assert res.status == FEASIBLE
        assert res.z[0] < 1 - DEFAULT_TOL.lmi_margin
        assert res.margin > 0

    def test_infeasible_constant(self):
        lmi = AffineLmi.from_functions([VarSpec("z", (1, 1))],
                                       [lambda v: v["z"], lambda v: -v["z"]])
        res = solve_feasibility(lmi, budget=50)
        assert res.status == INFEASIBLE

    def test_example_feasible(self):
        lmi = assemble_synthesis_lmi(example1_plant(), 3.33)
        res = solve_feasibility(lmi)
        assert res.feasible
        for F in lmi.evaluate(res.z):
            assert max_eig_sym(F) <= -res.margin + 1e-15
        values = lmi.unpack(res.z)
        from hinfconnect.liftmap import FPoint
        p = FPoint(values["X"], values["Y"], values["Ahat"], values["Bhat"],
                   values["Chat"], values["Dhat"])
        assert in_F_gamma(example1_plant(), p, 3.33)

    def test_example_infeasible_low_gamma(self):
        res = solve_feasibility(assemble_synthesis_lmi(example1_plant(), 0.1))
        assert res.status == INFEASIBLE

    def test_budget_validated(self):
        with pytest.raises(InvalidInputError):
            solve_feasibility(interval_lmi(), budget=0)

    def test_start_validated(self):
        with pytest.raises(InvalidInputError):
            solve_feasibility(interval_lmi(), z0=np.zeros(3))

    def test_deterministic(self):
        lmi = assemble_synthesis_lmi(example1_plant(), 2.0)
        a, b = solve_feasibility(lmi, seed=7), solve_feasibility(lmi, seed=7)
        np.testing.assert_array_equal(a.z, b.z)
        assert a.iterations == b.iterations

    @given(seeds)
    @settings(max_examples=8, deadline=None)
    def test_monotone_in_gamma(self, seed):
        plant, _, gamma = random_member(np.random.default_rng(seed), max_n=3)
        levels = [0.5 * gamma, gamma, 2 * gamma, 8 * gamma]
        feasible = [solve_feasibility(assemble_synthesis_lmi(plant, g)).feasible
                    for g in levels]
        first = feasible.index(True) if True in feasible else len(levels)
        assert all(feasible[first:])


class TestAnalyticCenter:
    def test_interval_center(self):
        # -log(1 - z) - log(r^2 - z^2) with r = 3 has its minimum at z = (1 - sqrt(28)) / 3.
        z = analytic_center(interval_lmi(), np.array([0.0]), 3.0)
        assert z[0] == pytest.approx((1 - np.sqrt(28)) / 3, abs=1e-7)

    def test_infeasible_start(self):
        with pytest.raises(InvalidInputError):
            analytic_center(interval_lmi(), np.array([2.0]), 10.0)


class TestSynthesize:
    def test_example(self):
        K = synthesize(example1_plant(), 3.33)
        assert hinf_norm(close_loop(example1_plant(), K)).hi < 3.33

    def test_stable_variant_strictly_proper(self):
        plant = example1_plant(-1.0)
        K = synthesize(plant, 2.0, strictly_proper=True)
        assert np.all(K.D_K == 0)
        assert in_kgamma(plant, K, 2.0, strictly_proper=True)

    def test_huge_gamma(self):
        for seed in range(3):
            plant = random_member(np.random.default_rng(seed))[0]
            K = synthesize(plant, 1e6)
            assert in_kgamma(plant, K, 1e6)

    def test_plus_component(self):
        res = synthesize_lifted(example1_plant(), 3.33)
        assert component_sign(res.lifted) == 1
        np.testing.assert_array_equal(res.lifted.Pi, np.eye(1))

    def test_infeasible_level(self):
        with pytest.raises(SynthesisError):
            synthesize(example1_plant(), 0.5, budget=100)

    def test_deterministic(self):
        a = synthesize(example1_plant(), 3.33, seed=4)
        b = synthesize(example1_plant(), 3.33, seed=4)
        np.testing.assert_array_equal(a.matrix(), b.matrix())

    @pytest.mark.parametrize("seed", range(10))
    def test_random_verified(self, seed):
        plant, _, gamma = random_member(np.random.default_rng(seed))
        K = synthesize(plant, gamma, seed=seed)
        assert hinf_norm(close_loop(plant, K)).hi < gamma

    @pytest.mark.parametrize("seed", range(3))
    def test_h2(self, seed):
        plant, _, gamma = random_lqg_member(np.random.default_rng(seed), max_n=3)
        res = synthesize_h2(plant, gamma, seed=seed)
        assert in_lgamma(plant, res.controller, gamma)
        assert h2_norm_squared(close_loop(plant, res.controller)) < gamma
        assert np.trace(res.Gamma) < gamma


class TestGammaStar:
    def test_example_bracket(self):
        res = gamma_star(example1_plant())
        assert res.hi <= 3.33
        assert res.lo <= GAMMA_STAR_EXAMPLE1 <= res.hi
        assert res.hi / res.lo <= 1.01
        assert hinf_norm(close_loop(example1_plant(), res.witness.controller)).hi < res.hi

    def test_stable_variant_smaller(self):
        lo, hi = gamma_star(example1_plant(-1.0))
        assert hi < gamma_star(example1_plant()).hi
        assert lo <= hi

    def test_probe_cap(self):
        res = gamma_star(example1_plant(), rel_tol=1e-6, max_probes=6)
        assert res.budget_exhausted
        assert res.probes <= 6
        assert res.lo <= GAMMA_STAR_EXAMPLE1 <= res.hi

    def test_assumption_checked(self):
        one, zero = np.ones((1, 1)), np.zeros((1, 1))
        plant = Plant(A=one, B1=one, B2=zero, C1=one, C2=one,
                      D11=zero, D12=one, D21=one)
        with pytest.raises(AssumptionViolationError):
            gamma_star(plant)
