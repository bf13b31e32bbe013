import math

import numpy as np
import pytest

from lifshitslab.bounds import (gap_scaling, half_average_bound,
                                rayleigh_ritz_upper, temple_bound,
                                verify_sandwich)
from lifshitslab.discretize import (Grid, cosine_potential,
                                    dirichlet_assemble, mezincescu_assemble,
                                    periodic_ground_state)
from lifshitslab.impurity import (AnisotropyProfile, ImpurityPotential,
                                  sample_potential)
from lifshitslab.measures import Box, MeasureConfig
from lifshitslab.spectral import smallest_eigs


@pytest.fixture(scope="module")
def flat_setup():
    psi = periodic_ground_state(0.0, 4, dim=1)
    grid = Grid(Box((0,), (8,)), 4)
    return psi, grid


class TestTemple:
    def test_constant_potential_closed_form(self, flat_setup):
        # for V = c with flat psi: m1 = c, m2 = c^2, so the bound is
        # c - c^2 / (gap - c); the shifted ground state is exactly c
        psi, grid = flat_setup
        c = 0.01
        tb = temple_bound(c, psi, grid)
        assert tb.valid
        assert math.isclose(tb.first_moment, c, rel_tol=1e-12)
        assert math.isclose(tb.second_moment, c * c, rel_tol=1e-12)
        expected = c - c * c / (tb.gap - c)
        assert math.isclose(tb.value, expected, rel_tol=1e-12)
        lam0 = smallest_eigs(mezincescu_assemble(None, c, grid, psi), 1,
                             want_vectors=False).eigenvalues[0]
        assert tb.value <= lam0 + 1e-12
        assert math.isclose(lam0, c, abs_tol=1e-10)

    def test_invalid_when_potential_eats_gap(self, flat_setup):
        psi, grid = flat_setup
        tb0 = temple_bound(0.0, psi, grid)
        tb = temple_bound(2.0 * tb0.gap, psi, grid)
        assert not tb.valid
        assert tb.value == -math.inf

    def test_lower_bounds_true_eigenvalue_random(self, flat_setup):
        psi, grid = flat_setup
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.02)
        for seed in range(5):
            m = MeasureConfig("poisson", 0.5).sample(grid.box, seed)
            V = sample_potential(m, p, grid.box, grid.n_per_cell,
                                 truncation=4.0)
            tb = temple_bound(V, psi, grid)
            assert tb.valid
            lam0 = smallest_eigs(mezincescu_assemble(None, V, grid, psi), 1,
                                 want_vectors=False).eigenvalues[0]
            assert tb.value <= lam0 + 1e-12


class TestHalfAverage:
    def test_is_half_first_moment(self, flat_setup):
        psi, grid = flat_setup
        tb = temple_bound(0.05, psi, grid)
        assert math.isclose(half_average_bound(0.05, psi, grid),
                            0.5 * tb.first_moment, rel_tol=1e-12)

    def test_below_temple_when_potential_small(self, flat_setup):
        # for sup V <= gap/3: m2 <= m1 sup V and gap - m1 >= 2 sup V,
        # so the Temple correction is at most m1/2
        psi, grid = flat_setup
        tb0 = temple_bound(0.0, psi, grid)
        c = tb0.gap / 3.0
        tb = temple_bound(c, psi, grid)
        assert half_average_bound(c, psi, grid) <= tb.value + 1e-12


class TestRayleighRitz:
    def test_upper_bounds_dirichlet(self, flat_setup):
        psi, grid = flat_setup
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.1)
        for seed in range(3):
            m = MeasureConfig("poisson", 0.5).sample(grid.box, seed)
            V = sample_potential(m, p, grid.box, grid.n_per_cell,
                                 truncation=4.0)
            rr = rayleigh_ritz_upper(V, psi, grid)
            lam_d = smallest_eigs(
                dirichlet_assemble(None, V, grid, psi=psi), 1,
                want_vectors=False).eigenvalues[0]
            assert rr.value >= lam_d - 1e-12
            assert math.isclose(rr.value,
                                rr.potential_term + rr.gradient_term,
                                rel_tol=1e-12)

    def test_potential_term_nonnegative(self, flat_setup):
        psi, grid = flat_setup
        rr = rayleigh_ritz_upper(0.25, psi, grid)
        assert rr.potential_term >= 0.0


class TestGapScaling:
    @pytest.mark.parametrize("u_per", [None, cosine_potential(0.5)])
    def test_exponent_near_minus_two(self, u_per):
        fit = gap_scaling(u_per, [8, 16, 32], n_per_cell=4, dim=1)
        assert abs(fit.exponent + 2.0) < 0.25
        # and the fitted constant certifies gap >= 2 c0 L^-2
        assert np.all(fit.gaps >= 2.0 * fit.c0 / fit.sizes ** 2 - 1e-15)


class TestSandwich:
    def test_paired_identity_and_counts(self, flat_setup):
        psi, grid = flat_setup
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.05)

        def sample_V(seed):
            m = MeasureConfig("poisson", 0.5).sample(grid.box, seed)
            return sample_potential(m, p, grid.box, grid.n_per_cell,
                                    truncation=4.0)

        E = 0.03
        out = verify_sandwich(sample_V, psi, grid, E, 40, seed=3)
        assert out["identity"]
        assert out["n_free_states"] >= 1
        assert 0.0 <= out["lower"] <= out["upper"]
        assert out["lower_ci"][0] <= out["lower"] <= out["lower_ci"][1]

    def test_direct_is_bracketed(self, flat_setup):
        psi, grid = flat_setup
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.05)

        def sample_V(seed):
            m = MeasureConfig("poisson", 0.5).sample(grid.box, seed)
            return sample_potential(m, p, grid.box, grid.n_per_cell,
                                    truncation=4.0)

        direct = {"value": 0.01, "ci": (0.0, 0.05)}
        out = verify_sandwich(sample_V, psi, grid, 0.03, 30, seed=5,
                              direct=direct)
        assert out["ordered"]
        assert out["direct"] == 0.01
