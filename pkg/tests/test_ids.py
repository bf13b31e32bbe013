import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifshitslab.discretize import Grid, dirichlet_assemble
from lifshitslab.ids import (classify_regime, estimate_ids, eta_theory,
                             ground_state_probability, lifshits_fit,
                             scaling_lengths)
from lifshitslab.impurity import AnisotropyProfile, ImpurityPotential
from lifshitslab.measures import Box, MeasureConfig
from lifshitslab.spectral import dense_oracle


class TestEtaTheory:
    @pytest.mark.parametrize("alphas,expected", [
        ((math.inf, math.inf), 1.0),
        ((3.0, 3.0), 2.0),
        ((math.inf, 2.5), 7.0 / 6.0),
        ((10.0, 10.0), 1.0),
    ])
    def test_examples(self, alphas, expected):
        prof = AnisotropyProfile((1, 1), alphas)
        assert math.isclose(eta_theory(prof), expected, rel_tol=1e-12)

    def test_isotropic_reduction(self):
        # single block of dimension d: eta = max{d/2, (d/alpha)/(1-d/alpha)}
        for d, a in [(1, 5.0), (2, 6.0), (2, 2.5)]:
            prof = AnisotropyProfile((d,), (a,))
            g = d / a
            assert math.isclose(eta_theory(prof),
                                max(d / 2.0, g / (1.0 - g)), rel_tol=1e-12)

    def test_permutation_symmetry(self):
        a = AnisotropyProfile((1, 2), (8.0, 6.0))
        b = AnisotropyProfile((2, 1), (6.0, 8.0))
        assert math.isclose(eta_theory(a), eta_theory(b), rel_tol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(a1=st.floats(4.0, 30.0), a2=st.floats(4.0, 30.0))
    def test_monotone_in_alpha(self, a1, a2):
        # heavier tails (smaller alpha) can only raise the exponent
        lo, hi = sorted((a1, a2))
        e_heavy = eta_theory(AnisotropyProfile((1, 1), (lo, lo)))
        e_light = eta_theory(AnisotropyProfile((1, 1), (hi, hi)))
        assert e_heavy >= e_light - 1e-12

    def test_alpha_infinity_boundary(self):
        # alpha -> inf limit agrees with the exact inf convention
        near = eta_theory(AnisotropyProfile((1, 1), (1e9, 2.5)))
        exact = eta_theory(AnisotropyProfile((1, 1), (math.inf, 2.5)))
        assert abs(near - exact) < 1e-6


class TestClassify:
    @pytest.mark.parametrize("alphas,tag", [
        ((10.0, 10.0), "qm"),
        ((10.0, 2.2), "qm_cl"),
        ((2.2, 10.0), "cl_qm"),
        ((2.5, 2.5), "cl"),
    ])
    def test_examples(self, alphas, tag):
        assert classify_regime(AnisotropyProfile((1, 1), alphas)).tag == tag

    def test_tie_goes_quantum(self):
        # gamma_k/(1-gamma) == d_k/2 exactly at alpha = (6, 6), d = (1, 1)
        rep = classify_regime(AnisotropyProfile((1, 1), (6.0, 6.0)))
        assert rep.tag == "qm"

    def test_blocks_reported(self):
        rep = classify_regime(AnisotropyProfile((1, 1), (10.0, 2.2)))
        assert rep.block_tags == ("qm", "cl")
        assert rep.block_kinetic == (0.5, 0.5)


class TestScalingLengths:
    def test_qm_example(self):
        out = scaling_lengths(AnisotropyProfile((1, 1), (10.0, 10.0)), 0.01)
        assert math.isclose(out["L"], 10.0, rel_tol=1e-12)
        assert math.isclose(out["h"], 0.01, rel_tol=1e-12)
        assert out["regime"] == "qm"

    def test_qc_example(self):
        # alpha_2 = 2.5, gamma = 0.4: R = L^{2/(2.5 * 0.6)} = L^{4/3}
        prof = AnisotropyProfile((1, 1), (math.inf, 2.5))
        out = scaling_lengths(prof, 0.01)
        assert math.isclose(out["R"], 10.0 ** (4.0 / 3.0), rel_tol=1e-12)

    def test_classical_exponents(self):
        prof = AnisotropyProfile((1, 1), (2.5, 2.5))
        out = scaling_lengths(prof, 0.04)
        g = prof.gamma
        assert out["beta"] == tuple(2.0 / (2.5 * (1.0 - g)) for _ in range(2))

    def test_lower_bound_exponents_clamped(self):
        prof = AnisotropyProfile((1, 1), (math.inf, 2.5))
        out = scaling_lengths(prof, 0.01)
        assert out["beta_lower"] == (1.0, max(1.0, 2.0 / (2.5 * 0.6)))

    def test_rejects_nonpositive_energy(self):
        with pytest.raises(ValueError):
            scaling_lengths(AnisotropyProfile((1,), (4.0,)), 0.0)


def _null_measure():
    # intensity-0 Poisson: no atoms, V = 0 identically
    return MeasureConfig("poisson", 1e-12)


class TestEstimateIds:
    def test_free_counting_oracle(self):
        # with V = 0 the Dirichlet counts equal the closed-form discrete
        # spectrum of the free box for every realization
        box = Box((0,), (6,))
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)))
        est = estimate_ids(_null_measure(), p, box, [0.05, 0.2, 0.5], 3, 0,
                           bc="dirichlet", n_per_cell=4)
        op = dirichlet_assemble(None, None, Grid(box, 4), E0=0.0)
        spectrum = dense_oracle(op)
        for e, v in zip(est.energies, est.values):
            assert math.isclose(v, np.sum(spectrum < e) / box.volume,
                                rel_tol=1e-12)
        np.testing.assert_array_equal(est.ci[:, 0], est.values)

    def test_monotone_in_energy(self):
        box = Box((0,), (8,))
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.2)
        est = estimate_ids(MeasureConfig("poisson", 0.5), p, box,
                           [0.05, 0.1, 0.2, 0.4], 10, 3)
        assert np.all(np.diff(est.values) >= 0)

    def test_intensity_monotonicity(self):
        # more impurities push eigenvalues up, lowering the counts
        box = Box((0,), (8,))
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.3)
        lo = estimate_ids(MeasureConfig("poisson", 0.2), p, box, [0.3], 20, 1)
        hi = estimate_ids(MeasureConfig("poisson", 2.0), p, box, [0.3], 20, 1)
        assert hi.values[0] <= lo.values[0] + 1e-12

    def test_pool_map_gives_identical_result(self):
        from concurrent.futures import ThreadPoolExecutor
        box = Box((0,), (6,))
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.2)
        args = (MeasureConfig("poisson", 0.5), p, box, [0.1, 0.3], 8, 2)
        serial = estimate_ids(*args)
        with ThreadPoolExecutor(4) as pool:
            pooled = estimate_ids(*args, map_fn=pool.map)
        np.testing.assert_array_equal(serial.values, pooled.values)


class TestGroundStateProbability:
    def test_monotone_and_bounds(self):
        box = Box((0,), (6,))
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)), f0=0.1)
        m = MeasureConfig("poisson", 0.5)
        a = ground_state_probability(m, p, box, 0.02, 50, 0)
        b = ground_state_probability(m, p, box, 0.2, 50, 0)
        assert 0.0 <= a["p_hat"] <= b["p_hat"] <= 1.0
        assert a["ci"][0] <= a["p_hat"] <= a["ci"][1]

    def test_requires_enough_realizations(self):
        p = ImpurityPotential(AnisotropyProfile((1,), (4.0,)))
        with pytest.raises(ValueError):
            ground_state_probability(_null_measure(), p, Box((0,), (4,)),
                                     0.1, 10, 0)


class TestLifshitsFit:
    @pytest.mark.parametrize("eta", [0.5, 1.0, 7.0 / 6.0, 2.0])
    def test_recovers_synthetic_exponent(self, eta):
        E = 0.02 * 1.3 ** np.arange(14)
        N = np.exp(-E ** -eta)
        fit = lifshits_fit(E, N)
        assert fit.flag == ""
        assert abs(fit.eta_hat - eta) / eta < 0.02
        assert fit.r2 > 0.999

    def test_van_hove_flagged(self):
        # polynomial N ~ E^{1/2}: no double-exponential tail
        E = 0.02 * 1.3 ** np.arange(14)
        fit = lifshits_fit(E, 0.8 * np.sqrt(E / E.max()))
        assert math.isnan(fit.eta_hat)
        assert fit.flag == "no Lifshits decay"

    def test_censoring_reported(self):
        E = np.array([0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0])
        N = np.exp(-1.0 / E)
        N[0] = 0.0            # deep tail never hit
        fit = lifshits_fit(E, N)
        reasons = {r for _, r in fit.censored}
        assert "N=0" in reasons
        assert "|log N| <= 1" in reasons
        assert fit.n_used + len(fit.censored) == E.size

    def test_ci_touching_zero_censored(self):
        E = 0.02 * 1.3 ** np.arange(10)
        N = np.exp(-1.0 / E)
        ci = [(n / 2, 2 * n) for n in N]
        ci[0] = (0.0, 2 * N[0])
        fit = lifshits_fit(E, N, ci=ci)
        assert any(r == "CI touches 0" for _, r in fit.censored)

    def test_insufficient_decades_flag(self):
        E = np.array([0.05, 0.055, 0.06, 0.065, 0.07])
        N = np.exp(-1.0 / E)
        fit = lifshits_fit(E, N, min_decades=0.5)
        assert fit.flag == "insufficient decades"

    def test_window_restricts_fit(self):
        E = 0.02 * 1.3 ** np.arange(14)
        N = np.exp(-1.0 / E)
        full = lifshits_fit(E, N)
        windowed = lifshits_fit(E, N, window=(0.03, 0.3))
        assert windowed.n_used < full.n_used
        assert abs(windowed.eta_hat - 1.0) < 0.02
