import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifshitslab.measures import (Box, MeasureConfig, PointMeasure, WeightLaw,
                                  cell_mass_array, cell_masses,
                                  empirical_intensity,
                                  estimate_small_mass_prob,
                                  mixing_correlation, regularize,
                                  sample_poisson, wilson_interval)


class TestBox:
    def test_geometry(self):
        box = Box((0, -1), (2, 3))
        assert box.dim == 2
        assert box.shape == (2, 4)
        assert box.n_cells == 8
        assert box.volume == 8.0

    def test_cells_lexicographic(self):
        cells = list(Box((0, 0), (2, 2)).cells())
        assert cells == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_half_open_membership(self):
        box = Box((0,), (2,))
        inside = box.contains(np.array([[0.0], [1.999], [2.0], [-0.001]]))
        assert inside.tolist() == [True, True, False, False]

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            Box((1,), (1,))


class TestWeightLaw:
    def test_means(self):
        assert WeightLaw("constant", (2.0,)).mean == 2.0
        assert WeightLaw("exponential", (0.5,)).mean == 0.5
        assert WeightLaw("uniform", (0.0, 2.0)).mean == 1.0
        assert WeightLaw("bernoulli_scaled", (0.5, 4.0)).mean == 2.0

    def test_small_mass_support(self):
        assert WeightLaw("exponential", (1.0,)).supports_small_mass
        assert WeightLaw("uniform", (0.0, 1.0)).supports_small_mass
        assert not WeightLaw("uniform", (0.5, 1.0)).supports_small_mass
        assert not WeightLaw("constant", (1.0,)).supports_small_mass

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            WeightLaw("constant", (0.0,))
        with pytest.raises(ValueError):
            WeightLaw("uniform", (2.0, 1.0))
        with pytest.raises(ValueError):
            WeightLaw("nope", (1.0,))

    def test_roundtrip(self):
        law = WeightLaw("uniform", (0.0, 3.0))
        assert WeightLaw.from_dict(law.to_dict()) == law


class TestSampling:
    def test_atoms_inside_box(self):
        box = Box((-2, 0), (1, 3))
        m = MeasureConfig("poisson", 2.0).sample(box, 5)
        assert np.all(box.contains(m.atoms_x))
        assert np.all(m.atoms_w > 0)

    def test_reproducible(self):
        box = Box((0,), (8,))
        a = MeasureConfig("poisson", 1.0).sample(box, 3)
        b = MeasureConfig("poisson", 1.0).sample(box, 3)
        np.testing.assert_array_equal(a.atoms_x, b.atoms_x)
        np.testing.assert_array_equal(a.atoms_w, b.atoms_w)

    def test_cell_streams_independent_of_box(self):
        # per-cell RNG: the atoms in shared cells must agree between
        # overlapping boxes, which is what makes parallel runs and
        # box extensions deterministic
        small = MeasureConfig("poisson", 1.5).sample(Box((0,), (4,)), 11)
        large = MeasureConfig("poisson", 1.5).sample(Box((-3,), (9,)), 11)
        keep = (large.atoms_x[:, 0] >= 0) & (large.atoms_x[:, 0] < 4)
        np.testing.assert_array_equal(np.sort(small.atoms_x[:, 0]),
                                      np.sort(large.atoms_x[keep, 0]))

    def test_families_differ(self):
        box = Box((0,), (6,))
        pois = MeasureConfig("poisson", 1.0).sample(box, 2)
        disp = MeasureConfig("displacement", 1.0).sample(box, 2)
        assert disp.n_atoms == box.n_cells     # exactly one atom per cell
        assert pois.n_atoms != disp.n_atoms or not np.allclose(
            np.sort(pois.atoms_x[:, 0]), np.sort(disp.atoms_x[:, 0]))

    def test_periodic_is_lattice(self):
        m = MeasureConfig("periodic").sample(Box((0, 0), (3, 3)), 0)
        assert m.n_atoms == 9
        np.testing.assert_array_equal(m.atoms_w, np.ones(9))

    def test_compound_requires_weights(self):
        with pytest.raises(ValueError):
            MeasureConfig("compound_poisson", 1.0)

    def test_poisson_zero_cell_probability(self):
        # P{no atoms in a unit cell} = exp(-rho)
        rho, n = 1.0, 5000
        cfg = MeasureConfig("poisson", rho)
        empty = sum(cfg.sample(Box((0,), (1,)), s).n_atoms == 0
                    for s in range(n))
        p = empty / n
        sigma = math.sqrt(math.exp(-rho) * (1 - math.exp(-rho)) / n)
        assert abs(p - math.exp(-rho)) < 3 * sigma


class TestCellMasses:
    def test_matches_direct_sum(self):
        m = MeasureConfig("compound_poisson", 2.0,
                          WeightLaw("exponential", (1.0,))).sample(
                              Box((0, 0), (3, 3)), 9)
        masses = cell_masses(m)
        assert math.isclose(sum(masses.values()), m.total_weight,
                            rel_tol=1e-12)
        arr = cell_mass_array(m)
        assert arr.shape == (3, 3)
        assert math.isclose(arr.sum(), m.total_weight, rel_tol=1e-12)

    def test_regularize_cap_identity(self):
        m = MeasureConfig("compound_poisson", 3.0,
                          WeightLaw("exponential", (2.0,))).sample(
                              Box((0,), (10,)), 4)
        h = 1.0
        before = cell_masses(m)
        after = cell_masses(regularize(m, h))
        for j, mass in before.items():
            assert math.isclose(after.get(j, 0.0), min(h, mass),
                                abs_tol=1e-12)

    def test_regularize_below_cap_unchanged(self):
        m = PointMeasure(np.array([[0.25]]), np.array([0.3]), Box((0,), (1,)),
                         0, "poisson")
        out = regularize(m, 1.0)
        np.testing.assert_array_equal(out.atoms_w, [0.3])

    def test_regularize_proportional(self):
        m = PointMeasure(np.array([[0.2], [0.7]]), np.array([1.5, 0.5]),
                         Box((0,), (1,)), 0, "poisson")
        out = regularize(m, 1.0)
        np.testing.assert_allclose(np.sort(out.atoms_w), [0.25, 0.75])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10 ** 6),
           h=st.floats(0.1, 5.0, allow_nan=False))
    def test_regularize_property(self, seed, h):
        m = MeasureConfig("compound_poisson", 2.0,
                          WeightLaw("uniform", (0.0, 2.0))).sample(
                              Box((0,), (5,)), seed)
        after = cell_masses(regularize(m, h))
        for j, mass in cell_masses(m).items():
            assert after.get(j, 0.0) <= min(h, mass) + 1e-12


class TestPersistence:
    def test_jsonl_roundtrip(self, tmp_path):
        m = MeasureConfig("poisson", 1.0).sample(Box((0, 0), (4, 4)), 7)
        path = tmp_path / "measure.jsonl"
        m.dump_jsonl(path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header["family"] == "poisson"
        back = PointMeasure.load_jsonl(path)
        np.testing.assert_allclose(back.atoms_x, m.atoms_x)
        np.testing.assert_allclose(back.atoms_w, m.atoms_w)


class TestWilson:
    def test_brackets_phat(self):
        lo, hi = wilson_interval(30, 100)
        assert lo < 0.3 < hi
        assert 0.0 <= lo and hi <= 1.0

    def test_boundary_exact(self):
        assert wilson_interval(0, 50)[0] == 0.0
        assert wilson_interval(50, 50)[1] == 1.0

    def test_shrinks_with_n(self):
        w1 = np.diff(wilson_interval(10, 100))[0]
        w2 = np.diff(wilson_interval(100, 1000))[0]
        assert w2 < w1


class TestStatisticalEstimators:
    def test_small_mass_poisson(self):
        # atoms have weight 1, so {mass < 0.5} = {no atoms}
        out = estimate_small_mass_prob(MeasureConfig("poisson", 1.0), 0.5,
                                       2000, seed=1)
        assert out["ci"][0] <= math.exp(-1.0) <= out["ci"][1]
        assert not out["violated"]

    def test_small_mass_constant_alloy_violated(self):
        # one atom of weight 1 per cell: mass is a.s. 1
        out = estimate_small_mass_prob(MeasureConfig("displacement"), 0.5,
                                       1000, seed=1)
        assert out["p_hat"] == 0.0
        assert out["violated"]
        assert "violated" in out["flag"]

    def test_small_mass_kappa_exponential(self):
        cfg = MeasureConfig("compound_displacement", 1.0,
                            WeightLaw("exponential", (1.0,)))
        out = estimate_small_mass_prob(cfg, 0.1, 4000, seed=2,
                                       eps_grid=[0.025, 0.05, 0.1])
        assert not out["violated"]
        assert math.isfinite(out["kappa_hat"])
        # P{Exp(1) < eps} ~ eps, so kappa_hat ~ 1
        assert 0.5 < out["kappa_hat"] < 1.5

    def test_mixing_independent_cells(self):
        out = mixing_correlation(MeasureConfig("poisson", 1.0), (2,),
                                 10 ** 4, seed=3)
        assert not out["degenerate"]
        assert abs(out["corr"]) < 3 * out["stderr"]

    def test_mixing_degenerate(self):
        out = mixing_correlation(MeasureConfig("periodic"), (2,), 10 ** 4)
        assert out["degenerate"]

    def test_empirical_intensity_periodic(self):
        out = empirical_intensity(MeasureConfig("poisson", 1.5),
                                  Box((0,), (4,)), 400, seed=5)
        assert out["mean_cell_mass"].shape == (4,)
        np.testing.assert_allclose(out["mean_cell_mass"], 1.5, atol=0.25)
