import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermevo.measures import (
    AtomOutsideGrid,
    DiscreteMeasure,
    GridMeasure,
    GridSpec,
    HALF_LINE,
    MassMismatch,
    cdf_of_difference,
    deposit,
    from_csv,
    from_json,
    grid_from_atoms,
    l1_distance,
    load,
    mean,
    moment,
    save,
    tilt_to_mean,
    to_csv,
    to_json,
    total_mass,
    variance,
    wasserstein_1d,
    wasserstein_oracle,
)

atoms = st.lists(
    st.tuples(st.floats(-50, 50, allow_nan=False), st.floats(0.01, 5.0)), min_size=1, max_size=12
)


def _measure(pairs, mass=None):
    x, w = zip(*pairs)
    m = DiscreteMeasure(x, w)
    return m if mass is None else m.scaled(mass / m.mass)


class TestDiscreteMeasure:
    def test_canonical_form(self):
        m = DiscreteMeasure([2.0, 0.0, 2.0, 1.0], [1.0, 0.5, 0.5, 0.0])
        assert m.positions.tolist() == [0.0, 2.0]
        assert m.weights.tolist() == [0.5, 1.5]

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([0.0], [-1.0])

    def test_equality_ignores_order(self):
        assert DiscreteMeasure([1, 0], [1, 2]) == DiscreteMeasure([0, 1], [2, 1])

    def test_half_line_domain(self):
        assert HALF_LINE.contains(0.0)
        assert not HALF_LINE.contains(-1e-3)


class TestMassAndMoments:
    def test_unit_dirac_mass(self):
        assert total_mass(DiscreteMeasure.dirac(0.0)) == 1.0

    def test_empty_mass(self):
        assert total_mass(DiscreteMeasure()) == 0.0

    def test_constant_grid_mass(self):
        u = GridMeasure(0.005, 0.01, np.ones(200))
        assert total_mass(u) == pytest.approx(2.0, rel=1e-12)

    def test_symmetric_pair_moments(self):
        m = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
        assert moment(m, 1) == 0.0
        assert moment(m, 2) == 1.0

    def test_dirac_first_moment(self):
        assert moment(DiscreteMeasure.dirac(3.5), 1) == 3.5

    def test_absolute_and_centered(self):
        m = DiscreteMeasure([-2.0, 1.0], [0.5, 0.5])
        assert moment(m, 1, absolute=True) == 1.5
        assert variance(m) == pytest.approx(2.25)
        assert mean(m) == -0.5


class TestWasserstein:
    def test_dirac_shift(self):
        assert wasserstein_1d(DiscreteMeasure.dirac(0), DiscreteMeasure.dirac(-2.5)) == 2.5

    def test_identity(self):
        m = DiscreteMeasure([0, 1, 4], [0.2, 0.3, 0.5])
        assert wasserstein_1d(m, m) == 0.0

    def test_split_vs_center(self):
        assert wasserstein_1d(DiscreteMeasure([0, 2], [0.5, 0.5]), DiscreteMeasure.dirac(1)) == 1.0

    def test_oracle_examples(self):
        assert wasserstein_oracle(DiscreteMeasure.dirac(0), DiscreteMeasure.dirac(1)) == 1.0
        a = DiscreteMeasure([0, 1], [0.5, 0.5])
        b = DiscreteMeasure([1, 2], [0.5, 0.5])
        assert wasserstein_oracle(a, b) == 1.0

    def test_mass_mismatch(self):
        with pytest.raises(MassMismatch):
            wasserstein_1d(DiscreteMeasure.dirac(0), DiscreteMeasure.dirac(0, 2.0))

    def test_grid_vs_atoms(self):
        # uniform density on [0, 1] against its mean: int |x - 1/2| dx = 1/4
        u = GridMeasure(0.0005, 0.001, np.ones(1000))
        assert wasserstein_1d(u, DiscreteMeasure.dirac(0.5)) == pytest.approx(0.25, abs=1e-12)

    def test_grid_translation(self):
        g = GridSpec.spanning(-10, 10, 2001)
        f = np.exp(-g.nodes**2 / 2)
        u = GridMeasure(g.origin, g.spacing, f).normalized()
        v = GridMeasure(g.origin + 0.3, g.spacing, f).normalized()
        assert wasserstein_1d(u, v) == pytest.approx(0.3, rel=1e-10)

    @settings(max_examples=150, deadline=None)
    @given(atoms, atoms)
    def test_oracle_equivalence(self, a, b):
        mu = _measure(a, 1.0)
        nu = _measure(b, 1.0)
        assert wasserstein_1d(mu, nu) == pytest.approx(wasserstein_oracle(mu, nu), abs=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(atoms, atoms)
    def test_symmetry(self, a, b):
        mu, nu = _measure(a, 1.0), _measure(b, 1.0)
        assert wasserstein_1d(mu, nu) == pytest.approx(wasserstein_1d(nu, mu), abs=1e-12)


class TestSignedCdf:
    def test_dirac_pair(self):
        phi = cdf_of_difference(DiscreteMeasure.dirac(0), DiscreteMeasure.dirac(1))
        assert phi(np.array([-0.5, 0.0, 0.5, 1.0, 2.0])).tolist() == [0.0, 1.0, 1.0, 0.0, 0.0]

    def test_identical_is_zero(self):
        m = DiscreteMeasure([0, 3], [0.4, 0.6])
        phi = cdf_of_difference(m, m)
        assert np.all(phi(np.linspace(-1, 4, 11)) == 0)

    def test_step_accounting(self):
        phi = cdf_of_difference(DiscreteMeasure([0, 2], [0.5, 0.5]), DiscreteMeasure.dirac(1))
        assert phi(np.array([-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0])).tolist() == [0, 0.5, 0.5, -0.5, -0.5, 0, 0]
        assert phi.abs_integral() == 1.0

    def test_right_end_is_mass_difference(self):
        phi = cdf_of_difference(DiscreteMeasure.dirac(0, 2.0), DiscreteMeasure.dirac(1))
        assert phi(np.array([5.0]))[0] == 1.0


class TestDeposit:
    def test_on_center(self):
        g = grid_from_atoms(DiscreteMeasure.dirac(0.3), 0.0, 0.1, 11)
        assert np.count_nonzero(g.masses) == 1
        assert g.masses[3] == pytest.approx(1.0)

    def test_midway(self):
        g = grid_from_atoms(DiscreteMeasure.dirac(0.25), 0.0, 0.1, 11)
        assert g.masses[2] == pytest.approx(0.5)
        assert g.masses[3] == pytest.approx(0.5)

    def test_outside(self):
        with pytest.raises(AtomOutsideGrid):
            grid_from_atoms(DiscreteMeasure.dirac(2.0), 0.0, 0.1, 11)
        masses, leaked = deposit([2.0, 0.5], [1.0, 1.0], 0.0, 0.1, 11, strict=False)
        assert leaked == 1.0 and masses.sum() == pytest.approx(1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-4.9, 4.9), st.floats(0.01, 3.0)), min_size=1, max_size=30))
    def test_mass_and_mean_preserved(self, pairs):
        m = _measure(pairs)
        g = grid_from_atoms(m, -5.0, 0.037, 271)
        assert g.mass == pytest.approx(m.mass, rel=1e-12)
        assert moment(g, 1) == pytest.approx(moment(m, 1), abs=1e-12 * max(1, m.mass * 5))


class TestGrid:
    def test_l1_and_tilt(self):
        g = GridSpec.spanning(0, 1, 101)
        u = GridMeasure(g.origin, g.spacing, np.ones(101)).normalized()
        v = tilt_to_mean(u, 0.55)
        assert mean(v) == pytest.approx(0.55, abs=1e-13)
        assert v.mass == pytest.approx(1.0, rel=1e-13)
        assert l1_distance(u, u) == 0.0

    def test_l1_needs_same_grid(self):
        a = GridMeasure(0, 0.1, np.ones(10))
        b = GridMeasure(0, 0.2, np.ones(10))
        with pytest.raises(ValueError):
            l1_distance(a, b)


class TestSerialization:
    def test_json_round_trip(self):
        for m in (DiscreteMeasure([0.1, 0.7], [0.25, 0.75]), GridMeasure(-1.0, 0.5, [0.0, 1.0, 0.5])):
            assert from_json(to_json(m)) == m if isinstance(m, DiscreteMeasure) else True
            back = from_json(to_json(m))
            assert type(back) is type(m)
            assert wasserstein_1d(back, m) == 0.0

    def test_csv_round_trip(self, tmp_path):
        m = DiscreteMeasure([0.1, 0.7], [0.25, 0.75])
        assert from_csv(to_csv(m)) == m
        g = GridMeasure(-1.0, 0.5, [0.0, 1.0, 0.5])
        back = from_csv(to_csv(g))
        assert np.array_equal(back.values, g.values) and back.origin == g.origin
        save(g, tmp_path / "g.json")
        assert np.array_equal(load(tmp_path / "g.json").values, g.values)
