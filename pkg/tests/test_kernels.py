import numpy as np
import pytest
from scipy import stats

from hermevo.kernels import (
    AdditiveKernel,
    GridOverflow,
    InterpolationLaw,
    InterpolativeKernel,
    KernelConstraintError,
    MultiplicativeKernel,
    NoDensity,
    NoiseDensity,
    additive_profile_report,
    check_mean_condition,
    kernel_cdf,
    kernel_density,
    make_kernel,
    sample_offspring,
    stationary_additive_profile,
    tjonwu_stationary_reference,
)
from hermevo.measures import GridMeasure, GridSpec, l1_distance, mean


def normal_cells(grid, loc, scale):
    lo = grid.nodes - grid.spacing / 2
    hi = grid.nodes + grid.spacing / 2
    m = stats.norm.cdf(hi, loc, scale) - stats.norm.cdf(lo, loc, scale)
    return GridMeasure(grid.origin, grid.spacing, m / grid.spacing)


class TestNoise:
    def test_gaussian_moments(self):
        g = NoiseDensity.gaussian(1.5)
        assert g.mass == pytest.approx(1.0)
        assert g.mean == pytest.approx(0.0, abs=1e-15)
        assert g.variance == pytest.approx(2.25)

    def test_uniform_partial_mean(self):
        u = NoiseDensity.uniform(0, 1)
        assert u.mean == pytest.approx(0.5)
        assert u.second_moment == pytest.approx(1 / 3)
        assert u.partial_mean(0.5) == pytest.approx(0.125)

    def test_tabulated_triangle(self):
        t = NoiseDensity.tabulated([-1, 0, 1], [0, 1, 0])
        assert t.mass == pytest.approx(1.0)
        assert t.mean == pytest.approx(0.0, abs=1e-15)
        assert t.variance == pytest.approx(1 / 6)
        assert t.cdf(0.0) == pytest.approx(0.5)

    def test_tabulated_sampler_matches_cdf(self, rng):
        t = NoiseDensity.tabulated([0, 0.5, 1], [0, 2, 0])
        xs = t.sample(rng, 20000)
        assert stats.kstest(xs, lambda z: t.cdf(z)).pvalue > 1e-3

    def test_tabulated_requires_unit_mass(self):
        with pytest.raises(KernelConstraintError):
            NoiseDensity.tabulated([0, 1], [1, 2])

    def test_lattice_pmf_exact_mass_and_mean(self):
        g = NoiseDensity.gaussian(1.0)
        off = np.arange(-200, 201, dtype=float)
        pmf = g.lattice_pmf(0.05, off)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.dot(off, pmf) == pytest.approx(0.0, abs=1e-13)


class TestSampling:
    def test_interpolative_equal_parents(self, rng):
        k = InterpolativeKernel(InterpolationLaw.three_point(0.5))
        assert np.all(sample_offspring(k, np.full(50, 2.5), np.full(50, 2.5), rng) == 2.5)

    def test_multiplicative_zero_parents(self, rng):
        assert sample_offspring(MultiplicativeKernel.tjon_wu(), 0.0, 0.0, rng) == 0.0

    def test_additive_monte_carlo_mean(self, rng):
        k = AdditiveKernel(NoiseDensity.gaussian(1.0))
        z = sample_offspring(k, np.zeros(100_000), np.full(100_000, 2.0), rng)
        assert abs(z.mean() - 1.0) < 3 / np.sqrt(1e5)

    def test_determinism(self):
        k = AdditiveKernel(NoiseDensity.gaussian(1.0))
        a = sample_offspring(k, np.zeros(10), np.ones(10), np.random.default_rng(7))
        b = sample_offspring(k, np.zeros(10), np.ones(10), np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_interpolative_stays_between_parents(self, rng):
        k = InterpolativeKernel(InterpolationLaw.uniform())
        x, y = rng.normal(size=1000), rng.normal(size=1000)
        z = sample_offspring(k, x, y, rng)
        assert np.all(z >= np.minimum(x, y) - 1e-12) and np.all(z <= np.maximum(x, y) + 1e-12)


class TestDensityAndCdf:
    def test_additive_uniform_density(self):
        k = AdditiveKernel(NoiseDensity.uniform(-0.5, 0.5))
        assert kernel_density(k, 0.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_multiplicative_density(self):
        k = MultiplicativeKernel.tjon_wu()
        assert kernel_density(k, 1.0, 1.0, 3.0) == 0.0
        assert kernel_density(k, 1.0, 1.0, 1.0) == pytest.approx(0.5)

    def test_interpolative_no_density_on_diagonal(self):
        k = InterpolativeKernel(InterpolationLaw.uniform())
        with pytest.raises(NoDensity):
            kernel_density(k, 1.0, 1.0, 1.0)

    def test_interpolative_atomic_law_has_no_density(self):
        k = InterpolativeKernel(InterpolationLaw.three_point(0.3))
        with pytest.raises(NoDensity):
            kernel_density(k, 0.0, 1.0, 0.5)

    def test_cdf_examples(self):
        for k in (AdditiveKernel(NoiseDensity.uniform(-0.5, 0.5)), MultiplicativeKernel.tjon_wu()):
            assert kernel_cdf(k, 1.0, 1.0, -5.0) == 0.0
        ki = InterpolativeKernel(InterpolationLaw.uniform())
        assert kernel_cdf(ki, 2.0, 2.0, 1.99) == 0.0
        assert kernel_cdf(ki, 2.0, 2.0, 2.0) == 1.0
        assert kernel_cdf(MultiplicativeKernel.tjon_wu(), 1.0, 1.0, 1.0) == pytest.approx(0.5)

    def test_cdf_matches_density(self):
        k = AdditiveKernel(NoiseDensity.gaussian(0.7))
        z = np.linspace(-2, 3, 41)
        eps = 1e-5
        num = (kernel_cdf(k, 0.2, 0.9, z + eps) - kernel_cdf(k, 0.2, 0.9, z - eps)) / (2 * eps)
        assert np.allclose(num, kernel_density(k, 0.2, 0.9, z), atol=1e-7)

    def test_symmetry(self, rng):
        for k in (AdditiveKernel(NoiseDensity.gaussian(1.0)), MultiplicativeKernel.tjon_wu(),
                  InterpolativeKernel(InterpolationLaw.uniform())):
            x, y = rng.uniform(0.1, 3, 2)
            z = np.linspace(-1, 6, 15)
            assert np.allclose(kernel_cdf(k, x, y, z), kernel_cdf(k, y, x, z))


class TestMeanCondition:
    def test_additive(self, rng):
        k = AdditiveKernel(NoiseDensity.gaussian(1.0))
        rep = check_mean_condition(k, rng.uniform(-5, 5, (20, 2)))
        assert rep["max_deviation"] < 1e-8

    def test_multiplicative_unit_pair(self):
        k = MultiplicativeKernel.tjon_wu()
        assert k.offspring_mean(1.0, 1.0) == pytest.approx(1.0, abs=1e-8)

    def test_interpolative_exact(self, rng):
        k = InterpolativeKernel(InterpolationLaw.three_point(0.4))
        rep = check_mean_condition(k, rng.uniform(-5, 5, (20, 2)))
        assert rep["max_deviation"] < 1e-14

    def test_multiplicative_mean_constraint(self):
        with pytest.raises(KernelConstraintError, match="1/2"):
            MultiplicativeKernel(NoiseDensity.uniform(0.0, 0.8))

    def test_interpolation_law_constraints(self):
        with pytest.raises(KernelConstraintError):
            InterpolationLaw.atoms([-1.0, 1.0], [0.5, 0.5])
        with pytest.raises(KernelConstraintError):
            InterpolationLaw.atoms([0.0, 1.0], [0.5, 0.5])

    def test_growth_constants(self):
        assert InterpolativeKernel(InterpolationLaw.uniform()).growth_constants() == (0.0, 1.0, 1.0)

    def test_make_kernel(self):
        k = make_kernel({"family": "additive", "noise": {"kind": "gaussian", "sigma": 2.0}})
        assert isinstance(k, AdditiveKernel) and k.noise.variance == pytest.approx(4.0)
        k = make_kernel({"family": "interpolative", "law": {"kind": "three_point", "variance": 1 / 3}})
        assert k.law.variance == pytest.approx(1 / 3)


class TestStationaryProfiles:
    grid = GridSpec.spanning(-12 * np.sqrt(2), 12 * np.sqrt(2), 4096)

    def test_gaussian_profile(self):
        noise = NoiseDensity.gaussian(1.0)
        f = stationary_additive_profile(noise, 0.0, 8, self.grid)
        assert l1_distance(f, normal_cells(self.grid, 0.0, np.sqrt(2))) < 1e-3
        rep = additive_profile_report(f, noise)
        assert rep["relative_error"] < 0.01
        assert mean(f) == pytest.approx(0.0, abs=1e-12)

    def test_shift_to_q(self):
        g = GridSpec.spanning(3 - 12 * np.sqrt(2), 3 + 12 * np.sqrt(2), 2048)
        f = stationary_additive_profile(NoiseDensity.gaussian(1.0), 3.0, 10, g)
        assert mean(f) == pytest.approx(3.0, abs=1e-12)
        assert f.mass == pytest.approx(1.0, abs=1e-12)

    def test_depth_improves(self):
        noise = NoiseDensity.uniform(-0.5, 0.5)
        g = GridSpec.spanning(-3, 3, 2048)
        deep = stationary_additive_profile(noise, 0.0, 16, g)
        d1 = l1_distance(stationary_additive_profile(noise, 0.0, 1, g), deep)
        d2 = l1_distance(stationary_additive_profile(noise, 0.0, 2, g), deep)
        assert d2 < d1

    def test_small_grid_overflows(self):
        with pytest.raises(GridOverflow):
            stationary_additive_profile(NoiseDensity.gaussian(1.0), 0.0, 8, GridSpec.spanning(-2, 2, 256))

    def test_tjonwu_reference(self):
        ref = tjonwu_stationary_reference(1.0, GridSpec.spanning(0, 20, 4096))
        assert mean(ref) == pytest.approx(1.0, abs=1e-6)
        assert ref.mass == pytest.approx(1.0, abs=1e-6)
        with pytest.raises(ValueError):
            tjonwu_stationary_reference(0.0, GridSpec.spanning(0, 20, 64))
