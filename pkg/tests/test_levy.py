import math
import unittest

import numpy as np
from scipy import integrate, stats
from scipy.special import exp1, gammainc

from lark_regression.levy import (FamilySpec, LevyDomainError, LevyFamily, LevyKind, exp_integral_e1,
                                  exp_integral_e1_array, exp_integral_e1_scaled, local_l2_mass, nu_plus,
                                  sample_e1_tail, truncation_error_factor)


class TestExpIntegral(unittest.TestCase):
    def test_matches_scipy(self):
        """
        E1 agrees with scipy.special.exp1 on both sides of the series/continued-fraction switch.
        """
        for z in [1e-10, 1e-4, 0.01, 0.5, 0.999, 1.0, 1.001, 2.5, 10.0, 50.0, 300.0]:
            self.assertAlmostEqual(exp_integral_e1(z) / exp1(z), 1.0, places=10, msg=f"z={z}")

    def test_array_version(self):
        """
        The vectorised form returns an array of the scalar values.
        """
        zs = np.array([0.1, 1.0, 10.0])
        np.testing.assert_allclose(exp_integral_e1_array(zs), exp1(zs), rtol=1e-10)

    def test_scaled_form_for_large_z(self):
        """
        e^z E1(z) stays finite where E1 itself underflows, and follows the asymptotic series.
        """
        z = 2000.0
        asymptotic = (1.0 - 1.0 / z + 2.0 / z ** 2 - 6.0 / z ** 3) / z
        self.assertAlmostEqual(exp_integral_e1_scaled(z) / asymptotic, 1.0, places=9)
        self.assertEqual(exp_integral_e1(2000.0), 0.0)

    def test_non_positive_argument(self):
        """
        z <= 0 is outside the domain.
        """
        for z in [0.0, -1.0]:
            with self.assertRaises(LevyDomainError):
                exp_integral_e1(z)
            with self.assertRaises(LevyDomainError):
                exp_integral_e1_scaled(z)


class TestFamilySpec(unittest.TestCase):
    def test_from_name(self):
        """
        Configuration names map to families; cauchy is SaS with alpha = 1.
        """
        self.assertEqual(FamilySpec.from_name("SymGamma").kind, LevyKind.SYM_GAMMA)
        cauchy = FamilySpec.from_name("cauchy")
        self.assertEqual((cauchy.kind, cauchy.alpha), (LevyKind.SAS, 1.0))
        self.assertEqual(cauchy.name, "cauchy")
        self.assertEqual(FamilySpec.from_name("sas", 1.5).name, "sas")

    def test_invalid_specs(self):
        """
        Unknown names, alpha outside (0, 2) and alpha on a Gamma family are rejected.
        """
        with self.assertRaises(LevyDomainError):
            FamilySpec.from_name("poisson")
        for alpha in [None, 0.0, 2.0]:
            with self.assertRaises(LevyDomainError):
                FamilySpec(LevyKind.SAS, alpha)
        with self.assertRaises(LevyDomainError):
            FamilySpec(LevyKind.GAMMA, 1.0)
        for name in ("gamma", "symgamma"):
            with self.assertRaises(LevyDomainError):
                FamilySpec.from_name(name, 1.5)

    def test_invalid_rates(self):
        """
        gamma, eta, epsilon and |Omega| must be positive and finite.
        """
        with self.assertRaises(LevyDomainError):
            LevyFamily(LevyKind.GAMMA, 1.0, 1.0, 0.0, 1.0)
        with self.assertRaises(LevyDomainError):
            LevyFamily(LevyKind.SYM_GAMMA, np.inf, 1.0, 0.1, 1.0)


class TestNuPlus(unittest.TestCase):
    def test_gamma_families(self):
        """
        nu+ is gamma |Omega| E1(eps), doubled for the symmetric Gamma family.
        """
        gamma_fam = LevyFamily(LevyKind.GAMMA, 2.0, 3.0, 0.01, 10.0)
        sym = LevyFamily(LevyKind.SYM_GAMMA, 2.0, 3.0, 0.01, 10.0)
        self.assertAlmostEqual(nu_plus(gamma_fam), 20.0 * exp1(0.01), places=9)
        self.assertAlmostEqual(sym.nu_plus(), 2.0 * gamma_fam.nu_plus(), places=9)

    def test_cauchy(self):
        """
        For alpha = 1 the mass is 2 gamma |Omega| / (pi eps).
        """
        fam = FamilySpec.from_name("cauchy").at(1.5, 0.7, 0.002, 10.0)
        self.assertAlmostEqual(fam.nu_plus() / (2.0 * 1.5 * 10.0 / (math.pi * 0.002)), 1.0, places=12)

    def test_nu_plus_matches_density_integral(self):
        """
        nu+ equals the integral of the Lévy density over the truncated region.
        """
        fam = FamilySpec.from_name("sas", 1.5).at(1.0, 2.0, 0.05, 3.0)
        thr = fam.threshold
        tail, _ = integrate.quad(lambda b: float(fam.levy_density(b)), thr, np.inf)
        self.assertAlmostEqual(2.0 * tail * fam.omega_volume / fam.nu_plus(), 1.0, places=6)


class TestCoefficientLaw(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(12345)
        self.sym = LevyFamily(LevyKind.SYM_GAMMA, 1.0, 2.0, 0.01, 10.0)
        self.gam = LevyFamily(LevyKind.GAMMA, 1.0, 0.5, 0.05, 10.0)
        self.sas = FamilySpec.from_name("sas", 1.5).at(1.0, 2.0, 0.01, 10.0)

    def _total_mass(self, fam):
        # integrate in log|beta| so the pole at the threshold stays tame
        lo = math.log(fam.threshold)

        def integrand(t):
            return math.exp(fam.coefficient_log_density(math.exp(t)) + t)

        value, _ = integrate.quad(integrand, lo, lo + 60.0, limit=400)
        return value * (2.0 if fam.symmetric else 1.0)

    def test_density_normalised(self):
        """
        The truncated coefficient density integrates to one for every family.
        """
        for fam in [self.sym, self.gam, self.sas]:
            self.assertAlmostEqual(self._total_mass(fam), 1.0, places=6, msg=fam.kind.value)

    def test_log_density_off_support(self):
        """
        Coefficients inside the truncation band, and negative Gamma coefficients, have zero density.
        """
        self.assertEqual(self.sym.coefficient_log_density(0.001), -np.inf)
        self.assertEqual(self.gam.coefficient_log_density(-5.0), -np.inf)
        values = self.sym.coefficient_log_density(np.array([-1.0, 0.0, 1.0]))
        self.assertEqual(values[0], values[2])
        self.assertEqual(values[1], -np.inf)

    def test_samples_respect_truncation(self):
        """
        Every draw satisfies |beta eta| > eps, and Gamma draws are positive.
        """
        for fam in [self.sym, self.gam, self.sas]:
            draws = fam.sample_coefficient(self.rng, 5000)
            self.assertTrue(np.all(fam.in_support(draws)), fam.kind.value)
        self.assertTrue(np.all(self.gam.sample_coefficient(self.rng, 1000) > 0))
        self.assertIsInstance(self.sym.sample_coefficient(self.rng), float)

    def test_gamma_magnitudes_follow_e1_tail(self):
        """
        eta |beta| has CDF 1 - E1(t)/E1(eps).
        """
        draws = np.abs(self.sym.sample_coefficient(self.rng, 5000)) * self.sym.eta
        eps = self.sym.epsilon
        result = stats.kstest(draws, lambda t: 1.0 - exp1(np.maximum(t, eps)) / exp1(eps))
        self.assertGreater(result.pvalue, 1e-3)

    def test_tail_sampler_above_one(self):
        """
        With eps >= 1 only the shifted-exponential piece is used; the law is unchanged.
        """
        draws = sample_e1_tail(1.5, 4000, self.rng)
        self.assertTrue(np.all(draws > 1.5))
        result = stats.kstest(draws, lambda t: 1.0 - exp1(np.maximum(t, 1.5)) / exp1(1.5))
        self.assertGreater(result.pvalue, 1e-3)
        self.assertEqual(sample_e1_tail(0.1, 0, self.rng).size, 0)

    def test_stable_magnitudes_are_pareto(self):
        """
        SaS magnitudes over the threshold are Pareto with index alpha.
        """
        ratio = np.abs(self.sas.sample_coefficient(self.rng, 5000)) / self.sas.threshold
        result = stats.kstest(ratio, lambda x: 1.0 - np.maximum(x, 1.0) ** -1.5)
        self.assertGreater(result.pvalue, 1e-3)

    def test_signs_are_balanced(self):
        """
        Symmetric families draw both signs about equally often.
        """
        draws = self.sym.sample_coefficient(self.rng, 20000)
        self.assertAlmostEqual(np.mean(draws > 0), 0.5, delta=0.02)

    def test_second_moment(self):
        """
        The closed-form second moment matches a large sample.
        """
        draws = self.sym.sample_coefficient(self.rng, 400000)
        self.assertAlmostEqual(np.mean(draws ** 2) / self.sym.coefficient_moment(2), 1.0, delta=0.05)
        self.assertEqual(self.sym.coefficient_moment(1), 0.0)
        gamma_draws = self.gam.sample_coefficient(self.rng, 400000)
        self.assertAlmostEqual(np.mean(gamma_draws) / self.gam.coefficient_moment(1), 1.0, delta=0.05)

    def test_moment_errors(self):
        """
        SaS has no finite variance; only orders 1 and 2 exist.
        """
        with self.assertRaises(LevyDomainError):
            self.sas.coefficient_moment(2)
        with self.assertRaises(LevyDomainError):
            self.sym.coefficient_moment(3)


class TestTruncationError(unittest.TestCase):
    def _small_jump_variance(self, fam):
        value, _ = integrate.quad(lambda b: b ** 2 * float(fam.levy_density(b)), 0.0, fam.threshold, limit=200)
        return value * (2.0 if fam.symmetric else 1.0)

    def test_matches_small_jump_integral(self):
        """
        C(eps) is the second moment of the discarded small jumps.
        """
        families = [
            LevyFamily(LevyKind.GAMMA, 2.0, 1.5, 0.1, 10.0),
            LevyFamily(LevyKind.SYM_GAMMA, 2.0, 1.5, 0.1, 10.0),
            FamilySpec.from_name("cauchy").at(2.0, 1.5, 0.1, 10.0),
            FamilySpec.from_name("sas", 0.5).at(2.0, 1.5, 0.1, 10.0),
        ]
        for fam in families:
            self.assertAlmostEqual(truncation_error_factor(fam) / self._small_jump_variance(fam), 1.0,
                                   places=6, msg=fam.spec.name)

    def test_monte_carlo_small_jumps(self):
        """
        Jumps drawn under a fine truncation and dropped by a coarse one carry C(coarse) - C(fine).
        """
        rng = np.random.default_rng(99)
        for spec in (FamilySpec.from_name("gamma"), FamilySpec.from_name("symgamma"),
                     FamilySpec.from_name("cauchy"), FamilySpec.from_name("sas", 1.5)):
            fine = spec.at(1.5, 2.0, 0.02, 1.0)
            coarse = spec.at(1.5, 2.0, 0.2, 1.0)
            draws = fine.sample_coefficient(rng, 200000)
            dropped = draws[~coarse.in_support(draws)]
            # expected sum of dropped beta^2 per unit |Omega|
            estimate = fine.nu_plus() * np.sum(dropped ** 2) / draws.size
            expected = coarse.truncation_error_factor() - fine.truncation_error_factor()
            self.assertAlmostEqual(estimate / expected, 1.0, delta=0.03, msg=spec.name)

    def test_gamma_closed_form(self):
        """
        Gamma: gamma eta^-2 [1 - (1 + eps) e^-eps].
        """
        fam = LevyFamily(LevyKind.GAMMA, 3.0, 2.0, 0.2, 1.0)
        expected = 3.0 / 4.0 * (1.0 - 1.2 * math.exp(-0.2))
        self.assertAlmostEqual(fam.truncation_error_factor(), expected, places=14)

    def test_shrinks_with_epsilon(self):
        """
        A smaller truncation level leaves less error.
        """
        errors = [LevyFamily(LevyKind.SYM_GAMMA, 1.0, 1.0, eps, 1.0).truncation_error_factor()
                  for eps in [0.1, 0.01, 0.001]]
        self.assertTrue(errors[0] > errors[1] > errors[2] > 0)


class TestLocalIntegrability(unittest.TestCase):
    def test_symmetric_gamma(self):
        """
        Integral of beta^2 nu over |beta| <= 1 is 2 gamma eta^-2 P(2, eta).
        """
        fam = LevyFamily(LevyKind.SYM_GAMMA, 1.5, 2.0, 0.01, 1.0)
        value, error = local_l2_mass(fam)
        self.assertAlmostEqual(value, 2.0 * 1.5 / 4.0 * gammainc(2.0, 2.0), places=8)
        self.assertLess(error, 1e-8)

    def test_stable(self):
        """
        The stable measure is locally square-integrable for every alpha < 2.
        """
        for alpha in [0.5, 1.0, 1.9]:
            value, _ = local_l2_mass(FamilySpec.from_name("sas", alpha).at(1.0, 1.0, 0.01, 1.0))
            self.assertTrue(np.isfinite(value) and value > 0)


if __name__ == "__main__":
    unittest.main()
