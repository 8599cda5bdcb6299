import math
import unittest

import numpy as np
from scipy import integrate, stats
from scipy.special import exp1, gammainc

from lark_regression.elicit import (RESIDUAL_TOL, ElicitationError, ElicitationInfeasible, ElicitationTargets,
                                    beta_exceedance, j_tail_probabilities, prior_predictive, solve_hyper,
                                    solve_lambda, truncation_ratio)
from lark_regression.kernels import KernelKind, KernelSpec
from lark_regression.levy import FamilySpec
from lark_regression.prior import sample_prior

SYM = FamilySpec.from_name("symgamma")
CAUCHY = FamilySpec.from_name("cauchy")


class TestTargets(unittest.TestCase):
    def test_invalid_targets(self):
        """
        Intervals need lo < hi, coverages lie in (0, 1) and the budget is positive.
        """
        with self.assertRaises(ElicitationError):
            ElicitationTargets(j_interval=(100, 5))
        with self.assertRaises(ElicitationError):
            ElicitationTargets(beta_coverage=1.0)
        with self.assertRaises(ElicitationError):
            ElicitationTargets(lambda_interval=(0.0, 20.0))
        with self.assertRaises(ElicitationError):
            ElicitationTargets(trunc_budget=0.0)
        with self.assertRaises(ElicitationError):
            ElicitationTargets(beta_convention="both")

    def test_infeasible_report(self):
        """
        The infeasibility error names the binding constraint and keeps every residual.
        """
        exc = ElicitationInfeasible({"J lower tail": 0.5, "truncation budget": -2.0}, "truncation budget")
        self.assertIn("truncation budget", str(exc))
        self.assertEqual(exc.residuals["J lower tail"], 0.5)
        self.assertIsInstance(exc, ElicitationError)


class TestSolveLambda(unittest.TestCase):
    def test_default_interval(self):
        """
        A 95% interval of (0.2, 20) gives a Gamma prior with shape near 1.117 and rate near 0.1965.
        """
        shape, rate = solve_lambda(0.2, 20.0, 0.95)
        self.assertAlmostEqual(shape, 1.117, delta=0.01)
        self.assertAlmostEqual(rate, 0.1965, delta=0.002)

    def test_quantiles_hit(self):
        """
        The solved prior has the requested quantiles.
        """
        shape, rate = solve_lambda(0.5, 4.0, 0.9)
        law = stats.gamma(shape, scale=1.0 / rate)
        self.assertAlmostEqual(law.ppf(0.05), 0.5, places=8)
        self.assertAlmostEqual(law.isf(0.05), 4.0, places=6)

    def test_bad_interval(self):
        """
        The interval must be positive and increasing.
        """
        with self.assertRaises(ElicitationError):
            solve_lambda(2.0, 1.0)
        with self.assertRaises(ElicitationError):
            solve_lambda(0.2, 20.0, 1.5)


class TestTailProbabilities(unittest.TestCase):
    def test_j_tails_are_poisson_gamma_mixture(self):
        """
        The negative binomial tails equal the Poisson tails integrated over the Gamma prior on gamma.
        """
        a_gamma, b_gamma, rate = 2.5, 6.0, 150.0
        below, above = j_tail_probabilities(a_gamma, b_gamma, rate, 5, 100)
        density = stats.gamma(a_gamma, scale=1.0 / b_gamma).pdf
        ref_below, _ = integrate.quad(lambda g: stats.poisson.cdf(5, g * rate) * density(g), 0, np.inf)
        ref_above, _ = integrate.quad(lambda g: stats.poisson.sf(100, g * rate) * density(g), 0, np.inf)
        self.assertAlmostEqual(below, ref_below, places=6)
        self.assertAlmostEqual(above, ref_above, places=6)

    def test_gamma_exceedance_matches_quadrature(self):
        """
        P(|beta| > b) for the symmetric Gamma family agrees with direct quadrature over u = 1/eta.
        """
        eps, a_eta, b_eta, bound = 0.01, 3.0, 0.5, 25.0
        density = stats.gamma(a_eta, scale=1.0 / b_eta).pdf

        def conditional(u):
            return exp1(max(bound / u, eps)) / exp1(eps) * density(u)

        reference, _ = integrate.quad(conditional, 0.0, np.inf, limit=200)
        value = beta_exceedance(SYM, eps, a_eta, b_eta, bound)
        self.assertAlmostEqual(value / reference, 1.0, delta=1e-3)

    def test_stable_exceedance_matches_quadrature(self):
        """
        For the Cauchy family P(|beta| > b) = E[min(1, eps u / b)].
        """
        eps, a_eta, b_eta, bound = 0.01, 2.0, 1.0, 1.0
        density = stats.gamma(a_eta, scale=1.0 / b_eta).pdf
        kink = bound / eps
        inside, _ = integrate.quad(lambda u: eps * u / bound * density(u), 0.0, kink)
        outside, _ = integrate.quad(density, kink, np.inf)
        value = beta_exceedance(CAUCHY, eps, a_eta, b_eta, bound)
        self.assertAlmostEqual(value / (inside + outside), 1.0, delta=1e-3)

    def test_exceedance_decreases_with_bound(self):
        """
        Wider intervals leave less probability outside.
        """
        values = [beta_exceedance(SYM, 0.005, 13.0, 0.7, b) for b in (5.0, 25.0, 100.0)]
        self.assertTrue(1.0 >= values[0] > values[1] > values[2] >= 0.0)

    def test_truncation_ratio(self):
        """
        The truncation ratio is sqrt(E[gamma] E[eta^-2] C(eps)) with C at unit rates.
        """
        ratio = truncation_ratio(SYM, 0.0041, 2.53, 6.45, 13.01, 0.71)
        expected = math.sqrt(2.53 / 6.45 * 13.01 * 14.01 / 0.71 ** 2 * 2.0 * gammainc(2.0, 0.0041))
        self.assertAlmostEqual(ratio, expected, places=12)
        self.assertAlmostEqual(ratio, 0.0488, delta=0.001)


MAGNITUDE = ElicitationTargets(beta_convention="magnitude")


class TestSolveHyper(unittest.TestCase):
    def test_symmetric_gamma(self):
        """
        With a_eta fixed the symmetric Gamma system closes and meets every target.
        """
        targets = MAGNITUDE
        result = solve_hyper(targets, SYM, omega_volume=10.0, fixed={"a_eta": 13.01})
        self.assertTrue(result.budget_is_equality)
        for name, residual in result.residuals.items():
            self.assertLessEqual(abs(residual), RESIDUAL_TOL, name)
        self.assertAlmostEqual(result.achieved["P(J in interval)"], 0.95, delta=2e-3)
        self.assertAlmostEqual(result.achieved["truncation ratio"], 0.05, delta=1e-4)
        self.assertEqual(result.hyper.a_eta, 13.01)
        self.assertEqual(result.hyper.omega_volume, 10.0)

    def test_symmetric_gamma_reference_values(self):
        """
        The solution sits close to the reference symmetric Gamma hyperparameters.
        """
        hyper = solve_hyper(MAGNITUDE, SYM, 10.0, {"a_eta": 13.01}).hyper
        reference = {"epsilon": 0.0041, "a_gamma": 2.53, "b_gamma": 6.45, "b_eta": 0.71}
        for name, value in reference.items():
            self.assertAlmostEqual(getattr(hyper, name) / value, 1.0, delta=0.1, msg=name)
        self.assertAlmostEqual(hyper.a_lambda, 1.117, delta=0.01)

    def test_central_default(self):
        """
        By default the beta interval is a central interval of the marginal coefficient law.
        """
        targets = ElicitationTargets()
        self.assertEqual(targets.beta_convention, "central")
        result = solve_hyper(targets, SYM, 10.0, {"a_eta": 5.0})
        for name, residual in result.residuals.items():
            self.assertLessEqual(abs(residual), RESIDUAL_TOL, name)
        self.assertAlmostEqual(result.achieved["P(beta in interval)"], 0.95, delta=2e-3)
        self.assertAlmostEqual(result.achieved["P(J in interval)"], 0.95, delta=2e-3)
        self.assertAlmostEqual(result.achieved["truncation ratio"], 0.05, delta=1e-4)

    def test_magnitude_reading(self):
        """
        The magnitude reading puts half the missing mass above b, so |beta| <= b with probability (1 + c) / 2.
        """
        result = solve_hyper(MAGNITUDE, SYM, 10.0, {"a_eta": 5.0})
        self.assertAlmostEqual(result.achieved["P(beta in interval)"], 0.975, delta=2e-3)
        central = solve_hyper(ElicitationTargets(), SYM, 10.0, {"a_eta": 5.0})
        self.assertLess(central.hyper.b_eta, result.hyper.b_eta)

    def test_cauchy_with_fixed_epsilon(self):
        """
        The Cauchy system closes once epsilon is fixed; a_gamma comes from the J interval alone.
        """
        targets = ElicitationTargets(beta_interval=(-33.0, 33.0), beta_coverage=0.999, beta_convention="magnitude")
        result = solve_hyper(targets, CAUCHY, 10.0, {"epsilon": 0.0029})
        for name, residual in result.residuals.items():
            self.assertLessEqual(abs(residual), RESIDUAL_TOL, name)
        self.assertAlmostEqual(result.hyper.a_gamma / 2.53, 1.0, delta=0.05)
        self.assertEqual(result.hyper.epsilon, 0.0029)

    def test_cauchy_infeasible(self):
        """
        A 95% coefficient interval of [-25, 25] cannot be met together with the truncation budget.
        """
        with self.assertRaises(ElicitationInfeasible) as caught:
            solve_hyper(MAGNITUDE, CAUCHY, 10.0, {"epsilon": 0.0029})
        self.assertIn(caught.exception.binding, caught.exception.residuals)

    def test_underdetermined(self):
        """
        The symmetric Gamma system without a fixed parameter is rejected.
        """
        with self.assertRaises(ElicitationError):
            solve_hyper(ElicitationTargets(), SYM)

    def test_bad_fixed_parameters(self):
        """
        Fixed parameters must be known names with positive values.
        """
        with self.assertRaises(ElicitationError):
            solve_hyper(ElicitationTargets(), SYM, fixed={"a_lambda": 1.0})
        with self.assertRaises(ElicitationError):
            solve_hyper(ElicitationTargets(), SYM, fixed={"a_eta": -1.0})

    def test_interval_shapes(self):
        """
        Symmetric families need a symmetric beta interval; the Gamma family a positive one.
        """
        with self.assertRaises(ElicitationError):
            solve_hyper(ElicitationTargets(beta_interval=(-10.0, 25.0)), SYM, fixed={"a_eta": 2.0})
        with self.assertRaises(ElicitationError):
            solve_hyper(ElicitationTargets(), FamilySpec.from_name("gamma"))

    def test_prior_predictive_norm(self):
        """
        Given ||phi||^2 the report includes the absolute truncation error.
        """
        hyper = solve_hyper(MAGNITUDE, SYM, 10.0, {"a_eta": 13.01}).hyper
        achieved = prior_predictive(hyper, SYM, MAGNITUDE, phi_norm_sq=4.0)
        self.assertAlmostEqual(achieved["truncation rms error"], 2.0 * achieved["truncation ratio"])
        self.assertAlmostEqual(achieved["P(lambda in interval)"], 0.95, delta=1e-4)


class TestForwardCheck(unittest.TestCase):
    def test_elicited_prior_reproduces_targets(self):
        """
        Prior draws under elicited hyperparameters meet the J and beta coverages.
        """
        hyper = solve_hyper(ElicitationTargets(), SYM, 10.0, {"a_eta": 5.0}).hyper
        spec = KernelSpec(KernelKind.GAUSSIAN, 0.0, 10.0)
        rng = np.random.default_rng(2024)
        counts, lambdas, inside, total = [], [], 0, 0
        for _ in range(8000):
            state = sample_prior(hyper, SYM, spec, rng)
            counts.append(state.n_points)
            lambdas.extend(state.lambdas)
            inside += int(np.sum(np.abs(state.betas) <= 25.0))
            total += state.n_points
        counts = np.array(counts)
        self.assertAlmostEqual(float(np.mean((counts > 5) & (counts <= 100))), 0.95, delta=0.012)
        self.assertAlmostEqual(inside / total, 0.95, delta=0.015)
        lambdas = np.array(lambdas)
        self.assertAlmostEqual(float(np.mean((lambdas >= 0.2) & (lambdas <= 20.0))), 0.95, delta=0.01)


if __name__ == "__main__":
    unittest.main()
