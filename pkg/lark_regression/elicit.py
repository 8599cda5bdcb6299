"""
Hyperparameter elicitation.

The prior on (epsilon, a_gamma, b_gamma, a_eta, b_eta) is chosen so that

    - the marginal prior of J (Poisson mixed over gamma, a negative binomial)
      puts the stated coverage on a J interval,
    - the marginal prior of a coefficient (mixed over u = 1/eta) puts the
      stated coverage on a beta interval,
    - the root mean squared truncation error is a stated fraction of ||phi||_2:
      E[gamma] E[u^2] C(epsilon; gamma = eta = 1) = budget^2.

The (a_lambda, b_lambda) prior is fitted separately to a quantile interval.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import optimize, stats

from .levy import FamilySpec, LevyDomainError, LevyKind, exp_integral_e1, exp_integral_e1_array
from .prior import Hyperparams, PriorError

PARAM_NAMES = ("epsilon", "a_gamma", "b_gamma", "a_eta", "b_eta")
RESIDUAL_TOL = 1e-3
LEGENDRE_NODES = 256
SHAPE_BRACKET = (1e-3, 1e3)
# E1 underflows to zero well before this argument
_E1_CAP = 700.0
_PROB_FLOOR = 1e-300


class ElicitationError(ValueError):
    """Raised for unusable targets or an under/over-determined system."""


class ElicitationInfeasible(ElicitationError):
    """
    Raised when no hyperparameters meet the targets.

    Attributes:
        residuals (dict): Best achieved residual per constraint.
        binding (str): The constraint with the largest residual.
    """

    def __init__(self, residuals: dict, binding: str, message: Optional[str] = None):
        self.residuals = dict(residuals)
        self.binding = binding
        report = ", ".join(f"{name}: {value:+.3e}" for name, value in self.residuals.items())
        super().__init__(message or f"targets cannot be met; binding constraint is '{binding}' ({report})")


@dataclass(frozen=True)
class ElicitationTargets:
    """
    Prior-predictive targets.

    Attributes:
        j_interval (tuple): (lo, hi) for the number of kernels J.
        j_coverage (float): Probability of lo < J <= hi, split evenly between the tails.
        beta_interval (tuple): (lo, hi) for a coefficient; (-b, b) for symmetric families.
        beta_coverage (float): Coverage of the beta interval.
        trunc_budget (float): Root mean squared truncation error as a fraction of ||phi||_2.
        lambda_interval (tuple): (lo, hi) for each kernel scale lambda.
        lambda_coverage (float): Coverage of the lambda interval.
        beta_convention (str): "central" (default) reads P(|beta| > b) = 1 - c for symmetric
            families, the central interval of the marginal coefficient law; "magnitude" reads
            P(|beta| > b) = (1 - c) / 2, the reading under which the reference symmetric Gamma
            and Cauchy hyperparameters are reproduced.
    """

    j_interval: tuple = (5, 100)
    j_coverage: float = 0.95
    beta_interval: tuple = (-25.0, 25.0)
    beta_coverage: float = 0.95
    trunc_budget: float = 0.05
    lambda_interval: tuple = (0.2, 20.0)
    lambda_coverage: float = 0.95
    beta_convention: str = "central"

    def __post_init__(self):
        for name in ("j", "beta", "lambda"):
            lo, hi = getattr(self, f"{name}_interval")
            coverage = getattr(self, f"{name}_coverage")
            if not lo < hi:
                raise ElicitationError(f"{name} interval must have lo < hi, got ({lo}, {hi})")
            if not 0.0 < coverage < 1.0:
                raise ElicitationError(f"{name} coverage must be in (0, 1), got {coverage}")
        if self.j_interval[0] < 0:
            raise ElicitationError("J interval must be non-negative")
        if self.lambda_interval[0] <= 0:
            raise ElicitationError("lambda interval must be positive")
        if not self.trunc_budget > 0:
            raise ElicitationError(f"truncation budget must be positive, got {self.trunc_budget}")
        if self.beta_convention not in ("magnitude", "central"):
            raise ElicitationError(f"unknown beta convention {self.beta_convention!r}")


@dataclass(frozen=True)
class ElicitationResult:
    """
    Solved hyperparameters with the residual of every constraint.

    Attributes:
        hyper (Hyperparams): The elicited prior.
        residuals (dict): Constraint name -> log-scale residual at the solution.
        achieved (dict): Prior-predictive quantities achieved by the solution.
        budget_is_equality (bool): Whether the truncation budget closed the system.
    """

    hyper: Hyperparams
    residuals: dict
    achieved: dict = field(default_factory=dict)
    budget_is_equality: bool = True

    def report_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "constraint": list(self.residuals),
            "residual": list(self.residuals.values()),
        })


def solve_lambda(lo: float, hi: float, coverage: float = 0.95) -> tuple:
    """
    Gamma(shape, rate) whose central interval at `coverage` is (lo, hi).

    The quantile ratio hi/lo depends on the shape only, so the shape is found
    by a bracketed 1-D root search and the rate then follows from the lower
    quantile.

    Args:
        lo, hi (float): Interval ends, 0 < lo < hi.
        coverage (float): Central coverage in (0, 1).

    Returns:
        tuple: (a_lambda, b_lambda).

    Raises:
        ElicitationInfeasible: If no shape in (1e-3, 1e3) matches the ratio.
    """
    if not 0 < lo < hi:
        raise ElicitationError(f"lambda interval must satisfy 0 < lo < hi, got ({lo}, {hi})")
    if not 0 < coverage < 1:
        raise ElicitationError(f"coverage must be in (0, 1), got {coverage}")
    tail = 0.5 * (1.0 - coverage)

    def log_ratio_gap(log_shape):
        shape = math.exp(log_shape)
        return math.log(stats.gamma.isf(tail, shape) / stats.gamma.ppf(tail, shape)) - math.log(hi / lo)

    bounds = tuple(math.log(b) for b in SHAPE_BRACKET)
    gaps = [log_ratio_gap(b) for b in bounds]
    if gaps[0] * gaps[1] > 0:
        binding = "shape lower bound" if gaps[0] < 0 else "shape upper bound"
        raise ElicitationInfeasible({"lambda ratio at 1e-3": gaps[0], "lambda ratio at 1e3": gaps[1]}, binding)
    log_shape = optimize.brentq(log_ratio_gap, *bounds, xtol=1e-14, rtol=1e-14)
    shape = math.exp(log_shape)
    rate = stats.gamma.ppf(tail, shape) / lo
    logging.debug(f"lambda prior Ga({shape:.6g}, {rate:.6g}) for ({lo}, {hi}) at {coverage}")
    return shape, rate


def j_tail_probabilities(a_gamma: float, b_gamma: float, unit_rate: float, lo: float, hi: float) -> tuple:
    """
    (P(J <= lo), P(J > hi)) for J ~ Po(gamma c), gamma ~ Ga(a_gamma, b_gamma).

    The mixture is negative binomial with n = a_gamma, p = b_gamma / (b_gamma + c).
    """
    law = stats.nbinom(a_gamma, b_gamma / (b_gamma + unit_rate))
    return float(law.cdf(lo)), float(law.sf(hi))


def beta_exceedance(family_spec: FamilySpec, epsilon: float, a_eta: float, b_eta: float,
                    bound: float, nodes: int = LEGENDRE_NODES) -> float:
    """
    P(|beta| > bound) under the coefficient law mixed over u = 1/eta ~ Ga(a_eta, b_eta).

    Given u, Gamma-type magnitudes satisfy P(|beta| > b) = E1(max(b/u, eps)) / E1(eps)
    and stable ones P(|beta| > b) = min(1, (eps u / b)^alpha). The mixture is
    integrated by Gauss-Legendre quadrature on the probability scale of u.
    """
    points, weights = np.polynomial.legendre.leggauss(nodes)
    levels = 0.5 * (points + 1.0)
    u = stats.gamma.ppf(levels, a_eta, scale=1.0 / b_eta)
    if family_spec.kind is LevyKind.SAS:
        conditional = np.minimum(1.0, (epsilon * u / bound) ** family_spec.alpha)
    else:
        with np.errstate(divide="ignore"):
            z = np.where(u > 0, bound / np.where(u > 0, u, 1.0), _E1_CAP)
        z = np.clip(z, epsilon, _E1_CAP)
        conditional = exp_integral_e1_array(z) / exp_integral_e1(epsilon)
    return float(0.5 * np.dot(weights, conditional))


def truncation_ratio(family_spec: FamilySpec, epsilon: float, a_gamma: float, b_gamma: float,
                     a_eta: float, b_eta: float) -> float:
    """
    Root mean squared truncation error over ||phi||_2: sqrt(E[gamma] E[eta^-2] C(eps)).
    """
    unit = family_spec.at(1.0, 1.0, epsilon, 1.0).truncation_error_factor()
    mean_gamma = a_gamma / b_gamma
    mean_u_sq = a_eta * (a_eta + 1.0) / b_eta ** 2
    return math.sqrt(mean_gamma * mean_u_sq * unit)


class _System:
    """Residual map over the free hyperparameters, in log coordinates."""

    def __init__(self, targets: ElicitationTargets, family_spec: FamilySpec, omega_volume: float, fixed: dict):
        unknown = set(fixed) - set(PARAM_NAMES)
        if unknown:
            raise ElicitationError(f"cannot fix unknown parameter(s) {sorted(unknown)}")
        for name, value in fixed.items():
            if not value > 0:
                raise ElicitationError(f"fixed {name} must be positive, got {value}")
        self.targets = targets
        self.family_spec = family_spec
        self.omega_volume = omega_volume
        self.fixed = dict(fixed)
        self.free = [name for name in PARAM_NAMES if name not in fixed]
        self.tail = 0.5 * (1.0 - targets.j_coverage)

        core = ["J lower tail", "J upper tail", "beta upper tail"]
        if not family_spec.symmetric:
            core.append("beta lower tail")
        elif targets.beta_interval[0] != -targets.beta_interval[1]:
            raise ElicitationError(f"symmetric families need a symmetric beta interval, got {targets.beta_interval}")
        if not family_spec.symmetric and targets.beta_interval[0] <= 0:
            raise ElicitationError("the Gamma family has positive coefficients; beta interval must be positive")
        if len(self.free) == len(core) + 1:
            self.budget_is_equality = True
            self.names = core + ["truncation budget"]
        elif len(self.free) == len(core):
            self.budget_is_equality = False
            self.names = core
        else:
            raise ElicitationError(
                f"{len(self.free)} free parameters for {len(core)} coefficient/count constraints "
                f"and the truncation budget; fix {len(self.free) - len(core) - 1} of {self.free}"
            )

    def unit_rate(self, epsilon: float) -> float:
        return self.family_spec.at(1.0, 1.0, epsilon, self.omega_volume).nu_plus()

    def unpack(self, theta) -> dict:
        """Free log-coordinates -> parameters. b_gamma is carried as b_gamma / c(eps)."""
        params = dict(self.fixed)
        for name, value in zip(self.free, theta):
            params[name] = math.exp(value)
        if "b_gamma" not in self.fixed:
            params["b_gamma"] = params["b_gamma"] * self.unit_rate(params["epsilon"])
        return params

    def pack(self, params: dict) -> np.ndarray:
        theta = []
        for name in self.free:
            value = params[name]
            if name == "b_gamma":
                value /= self.unit_rate(params["epsilon"])
            theta.append(math.log(value))
        return np.array(theta)

    def _beta_residuals(self, p: dict) -> list:
        targets = self.targets
        lo, hi = targets.beta_interval
        if self.family_spec.symmetric:
            level = self.tail_beta
            upper = beta_exceedance(self.family_spec, p["epsilon"], p["a_eta"], p["b_eta"], hi)
            return [math.log(max(upper, _PROB_FLOOR)) - math.log(level)]
        tail = 0.5 * (1.0 - targets.beta_coverage)
        upper = beta_exceedance(self.family_spec, p["epsilon"], p["a_eta"], p["b_eta"], hi)
        lower = 1.0 - beta_exceedance(self.family_spec, p["epsilon"], p["a_eta"], p["b_eta"], lo)
        return [math.log(max(upper, _PROB_FLOOR)) - math.log(tail),
                math.log(max(lower, _PROB_FLOOR)) - math.log(tail)]

    @property
    def tail_beta(self) -> float:
        miss = 1.0 - self.targets.beta_coverage
        return 0.5 * miss if self.targets.beta_convention == "magnitude" else miss

    def budget_residual(self, p: dict) -> float:
        ratio = truncation_ratio(self.family_spec, p["epsilon"], p["a_gamma"], p["b_gamma"], p["a_eta"], p["b_eta"])
        return 2.0 * (math.log(ratio) - math.log(self.targets.trunc_budget))

    def residuals(self, p: dict) -> np.ndarray:
        lo, hi = self.targets.j_interval
        below, above = j_tail_probabilities(p["a_gamma"], p["b_gamma"], self.unit_rate(p["epsilon"]), lo, hi)
        out = [math.log(max(below, _PROB_FLOOR)) - math.log(self.tail),
               math.log(max(above, _PROB_FLOOR)) - math.log(self.tail)]
        out.extend(self._beta_residuals(p))
        if self.budget_is_equality:
            out.append(self.budget_residual(p))
        return np.array(out)

    def __call__(self, theta) -> np.ndarray:
        try:
            values = self.residuals(self.unpack(theta))
        except (OverflowError, ValueError, LevyDomainError):
            return np.full(len(self.names), 1e6)
        return np.where(np.isfinite(values), values, 1e6)

    def solve_count_block(self) -> tuple:
        """(a_gamma, b_gamma / c) matching the J interval alone."""
        lo, hi = self.targets.j_interval
        centre = math.sqrt(max(lo, 0.5) * hi)

        def gap(x):
            shape, ratio = math.exp(x[0]), math.exp(x[1])
            below, above = j_tail_probabilities(shape, ratio, 1.0, lo, hi)
            return [math.log(max(below, _PROB_FLOOR)) - math.log(self.tail),
                    math.log(max(above, _PROB_FLOOR)) - math.log(self.tail)]

        solution = optimize.root(gap, [math.log(2.0), math.log(2.0 / centre)], method="hybr")
        logging.debug(f"count block: success={solution.success}, x={np.exp(solution.x)}")
        return math.exp(solution.x[0]), math.exp(solution.x[1])

    def starting_points(self):
        shape, ratio = 2.0, 2.0 / math.sqrt(max(self.targets.j_interval[0], 0.5) * self.targets.j_interval[1])
        if "a_gamma" not in self.fixed and "b_gamma" not in self.fixed:
            shape, ratio = self.solve_count_block()
        for epsilon in ([self.fixed["epsilon"]] if "epsilon" in self.fixed else [1e-2, 1e-3, 1e-1, 1e-4]):
            for a_eta in ([self.fixed["a_eta"]] if "a_eta" in self.fixed else [2.0, 0.5, 10.0]):
                for mean_u in (10.0, 1.0, 100.0, 0.1):
                    params = {"epsilon": epsilon, "a_gamma": self.fixed.get("a_gamma", shape),
                              "a_eta": a_eta, "b_eta": self.fixed.get("b_eta", a_eta / mean_u)}
                    params["b_gamma"] = self.fixed.get("b_gamma", ratio * self.unit_rate(epsilon))
                    yield self.pack(params)


def solve_hyper(targets: ElicitationTargets, family_spec: FamilySpec, omega_volume: float = 10.0,
                fixed: Optional[dict] = None, phi_norm_sq: Optional[float] = None,
                tol: float = RESIDUAL_TOL) -> ElicitationResult:
    """
    Solve for (epsilon, a_gamma, b_gamma, a_eta, b_eta) meeting the targets.

    The J interval gives two equations and the beta interval one (symmetric
    families) or two (Gamma). The truncation budget closes the system as an
    equality when one more parameter is free, and is checked as an inequality
    when the coefficient/count equations already use every free parameter.
    The symmetric Gamma family therefore needs one fixed parameter (a_eta is
    the usual choice) and SaS needs epsilon fixed, since its equations are
    invariant under a joint rescaling of epsilon, b_gamma and b_eta.

    Args:
        targets (ElicitationTargets): Prior-predictive targets.
        family_spec (FamilySpec): Lévy family.
        omega_volume (float): |Omega|.
        fixed (dict, optional): Parameter name -> value held fixed.
        phi_norm_sq (float, optional): ||phi||_2^2, only used to report the absolute error bound.
        tol (float): Largest accepted |residual|.

    Returns:
        ElicitationResult: Hyperparameters (including the lambda prior) and residuals.

    Raises:
        ElicitationError: For an under- or over-determined system.
        ElicitationInfeasible: If no point meets every constraint within tol.
    """
    system = _System(targets, family_spec, omega_volume, fixed or {})
    best_theta, best_norm = None, np.inf
    for start in system.starting_points():
        solution = optimize.root(system, start, method="hybr")
        norm = float(np.max(np.abs(system(solution.x))))
        logging.debug(f"root from {np.exp(start)}: max residual {norm:.3e}")
        if norm < best_norm:
            best_theta, best_norm = solution.x, norm
        if norm <= tol:
            break
    if best_norm > tol:
        polished = optimize.minimize(lambda x: float(np.sum(system(x) ** 2)), best_theta, method="Nelder-Mead",
                                     options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
        norm = float(np.max(np.abs(system(polished.x))))
        logging.debug(f"Nelder-Mead polish: max residual {norm:.3e}")
        if norm < best_norm:
            best_theta, best_norm = polished.x, norm

    params = system.unpack(best_theta)
    residuals = dict(zip(system.names, system(best_theta).tolist()))
    if best_norm > tol:
        binding = max(residuals, key=lambda name: abs(residuals[name]))
        raise ElicitationInfeasible(residuals, binding)
    if not system.budget_is_equality:
        over = system.budget_residual(params)
        residuals["truncation budget"] = over
        if over > tol:
            raise ElicitationInfeasible(residuals, "truncation budget")

    a_lambda, b_lambda = solve_lambda(*targets.lambda_interval, targets.lambda_coverage)
    try:
        hyper = Hyperparams(params["epsilon"], params["a_gamma"], params["b_gamma"], params["a_eta"],
                            params["b_eta"], a_lambda, b_lambda, omega_volume)
    except PriorError as exc:
        raise ElicitationError(str(exc)) from None
    achieved = prior_predictive(hyper, family_spec, targets, phi_norm_sq)
    logging.info(f"elicited {family_spec.name} prior: " + ", ".join(f"{k}={v:.4g}" for k, v in params.items()))
    return ElicitationResult(hyper, residuals, achieved, system.budget_is_equality)


def prior_predictive(hyper: Hyperparams, family_spec: FamilySpec, targets: ElicitationTargets,
                     phi_norm_sq: Optional[float] = None) -> dict:
    """Coverage and truncation quantities implied by a prior, for reporting."""
    lo, hi = targets.j_interval
    unit_rate = family_spec.at(1.0, 1.0, hyper.epsilon, hyper.omega_volume).nu_plus()
    below, above = j_tail_probabilities(hyper.a_gamma, hyper.b_gamma, unit_rate, lo, hi)
    b_lo, b_hi = targets.beta_interval
    exceed_hi = beta_exceedance(family_spec, hyper.epsilon, hyper.a_eta, hyper.b_eta, b_hi)
    if family_spec.symmetric:
        beta_coverage = 1.0 - exceed_hi
    else:
        beta_coverage = beta_exceedance(family_spec, hyper.epsilon, hyper.a_eta, hyper.b_eta, b_lo) - exceed_hi
    ratio = truncation_ratio(family_spec, hyper.epsilon, hyper.a_gamma, hyper.b_gamma, hyper.a_eta, hyper.b_eta)
    lam_law = hyper.lambda_law()
    achieved = {
        "P(J in interval)": 1.0 - below - above,
        "P(beta in interval)": beta_coverage,
        "truncation ratio": ratio,
        "P(lambda in interval)": float(lam_law.cdf(targets.lambda_interval[1]) - lam_law.cdf(targets.lambda_interval[0])),
    }
    if phi_norm_sq is not None:
        achieved["truncation rms error"] = ratio * math.sqrt(phi_norm_sq)
    return achieved
