"""
Hierarchical LARK prior: hyperparameters -> (gamma, eta) -> J -> {(beta_j, omega_j)} -> f.
"""
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .kernels import KernelKind, KernelSpec, OmegaPoint, design_matrix, omega_expectation
from .levy import FamilySpec, LevyDomainError, LevyFamily, LevyKind

# hard cap on the number of support points in one prior draw
MAX_PRIOR_POINTS = 10 ** 6


class PriorError(ValueError):
    """Raised for invalid hyperparameters or unsupported prior computations."""


@dataclass(frozen=True)
class Hyperparams:
    """
    Hyperparameters of the hierarchical prior.

    Attributes:
        epsilon (float): Truncation level on |beta * eta|.
        a_gamma, b_gamma (float): Shape/rate of the Gamma prior on gamma.
        a_eta, b_eta (float): Shape/rate of the Gamma prior on 1/eta.
        a_lambda, b_lambda (float): Shape/rate of the Gamma prior on each lambda_j.
        omega_volume (float): |Omega|.
        a_rho, b_rho (float): Shape/rate of the Gamma prior on a shared power rho.
    """

    epsilon: float
    a_gamma: float
    b_gamma: float
    a_eta: float
    b_eta: float
    a_lambda: float
    b_lambda: float
    omega_volume: float
    a_rho: float = 2.0
    b_rho: float = 0.75

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (np.isfinite(value) and value > 0):
                raise PriorError(f"Hyperparameter {name} must be strictly positive, got {value}")

    def lambda_law(self):
        return stats.gamma(self.a_lambda, scale=1.0 / self.b_lambda)

    def family(self, family_spec: FamilySpec, gamma: float, eta: float) -> LevyFamily:
        return family_spec.at(gamma, eta, self.epsilon, self.omega_volume)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class LarkState:
    """
    One state of the LARK model.

    Support points are stored column-wise: betas[j], chis[j], lambdas[j]
    describe the j-th kernel.
    """

    gamma: float
    eta: float
    betas: np.ndarray = field(default_factory=lambda: np.empty(0))
    chis: np.ndarray = field(default_factory=lambda: np.empty(0))
    lambdas: np.ndarray = field(default_factory=lambda: np.empty(0))
    sigma2: float = 1.0
    rho: Optional[float] = None

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float).reshape(-1)
        self.chis = np.asarray(self.chis, dtype=float).reshape(-1)
        self.lambdas = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if not (self.betas.size == self.chis.size == self.lambdas.size):
            raise PriorError("betas, chis and lambdas must have the same length")

    @property
    def n_points(self) -> int:
        return int(self.betas.size)

    def points(self) -> list:
        """Support points as (beta, OmegaPoint) pairs."""
        return [(float(b), OmegaPoint(float(c), float(l), self.rho))
                for b, c, l in zip(self.betas, self.chis, self.lambdas)]

    def copy(self) -> "LarkState":
        return replace(self, betas=self.betas.copy(), chis=self.chis.copy(), lambdas=self.lambdas.copy())

    def with_point(self, beta: float, chi: float, lam: float) -> "LarkState":
        return replace(self, betas=np.append(self.betas, beta), chis=np.append(self.chis, chi),
                       lambdas=np.append(self.lambdas, lam))

    def without_point(self, j: int) -> "LarkState":
        return replace(self, betas=np.delete(self.betas, j), chis=np.delete(self.chis, j),
                       lambdas=np.delete(self.lambdas, j))

    def with_values(self, j: int, beta=None, chi=None, lam=None) -> "LarkState":
        new = self.copy()
        if beta is not None:
            new.betas[j] = beta
        if chi is not None:
            new.chis[j] = chi
        if lam is not None:
            new.lambdas[j] = lam
        return new

    def respects_truncation(self, family: LevyFamily) -> bool:
        return bool(np.all(family.in_support(self.betas)))

    def to_record(self) -> dict:
        """Plain-python form used for JSON-lines output."""
        record = {"gamma": float(self.gamma), "eta": float(self.eta), "sigma2": float(self.sigma2)}
        if self.rho is not None:
            record["rho"] = float(self.rho)
        record["points"] = [{"beta": float(b), "chi": float(c), "lambda": float(l)}
                            for b, c, l in zip(self.betas, self.chis, self.lambdas)]
        return record

    @classmethod
    def from_record(cls, record: dict) -> "LarkState":
        points = record.get("points", [])
        return cls(
            gamma=record["gamma"],
            eta=record["eta"],
            betas=[p["beta"] for p in points],
            chis=[p["chi"] for p in points],
            lambdas=[p["lambda"] for p in points],
            sigma2=record.get("sigma2", 1.0),
            rho=record.get("rho"),
        )

    def __eq__(self, other):
        if not isinstance(other, LarkState):
            return NotImplemented
        return self.to_record() == other.to_record()


def sample_prior(hyper: Hyperparams, family_spec: FamilySpec, spec: KernelSpec, rng: np.random.Generator,
                 n_points: Optional[int] = None, rho: Optional[float] = None,
                 max_points: int = MAX_PRIOR_POINTS) -> LarkState:
    """
    Draw one realization of the hierarchical prior.

    gamma ~ Ga(a_gamma, b_gamma), 1/eta ~ Ga(a_eta, b_eta), J ~ Po(nu_plus),
    then J i.i.d. points with beta from the truncated coefficient law,
    chi ~ Un(X) and lambda ~ Ga(a_lambda, b_lambda).

    Args:
        hyper (Hyperparams): Prior hyperparameters.
        family_spec (FamilySpec): Lévy family.
        spec (KernelSpec): 1-D kernel family (sets X and whether rho is drawn).
        rng (np.random.Generator): Random source.
        n_points (int, optional): Condition on this J instead of drawing it.
        rho (float, optional): Fixed shared power; drawn from its prior when None.
        max_points (int): J above this raises PriorError.

    Returns:
        LarkState: The drawn state (sigma2 is left at 1).
    """
    if spec.kind is KernelKind.SPACE_TIME:
        raise PriorError("prior draws are implemented for 1-D kernels")
    gamma = rng.gamma(hyper.a_gamma, 1.0 / hyper.b_gamma)
    eta = 1.0 / rng.gamma(hyper.a_eta, 1.0 / hyper.b_eta)
    try:
        family = hyper.family(family_spec, gamma, eta)
    except LevyDomainError as exc:
        raise PriorError(str(exc)) from None
    count = rng.poisson(family.nu_plus()) if n_points is None else int(n_points)
    if count > max_points:
        raise PriorError(f"Prior draw has J={count} support points, above the cap of {max_points}")
    betas = family.sample_coefficient(rng, count)
    chis = rng.uniform(spec.lower, spec.upper, count)
    lambdas = rng.gamma(hyper.a_lambda, 1.0 / hyper.b_lambda, count)
    if spec.uses_rho and rho is None:
        rho = rng.gamma(hyper.a_rho, 1.0 / hyper.b_rho)
    return LarkState(gamma=gamma, eta=eta, betas=betas, chis=chis, lambdas=lambdas,
                     rho=rho if spec.uses_rho else None)


def eval_realization(state: LarkState, spec: KernelSpec, grid) -> np.ndarray:
    """f(x) = sum_j g(x, omega_j) beta_j on every grid point."""
    grid = np.asarray(grid, dtype=float)
    if state.n_points == 0:
        return np.zeros(grid.shape)
    return design_matrix(spec, grid, state.chis, state.lambdas, state.rho) @ state.betas


def truncate_state(state: LarkState, family: LevyFamily) -> LarkState:
    """Keep only the points that survive the truncation rule of ``family``."""
    keep = family.in_support(state.betas)
    return replace(state, betas=state.betas[keep], chis=state.chis[keep], lambdas=state.lambdas[keep])


def _checked_family(family_spec: FamilySpec, hyper: Hyperparams, gamma: float, eta: float) -> LevyFamily:
    if family_spec.kind is LevyKind.SAS:
        raise PriorError("SaS fields have infinite variance; no prior mean or covariance")
    return hyper.family(family_spec, gamma, eta)


def prior_mean(family_spec: FamilySpec, hyper: Hyperparams, spec: KernelSpec, x: float,
               gamma: float, eta: float, rho: Optional[float] = None) -> float:
    """
    E[f(x)] at fixed (gamma, eta).

    Gamma: nu_plus * E[beta] * E_omega[g(x, omega)], which tends to
    gamma |Omega| eta^-1 int g(x, omega) pi(domega) as epsilon -> 0.
    SymGamma: exactly 0.

    Raises:
        PriorError: For SaS families.
    """
    family = _checked_family(family_spec, hyper, gamma, eta)
    if family.symmetric:
        return 0.0
    moment = omega_expectation(spec, [x], hyper.lambda_law(), rho)
    return family.nu_plus() * family.coefficient_moment(1) * moment.value


def prior_covariance(family_spec: FamilySpec, hyper: Hyperparams, spec: KernelSpec, x1: float, x2: float,
                     gamma: float, eta: float, rho: Optional[float] = None) -> float:
    """
    Cov{f(x1), f(x2)} = int int g(x1, omega) g(x2, omega) beta^2 nu_eps(dbeta domega).
    """
    family = _checked_family(family_spec, hyper, gamma, eta)
    moment = omega_expectation(spec, [x1, x2], hyper.lambda_law(), rho)
    return family.nu_plus() * family.coefficient_moment(2) * moment.value


def j_moments(hyper: Hyperparams, family_spec: FamilySpec) -> tuple:
    """
    Mean and variance of the marginal J (Poisson mixed over the Gamma prior on gamma).

    J is negative binomial: mean a c / b, variance mean + mean^2 / a, with
    c = nu_plus at gamma = 1.
    """
    rate = hyper.family(family_spec, 1.0, 1.0).nu_plus()
    mean = hyper.a_gamma * rate / hyper.b_gamma
    return mean, mean + mean ** 2 / hyper.a_gamma
