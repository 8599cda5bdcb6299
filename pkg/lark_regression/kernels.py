"""
Continuous kernel dictionary.

A generator g(x, omega) with omega = (chi, lambda[, rho]) places a bump,
ramp or step of width ~1/lambda at location chi. Every family here takes
values in [0, 1].
"""
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate

# space-time kernels are integrated by Monte Carlo
DEFAULT_MC_DRAWS = 20000


class KernelSpecError(ValueError):
    """Raised when a kernel and its parameters do not fit together."""


class KernelIntegrationError(RuntimeError):
    """Raised when a kernel moment could not be integrated to tolerance."""


class KernelKind(Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    ONE_SIDED_EXP = "onesided"
    HAAR = "haar"
    POWER_EXP = "powerexp"
    SPACE_TIME = "spacetime"


class LambdaConvention(Enum):
    LINEAR = "linear"
    SQUARED = "squared"


class NormEstimate(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class KernelSpec:
    """
    A kernel family on the domain X = [lower, upper].

    Attributes:
        kind (KernelKind): Generator family.
        lower (float): Left end of X (time axis for space-time kernels).
        upper (float): Right end of X.
        convention (LambdaConvention): Gaussian scale read as lambda or lambda^2.
        support_radius (float, optional): Hard cut |x - chi| < radius.
        space_bounds (tuple, optional): ((x0, x1), (y0, y1)) for space-time kernels.
    """

    kind: KernelKind
    lower: float = 0.0
    upper: float = 10.0
    convention: LambdaConvention = LambdaConvention.LINEAR
    support_radius: Optional[float] = None
    space_bounds: Optional[tuple] = None

    def __post_init__(self):
        if not self.lower < self.upper:
            raise KernelSpecError(f"Empty domain [{self.lower}, {self.upper}]")
        if self.support_radius is not None and not self.support_radius > 0:
            raise KernelSpecError(f"support_radius must be positive, got {self.support_radius}")
        if self.kind is KernelKind.SPACE_TIME and self.space_bounds is None:
            raise KernelSpecError("space-time kernels need space_bounds")

    @property
    def volume(self) -> float:
        """Lebesgue measure of the location space."""
        width = self.upper - self.lower
        if self.kind is KernelKind.SPACE_TIME:
            (x0, x1), (y0, y1) = self.space_bounds
            width *= (x1 - x0) * (y1 - y0)
        return width

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def uses_rho(self) -> bool:
        return self.kind is KernelKind.POWER_EXP


@dataclass(frozen=True)
class OmegaPoint:
    """
    A point omega in dictionary parameter space.

    For 1-D kernels chi and lam are scalars. For the space-time kernel chi is
    (sx, sy, tau) and lam is (Lambda, time_rate) with Lambda a 2x2 symmetric
    positive definite matrix.
    """

    chi: object
    lam: object
    rho: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.lam, tuple):
            matrix, rate = self.lam
            matrix = np.asarray(matrix, dtype=float)
            if matrix.shape != (2, 2) or not np.allclose(matrix, matrix.T):
                raise KernelSpecError("Lambda must be a symmetric 2x2 matrix")
            try:
                np.linalg.cholesky(matrix)
            except np.linalg.LinAlgError:
                raise KernelSpecError("Lambda must be positive definite") from None
            if not rate > 0:
                raise KernelSpecError(f"time rate must be positive, got {rate}")
        elif not float(self.lam) > 0:
            raise KernelSpecError(f"lambda must be positive, got {self.lam}")
        if self.rho is not None and not self.rho > 0:
            raise KernelSpecError(f"rho must be positive, got {self.rho}")


def evaluate(spec: KernelSpec, x, chi, lam, rho: Optional[float] = None):
    """
    Vectorised 1-D generator g(x; chi, lam[, rho]) with numpy broadcasting.

    Args:
        spec (KernelSpec): Kernel family (not space-time).
        x, chi, lam: Array-likes broadcast against each other.
        rho (float, optional): Power for the power-exponential family.

    Returns:
        np.ndarray: Kernel values in [0, 1].
    """
    u = np.asarray(x, dtype=float) - np.asarray(chi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    kind = spec.kind
    if kind is KernelKind.GAUSSIAN:
        scale = lam if spec.convention is LambdaConvention.LINEAR else lam ** 2
        values = np.exp(-0.5 * scale * u ** 2)
    elif kind is KernelKind.LAPLACE:
        values = np.exp(-lam * np.abs(u))
    elif kind is KernelKind.ONE_SIDED_EXP:
        values = np.where(u > 0, np.exp(-lam * np.where(u > 0, u, 0.0)), 0.0)
    elif kind is KernelKind.HAAR:
        scaled = lam * u
        values = ((scaled > 0) & (scaled <= 1.0)).astype(float)
    elif kind is KernelKind.POWER_EXP:
        if rho is None:
            raise KernelSpecError("power-exponential kernel needs rho")
        values = np.exp(-lam * np.abs(u) ** rho)
    else:
        raise KernelSpecError("space-time kernels are evaluated with evaluate_space_time")
    if spec.support_radius is not None:
        values = np.where(np.abs(u) < spec.support_radius, values, 0.0)
    return values


def evaluate_space_time(x, omega: OmegaPoint):
    """
    exp{-0.5 (s - sigma)' Lambda (s - sigma) - lambda_t |t - tau|} for x = (..., 3).
    """
    x = np.asarray(x, dtype=float)
    chi = np.asarray(omega.chi, dtype=float)
    matrix, rate = omega.lam
    d = x[..., :2] - chi[:2]
    quad = np.einsum("...i,ij,...j->...", d, np.asarray(matrix, dtype=float), d)
    return np.exp(-0.5 * quad - rate * np.abs(x[..., 2] - chi[2]))


def eval_kernel(spec: KernelSpec, x, omega: OmegaPoint):
    """
    Evaluate g(x, omega) for any kernel kind.

    Raises:
        KernelSpecError: If omega has the wrong shape for the kernel kind.
    """
    if spec.kind is KernelKind.SPACE_TIME:
        if not isinstance(omega.lam, tuple) or np.size(omega.chi) != 3:
            raise KernelSpecError("space-time kernel needs chi=(sx, sy, tau) and lam=(Lambda, rate)")
        return evaluate_space_time(x, omega)
    if isinstance(omega.lam, tuple) or np.size(omega.chi) != 1:
        raise KernelSpecError(f"{spec.kind.value} kernel needs scalar chi and lambda")
    return evaluate(spec, x, omega.chi, omega.lam, omega.rho)


def design_row(spec: KernelSpec, x, points: Sequence) -> float:
    """f(x) = sum_j g(x, omega_j) beta_j for a list of (beta, OmegaPoint) pairs."""
    total = 0.0
    for beta, omega in points:
        total += beta * eval_kernel(spec, x, omega)
    return total


def design_matrix(spec: KernelSpec, xs, chis, lambdas, rho: Optional[float] = None) -> np.ndarray:
    """(n, J) matrix of g(x_i, omega_j)."""
    xs = np.asarray(xs, dtype=float)
    return evaluate(spec, xs[:, None], np.asarray(chis)[None, :], np.asarray(lambdas)[None, :], rho)


def _breakpoints(spec: KernelSpec, xs, lam: float) -> list:
    points = []
    for x in xs:
        points.append(x)
        if spec.kind is KernelKind.HAAR:
            points.append(x - 1.0 / lam)
        if spec.support_radius is not None:
            points.extend([x - spec.support_radius, x + spec.support_radius])
    return sorted({p for p in points if spec.lower < p < spec.upper})


def _quad(func, lo, hi, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return integrate.quad(func, lo, hi, limit=200, **kwargs)
        except integrate.IntegrationWarning as exc:
            raise KernelIntegrationError(f"quadrature on [{lo}, {hi}] failed: {exc}") from None


def omega_expectation(spec: KernelSpec, xs: Sequence[float], lambda_law, rho: Optional[float] = None) -> NormEstimate:
    """
    E_omega[prod_k g(x_k, omega)] with chi ~ Un(X) and lambda ~ lambda_law.

    Args:
        spec (KernelSpec): 1-D kernel family.
        xs (sequence): Points x_k; one point gives the mean kernel, two the product moment.
        lambda_law: A frozen scipy distribution for lambda, or a float for a fixed lambda.
        rho (float, optional): Shared power-exponential exponent.

    Returns:
        NormEstimate: (value, absolute error estimate).
    """
    xs = [float(x) for x in xs]
    width = spec.upper - spec.lower

    def over_chi(lam):
        def integrand(chi):
            return float(np.prod([evaluate(spec, x, chi, lam, rho) for x in xs]))

        value, error = _quad(integrand, spec.lower, spec.upper, points=_breakpoints(spec, xs, lam) or None)
        return value / width, error / width

    if np.isscalar(lambda_law):
        return NormEstimate(*over_chi(float(lambda_law)))

    # integrate over the probability scale so the integrand stays bounded
    value, error = _quad(lambda v: over_chi(float(lambda_law.ppf(v)))[0], 0.0, 1.0)
    return NormEstimate(value, error)


def l2_norm_sq(spec: KernelSpec, lambda_law, x: Optional[float] = None, rho: Optional[float] = None,
               omega_volume: Optional[float] = None, rng: Optional[np.random.Generator] = None,
               draws: int = DEFAULT_MC_DRAWS) -> NormEstimate:
    """
    ||phi(x, .)||_2^2 = int g(x, omega)^2 |Omega| pi(domega).

    Evaluated at the midpoint of X unless x is given; boundary points give
    smaller values. Space-time kernels use Monte Carlo with Lambda = lambda*I
    and the time rate both drawn from lambda_law, and report the standard error.
    """
    volume = spec.volume if omega_volume is None else omega_volume
    if spec.kind is KernelKind.SPACE_TIME:
        return _space_time_l2(spec, lambda_law, x, volume, rng or np.random.default_rng(0), draws)
    x = spec.midpoint if x is None else float(x)
    moment = omega_expectation(spec, [x, x], lambda_law, rho)
    return NormEstimate(volume * moment.value, volume * moment.error)


def _space_time_l2(spec, lambda_law, x, volume, rng, draws):
    (x0, x1), (y0, y1) = spec.space_bounds
    if x is None:
        x = (0.5 * (x0 + x1), 0.5 * (y0 + y1), spec.midpoint)
    x = np.asarray(x, dtype=float)
    centers = np.column_stack([
        rng.uniform(x0, x1, draws), rng.uniform(y0, y1, draws), rng.uniform(spec.lower, spec.upper, draws),
    ])

    def draw_rates():
        if np.isscalar(lambda_law):
            return np.full(draws, float(lambda_law))
        return lambda_law.rvs(size=draws, random_state=rng)

    space_rate, time_rate = draw_rates(), draw_rates()
    d = x[:2] - centers[:, :2]
    values = np.exp(-0.5 * space_rate * np.sum(d ** 2, axis=1) - time_rate * np.abs(x[2] - centers[:, 2])) ** 2
    return NormEstimate(volume * values.mean(), volume * values.std(ddof=1) / np.sqrt(draws))
