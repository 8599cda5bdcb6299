"""
Reversible-jump MCMC for the LARK regression model under Gaussian noise.

Each iteration makes one move from the mixture

    Birth    add a point with a small coefficient drawn from a double
             exponential of rate eta/epsilon, conditioned on |beta eta| > epsilon
    Death    remove a uniformly chosen point (small probability)
    Update   random-walk the coefficient, location and log scale of one point;
             a coefficient that falls into the truncation region kills the point

followed by the fixed-dimension updates of (gamma, eta, sigma2[, rho]).

Birth/death acceptance. With lp the log of the joint posterior density
(which carries the exp(-nu)/J! factor), a birth of xi = (beta, omega) is
accepted with

    log r = lp(x + xi) - lp(x) + log w(beta) - log p_birth - log q(beta) - log pi(omega)

where q is the birth density of the coefficient, pi the prior of omega and
w(beta) = p_update * P(random walk from beta lands in truncation) + p_death
is the total probability of the reverse death route, per point. A death
uses the negated expression. The Jacobian is 1 since every proposal is drawn
from an explicit density.
"""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import gammaln, ndtr

from .kernels import KernelKind, KernelSpec, KernelSpecError, evaluate
from .levy import FamilySpec, LevyFamily
from .prior import Hyperparams, LarkState, eval_realization

LOG_2PI = math.log(2.0 * math.pi)
STEP_NAMES = ("beta", "chi", "log_lambda", "eta", "rho")
CACHE_RTOL = 1e-9
CACHE_ATOL = 1e-12


class SamplerError(RuntimeError):
    """Raised when the chain reaches a state it cannot continue from."""

    def __init__(self, message: str, state: Optional[LarkState] = None):
        self.state_dump = json.dumps(state.to_record()) if state is not None else None
        if self.state_dump:
            message = f"{message}\nstate: {self.state_dump}"
        super().__init__(message)


class McmcConfigError(ValueError):
    """Raised for inconsistent sampler settings."""


@dataclass(frozen=True)
class Dataset:
    """
    Observations (x_i, y_i). x need not be sorted, equally spaced or distinct.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float).reshape(-1)
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        if xs.size != ys.size:
            raise ValueError(f"xs and ys differ in length ({xs.size} vs {ys.size})")
        if xs.size == 0:
            raise ValueError("Dataset is empty")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("Dataset contains non-finite values")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return int(self.xs.size)


@dataclass(frozen=True)
class McmcConfig:
    """
    Sampler settings.

    Attributes:
        iterations, burn_in, thin (int): Chain length, discarded prefix, keep every thin-th draw.
        seed (int): Seed of the chain's random source.
        target_accept (float): Acceptance rate the random-walk scales adapt to.
        adapt_exponent (float): Robbins-Monro gain t^-adapt_exponent.
        p_birth, p_death, p_update (float): Move mixture; must sum to 1.
        step_* (float): Initial random-walk scales.
        a_sigma, b_sigma (float): Inverse-Gamma prior on sigma2.
        likelihood (bool): False samples the prior (flat likelihood).
        quantiles (tuple): Levels of the pointwise credible band.
        drift_check_every (int): Period of the fitted-value cache check.
    """

    iterations: int = 20000
    burn_in: int = 5000
    thin: int = 10
    seed: int = 0
    target_accept: float = 0.30
    adapt_exponent: float = 0.6
    p_birth: float = 0.2
    p_death: float = 0.05
    p_update: float = 0.75
    step_beta: float = 1.0
    step_chi: float = 0.5
    step_log_lambda: float = 0.5
    step_log_eta: float = 0.2
    step_log_rho: float = 0.2
    a_sigma: float = 0.1
    b_sigma: float = 0.1
    likelihood: bool = True
    quantiles: tuple = (0.05, 0.95)
    drift_check_every: int = 1000

    def __post_init__(self):
        if abs(self.p_birth + self.p_death + self.p_update - 1.0) > 1e-9:
            raise McmcConfigError("p_birth + p_death + p_update must equal 1")
        if min(self.p_birth, self.p_death, self.p_update) < 0 or self.p_birth == 0 or self.p_update == 0:
            raise McmcConfigError("p_birth and p_update must be positive, p_death non-negative")
        if not self.iterations > self.burn_in >= 0:
            raise McmcConfigError("iterations must exceed burn_in")
        if self.thin < 1:
            raise McmcConfigError("thin must be at least 1")
        if len(self.quantiles) != 2 or not 0 < self.quantiles[0] < self.quantiles[1] < 1:
            raise McmcConfigError(f"quantiles must be two increasing levels in (0, 1), got {self.quantiles}")

    def initial_steps(self) -> dict:
        return {
            "beta": self.step_beta,
            "chi": self.step_chi,
            "log_lambda": self.step_log_lambda,
            "eta": self.step_log_eta,
            "rho": self.step_log_rho,
        }


@dataclass(frozen=True)
class FitResult:
    """
    Output of a chain (or of merged chains).

    Attributes:
        draws (tuple): Kept LarkState draws.
        grid (np.ndarray): Points the posterior curve is summarised on.
        mean, lower, upper (np.ndarray): Pointwise posterior mean and quantile band.
        quantiles (tuple): Levels of (lower, upper).
        j_trace (np.ndarray): J after every iteration.
        log_post_trace (np.ndarray): Log posterior after every iteration.
        acceptance (dict): Post-burn-in acceptance rate per move type.
        step_sizes (dict): Random-walk scales after adaptation.
        max_cache_drift (float): Largest relative drift of the fitted-value cache seen at checks.
    """

    draws: tuple
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    quantiles: tuple
    j_trace: np.ndarray
    log_post_trace: np.ndarray
    acceptance: dict
    step_sizes: dict = field(default_factory=dict)
    max_cache_drift: float = 0.0

    def summary_frame(self) -> pd.DataFrame:
        lo, hi = (f"q{round(100 * q):02d}" for q in self.quantiles)
        return pd.DataFrame({"x": self.grid, "mean": self.mean, lo: self.lower, hi: self.upper})

    def trace_frame(self) -> pd.DataFrame:
        """One row per kept draw: J, gamma, eta, sigma2 and rho (if any)."""
        frame = pd.DataFrame({
            "J": [d.n_points for d in self.draws],
            "gamma": [d.gamma for d in self.draws],
            "eta": [d.eta for d in self.draws],
            "sigma2": [d.sigma2 for d in self.draws],
        })
        if self.draws and self.draws[0].rho is not None:
            frame["rho"] = [d.rho for d in self.draws]
        return frame

    def acceptance_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"move": list(self.acceptance), "acceptance": list(self.acceptance.values())})


def _gamma_logpdf(x, shape: float, rate: float):
    x = np.asarray(x, dtype=float)
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def log_likelihood(residuals, sigma2: float) -> float:
    """Gaussian log likelihood of residuals y - f(x) with variance sigma2."""
    residuals = np.asarray(residuals, dtype=float)
    n = residuals.size
    return -0.5 * n * (LOG_2PI + math.log(sigma2)) - 0.5 * float(residuals @ residuals) / sigma2


def log_prior(state: LarkState, hyper: Hyperparams, family_spec: FamilySpec, spec: KernelSpec,
              sigma_prior: tuple = (0.1, 0.1)) -> float:
    """
    Log prior density of a state: pi(gamma) pi(eta) Po(J | nu_plus) prod pi_beta pi_omega,
    plus the priors on sigma2 and (when present) rho. -inf for impossible states.
    """
    if not (state.gamma > 0 and state.eta > 0 and state.sigma2 > 0):
        return -np.inf
    if np.any(state.lambdas <= 0) or np.any(state.chis < spec.lower) or np.any(state.chis > spec.upper):
        return -np.inf
    family = hyper.family(family_spec, state.gamma, state.eta)
    count = state.n_points
    rate = family.nu_plus()
    lp = float(_gamma_logpdf(state.gamma, hyper.a_gamma, hyper.b_gamma))
    # 1/eta ~ Ga(a_eta, b_eta); density of eta carries the eta^-2 Jacobian
    lp += float(_gamma_logpdf(1.0 / state.eta, hyper.a_eta, hyper.b_eta)) - 2.0 * math.log(state.eta)
    lp += count * math.log(rate) - rate - gammaln(count + 1.0)
    if count:
        lp += float(np.sum(family.coefficient_log_density(state.betas)))
        lp -= count * math.log(spec.upper - spec.lower)
        lp += float(np.sum(_gamma_logpdf(state.lambdas, hyper.a_lambda, hyper.b_lambda)))
    if state.rho is not None:
        if not state.rho > 0:
            return -np.inf
        lp += float(_gamma_logpdf(state.rho, hyper.a_rho, hyper.b_rho))
    a_sigma, b_sigma = sigma_prior
    lp += a_sigma * math.log(b_sigma) - gammaln(a_sigma) - (a_sigma + 1.0) * math.log(state.sigma2) - b_sigma / state.sigma2
    return lp


def log_posterior(state: LarkState, data: Dataset, hyper: Hyperparams, family_spec: FamilySpec,
                  spec: KernelSpec, sigma_prior: tuple = (0.1, 0.1), likelihood: bool = True,
                  fitted: Optional[np.ndarray] = None) -> float:
    """
    Log of the joint posterior density (up to its normalising constant).

    Args:
        state (LarkState): Model state.
        data (Dataset): Observations.
        hyper (Hyperparams): Prior hyperparameters.
        family_spec (FamilySpec): Lévy family.
        spec (KernelSpec): Kernel family.
        sigma_prior (tuple): (a_sigma, b_sigma) of the inverse-Gamma prior on sigma2.
        likelihood (bool): Drop the likelihood term when False.
        fitted (np.ndarray, optional): Precomputed f(x_i); recomputed when None.

    Returns:
        float: The log posterior, -inf for impossible states.
    """
    lp = log_prior(state, hyper, family_spec, spec, sigma_prior)
    if not likelihood or lp == -np.inf:
        return lp
    if fitted is None:
        fitted = eval_realization(state, spec, data.xs)
    return lp + log_likelihood(data.ys - fitted, state.sigma2)


class LarkSampler:
    """
    One reversible-jump chain.

    The chain keeps the kernel column g(x_i, omega_j) of every point and the
    fitted values f(x_i), both updated incrementally on accepted moves, so a
    move costs O(n + J).

    Attributes:
        state (LarkState): Current state.
        steps (dict): Current random-walk scales.
    """

    def __init__(self, data: Dataset, hyper: Hyperparams, family_spec: FamilySpec, spec: KernelSpec,
                 config: McmcConfig, rng: Optional[np.random.Generator] = None,
                 state: Optional[LarkState] = None):
        self.data = data
        self.hyper = hyper
        self.family_spec = family_spec
        self.spec = spec
        self.config = config
        if spec.kind is KernelKind.SPACE_TIME:
            raise KernelSpecError("the sampler fits 1-D kernels only")
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.steps = config.initial_steps()
        self.adapting = True
        self._adapt_counts = dict.fromkeys(STEP_NAMES, 0)
        self._tally = {}
        self.max_cache_drift = 0.0
        self.state = state.copy() if state is not None else self.initial_state()
        self._rebuild_cache()

    # -- state and cache

    def initial_state(self) -> LarkState:
        """Empty expansion with (gamma, eta) at their prior centres and sigma2 at var(y)."""
        hyper = self.hyper
        spread = float(np.var(self.data.ys))
        rho = hyper.a_rho / hyper.b_rho if self.spec.uses_rho else None
        return LarkState(gamma=hyper.a_gamma / hyper.b_gamma, eta=hyper.b_eta / hyper.a_eta,
                         sigma2=spread if spread > 0 else 1.0, rho=rho)

    def _column(self, chi: float, lam: float, rho: Optional[float] = None) -> np.ndarray:
        return evaluate(self.spec, self.data.xs, chi, lam, self.state.rho if rho is None else rho)

    def _rebuild_cache(self):
        state = self.state
        self._columns = [self._column(c, l) for c, l in zip(state.chis, state.lambdas)]
        self.fitted = self._full_fit()
        self.log_post = self._log_post(state, self.fitted)

    def _full_fit(self) -> np.ndarray:
        fitted = np.zeros(self.data.n)
        for beta, column in zip(self.state.betas, self._columns):
            fitted += beta * column
        return fitted

    def _log_post(self, state: LarkState, fitted: np.ndarray) -> float:
        cfg = self.config
        lp = log_posterior(state, self.data, self.hyper, self.family_spec, self.spec,
                           (cfg.a_sigma, cfg.b_sigma), cfg.likelihood, fitted)
        if np.isnan(lp) or lp == np.inf:
            raise SamplerError("log posterior is not finite", state)
        return lp

    def family(self, state: Optional[LarkState] = None) -> LevyFamily:
        state = self.state if state is None else state
        return self.hyper.family(self.family_spec, state.gamma, state.eta)

    def check_cache(self) -> float:
        """
        Compare the cached fitted values with a full recomputation, then rebuild the cache.

        The drift is relative to the larger of the fitted and observed magnitudes, plus CACHE_ATOL,
        so an empty expansion reports float residue as residue.
        """
        cached = self.fitted
        self._rebuild_cache()
        if not cached.size:
            return 0.0
        scale = max(float(np.max(np.abs(self.fitted))), float(np.max(np.abs(self.data.ys))))
        drift = float(np.max(np.abs(self.fitted - cached))) / (scale + CACHE_ATOL)
        self.max_cache_drift = max(self.max_cache_drift, drift)
        if drift > CACHE_RTOL:
            logging.warning(f"fitted-value cache drifted by {drift:.3e}; recomputed")
        return drift

    # -- bookkeeping

    def _accept(self, log_ratio: float) -> bool:
        return bool(np.log(self.rng.random()) < log_ratio)

    def _record(self, move: str, accepted: bool):
        if self.adapting:
            if move in self.steps:
                self._adapt(move, accepted)
            return
        counts = self._tally.setdefault(move, [0, 0])
        counts[0] += int(accepted)
        counts[1] += 1

    def _adapt(self, move: str, accepted: bool):
        # Robbins-Monro on the log scale, burn-in only
        self._adapt_counts[move] += 1
        gain = self._adapt_counts[move] ** (-self.config.adapt_exponent)
        self.steps[move] *= math.exp(gain * (float(accepted) - self.config.target_accept))

    def acceptance_rates(self) -> dict:
        return {move: (acc / tried if tried else float("nan")) for move, (acc, tried) in sorted(self._tally.items())}

    # -- proposal densities

    def _birth_log_density(self, family: LevyFamily, beta: float) -> float:
        # double exponential of rate eta/eps, conditioned on |beta eta| > eps
        edge = family.threshold
        logq = -math.log(edge) - (abs(beta) - edge) / edge
        return logq - math.log(2.0) if family.symmetric else logq

    def _omega_log_density(self, lam: float) -> float:
        return float(-math.log(self.spec.upper - self.spec.lower)
                     + _gamma_logpdf(lam, self.hyper.a_lambda, self.hyper.b_lambda))

    def _death_log_weight(self, family: LevyFamily, beta: float) -> float:
        """log of p_update * P(beta + step * N(0,1) lands in truncation) + p_death."""
        edge, step = family.threshold, self.steps["beta"]
        upper = ndtr((edge - beta) / step)
        landing = upper if not family.symmetric else upper - ndtr((-edge - beta) / step)
        weight = self.config.p_update * landing + self.config.p_death
        return math.log(weight) if weight > 0 else -np.inf

    # -- trans-dimensional moves

    def birth_log_ratio(self, beta: float, chi: float, lam: float):
        """
        Log acceptance ratio for adding the point (beta, chi, lam).

        Returns:
            tuple: (log ratio, candidate state, candidate column, candidate fitted values).
        """
        family = self.family()
        candidate = self.state.with_point(beta, chi, lam)
        column = self._column(chi, lam)
        fitted = self.fitted + beta * column
        lp_new = self._log_post(candidate, fitted)
        log_ratio = (lp_new - self.log_post + self._death_log_weight(family, beta)
                     - math.log(self.config.p_birth) - self._birth_log_density(family, beta)
                     - self._omega_log_density(lam))
        return log_ratio, candidate, column, fitted

    def death_log_ratio(self, j: int):
        """
        Log acceptance ratio for removing point j (either death route).

        Returns:
            tuple: (log ratio, candidate state, candidate fitted values).
        """
        state = self.state
        family = self.family()
        beta, lam = float(state.betas[j]), float(state.lambdas[j])
        candidate = state.without_point(j)
        fitted = self.fitted - beta * self._columns[j]
        lp_new = self._log_post(candidate, fitted)
        log_ratio = (lp_new - self.log_post + math.log(self.config.p_birth)
                     + self._birth_log_density(family, beta) + self._omega_log_density(lam)
                     - self._death_log_weight(family, beta))
        return log_ratio, candidate, fitted

    def _commit(self, state: LarkState, fitted: np.ndarray, log_post: Optional[float] = None):
        self.state = state
        self.fitted = fitted
        self.log_post = self._log_post(state, fitted) if log_post is None else log_post

    def step_birth(self) -> LarkState:
        """Propose a new point; omega from its prior, beta from the birth density."""
        family = self.family()
        edge = family.threshold
        magnitude = edge * (1.0 + self.rng.exponential())
        beta = magnitude if not family.symmetric or self.rng.random() < 0.5 else -magnitude
        chi = self.rng.uniform(self.spec.lower, self.spec.upper)
        lam = self.rng.gamma(self.hyper.a_lambda, 1.0 / self.hyper.b_lambda)
        if not family.in_support(beta):
            self._record("birth", False)
            return self.state
        log_ratio, candidate, column, fitted = self.birth_log_ratio(beta, chi, lam)
        accepted = self._accept(log_ratio)
        if accepted:
            self._columns.append(column)
            self._commit(candidate, fitted)
        self._record("birth", accepted)
        return self.state

    def _die(self, j: int, move: str) -> bool:
        log_ratio, candidate, fitted = self.death_log_ratio(j)
        accepted = self._accept(log_ratio)
        if accepted:
            del self._columns[j]
            self._commit(candidate, fitted)
        self._record(move, accepted)
        return accepted

    def step_death(self) -> LarkState:
        """Remove a uniformly chosen point; no-op at J = 0."""
        if self.state.n_points == 0:
            return self.state
        self._die(int(self.rng.integers(self.state.n_points)), "death")
        return self.state

    # -- fixed-dimension moves

    def _metropolis(self, move: str, candidate: LarkState, fitted: np.ndarray, log_jacobian: float = 0.0) -> bool:
        lp_new = self._log_post(candidate, fitted)
        accepted = self._accept(lp_new - self.log_post + log_jacobian)
        if accepted:
            self._commit(candidate, fitted, lp_new)
        self._record(move, accepted)
        return accepted

    def step_update(self) -> LarkState:
        """
        Random-walk one point: beta, then chi, then log lambda.

        A beta proposal inside the truncation region turns the move into a
        death of that point.
        """
        state = self.state
        if state.n_points == 0:
            return state
        j = int(self.rng.integers(state.n_points))
        beta = float(state.betas[j])
        proposal = beta + self.steps["beta"] * self.rng.standard_normal()
        if not self.family().in_support(proposal):
            self._die(j, "death_update")
            return self.state
        self._metropolis("beta", state.with_values(j, beta=proposal),
                         self.fitted + (proposal - beta) * self._columns[j])

        state = self.state
        beta = float(state.betas[j])
        chi = float(state.chis[j]) + self.steps["chi"] * self.rng.standard_normal()
        if self.spec.lower <= chi <= self.spec.upper:
            column = self._column(chi, float(state.lambdas[j]))
            if self._metropolis("chi", state.with_values(j, chi=chi),
                                self.fitted + beta * (column - self._columns[j])):
                self._columns[j] = column
        else:
            self._record("chi", False)

        state = self.state
        lam = float(state.lambdas[j])
        new_lam = lam * math.exp(self.steps["log_lambda"] * self.rng.standard_normal())
        column = self._column(float(state.chis[j]), new_lam)
        if self._metropolis("log_lambda", state.with_values(j, lam=new_lam),
                            self.fitted + beta * (column - self._columns[j]),
                            math.log(new_lam / lam)):
            self._columns[j] = column
        return self.state

    def step_hyper(self) -> LarkState:
        """
        Gibbs for gamma and sigma2, Metropolis on log eta and (when used) log rho.
        """
        cfg, hyper = self.config, self.hyper
        state = self.state

        # gamma | J ~ Ga(a_gamma + J, b_gamma + nu_plus / gamma)
        unit_rate = self.hyper.family(self.family_spec, 1.0, state.eta).nu_plus()
        gamma = self.rng.gamma(hyper.a_gamma + state.n_points, 1.0 / (hyper.b_gamma + unit_rate))
        self._commit(replace(state, gamma=gamma), self.fitted)

        state = self.state
        eta = state.eta * math.exp(self.steps["eta"] * self.rng.standard_normal())
        candidate = replace(state, eta=eta)
        if candidate.respects_truncation(self.family(candidate)):
            self._metropolis("eta", candidate, self.fitted, math.log(eta / state.eta))
        else:
            # moving eta would strand a coefficient inside the truncation region
            self._record("eta", False)

        state = self.state
        if cfg.likelihood:
            residuals = self.data.ys - self.fitted
            shape = cfg.a_sigma + 0.5 * self.data.n
            rate = cfg.b_sigma + 0.5 * float(residuals @ residuals)
        else:
            shape, rate = cfg.a_sigma, cfg.b_sigma
        sigma2 = 1.0 / self.rng.gamma(shape, 1.0 / rate)
        self._commit(replace(state, sigma2=sigma2), self.fitted)

        if self.spec.uses_rho:
            state = self.state
            rho = state.rho * math.exp(self.steps["rho"] * self.rng.standard_normal())
            columns = [self._column(c, l, rho) for c, l in zip(state.chis, state.lambdas)]
            fitted = np.zeros(self.data.n)
            for beta, column in zip(state.betas, columns):
                fitted += beta * column
            if self._metropolis("rho", replace(state, rho=rho), fitted, math.log(rho / state.rho)):
                self._columns = columns
        return self.state

    # -- driver

    def iterate(self):
        """One iteration: a move from the mixture, then the hyperparameter updates."""
        u = self.rng.random()
        cfg = self.config
        if u < cfg.p_birth:
            self.step_birth()
        elif u < cfg.p_birth + cfg.p_death:
            self.step_death()
        else:
            self.step_update()
        self.step_hyper()

    def sample(self) -> tuple:
        """
        Run the configured number of iterations.

        Returns:
            tuple: (kept draws, J trace, log-posterior trace).
        """
        cfg = self.config
        draws = []
        j_trace = np.empty(cfg.iterations, dtype=int)
        lp_trace = np.empty(cfg.iterations)
        self.adapting = cfg.burn_in > 0
        for it in range(1, cfg.iterations + 1):
            self.iterate()
            j_trace[it - 1] = self.state.n_points
            lp_trace[it - 1] = self.log_post
            if it == cfg.burn_in:
                self.adapting = False
                logging.debug(f"burn-in done after {it} iterations; step sizes {self.steps}")
            if it % cfg.drift_check_every == 0:
                self.check_cache()
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                draws.append(self._kept_state())
        return draws, j_trace, lp_trace

    def _kept_state(self) -> LarkState:
        state = self.state
        if not state.respects_truncation(self.family()):
            raise SamplerError("kept draw breaks the truncation rule", state)
        if not np.isfinite(self.log_post):
            raise SamplerError("kept draw has a non-finite log posterior", state)
        return state.copy()


def predict(draws: Sequence[LarkState], spec: KernelSpec, xs) -> np.ndarray:
    """(n_draws, len(xs)) matrix of f(x) under every kept draw."""
    xs = np.asarray(xs, dtype=float)
    if not draws:
        return np.empty((0, xs.size))
    return np.vstack([eval_realization(d, spec, xs) for d in draws])


def summarize(draws: Sequence[LarkState], spec: KernelSpec, grid, quantiles: tuple) -> tuple:
    """Pointwise posterior mean and quantile band of f on grid."""
    curves = predict(draws, spec, grid)
    if curves.shape[0] == 0:
        raise SamplerError("no draws were kept; check iterations, burn_in and thin")
    lower, upper = np.quantile(curves, quantiles, axis=0)
    return curves.mean(axis=0), lower, upper


def run(data: Dataset, hyper: Hyperparams, family_spec: FamilySpec, spec: KernelSpec, config: McmcConfig,
        grid=None, rng: Optional[np.random.Generator] = None, state: Optional[LarkState] = None) -> FitResult:
    """
    Fit the LARK model by reversible-jump MCMC.

    Args:
        data (Dataset): Observations.
        hyper (Hyperparams): Prior hyperparameters.
        family_spec (FamilySpec): Lévy family.
        spec (KernelSpec): 1-D kernel family.
        config (McmcConfig): Sampler settings; config.seed seeds the chain unless rng is given.
        grid (array-like, optional): Where to summarise f; defaults to the data x values.
        rng (np.random.Generator, optional): Random source.
        state (LarkState, optional): Starting state.

    Returns:
        FitResult: Kept draws and posterior summaries.
    """
    sampler = LarkSampler(data, hyper, family_spec, spec, config, rng=rng, state=state)
    draws, j_trace, lp_trace = sampler.sample()
    grid = data.xs if grid is None else np.asarray(grid, dtype=float)
    mean, lower, upper = summarize(draws, spec, grid, config.quantiles)
    rates = sampler.acceptance_rates()
    logging.info(f"chain finished: {len(draws)} draws kept, mean J {np.mean([d.n_points for d in draws]):.1f}")
    return FitResult(draws=tuple(draws), grid=grid, mean=mean, lower=lower, upper=upper,
                     quantiles=tuple(config.quantiles), j_trace=j_trace, log_post_trace=lp_trace,
                     acceptance=rates, step_sizes=dict(sampler.steps),
                     max_cache_drift=sampler.max_cache_drift)


def _run_chain(args) -> FitResult:
    data, hyper, family_spec, spec, config, seed_seq, grid = args
    return run(data, hyper, family_spec, spec, config, grid=grid, rng=np.random.default_rng(seed_seq))


def run_chains(data: Dataset, hyper: Hyperparams, family_spec: FamilySpec, spec: KernelSpec,
               config: McmcConfig, chains: int = 2, workers: Optional[int] = None, grid=None) -> FitResult:
    """
    Run independent chains in a process pool and merge their draws.

    Chain k uses the k-th child of SeedSequence(config.seed), so the merged
    result is reproducible whatever the number of workers.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(chains)
    jobs = [(data, hyper, family_spec, spec, config, seed, grid) for seed in seeds]
    if chains == 1 or workers == 1:
        results = [_run_chain(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chain, jobs))
    draws = tuple(d for r in results for d in r.draws)
    grid = results[0].grid
    mean, lower, upper = summarize(draws, spec, grid, config.quantiles)
    acceptance = {}
    for move in results[0].acceptance:
        acceptance[move] = float(np.nanmean([r.acceptance.get(move, np.nan) for r in results]))
    return FitResult(draws=draws, grid=grid, mean=mean, lower=lower, upper=upper,
                     quantiles=tuple(config.quantiles),
                     j_trace=np.concatenate([r.j_trace for r in results]),
                     log_post_trace=np.concatenate([r.log_post_trace for r in results]),
                     acceptance=acceptance, step_sizes=results[0].step_sizes,
                     max_cache_drift=max(r.max_cache_drift for r in results))
