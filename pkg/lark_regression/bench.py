"""
Simulation benchmark: the Donoho-Johnstone test functions on [0, 10],
noise calibrated by root signal-to-noise ratio, and the AMSE harness.
Also home of the bundled motorcycle crash data.
"""
import functools
import hashlib
import io
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
from typing import Optional

import numpy as np
import pandas as pd

from .kernels import KernelKind, KernelSpec, LambdaConvention
from .levy import FamilySpec, LevyKind
from .mcmc import Dataset, McmcConfig, run
from .prior import Hyperparams

DOMAIN = (0.0, 10.0)
TARGET_RANGE = (0.0, 25.0)
REFERENCE_POINTS = 2 ** 16
DEFAULT_N = 1024
DEFAULT_RSNR = 7.0
DESK_REPLICATES = 10
FULL_REPLICATES = 100

MCYCLE_FILE = "mcycle.csv"
MCYCLE_SHA256 = "438d4481314207c86fa026352bffebeb2db98f2599899b121ba06a35e37cf7ea"

_BLOCKS_AT = np.array([0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81])
_BLOCKS_HEIGHT = np.array([4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2])
_BUMPS_HEIGHT = np.array([4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2])
_BUMPS_WIDTH = np.array([0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005])


class BenchmarkError(RuntimeError):
    """A replicate failed; carries its index."""

    def __init__(self, replicate: int, reason: str):
        super().__init__(replicate, reason)
        self.replicate = replicate
        self.reason = reason

    def __str__(self):
        return f"replicate {self.replicate} failed: {self.reason}"


class DataIntegrityError(RuntimeError):
    """Raised when bundled data does not match its recorded checksum."""


class BenchFunction(Enum):
    BLOCKS = "blocks"
    BUMPS = "bumps"
    DOPPLER = "doppler"
    HEAVYSINE = "heavysine"


def _standard_form(kind: BenchFunction, t):
    """The standard form on t in [0, 1]."""
    t = np.asarray(t, dtype=float)
    if kind is BenchFunction.BLOCKS:
        return np.sum(_BLOCKS_HEIGHT * (1.0 + np.sign(t[..., None] - _BLOCKS_AT)) / 2.0, axis=-1)
    if kind is BenchFunction.BUMPS:
        scaled = np.abs(t[..., None] - _BLOCKS_AT) / _BUMPS_WIDTH
        return np.sum(_BUMPS_HEIGHT * (1.0 + scaled) ** -4, axis=-1)
    if kind is BenchFunction.HEAVYSINE:
        return 4.0 * np.sin(4.0 * np.pi * t) - np.sign(t - 0.3) - np.sign(0.72 - t)
    return np.sqrt(t * (1.0 - t)) * np.sin(2.0 * np.pi * 1.05 / (t + 0.05))


@functools.lru_cache(maxsize=None)
def range_map(kind: BenchFunction) -> tuple:
    """
    (slope, offset) sending the min and max of the standard form to the target range.

    Extremes are taken on a 2^16-point grid of [0, 1].
    """
    reference = _standard_form(kind, np.linspace(0.0, 1.0, REFERENCE_POINTS))
    low, high = float(reference.min()), float(reference.max())
    slope = (TARGET_RANGE[1] - TARGET_RANGE[0]) / (high - low)
    return slope, TARGET_RANGE[0] - slope * low


def true_curve(kind: BenchFunction, xs) -> np.ndarray:
    """f(x) for x in [0, 10], range approximately [0, 25]."""
    slope, offset = range_map(kind)
    t = (np.asarray(xs, dtype=float) - DOMAIN[0]) / (DOMAIN[1] - DOMAIN[0])
    return slope * _standard_form(kind, t) + offset


def design_points(n: int = DEFAULT_N) -> np.ndarray:
    return np.linspace(DOMAIN[0], DOMAIN[1], n)


def noise_sd(values, rsnr: float) -> float:
    """sigma with sd(f) / sigma = rsnr, sd taken over the grid values."""
    return float(np.std(values)) / rsnr


def gen_data(kind: BenchFunction, n: int = DEFAULT_N, rsnr: float = DEFAULT_RSNR,
             rng: Optional[np.random.Generator] = None) -> Dataset:
    """
    Noisy observations of a test function at n equally spaced points of [0, 10].

    Args:
        kind (BenchFunction): Which function.
        n (int): Number of points, at least 2.
        rsnr (float): Root signal-to-noise ratio; np.inf gives noiseless data.
        rng (np.random.Generator, optional): Random source.

    Returns:
        Dataset: The simulated data.
    """
    if n < 2:
        raise ValueError(f"need at least 2 design points, got {n}")
    if not rsnr > 0:
        raise ValueError(f"rsnr must be positive, got {rsnr}")
    rng = rng if rng is not None else np.random.default_rng()
    xs = design_points(n)
    truth = true_curve(kind, xs)
    sigma = noise_sd(truth, rsnr)
    return Dataset(xs, truth + sigma * rng.standard_normal(n))


def mse(fhat, ftrue) -> float:
    """n^-1 sum (fhat_i - f_i)^2."""
    fhat = np.asarray(fhat, dtype=float)
    ftrue = np.asarray(ftrue, dtype=float)
    if fhat.shape != ftrue.shape:
        raise ValueError(f"estimate and truth differ in shape ({fhat.shape} vs {ftrue.shape})")
    return float(np.mean((fhat - ftrue) ** 2))


TABLE_KERNELS = {
    BenchFunction.BLOCKS: KernelSpec(KernelKind.HAAR, *DOMAIN),
    BenchFunction.BUMPS: KernelSpec(KernelKind.LAPLACE, *DOMAIN),
    BenchFunction.DOPPLER: KernelSpec(KernelKind.GAUSSIAN, *DOMAIN, convention=LambdaConvention.SQUARED),
    BenchFunction.HEAVYSINE: KernelSpec(KernelKind.GAUSSIAN, *DOMAIN, convention=LambdaConvention.SQUARED,
                                       support_radius=2.0),
}

# reference AMSE (symmetric Gamma, Cauchy)
TABLE_AMSE = {
    BenchFunction.BLOCKS: (0.030, 0.026),
    BenchFunction.BUMPS: (0.111, 0.105),
    BenchFunction.HEAVYSINE: (0.038, 0.036),
    BenchFunction.DOPPLER: (0.152, 0.157),
}


def table_hyperparams(family_spec: FamilySpec) -> Hyperparams:
    """Reference simulation-study hyperparameters for the symmetric Gamma and Cauchy priors."""
    volume = DOMAIN[1] - DOMAIN[0]
    if family_spec.kind is LevyKind.SYM_GAMMA:
        return Hyperparams(0.0041, 2.53, 6.45, 13.01, 0.71, 1.117, 0.1965, volume)
    if family_spec.kind is LevyKind.SAS and family_spec.alpha == 1.0:
        return Hyperparams(0.0029, 2.53, 14.2, 0.50, 1.00, 1.117, 0.1965, volume)
    raise ValueError(f"no reference hyperparameters for the {family_spec.name} family")


@dataclass(frozen=True)
class BenchReport:
    """
    Benchmark outcome over replicates.

    Attributes:
        function (str): Test function name.
        family (str): Lévy family name.
        kernel (str): Kernel kind.
        mse (tuple): Per-replicate MSE.
        amse (float): Mean of mse.
        se (float, optional): Sample SD / sqrt(R); None for a single replicate.
        mean_j (tuple): Posterior mean J per replicate.
        config (dict): Echo of the run settings.
        wall_clock (float): Seconds; excluded from comparisons and from to_dict.
    """

    function: str
    family: str
    kernel: str
    mse: tuple
    amse: float
    se: Optional[float]
    mean_j: tuple = ()
    config: dict = field(default_factory=dict)
    wall_clock: float = field(default=0.0, compare=False)

    @classmethod
    def from_replicates(cls, function: str, family: str, kernel: str, mse_values, mean_j=(), config=None,
                        wall_clock: float = 0.0) -> "BenchReport":
        values = tuple(float(v) for v in mse_values)
        if not values:
            raise ValueError("a benchmark report needs at least one replicate")
        se = None
        if len(values) == 1:
            warnings.warn("Only one replicate: the AMSE standard error is undefined")
        else:
            se = float(np.std(values, ddof=1) / np.sqrt(len(values)))
        return cls(function, family, kernel, values, float(np.mean(values)), se,
                   tuple(float(j) for j in mean_j), dict(config or {}), wall_clock)

    @property
    def replicates(self) -> int:
        return len(self.mse)

    def to_dict(self) -> dict:
        record = asdict(self)
        record.pop("wall_clock")
        record["mse"] = list(self.mse)
        record["mean_j"] = list(self.mean_j)
        record["replicates"] = self.replicates
        return record

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> pd.DataFrame:
        """One summary row: function, family, kernel, replicates, AMSE, SE."""
        return pd.DataFrame([{
            "function": self.function,
            "family": self.family,
            "kernel": self.kernel,
            "replicates": self.replicates,
            "amse": self.amse,
            "se": self.se,
        }])


def _run_replicate(args) -> tuple:
    index, kind, family_spec, spec, hyper, config, n, rsnr, seed_seq = args
    data_seq, chain_seq = seed_seq.spawn(2)
    try:
        data = gen_data(kind, n, rsnr, np.random.default_rng(data_seq))
        fit = run(data, hyper, family_spec, spec, config, rng=np.random.default_rng(chain_seq))
        error = mse(fit.mean, true_curve(kind, data.xs))
    except Exception as exc:
        raise BenchmarkError(index, f"{type(exc).__name__}: {exc}") from exc
    mean_j = float(np.mean([d.n_points for d in fit.draws]))
    logging.info(f"\treplicate {index}: MSE {error:.5f}, mean J {mean_j:.1f}")
    return error, mean_j


def run_benchmark(kind: BenchFunction, family_spec: FamilySpec, spec: KernelSpec, hyper: Hyperparams,
                  config: McmcConfig, replicates: int = DESK_REPLICATES, n: int = DEFAULT_N,
                  rsnr: float = DEFAULT_RSNR, workers: Optional[int] = None) -> BenchReport:
    """
    Simulate, fit and score `replicates` data sets.

    Replicate r draws its data and its chain from the two children of the
    r-th child of SeedSequence(config.seed), so the report does not depend
    on the number of workers.

    Args:
        kind (BenchFunction): Test function.
        family_spec (FamilySpec): Lévy family.
        spec (KernelSpec): Kernel family.
        hyper (Hyperparams): Prior hyperparameters.
        config (McmcConfig): Sampler settings; config.seed is the master seed.
        replicates (int): Number of replicate data sets.
        n (int): Points per data set.
        rsnr (float): Root signal-to-noise ratio.
        workers (int, optional): Process count; 1 runs in-process.

    Returns:
        BenchReport: Per-replicate MSE and their average.

    Raises:
        BenchmarkError: If any replicate fails.
    """
    if replicates < 1:
        raise ValueError(f"replicates must be positive, got {replicates}")
    started = time.perf_counter()
    seeds = np.random.SeedSequence(config.seed).spawn(replicates)
    jobs = [(r, kind, family_spec, spec, hyper, config, n, rsnr, seeds[r]) for r in range(replicates)]
    if workers == 1 or replicates == 1:
        results = [_run_replicate(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, jobs))
    elapsed = time.perf_counter() - started
    echo = {"n": n, "rsnr": rsnr, "seed": config.seed, "iterations": config.iterations,
            "burn_in": config.burn_in, "thin": config.thin, "hyper": hyper.as_dict()}
    report = BenchReport.from_replicates(kind.value, family_spec.name, spec.kind.value,
                                         [r[0] for r in results], [r[1] for r in results], echo, elapsed)
    logging.info(f"{kind.value}: AMSE {report.amse:.5f} over {replicates} replicates in {elapsed:.1f}s")
    return report


def _file_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def motorcycle_dataset() -> Dataset:
    """
    The 133-row motorcycle crash data: time after impact (ms) and head acceleration (g).

    Raises:
        DataIntegrityError: If the bundled file does not match its checksum.
    """
    raw = resources.files("lark_regression").joinpath("data").joinpath(MCYCLE_FILE).read_bytes()
    digest = _file_digest(raw)
    if digest != MCYCLE_SHA256:
        raise DataIntegrityError(f"{MCYCLE_FILE} checksum {digest} does not match {MCYCLE_SHA256}")
    frame = pd.read_csv(io.BytesIO(raw))
    return Dataset(frame["times"].to_numpy(), frame["accel"].to_numpy())
