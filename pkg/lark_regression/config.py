"""
Run configuration: one INI file with named sections, validated against a
fixed schema before anything is computed.

    [data]    path, x_column, y_column, dataset
    [kernel]  kind, convention, lower, upper, support_radius
    [family]  kind, alpha
    [hyper]   epsilon, a_gamma, b_gamma, a_eta, b_eta, a_lambda, b_lambda, omega_volume, a_rho, b_rho
    [mcmc]    sampler settings (see McmcConfig), chains, workers, grid_points
    [output]  directory, quantiles
    [prior]   realizations, n_points, grid_points, rho
    [elicit]  interval targets, coverages, budget, convention, fix_* parameters
    [bench]   function, replicates, n, rsnr, workers, table_hyper, table_kernel
    [besov]   source, path, column, index, chi, lam, rho, grid_points, refinements, s, p, q, m, sobolev_s

Overrides: --seed replaces [mcmc] seed, --out replaces [output] directory,
and LARK_OUTPUT_DIR replaces both for the output directory.
"""
import configparser
import io
import os
from dataclasses import dataclass, field, fields
from typing import Optional

from .bench import BenchFunction
from .elicit import ElicitationInfeasible, ElicitationTargets
from .kernels import KernelKind, KernelSpec, KernelSpecError, LambdaConvention
from .levy import FamilySpec, LevyDomainError
from .mcmc import McmcConfig, McmcConfigError
from .prior import Hyperparams, PriorError

OUTPUT_ENV = "LARK_OUTPUT_DIR"
HYPER_KEYS = ("epsilon", "a_gamma", "b_gamma", "a_eta", "b_eta", "a_lambda", "b_lambda", "omega_volume",
              "a_rho", "b_rho")


class ConfigError(ValueError):
    """Raised for unknown sections or keys, bad values, and missing required keys."""


def _floats(text: str) -> tuple:
    return tuple(float(part) for part in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "yes", "true", "on"):
        return True
    if lowered in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_TYPE_NAMES = {_floats: "list of numbers", _bool: "boolean"}
_MCMC_TYPES = {f.name: f.type for f in fields(McmcConfig)}

# section -> key -> (parser, default); a default of None means optional with no value
SCHEMA = {
    "data": {
        "path": (str, None),
        "x_column": (str, "x"),
        "y_column": (str, "y"),
        "dataset": (str, None),
    },
    "kernel": {
        "kind": (str, "gaussian"),
        "convention": (str, "linear"),
        "lower": (float, 0.0),
        "upper": (float, 10.0),
        "support_radius": (float, None),
    },
    "family": {
        "kind": (str, "symgamma"),
        "alpha": (float, None),
    },
    "hyper": {key: (float, None) for key in HYPER_KEYS},
    "mcmc": {
        "iterations": (int, 20000),
        "burn_in": (int, 5000),
        "thin": (int, 10),
        "seed": (int, 0),
        "target_accept": (float, 0.30),
        "adapt_exponent": (float, 0.6),
        "p_birth": (float, 0.2),
        "p_death": (float, 0.05),
        "p_update": (float, 0.75),
        "step_beta": (float, 1.0),
        "step_chi": (float, 0.5),
        "step_log_lambda": (float, 0.5),
        "step_log_eta": (float, 0.2),
        "step_log_rho": (float, 0.2),
        "a_sigma": (float, 0.1),
        "b_sigma": (float, 0.1),
        "likelihood": (_bool, True),
        "drift_check_every": (int, 1000),
        "chains": (int, 1),
        "workers": (int, None),
        "grid_points": (int, 0),
    },
    "output": {
        "directory": (str, "lark_output"),
        "quantiles": (_floats, (0.05, 0.95)),
    },
    "prior": {
        "realizations": (int, 5),
        "n_points": (int, None),
        "grid_points": (int, 512),
        "rho": (float, None),
    },
    "elicit": {
        "j_interval": (_floats, (5.0, 100.0)),
        "j_coverage": (float, 0.95),
        "beta_interval": (_floats, (-25.0, 25.0)),
        "beta_coverage": (float, 0.95),
        "trunc_budget": (float, 0.05),
        "lambda_interval": (_floats, (0.2, 20.0)),
        "lambda_coverage": (float, 0.95),
        "beta_convention": (str, "central"),
        "omega_volume": (float, 10.0),
        "fix_epsilon": (float, None),
        "fix_a_gamma": (float, None),
        "fix_b_gamma": (float, None),
        "fix_a_eta": (float, None),
        "fix_b_eta": (float, None),
    },
    "bench": {
        "function": (str, "blocks"),
        "replicates": (int, 10),
        "full_replicates": (int, 100),
        "n": (int, 1024),
        "rsnr": (float, 7.0),
        "workers": (int, None),
        "table_hyper": (_bool, True),
        "table_kernel": (_bool, True),
    },
    "besov": {
        "source": (str, "kernel"),
        "path": (str, None),
        "column": (str, "f"),
        "index": (int, 0),
        "chi": (float, 5.0),
        "lam": (float, 1.0),
        "rho": (float, None),
        "grid_points": (int, 4096),
        "refinements": (int, 1),
        "s": (float, 0.75),
        "p": (float, 2.0),
        "q": (float, 2.0),
        "m": (int, None),
        "sobolev_s": (float, None),
    },
}


@dataclass
class RunConfig:
    """
    Parsed, typed configuration.

    Attributes:
        sections (dict): section -> key -> value, defaults filled in.
        given (dict): section -> set of keys present in the file.
        source (str): Where the configuration came from.
    """

    sections: dict
    given: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def section(self, name: str) -> dict:
        return self.sections[name]

    def has(self, section: str, key: str) -> bool:
        return key in self.given.get(section, set())

    @property
    def seed(self) -> int:
        return self.sections["mcmc"]["seed"]

    @property
    def output_dir(self) -> str:
        return self.sections["output"]["directory"]

    def require(self, section: str, *keys) -> dict:
        values = self.sections[section]
        missing = [key for key in keys if values.get(key) is None]
        if missing:
            raise ConfigError(f"[{section}] is missing required key(s): {', '.join(missing)}")
        return values

    def kernel_spec(self) -> KernelSpec:
        kernel = self.sections["kernel"]
        try:
            return KernelSpec(KernelKind(kernel["kind"]), kernel["lower"], kernel["upper"],
                              LambdaConvention(kernel["convention"]), kernel["support_radius"])
        except ValueError as exc:
            if isinstance(exc, KernelSpecError):
                raise
            raise ConfigError(f"[kernel] {exc}") from None

    def family_spec(self) -> FamilySpec:
        family = self.sections["family"]
        try:
            return FamilySpec.from_name(family["kind"], family["alpha"])
        except LevyDomainError as exc:
            raise ConfigError(f"[family] {exc}") from None

    def hyperparams(self, omega_volume: Optional[float] = None) -> Hyperparams:
        """[hyper] as Hyperparams; omega_volume defaults to the kernel domain volume."""
        values = dict(self.require("hyper", *HYPER_KEYS[:7]))
        if values["omega_volume"] is None:
            values["omega_volume"] = omega_volume if omega_volume is not None else self.kernel_spec().volume
        for key in ("a_rho", "b_rho"):
            if values[key] is None:
                values.pop(key)
        return Hyperparams(**values)

    def mcmc_config(self) -> McmcConfig:
        values = {key: value for key, value in self.sections["mcmc"].items() if key in _MCMC_TYPES}
        values["quantiles"] = tuple(self.sections["output"]["quantiles"])
        try:
            return McmcConfig(**values)
        except McmcConfigError as exc:
            raise ConfigError(f"[mcmc] {exc}") from None

    def elicitation_targets(self) -> ElicitationTargets:
        values = self.sections["elicit"]
        for key in ("j_interval", "beta_interval", "lambda_interval"):
            if len(values[key]) != 2:
                raise ConfigError(f"[elicit] {key} needs two numbers, got {values[key]}")
        return ElicitationTargets(
            j_interval=tuple(values["j_interval"]),
            j_coverage=values["j_coverage"],
            beta_interval=tuple(values["beta_interval"]),
            beta_coverage=values["beta_coverage"],
            trunc_budget=values["trunc_budget"],
            lambda_interval=tuple(values["lambda_interval"]),
            lambda_coverage=values["lambda_coverage"],
            beta_convention=values["beta_convention"],
        )

    def fixed_parameters(self) -> dict:
        values = self.sections["elicit"]
        return {key[len("fix_"):]: value for key, value in values.items()
                if key.startswith("fix_") and value is not None}

    def bench_function(self) -> BenchFunction:
        name = self.sections["bench"]["function"]
        try:
            return BenchFunction(name.lower())
        except ValueError:
            choices = ", ".join(f.value for f in BenchFunction)
            raise ConfigError(f"[bench] unknown function {name!r}; choose one of {choices}") from None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """
    Parse and validate INI text.

    Raises:
        ConfigError: For unknown sections or keys and for values of the wrong type.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    sections = {name: {key: default for key, (_, default) in keys.items()} for name, keys in SCHEMA.items()}
    given = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{name}]; known sections are {', '.join(SCHEMA)}")
        given[name] = set()
        for key, raw in parser.items(name):
            if key not in SCHEMA[name]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{name}]")
            convert = SCHEMA[name][key][0]
            try:
                sections[name][key] = convert(raw) if raw.strip() else None
            except ValueError:
                raise ConfigError(f"{source}: [{name}] {key} = {raw!r} is not a valid {_TYPE_NAMES.get(convert, convert.__name__)}") from None
            given[name].add(key)
    return RunConfig(sections, given, source)


def load_config(path: Optional[str] = None, seed: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    """
    Read a configuration file and apply the command-line and environment overrides.

    Args:
        path (str, optional): INI file; schema defaults only when None.
        seed (int, optional): Replaces [mcmc] seed.
        out (str, optional): Replaces [output] directory.

    Returns:
        RunConfig: The validated configuration.
    """
    if path is None:
        config = parse_config("", "<defaults>")
    else:
        try:
            with open(path, encoding="utf-8") as handle:
                config = parse_config(handle.read(), path)
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    if seed is not None:
        config.sections["mcmc"]["seed"] = int(seed)
    if out is not None:
        config.sections["output"]["directory"] = out
    if os.environ.get(OUTPUT_ENV):
        config.sections["output"]["directory"] = os.environ[OUTPUT_ENV]
    return config


def hyper_fragment(hyper: Hyperparams, comment: Optional[str] = None) -> str:
    """A [hyper] section holding every Hyperparams field, ready to paste into a fit config."""
    writer = configparser.ConfigParser(interpolation=None)
    writer["hyper"] = {key: repr(float(value)) for key, value in hyper.as_dict().items()}
    buffer = io.StringIO()
    if comment:
        buffer.write("".join(f"# {line}\n" for line in comment.splitlines()))
    writer.write(buffer)
    return buffer.getvalue()


def is_infeasible(exc: Exception) -> bool:
    """Errors that mean the configuration describes an impossible model (exit status 3)."""
    return isinstance(exc, (ElicitationInfeasible, PriorError, KernelSpecError, LevyDomainError))
