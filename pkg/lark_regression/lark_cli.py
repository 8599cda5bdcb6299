#!/usr/bin/env python3
"""
|------------------------------------------------------------------|
|---------------------  Instructions  -----------------------------|
|------------------------------------------------------------------|
Fit, simulate and elicit Lévy Adaptive Regression Kernel models.

Subcommands:
    fit     posterior sampling by reversible-jump MCMC
    prior   draws from the hierarchical prior
    elicit  hyperparameters from prior-predictive targets
    bench   simulation study on the Donoho-Johnstone functions
    besov   Besov / Sobolev norm estimates of a grid function

Every subcommand reads one INI configuration (see configs/).

-------------------------------------------------------------------
To see the available options:

    lark --help

Examples:
    lark fit --config configs/motorcycle.ini

or
    lark elicit --config configs/elicit_symgamma.ini --table

or
    lark bench --config configs/blocks_symgamma.ini --seed 7 --out results/
"""
import argparse
import logging
import os
import sys
import warnings

import numpy as np
from scipy import stats

from . import records
from .bench import (FULL_REPLICATES, TABLE_KERNELS, BenchmarkError, DataIntegrityError, motorcycle_dataset,
                    run_benchmark, table_hyperparams)
from .config import ConfigError, hyper_fragment, is_infeasible, load_config
from .elicit import ElicitationError, ElicitationInfeasible, solve_hyper, solve_lambda
from .kernels import KernelIntegrationError, l2_norm_sq
from .mcmc import SamplerError, run, run_chains
from .norms import GridFunction, NormDomainError, besov_seminorm, kernel_grid, realization_besov_bound, sobolev_norm
from .prior import eval_realization, sample_prior
from .report_generator import FitSummary, bench_table, elicitation_report

COMMANDS = ("fit", "prior", "elicit", "bench", "besov")
EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_FAILURE = 0, 2, 3, 1


def get_parser():
    """
    Creates and returns an ArgumentParser object for this script.

    Returns:
        argparse.ArgumentParser: An ArgumentParser object for lark.
    """
    parser = argparse.ArgumentParser(
        prog="lark", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )

    parser.add_argument(
        "command",
        choices=COMMANDS,
        help="What to run.",
    )

    parser.add_argument(
        "-c",
        "--config",
        type=str,
        dest="config",
        action="store",
        help="Path of the INI run configuration. [default: schema defaults]",
    )

    parser.add_argument(
        "--seed",
        type=int,
        dest="seed",
        action="store",
        help="Seed overriding [mcmc] seed.",
    )

    parser.add_argument(
        "-o",
        "--out",
        type=str,
        dest="out",
        action="store",
        help="Output directory overriding [output] directory.",
    )

    parser.add_argument(
        "--full-scale",
        dest="full_scale",
        action="store_true",
        help="bench: run the full replicate count instead of the desk-scale one. [default: %(default)s]",
    )

    parser.add_argument(
        "-t", "--table",
        dest="table",
        required=False,
        action="store_true",
        help="Print console reports as tables. [default: %(default)s]",
    )

    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Increase output verbosity.",
    )

    return parser


def parse_arguments(argv=None):
    """
    Parse command-line arguments using the get_parser function.

    Returns:
        argparse.Namespace: A namespace object containing the parsed arguments.
    """
    parser = get_parser()
    args = parser.parse_args(argv)
    return args


def validate_args(args, parser):
    """
    Check flag combinations that argparse cannot express.

    Args:
        args (argparse.Namespace): Parsed arguments.
        parser (argparse.ArgumentParser): Used for error reporting.
    """
    if args.full_scale and args.command != "bench":
        parser.error("--full-scale only applies to the bench subcommand.")
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be a non-negative integer.")
    if args.config and not os.path.isfile(args.config):
        parser.error(f"configuration file {args.config} does not exist.")


def _load_data(config):
    data = config.section("data")
    if data["dataset"]:
        if data["dataset"].lower() != "motorcycle":
            raise ConfigError(f"[data] unknown bundled dataset {data['dataset']!r}; only 'motorcycle' is bundled")
        return motorcycle_dataset()
    config.require("data", "path")
    return records.read_dataset(data["path"], data["x_column"], data["y_column"])


def cmd_fit(config, args) -> int:
    """Sample the posterior; write draws.jsonl, summary.csv and diagnostics.json."""
    data = _load_data(config)
    spec = config.kernel_spec()
    family_spec = config.family_spec()
    hyper = config.hyperparams()
    mcmc = config.mcmc_config()
    settings = config.section("mcmc")
    grid = None
    if settings["grid_points"]:
        grid = np.linspace(spec.lower, spec.upper, settings["grid_points"])

    if settings["chains"] > 1:
        fit = run_chains(data, hyper, family_spec, spec, mcmc, settings["chains"], settings["workers"], grid)
    else:
        fit = run(data, hyper, family_spec, spec, mcmc, grid=grid)

    out = records.ensure_directory(config.output_dir)
    records.write_draws(os.path.join(out, "draws.jsonl"), fit.draws)
    records.write_table(os.path.join(out, "summary.csv"), fit.summary_frame())
    report = FitSummary(fit)
    records.write_json(os.path.join(out, "diagnostics.json"), {
        "acceptance": fit.acceptance,
        "step_sizes": fit.step_sizes,
        "j_histogram": report.j_histogram(),
        "posterior": report.summary_dict(),
        "max_cache_drift": fit.max_cache_drift,
        "draws": len(fit.draws),
        "n": data.n,
    })
    report.posterior_report(args.table)
    logging.info(f"Fit outputs are saved in {out}")
    return EXIT_OK


def cmd_prior(config, args) -> int:
    """Draw prior realizations; write realizations.csv and points.jsonl."""
    spec = config.kernel_spec()
    family_spec = config.family_spec()
    hyper = config.hyperparams()
    settings = config.section("prior")
    rng = np.random.default_rng(config.seed)
    grid = np.linspace(spec.lower, spec.upper, settings["grid_points"])
    states, curves = [], []
    for index in range(settings["realizations"]):
        state = sample_prior(hyper, family_spec, spec, rng, n_points=settings["n_points"], rho=settings["rho"])
        states.append(state)
        curves.append((index, grid, eval_realization(state, spec, grid)))
        logging.info(f"\trealization {index}: J = {state.n_points}")

    out = records.ensure_directory(config.output_dir)
    records.write_table(os.path.join(out, "realizations.csv"), records.realizations_frame(curves))
    records.write_draws(os.path.join(out, "points.jsonl"), states)
    print(f"Wrote {len(states)} prior realizations to {out}")
    return EXIT_OK


def cmd_elicit(config, args) -> int:
    """Solve for hyperparameters; write the [hyper] fragment to hyper.ini."""
    targets = config.elicitation_targets()
    family_spec = config.family_spec()
    settings = config.section("elicit")
    phi_norm_sq = None
    if config.has("kernel", "kind"):
        a_lambda, b_lambda = solve_lambda(*targets.lambda_interval, targets.lambda_coverage)
        lambda_law = stats.gamma(a_lambda, scale=1.0 / b_lambda)
        phi_norm_sq = l2_norm_sq(config.kernel_spec(), lambda_law, omega_volume=settings["omega_volume"]).value
    result = solve_hyper(targets, family_spec, settings["omega_volume"], config.fixed_parameters(), phi_norm_sq)
    elicitation_report(result, args.table)

    out = records.ensure_directory(config.output_dir)
    comment = f"elicited for the {family_spec.name} family from {config.source}"
    path = os.path.join(out, "hyper.ini")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(hyper_fragment(result.hyper, comment))
    logging.info(f"Hyperparameter fragment is saved in {path}")
    return EXIT_OK


def cmd_bench(config, args) -> int:
    """Run the simulation study for one test function; write bench_report.json and bench_summary.csv."""
    settings = config.section("bench")
    kind = config.bench_function()
    family_spec = config.family_spec()
    spec = TABLE_KERNELS[kind] if settings["table_kernel"] else config.kernel_spec()
    if settings["table_hyper"]:
        try:
            hyper = table_hyperparams(family_spec)
        except ValueError as exc:
            raise ConfigError(f"[bench] {exc}; set table_hyper = no and give [hyper]") from None
    else:
        hyper = config.hyperparams()
    replicates = settings["full_replicates"] if args.full_scale else settings["replicates"]
    if replicates < 1 or settings["n"] < 2:
        raise ConfigError(f"[bench] replicates and n must be positive, got {replicates} and {settings['n']}")
    if args.full_scale and replicates < FULL_REPLICATES:
        warnings.warn(f"full-scale run with only {replicates} replicates; the full-scale count is {FULL_REPLICATES}")
    logging.info(f"\t{kind.value}: {replicates} replicates with the {family_spec.name} prior")
    report = run_benchmark(kind, family_spec, spec, hyper, config.mcmc_config(), replicates,
                           settings["n"], settings["rsnr"], settings["workers"])

    out = records.ensure_directory(config.output_dir)
    with open(os.path.join(out, "bench_report.json"), "w", encoding="utf-8") as handle:
        handle.write(report.to_json() + "\n")
    records.write_table(os.path.join(out, "bench_summary.csv"), report.csv_row())
    print(bench_table([report]))
    return EXIT_OK


def _besov_source(config) -> list:
    """Grid functions to measure, finest last."""
    settings = config.section("besov")
    source = settings["source"].lower()
    if source == "kernel":
        spec = config.kernel_spec()
        sizes = [settings["grid_points"] * 2 ** k for k in range(max(1, settings["refinements"]))]
        return [kernel_grid(spec, settings["chi"], settings["lam"], n, settings["rho"]) for n in sizes]
    config.require("besov", "path")
    if source == "csv":
        frame = records.read_table(settings["path"], ["x", settings["column"]])
        xs = frame["x"].to_numpy()
        steps = np.diff(xs)
        if xs.size < 2 or not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0) or steps[0] <= 0:
            raise records.DataFormatError(f"{settings['path']}: x must be increasing and equally spaced")
        return [GridFunction(frame[settings["column"]].to_numpy(), xs[0], steps[0])]
    if source == "draws":
        spec = config.kernel_spec()
        states = records.read_draws(settings["path"])
        if not 0 <= settings["index"] < len(states):
            raise ConfigError(f"[besov] index {settings['index']} outside the {len(states)} draws in the file")
        state = states[settings["index"]]
        sizes = [settings["grid_points"] * 2 ** k for k in range(max(1, settings["refinements"]))]
        return [GridFunction.from_callable(lambda x: eval_realization(state, spec, x), spec.lower, spec.upper, n)
                for n in sizes]
    raise ConfigError(f"[besov] unknown source {settings['source']!r}; use kernel, csv or draws")


def cmd_besov(config, args) -> int:
    """Estimate norms of a grid function; write besov.json."""
    settings = config.section("besov")
    grids = _besov_source(config)
    refinement = []
    for grid in grids:
        estimate = besov_seminorm(grid, settings["s"], settings["p"], settings["q"], settings["m"])
        refinement.append({"points": grid.size, "value": estimate.value, "coarse": estimate.coarse})
        logging.info(f"\t{grid.size} points: {estimate.value:.6g}")
    finest = refinement[-1]
    payload = {
        "s": settings["s"], "p": settings["p"], "q": settings["q"], "m": settings["m"],
        "value": finest["value"],
        "coarse": finest["coarse"],
        "refinement": refinement,
    }
    if settings["source"].lower() == "draws":
        state = records.read_draws(settings["path"])[settings["index"]]
        payload["kernel_bound"] = realization_besov_bound(state, config.kernel_spec(), settings["s"], settings["p"],
                                                          settings["q"], grids[-1].size, settings["m"])
    if settings["sobolev_s"] is not None:
        payload["sobolev"] = {"s": settings["sobolev_s"], "value": sobolev_norm(grids[-1], settings["sobolev_s"])}

    out = records.ensure_directory(config.output_dir)
    records.write_json(os.path.join(out, "besov.json"), payload)
    print(f"Besov semi-norm (s={settings['s']}, p={settings['p']}, q={settings['q']}): {finest['value']:.6g}")
    return EXIT_OK


DISPATCH = {
    "fit": cmd_fit,
    "prior": cmd_prior,
    "elicit": cmd_elicit,
    "bench": cmd_bench,
    "besov": cmd_besov,
}


def run_command(args) -> int:
    """
    Load the configuration and run the selected subcommand.

    Returns:
        int: 0 on success, 2 for input errors, 3 for infeasible configurations, 1 otherwise.
    """
    try:
        config = load_config(args.config, args.seed, args.out)
        return DISPATCH[args.command](config, args)
    except ElicitationInfeasible as exc:
        print(f"lark {args.command}: infeasible targets: {exc}", file=sys.stderr)
        print(f"binding constraint: {exc.binding}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, records.DataFormatError) as exc:
        print(f"lark {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        if is_infeasible(exc):
            print(f"lark {args.command}: infeasible configuration: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        if isinstance(exc, (ElicitationError, NormDomainError)):
            print(f"lark {args.command}: {exc}", file=sys.stderr)
            return EXIT_INPUT
        if isinstance(exc, (SamplerError, BenchmarkError, DataIntegrityError, KernelIntegrationError)):
            print(f"lark {args.command}: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        raise


def main(argv=None):
    """
    Main function for the lark command.
    """
    args = parse_arguments(argv)

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(message)s")

        logging.info("User selection:")
        logging.info(f"\tcommand : {args.command}")
        logging.info(f"\tconfig  : {args.config}")
        logging.info(f"\tseed    : {args.seed}")
        logging.info(f"\tout     : {args.out}")

    validate_args(args, get_parser())
    status = run_command(args)
    if status:
        sys.exit(status)


if __name__ == "__main__":
    main()
