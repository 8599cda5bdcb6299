import warnings

import numpy as np
import pandas as pd


def compute_summary_stats(df: pd.DataFrame, field_name: str, verbose=False) -> dict:
    """
    Compute the count, mean, min and max of a DataFrame column.

    Parameters:
        df (pd.DataFrame): The input DataFrame.
        field_name (str): The column to summarise.
        verbose (bool): Whether to also print the statistics (default False).

    Returns:
        dict: {field_name: {"count", "mean", "min", "max"}}.

    Example:
        trace = pd.DataFrame({"J": [3, 4, 4, 5, 6]})
        result_dict = compute_summary_stats(trace, "J")
    """
    summary = df[field_name].describe()
    count = summary.loc["count"]
    mean_val = summary.loc["mean"]
    min_val = summary.loc["min"]
    max_val = summary.loc["max"]
    result_dict = {
        field_name: {"count": count, "mean": mean_val, "min": min_val, "max": max_val}
    }
    if verbose:
        result_str = (
            f"Mean {field_name}: {mean_val:.4g}\n"
            f"Min {field_name}: {min_val:.4g}\n"
            f"Max {field_name}: {max_val:.4g}"
        )
        print(result_str)
    return result_dict


def j_bins(values) -> tuple:
    """Integer-aligned bins and labels covering the observed J values."""
    top = int(np.max(values)) if len(values) else 0
    width = max(1, int(np.ceil((top + 1) / 10)))
    edges = list(range(0, top + width + 1, width))
    labels = [f"{lo}" if width == 1 else f"{lo}-{lo + width - 1}" for lo in edges[:-1]]
    return edges, labels


def bin_summary(df: pd.DataFrame, field_name: str, bins: list = None, labels: list = None,
                verbose: bool = True) -> pd.DataFrame:
    """
    Percentage of a column's values in each bin.

    Parameters:
        df (pd.DataFrame): The input DataFrame.
        field_name (str): The column to bin.
        bins (list): Bin edges; bins are closed on the left. Defaults to j_bins of the column.
        labels (list): Bin labels.
        verbose (bool): Print the table.

    Returns:
        pd.DataFrame: One row per bin with the percentage of values.
    """
    if bins is None:
        bins, labels = j_bins(df[field_name].to_numpy())

    binned = pd.cut(df[field_name], bins=bins, include_lowest=True, right=False, labels=labels)
    percentages = binned.value_counts(normalize=True, sort=False) * 100
    table = percentages.rename_axis(field_name).reset_index(name="Draws %")
    if verbose:
        shown = table.assign(**{"Draws %": table["Draws %"].map("{:.2f}%".format)})
        print(shown.to_string(index=False))
    return table


class FitSummary:
    """
    Console report of a posterior fit.

    Attributes:
        fit (FitResult): The fitted chain(s).
        trace (pd.DataFrame): One row per kept draw (J, gamma, eta, sigma2[, rho]).
    """

    def __init__(self, fit):
        self.fit = fit
        self.trace = fit.trace_frame()
        if self.trace.empty:
            warnings.warn("Warning! No posterior draws were kept!")

    def summary_dict(self) -> dict:
        result_dict = {}
        for field in self.trace.columns:
            result_dict.update(compute_summary_stats(self.trace, field))
        return result_dict

    def j_histogram(self) -> dict:
        """Posterior frequency of each J value."""
        counts = self.trace["J"].value_counts().sort_index()
        return {int(j): int(count) for j, count in counts.items()}

    def posterior_report(self, table=False) -> None:
        """
        Print posterior summaries of the kept draws.

        Parameters:
        -----------
        table (bool, optional):
                If True, prints the summary statistics as a markdown table. Defaults to False.
        """
        if self.trace.empty:
            return
        result_dict = self.summary_dict()
        if table:
            df = pd.DataFrame(result_dict).T[["mean", "min", "max"]]
            print(df.to_markdown(floatfmt=".4g"))
            print()
            print(self.fit.acceptance_frame().to_markdown(index=False, floatfmt=".3f"))
        else:
            print("Posterior summary of the LARK fit")
            print("Number of draws : ", len(self.trace))
            for key, inner_dict in result_dict.items():
                print(f"{key}:")
                print(f"\tmean: {inner_dict['mean']:.4g}")
                print(f"\tmin: {inner_dict['min']:.4g}")
                print(f"\tmax: {inner_dict['max']:.4g}")
            print("------------------------")
            print("Acceptance rates:")
            for move, rate in self.fit.acceptance.items():
                print(f"\t{move}: {rate:.3f}")
            print("------------------------")
            print("Number of kernels:")
            bin_summary(self.trace, "J")


def bench_table(reports) -> str:
    """Markdown table with one row per benchmark report: function, family, kernel, AMSE (SE)."""
    rows = pd.concat([report.csv_row() for report in reports], ignore_index=True)
    rows["AMSE (SE)"] = [
        f"{amse:.4f} ({se:.4f})" if se is not None and np.isfinite(se) else f"{amse:.4f} (-)"
        for amse, se in zip(rows["amse"], rows["se"])
    ]
    return rows[["function", "family", "kernel", "replicates", "AMSE (SE)"]].to_markdown(index=False)


def elicitation_report(result, table=False) -> None:
    """Print elicited hyperparameters, constraint residuals and achieved prior-predictive values."""
    hyper = pd.Series(result.hyper.as_dict(), name="value")
    achieved = pd.Series(result.achieved, name="value")
    if table:
        print(hyper.to_frame().to_markdown(floatfmt=".5g"))
        print()
        print(result.report_frame().to_markdown(index=False, floatfmt=".2e"))
        return
    print("Elicited hyperparameters")
    for key, value in hyper.items():
        print(f"\t{key}: {value:.5g}")
    print("Constraint residuals")
    for key, value in result.residuals.items():
        print(f"\t{key}: {value:+.2e}")
    print("Achieved")
    for key, value in achieved.items():
        print(f"\t{key}: {value:.4f}")
