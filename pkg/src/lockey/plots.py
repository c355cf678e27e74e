"""Figure rendering for sweep reports.

The command-line front-end writes one PNG next to each sweep CSV.  The
Agg backend is forced before pyplot loads: report runs happen on
headless machines.
"""

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["plot_bounds_sweep", "plot_rate_sweep"]

_FIGSIZE = (6.4, 4.2)


def _power_axis(ax, powers: Sequence[float]) -> None:
    if min(powers) > 0 and max(powers) / min(powers) >= 10:
        ax.set_xscale("log")
    ax.set_xlabel("beacon power (linear)")
    ax.grid(True, which="both", alpha=0.3)


def plot_bounds_sweep(powers: Sequence[float], results, path: str) -> None:
    """Key-rate bound curves against beacon power.

    ``results`` holds one bounds estimate per power; error bars are the
    Monte-Carlo standard errors.
    """
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    lower = [r.lower for r in results]
    upper = [r.upper for r in results]
    ax.errorbar(powers, lower, yerr=[r.lower_stderr for r in results],
                marker="o", capsize=3, label="lower bound")
    ax.errorbar(powers, upper, yerr=[r.upper_stderr for r in results],
                marker="s", capsize=3, label="upper bound")
    ax.plot(powers, [r.i12 for r in results], ":", color="gray",
            label="pairwise information")
    _power_axis(ax, powers)
    ax.set_ylabel("key rate (bits/slot)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rate_sweep(
    powers: Sequence[float],
    rates: Sequence[float],
    path: str,
    skip_fractions: Optional[Sequence[Optional[float]]] = None,
) -> None:
    """Realized secure rate of the full pipeline against beacon power;
    failed runs enter as zero.  Skip fractions, when present, go on a
    second axis."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(powers, rates, marker="o", label="secure rate")
    _power_axis(ax, powers)
    ax.set_ylabel("key rate (bits/slot)")
    handles, labels = ax.get_legend_handles_labels()
    if skip_fractions is not None and any(s is not None for s in skip_fractions):
        twin = ax.twinx()
        pts = [(p, s) for p, s in zip(powers, skip_fractions) if s is not None]
        (line,) = twin.plot([p for p, _ in pts], [s for _, s in pts], "--",
                            color="tab:orange", marker="^", label="skip fraction")
        twin.set_ylabel("skip fraction")
        twin.set_ylim(0.0, 1.0)
        handles.append(line)
        labels.append("skip fraction")
    ax.legend(handles, labels)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
