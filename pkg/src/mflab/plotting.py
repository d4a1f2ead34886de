"""SVG figures for experiment reports.

Figures are built on bare ``Figure`` objects with the Agg canvas, never
through pyplot, so they are safe in worker processes and batch jobs. SVG
output is made reproducible by fixing the id hash salt and dropping the
date stamp.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "svg.hashsalt": "mflab",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig: Figure, path) -> None:
    with matplotlib.rc_context(_STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _new(width=5.0, height=3.2):
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(width, height), layout="constrained")
        ax = fig.add_subplot()
    return fig, ax


def sup_deviation_histogram(path, sup_values, N: int, epsilons=(), bins: int = 30) -> None:
    fig, ax = _new()
    ax.hist(np.asarray(sup_values), bins=bins, color="#4c72b0", alpha=0.85)
    for eps in epsilons:
        ax.axvline(eps, color="#c44e52", ls="--", lw=1)
        ax.text(eps, ax.get_ylim()[1] * 0.95, f" ε={eps:g}", color="#c44e52", va="top")
    ax.set_xlabel("conservative sup-deviation  sup |X(t) - x(t)|₂")
    ax.set_ylabel("replicas")
    ax.set_title(f"N = {N}")
    _save(fig, path)


def variance_curve(path, times, variance, stderr, bound, N: int) -> None:
    fig, ax = _new()
    times = np.asarray(times)
    ax.errorbar(times, variance, yerr=2 * np.asarray(stderr), marker="o", ms=3,
                capsize=2, label="empirical total variance")
    ax.plot(times, bound, color="#c44e52", ls="--", label="variance bound")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("Σᵢ Var[Xᵢ(t)]")
    ax.set_title(f"N = {N}")
    ax.legend(frameon=False)
    _save(fig, path)


def deviation_vs_n(path, Ns, medians, q90=None) -> None:
    fig, ax = _new()
    Ns = np.asarray(Ns, dtype=float)
    ax.loglog(Ns, medians, marker="o", label="median sup-deviation")
    if q90 is not None:
        ax.loglog(Ns, q90, marker="s", ls=":", label="90th percentile")
    if len(Ns) > 1:
        ref = medians[0] * np.sqrt(Ns[0] / Ns)
        ax.loglog(Ns, ref, color="grey", lw=0.8, ls="--", label="∝ N^-1/2")
    ax.set_xlabel("N")
    ax.set_ylabel("sup-deviation")
    ax.legend(frameon=False)
    _save(fig, path)
