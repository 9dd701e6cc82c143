"""Figures for the report commands, rendered to PNG next to the table output."""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 6.0 * (math.sqrt(5) - 1.0) / 2.0),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
    # keep the PNG bytes a function of the data only
    "svg.hashsalt": "optstop",
}


def _figure():
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
    return fig, ax


def _to_png(fig) -> bytes:
    buf = io.BytesIO()
    with plt.rc_context(STYLE):
        fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def h_curve(alphas, hs) -> bytes:
    fig, ax = _figure()
    ax.semilogx(alphas, hs, "o-", ms=3)
    ax.set_xlabel(r"level $\alpha$")
    ax.set_ylabel(r"$h(\alpha)$")
    return _to_png(fig)


def esl_curve(ells, closed, mc=None, mc_se=None) -> bytes:
    fig, ax = _figure()
    if closed is not None:
        ax.plot(ells, closed, "-", label="closed form")
    if mc is not None:
        ax.errorbar(ells, mc, yerr=[3 * s for s in mc_se], fmt="o", ms=3, label="Monte Carlo (3 SE)")
    ax.plot(ells, [math.sqrt(ell / (2 * math.pi)) for ell in ells], ":", color="grey",
            label=r"$\sqrt{\ell/2\pi}$")
    ax.set_xlabel(r"$\ell$")
    ax.set_ylabel(r"$E(S_\ell)_+$")
    ax.legend(frameon=False)
    return _to_png(fig)


def first_rejection_histogram(sample_sizes, counts, reps) -> bytes:
    fig, ax = _figure()
    ax.bar(sample_sizes, [c / reps for c in counts], width=0.8)
    ax.set_xlabel("first rejecting sample size m")
    ax.set_ylabel("proportion of replications")
    return _to_png(fig)


def compare_curves(table) -> bytes:
    """rho * sqrt(n) against n, one line per k, simulation with 3 SE bars."""
    fig, ax = _figure()
    rows = list(zip(*(table.column(c) for c in
                      ("n", "k", "rho_sim", "sim_se", "rho_sum_pred", "rho_sqrt_pred"))))
    for k in sorted({r[1] for r in rows}):
        sel = sorted((r for r in rows if r[1] == k), key=lambda r: r[0])
        ns = [r[0] for r in sel]
        scale = [math.sqrt(n) for n in ns]
        line = ax.errorbar(ns, [r[2] * s for r, s in zip(sel, scale)],
                           yerr=[3 * r[3] * s for r, s in zip(sel, scale)],
                           fmt="o", ms=3, label=f"simulated, k={k}")
        ax.plot(ns, [r[4] * s for r, s in zip(sel, scale)], "-", color=line[0].get_color(),
                label=f"sum formula, k={k}")
        ax.plot(ns, [r[5] * s for r, s in zip(sel, scale)], "--", color=line[0].get_color(),
                label=f"2h sqrt(k), k={k}")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel(r"$\sqrt{n}\,\rho_{n,k}$")
    ax.legend(frameon=False)
    return _to_png(fig)
