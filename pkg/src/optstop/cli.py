"""Command-line front end.

Every command produces one table (CSV or JSON) and a run manifest. With
``--out PATH`` the table goes to PATH, the manifest to PATH.manifest.json and,
with ``--plot``, a figure to PATH with a .png suffix. Without ``--out`` the
table is printed and the manifest goes to stderr.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from . import asymptotics as asy
from . import mc_engine as mc
from . import report
from . import special_fn as sf
from .families import Family, TestConfig

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4

DEFAULT_H_ALPHAS = (0.05, 0.025, 0.01, 0.005, 0.001, 0.0005)
MAX_GRID_CELLS = 10_000


# ---------------------------------------------------------------- commands


def cmd_h_table(alphas) -> report.OutputTable:
    for i, a in enumerate(alphas):
        if not (0.0 < a < 1.0):
            raise ValueError(f"alphas[{i}] = {a!r} is not in (0, 1)")
    table = report.OutputTable(["alpha", "h", "h_rounded_2dp"])
    for a in alphas:
        h = sf.h_alpha(a).value
        table.add(float(a), h, round(h, 2))
    return table


def _resolve_esl_source(family: Family, esl_source: str) -> asy.EslSource:
    if esl_source in ("closed", "auto"):
        return asy.closed_form_source(family)
    src = asy.EslSource(esl_source)
    if src is not asy.EslSource.MONTE_CARLO and src is not asy.closed_form_source(family):
        raise ValueError(f"E(S_l)+ source {src.value!r} does not apply to family {family.value!r}")
    return src


def cmd_predict(family, n: int, k: int, alpha: float, mode: str = "sum", esl_source: str = "closed",
                reps: int = 10 ** 6, seed: int = 0, workers: int = 1) -> report.OutputTable:
    family = Family.parse(family)
    mode = asy.Mode(mode)
    table = report.OutputTable(
        ["row", "ell", "esl_plus", "term", "multiplier", "rho", "percent", "alpha_nk"]
    )
    if mode is asy.Mode.SQRT:
        pred = asy.predict_rho_sqrt(n, k, alpha)
        table.add("total", None, None, None, 2.0 * math.sqrt(k),
                  pred.rho, pred.percent, pred.alpha_nk)
        return table
    src = _resolve_esl_source(family, esl_source)
    if src is asy.EslSource.MONTE_CARLO:
        est = mc.estimate_esl_plus(family, k, reps, seed, workers)
        esl = list(est.means)
    else:
        esl = [asy.esl_plus_closed_form(family, ell) for ell in range(1, k + 1)]
    pred = asy.predict_rho_sum(n, k, alpha, esl, src)
    scale = pred.h.value / math.sqrt(n)
    partial = 0.0
    for ell, (v, term) in enumerate(zip(esl, pred.terms), start=1):
        partial += term
        rho = scale * sf.SQRT2PI * partial
        table.add("term", ell, v, term, sf.SQRT2PI * partial, rho, 100.0 * rho, alpha * (1.0 + rho))
    table.add("total", None, None, None, sf.SQRT2PI * math.fsum(pred.terms), pred.rho, pred.percent, pred.alpha_nk)
    return table


def cmd_simulate(family, n: int, k: int, alpha: float, reps: int, seed: int = 0, workers: int = 1,
                 base: str = "exact"):
    """Returns (table, estimate)."""
    config = TestConfig(family, alpha, n, k)
    est = mc.simulate_alpha_nk(config, reps, seed, workers, base)
    table = report.OutputTable(
        ["record", "m", "count", "proportion", "alpha_hat", "se", "ci95_low", "ci95_high", "rho_hat", "rho_se"]
    )
    lo, hi = est.ci95
    table.add("alpha_nk", None, est.rejections, est.alpha_hat_nk, est.alpha_hat_nk, est.se, lo, hi,
              est.rho_hat, est.rho_se)
    c0 = est.first_rejection_histogram[0]
    lo0, hi0 = mc.wilson_interval(c0, est.reps)
    se0 = math.sqrt(est.alpha_hat_n * (1.0 - est.alpha_hat_n) / est.reps)
    table.add("alpha_n", n, c0, est.alpha_hat_n, est.alpha_hat_n, se0, lo0, hi0,
              est.alpha_hat_n / alpha - 1.0, se0 / alpha)
    cumulative = est.alpha_hat_by_budget()
    for m, count, cum in zip(est.sample_sizes, est.first_rejection_histogram, cumulative):
        table.add("first_rejection", m, count, count / est.reps, float(cum), None, None, None,
                  float(cum) / alpha - 1.0, None)
    table.add("no_rejection", None, est.reps - est.rejections, 1.0 - est.alpha_hat_nk,
              None, None, None, None, None, None)
    return table, est


def _parse_grid(grid, name):
    values = [int(v) for v in grid]
    if not values:
        raise ValueError(f"{name} must not be empty")
    return values


def cmd_compare(family, n_grid, k_grid, alpha: float, reps: int, seed: int = 0, workers: int = 1,
                tol: float = 1e-13) -> report.OutputTable:
    family = Family.parse(family)
    ns = _parse_grid(n_grid, "n grid")
    ks = _parse_grid(k_grid, "k grid")
    if len(ns) * len(ks) > MAX_GRID_CELLS:
        raise ValueError(f"grid has {len(ns) * len(ks)} cells, limit is {MAX_GRID_CELLS}")
    if any(k < 1 for k in ks):
        raise ValueError("k grid values must be >= 1")
    table = report.OutputTable(
        ["n", "k", "rho_sim", "rho_sum_pred", "rho_sqrt_pred", "rho_exact_quad", "sim_se"]
    )
    cell = 0
    for n in ns:
        for k in ks:
            est = mc.simulate_alpha_nk(TestConfig(family, alpha, n, k), reps,
                                       mc.mix64(seed, cell), workers)
            cell += 1
            exact = None
            if family is Family.GAUSS and k == 1:
                exact = asy.exact_gauss_k1(n, alpha, tol).excess / alpha
            table.add(n, k, est.rho_hat, asy.predict_rho_closed_form(family, n, k, alpha).rho,
                      2.0 * sf.h_alpha(alpha).value * math.sqrt(k / n), exact, est.rho_se)
    return table


def cmd_kac_check(k_max: int, dist_preset: str = "fair") -> report.OutputTable:
    try:
        dist = asy.WALK_PRESETS[dist_preset]()
    except KeyError:
        raise ValueError(f"unknown walk preset {dist_preset!r}; choose from {sorted(asy.WALK_PRESETS)}") from None
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if len(dist.support) ** k_max > asy.ENUMERATION_BUDGET:
        # fail before enumerating the feasible smaller k
        raise asy.EnumerationBudgetError(
            f"{len(dist.support)}^{k_max} paths exceeds the budget of {asy.ENUMERATION_BUDGET}"
        )
    table = report.OutputTable(["k", "lhs", "rhs", "equal", "lhs_float", "rhs_float"])
    for k in range(1, k_max + 1):
        lhs, rhs = asy.kac_both_sides_exact(dist, k)
        table.add(k, lhs, rhs, lhs == rhs, float(lhs), float(rhs))
    return table


def cmd_esl(family, l_max: int, source: str = "closed", reps: int = 10 ** 6, seed: int = 0,
            workers: int = 1) -> report.OutputTable:
    family = Family.parse(family)
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    if source not in ("closed", "mc", "both"):
        raise ValueError(f"source must be closed, mc or both, got {source!r}")
    est = mc.estimate_esl_plus(family, l_max, reps, seed, workers) if source != "closed" else None
    table = report.OutputTable(["ell", "closed_form", "lower_bound", "mc_estimate", "mc_se", "z_score"])
    bounds = asy.esl_lower_bound_check(family, l_max)
    for ell, closed, bound in bounds:
        closed_val = closed if source != "mc" else None
        m = est.means[ell - 1] if est else None
        s = est.ses[ell - 1] if est else None
        z = (m - closed) / s if est and s > 0 else None
        table.add(ell, closed_val, bound, m, s, z)
    return table


def cmd_vbe_check(kernel: str, ns, ps, reps: int, seed: int = 0, workers: int = 1) -> report.OutputTable:
    table = report.OutputTable(
        ["kernel", "n", "p", "lhs", "lhs_se", "rhs", "rhs_se", "margin_se", "margin_in_se", "holds"]
    )
    cell = 0
    for n in ns:
        for p in ps:
            r = mc.vbe_bound_check(kernel, n, p, reps, mc.mix64(seed, cell), workers)
            cell += 1
            table.add(kernel, n, float(p), r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.margin_se,
                      r.margin_in_se, r.lhs <= r.rhs)
    return table


# ---------------------------------------------------------------- argument parsing


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()] if text.strip() else []


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()] if text.strip() else []


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=report.FORMATS, default="csv")
    common.add_argument("--out", type=Path, default=None, help="output file; manifest written next to it")
    common.add_argument("--plot", action="store_true", help="also render a PNG figure next to --out")

    mc_flags = argparse.ArgumentParser(add_help=False)
    mc_flags.add_argument("--reps", type=int, default=10 ** 6)
    mc_flags.add_argument("--seed", type=int, default=0)
    mc_flags.add_argument("--workers", type=int, default=1)

    test_flags = argparse.ArgumentParser(add_help=False)
    test_flags.add_argument("--family", choices=[f.value for f in Family], default="gauss")
    test_flags.add_argument("--alpha", type=float, default=0.05)

    parser = argparse.ArgumentParser(prog="optstop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("h-table", parents=[common], help="tabulate h(alpha)")
    p.add_argument("--alphas", type=_float_list, default=list(DEFAULT_H_ALPHAS),
                   help="comma-separated levels")

    p = sub.add_parser("predict", parents=[common, test_flags, mc_flags], help="asymptotic rho_{n,k}")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=[m.value for m in asy.Mode], default="sum")
    p.add_argument("--esl-source", default="closed",
                   choices=["closed"] + [s.value for s in asy.EslSource])

    p = sub.add_parser("simulate", parents=[common, test_flags, mc_flags], help="Monte Carlo alpha_{n,k}")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--base", choices=["exact", "stream"], default="exact")

    p = sub.add_parser("compare", parents=[common, test_flags, mc_flags],
                       help="simulation vs predictors over an (n, k) grid")
    p.add_argument("--n-grid", type=_int_list, required=True)
    p.add_argument("--k-grid", type=_int_list, required=True)
    p.add_argument("--tol", type=float, default=1e-13)

    p = sub.add_parser("kac-check", parents=[common], help="exact Kac identity check")
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--dist", choices=sorted(asy.WALK_PRESETS), default="fair")

    p = sub.add_parser("esl", parents=[common, mc_flags], help="E(S_l)+ table")
    p.add_argument("--family", choices=[f.value for f in Family], default="gauss")
    p.add_argument("--l-max", type=int, required=True)
    p.add_argument("--source", choices=["closed", "mc", "both"], default="closed")

    p = sub.add_parser("vbe-check", parents=[common, mc_flags], help="von Bahr-Esseen bound check")
    p.add_argument("--kernel", choices=mc.VBE_KERNELS, default="normal_product")
    p.add_argument("--n", type=_int_list, default=[5, 10, 50])
    p.add_argument("--p", type=_float_list, default=[1.0, 1.5, 2.0])

    p = sub.add_parser("exact-k1", parents=[common], help="quadrature alpha_{n,1} for the Gauss test")
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=1e-13)
    return parser


def cmd_exact_k1(ns, alpha: float, tol: float = 1e-13) -> report.OutputTable:
    h = sf.h_alpha(alpha).value
    table = report.OutputTable(["n", "alpha_n1", "rho", "sqrt_n_rho", "h", "quad_error", "panels"])
    for n in ns:
        r = asy.exact_gauss_k1(n, alpha, tol)
        rho = r.excess / alpha
        table.add(n, r.value, rho, math.sqrt(n) * rho, h, r.error, r.panels)
    return table


def _run(args):
    """Dispatch; returns (table, figure bytes or None, exit code)."""
    figure = None
    code = EXIT_OK
    if args.command == "h-table":
        table = cmd_h_table(args.alphas)
        if args.plot and table.rows:
            from . import plots
            figure = plots.h_curve(table.column("alpha"), table.column("h"))
    elif args.command == "predict":
        table = cmd_predict(args.family, args.n, args.k, args.alpha, args.mode, args.esl_source,
                            args.reps, args.seed, args.workers)
    elif args.command == "simulate":
        table, est = cmd_simulate(args.family, args.n, args.k, args.alpha, args.reps, args.seed,
                                  args.workers, args.base)
        if args.plot:
            from . import plots
            figure = plots.first_rejection_histogram(est.sample_sizes, est.first_rejection_histogram, est.reps)
    elif args.command == "compare":
        table = cmd_compare(args.family, args.n_grid, args.k_grid, args.alpha, args.reps, args.seed,
                            args.workers, args.tol)
        if args.plot:
            from . import plots
            figure = plots.compare_curves(table)
    elif args.command == "kac-check":
        table = cmd_kac_check(args.k_max, args.dist)
        if not all(table.column("equal")):
            code = EXIT_INVARIANT
    elif args.command == "esl":
        table = cmd_esl(args.family, args.l_max, args.source, args.reps, args.seed, args.workers)
        if args.plot:
            from . import plots
            mc_vals = table.column("mc_estimate") if args.source != "closed" else None
            figure = plots.esl_curve(table.column("ell"),
                                     table.column("closed_form") if args.source != "mc" else None,
                                     mc_vals, table.column("mc_se") if mc_vals else None)
    elif args.command == "vbe-check":
        table = cmd_vbe_check(args.kernel, args.n, args.p, args.reps, args.seed, args.workers)
        if not all(table.column("holds")):
            code = EXIT_INVARIANT
    elif args.command == "exact-k1":
        table = cmd_exact_k1(args.n, args.alpha, args.tol)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown command {args.command!r}")
    return table, figure, code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.plot and args.out is None:
        print("error: --plot requires --out", file=sys.stderr)
        return EXIT_USAGE

    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ("command", "out", "format", "plot")}
    params["format"] = args.format
    started = time.perf_counter()
    try:
        table, figure, code = _run(args)
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = table.render(args.format)
    manifest = report.RunManifest(
        command=args.command,
        parameters=params,
        seed=getattr(args, "seed", None),
        duration_s=time.perf_counter() - started,
        output_sha256=report.digest(text),
    )
    if args.out is None:
        sys.stdout.write(text)
        sys.stderr.write(manifest.to_json())
    else:
        report.atomic_write(args.out, text)
        manifest.output_path = str(args.out)
        if figure is not None:
            fig_path = report.figure_path(args.out)
            report.atomic_write(fig_path, figure)
            manifest.figure_path = str(fig_path)
        report.atomic_write(report.manifest_path(args.out), manifest.to_json())
    if code == EXIT_INVARIANT:
        print("invariant violation: see table rows", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
