"""Command-line entry point: fixed point, exponent curves, verification and simulations.

Tables are CSV (17 significant digits) with a comment line giving the
(alpha, kappa, q*, psi*) context and a header row; reports are JSON with keys
{version, config, constants, cells, budgets, verdict}.  Exit codes: 0 ok,
1 failure (solver, simulation or a failed verification), 2 bad usage.
``--plot PATH`` additionally renders a matplotlib figure.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_ALPHA = 0.8330785997
CURVES = ("qrecursion", "ell", "H", "P", "B", "HPA")


class UsageError(Exception):
    pass


def _fmt(x):
    if x is None:
        return ""
    x = float(x)
    return repr(x) if not math.isfinite(x) else f"{x:.17g}"


def _clean(obj):
    """Make an object JSON-safe: numpy to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_csv(path, columns, rows, context):
    """CSV with a '#' context line, a header row and 17-digit numbers."""
    lines = ["# " + ",".join(f"{k}={_fmt(v) if isinstance(v, float) else v}"
                             for k, v in context.items())]
    lines.append(",".join(columns))
    for r in rows:
        lines.append(",".join(_fmt(v) for v in r))
    text = "\n".join(lines) + "\n"
    _emit(path, text)


def write_json(path, payload):
    _emit(path, json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _params(args):
    from .replica_saddle import ModelParams
    if not (math.isfinite(args.alpha) and args.alpha > 0):
        raise UsageError(f"--alpha must be positive, got {args.alpha}")
    if not math.isfinite(args.kappa):
        raise UsageError("--kappa must be finite")
    return ModelParams(args.alpha, args.kappa)


def _saddle(args):
    from .replica_saddle import solve_saddle
    return solve_saddle(_params(args))


def _context(args, sp):
    return {"alpha": float(args.alpha), "kappa": float(args.kappa),
            "q_star": float(sp.q_star), "psi_star": float(sp.psi_star)}


# ---------------------------------------------------------------------------
# fixed-point


def cmd_fixed_point(args):
    from .replica_saddle import h_star, p_star
    sp = _saddle(args)
    vals = {"q_star": sp.q_star, "psi_star": sp.psi_star, "at_slope": sp.at_slope,
            "G_star": sp.g_star, "H_star": h_star(sp), "P_star": p_star(sp),
            "certified": sp.certified}
    if args.format == "json":
        write_json(args.out, {"version": __version__, "config": _config(args), "values": vals})
    else:
        lines = [f"{k} = {v:.11f}" if isinstance(v, float) else f"{k} = {v}"
                 for k, v in vals.items()]
        _emit(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# curves


def curve_table(which, sp, npoints):
    """(columns, rows) for one of the exponent curves."""
    from . import overlap_exponents as oe
    from .replica_saddle import P_of_psi, R_of_q, p_star, h_star
    if which == "qrecursion":
        q = np.linspace(0.0, 0.99, npoints)
        return ["q", "P_of_R_q"], [(x, P_of_psi(R_of_q(x, sp.params))) for x in q]
    taus = np.linspace(-1.0, 1.0, npoints + 2)[1:-1]
    A = np.exp(2.0 * np.arctanh(taus))
    lam = np.asarray(oe.ell(A, sp))
    if which == "ell":
        rows = [(-1.0, oe.lambda_min(sp))] + list(zip(taus, lam)) + [(1.0, 1.0)]
        return ["tau", "lambda"], rows
    if which == "H":
        H = np.asarray(oe.H_of_A(A, sp))
        return ["lambda", "H"], list(zip(lam, H)) + [(1.0, -h_star(sp))]
    I0 = oe.I_s(0.0, 0.0, sp)
    if which == "P":
        P = [oe.P_of_lambda(float(l), sp, I_zero=I0) for l in lam]
        return ["lambda", "P"], list(zip(lam, P)) + [(1.0, -p_star(sp))]
    B = [oe.B_fn(float(l), -0.3 * float(l), sp, I0=oe.I_s(float(l), 0.0, sp)) for l in lam]
    if which == "B":
        return ["lambda", "s", "B"], [(l, -0.3 * l, b) for l, b in zip(lam, B)]
    if which == "HPA":
        H = np.asarray(oe.H_of_A(A, sp))
        P = [oe.P_of_lambda(float(l), sp, I_zero=I0) for l in lam]
        rows = [(l, h + p, h + p + b) for l, h, p, b in zip(lam, H, P, B)]
        # at lambda = 1 the B column has no finite-lambda formula; left blank
        rows.append((1.0, -h_star(sp) - p_star(sp), None))
        return ["lambda", "H_plus_P", "H_plus_P_plus_B"], rows
    raise UsageError(f"unknown curve {which!r}; choose from {', '.join(CURVES)}")


def cmd_curves(args):
    if args.which not in CURVES:
        raise UsageError(f"unknown curve {args.which!r}; choose from {', '.join(CURVES)}")
    if args.npoints < 2:
        raise UsageError("--npoints must be >= 2")
    sp = _saddle(args)
    cols, rows = curve_table(args.which, sp, args.npoints)
    write_csv(args.out, cols, rows, _context(args, sp))
    if args.plot:
        _plot_curve(args.plot, args.which, cols, rows)
    return EXIT_OK


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _plot_curve(path, which, cols, rows):
    plt = _plt()
    data = np.array([[np.nan if v is None else v for v in r] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for j in range(1, data.shape[1]):
        if cols[j] == "s":
            continue
        ax.plot(data[:, 0], data[:, j], label=cols[j])
    if which == "qrecursion":
        ax.plot(data[:, 0], data[:, 0], "k:", lw=0.8, label="diagonal")
    ax.axhline(0.0, color="grey", lw=0.5)
    ax.set_xlabel(cols[0])
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# verify


PARTS = {"all": ("A", "B", "C", "NEAR_ONE", "CONSTANTS"), "a": ("A",), "b": ("B",),
         "c": ("C",), "near-one": ("NEAR_ONE",), "constants": ("CONSTANTS",)}


def verification_payload(rep, args):
    from .replica_saddle import CONSTANTS
    cells = [c.as_dict() for c in rep.all_cells()]
    if rep.near_one is not None:
        cells.append(rep.near_one.as_dict())
    return {
        "version": __version__,
        "config": _config(args),
        "constants": CONSTANTS.as_dict(),
        "cells": cells,
        "budgets": rep.budgets,
        "verdict": rep.verdict,
        "first_failure": rep.first_failure,
        "coverage": rep.coverage,
        "endpoint_checks": [e.as_dict() for e in rep.endpoint_checks],
        "informational_checks": [e.as_dict() for e in rep.informational]
        + ([l.as_dict() for l in rep.near_one.info_links] if rep.near_one is not None else []),
        "constants_checks": [c.as_dict() for c in rep.constants_checks],
    }


def cmd_verify(args):
    from .condition_g_verifier import verify_condition_g
    if args.part not in PARTS:
        raise UsageError(f"unknown part {args.part!r}")
    if args.refine < 1 or args.subdivide < 0:
        raise UsageError("--refine must be >= 1 and --subdivide >= 0")
    rep = verify_condition_g(refine=args.refine, subdivide=args.subdivide,
                             threads=args.threads, parts=PARTS[args.part])
    payload = verification_payload(rep, args)
    # a partial run has no global verdict; judge it by its own checks
    ok = rep.verdict if args.part == "all" else _partial_ok(rep)
    payload["verdict"] = bool(ok)
    if args.format == "csv":
        cols = ["part", "tau_lo", "tau_hi", "lambda_lo", "lambda_hi", "bound_lo", "bound_hi",
                "budget", "pass"]
        rows = [(c["part"], c["tau_lo"], c["tau_hi"], c["lambda_lo"], c["lambda_hi"],
                 c["bound_lo"], c["bound_hi"], c["budget"], int(c["pass"]))
                for c in payload["cells"]]
        _write_mixed_csv(args.out, cols, rows, {"verdict": ok})
    else:
        write_json(args.out, payload)
    if args.plot:
        _plot_verify(args.plot, rep)
    return EXIT_OK if ok else EXIT_FAIL


def _partial_ok(rep):
    cells = all(c.passed for c in rep.all_cells())
    ends = all(e.passed for e in rep.endpoint_checks)
    near = rep.near_one is None or rep.near_one.passed
    consts = all(c.passed for c in rep.constants_checks)
    return cells and ends and near and consts


def _write_mixed_csv(path, cols, rows, context):
    lines = ["# " + ",".join(f"{k}={v}" for k, v in context.items()), ",".join(cols)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in r))
    _emit(path, "\n".join(lines) + "\n")


def _plot_verify(path, rep):
    plt = _plt()
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    groups = (("A_value", "value bound"), ("B_first_deriv", "first derivative bound"),
              ("C_second_deriv", "second derivative bound"))
    for ax, (prefix, title) in zip(axes, groups):
        for name, cells in sorted(rep.parts.items()):
            if not name.startswith(prefix):
                continue
            x = [0.5 * (c.lambda_bracket.lo + c.lambda_bracket.hi) for c in cells]
            y = [c.bound_value.hi if c.decisive == "hi" else c.bound_value.lo for c in cells]
            ax.plot(x, y, ".", ms=3, label=name)
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_title(title)
        ax.set_xlabel("lambda")
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# simulations


def cmd_tap(args):
    from .overlap_exponents import H_deriv, OverlapPoint
    from .tap_simulator import SimulationError, sample_disorder, sigma_sq_empirical, tap_iterate
    if args.n < 2 or args.t < 1 or args.seeds < 1:
        raise UsageError("--n >= 2, --t >= 1 and --seeds >= 1 required")
    p = _params(args)
    sp = _saddle(args)
    M = int(round(args.alpha * args.n))
    runs = []
    for k in range(args.seeds):
        seed = args.seed + k
        d = sample_disorder(M, args.n, seed)
        try:
            states = tap_iterate(d, p, args.t, sp)
        except SimulationError as exc:
            runs.append({"seed": seed, "aborted": str(exc)})
            continue
        steps = []
        prev = None
        for st in states:
            row = st.summary()
            row["step"] = (float(np.linalg.norm(st.m_vec - prev)) / math.sqrt(args.n)
                           if prev is not None else None)
            prev = st.m_vec
            steps.append(row)
        runs.append({"seed": seed, "q_t": states[-1].q_s, "psi_t": states[-1].psi_s,
                     "sigma_sq": sigma_sq_empirical(states[-1]),
                     "h_variance": float(np.var(states[-1].h_vec)), "iterations": steps})
    h2 = H_deriv(OverlapPoint(0.0, 0.0, 1.0), sp, 2)
    done = [r for r in runs if "aborted" not in r]
    summary = {"q_star": sp.q_star, "psi_star": sp.psi_star, "H_second_at_0": h2,
               "runs": len(runs), "aborted": len(runs) - len(done)}
    if done:
        q = np.array([r["q_t"] for r in done])
        summary.update({"mean_q_t": float(q.mean()), "mean_abs_q_t_minus_q_star":
                        float(np.mean(np.abs(q - sp.q_star))),
                        "mean_inv_sigma_sq": float(np.mean([1.0 / r["sigma_sq"] for r in done]))})
    write_json(args.out, {"version": __version__, "config": _config(args), "M": M,
                          "summary": summary, "runs": runs})
    if args.plot and done:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for r in done:
            ax.plot([s["iter"] for s in r["iterations"]], [s["q"] for s in r["iterations"]],
                    lw=0.7)
        ax.axhline(sp.q_star, color="k", ls=":", label="q*")
        ax.set_xlabel("iteration")
        ax.set_ylabel("q_s")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        plt.close(fig)
    return EXIT_FAIL if len(done) < len(runs) else EXIT_OK


def cmd_kimroche(args):
    from .tap_simulator import (base_case_target, kim_roche, kr_block_sizes, sample_disorder,
                                tap_target)
    if args.m < 1 or not 0 < args.delta < 1 or args.trials < 1:
        raise UsageError("--m >= 1, 0 < --delta < 1 and --trials >= 1 required")
    p = _params(args)
    N = int(round(args.m / args.alpha))
    width = max(1, sum(kr_block_sizes(args.m, args.delta)))
    sp = _saddle(args) if args.target == "tap" else None
    runs = []
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(args.trials):
            seed = args.seed + k
            if args.target == "tap":
                z = tap_target(args.m, N, p, sp, args.tap_iters, seed)
            else:
                z = base_case_target(args.m, N, args.delta, args.kappa, seed)
            d_hat = sample_disorder(args.m, width, seed + 10 ** 6)
            run = kim_roche(d_hat, z, args.delta, args.kappa, N=N, seed=seed)
            runs.append(dict(seed=seed, **run.summary()))
    succ = [r["success"] for r in runs]
    write_json(args.out, {"version": __version__, "config": _config(args), "N": N,
                          "N_hat": width, "success_fraction": float(np.mean(succ)),
                          "runs": runs})
    return EXIT_OK


def cmd_brute(args):
    from .brute_force_oracle import capacity_trials
    if not 1 <= args.n <= 26 or args.trials < 1:
        raise UsageError("--n in [1, 26] and --trials >= 1 required")
    res = capacity_trials(args.n, args.trials, args.kappa, args.seed, args.m_max)
    ratios = [r.M_N / args.n for r in res]
    context = {"alpha": "n/a", "kappa": float(args.kappa), "q_star": "n/a", "psi_star": "n/a",
               "N": args.n}
    rows = [(args.seed + i, r.M_N, r.M_N / args.n, int(r.censored)) for i, r in enumerate(res)]
    write_csv(args.out, ["seed", "M_N", "M_N_over_N", "censored"], rows, context)
    if args.summary:
        write_json(args.summary, {"version": __version__, "config": _config(args),
                                  "mean": float(np.mean(ratios)),
                                  "median": float(np.median(ratios)),
                                  "histogram": np.histogram(ratios, bins=10)[0].tolist(),
                                  "bin_edges": np.histogram(ratios, bins=10)[1].tolist()})
    if args.plot:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.hist(ratios, bins=15)
        ax.set_xlabel("M_N / N")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        plt.close(fig)
    return EXIT_OK


# ---------------------------------------------------------------------------


# settings that do not change the numbers stay out of the report
_NOT_CONFIG = ("func", "out", "plot", "summary", "threads")


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def build_parser():
    ap = argparse.ArgumentParser(prog="perceptron-capacity",
                                 description="Ising perceptron capacity and second-moment tools")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, alpha=True):
        if alpha:
            p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
        p.add_argument("--kappa", type=float, default=0.0)
        p.add_argument("--out", default="-", help="output file ('-' for stdout)")
        p.add_argument("--plot", default=None, help="also render a PNG figure to this path")

    p = sub.add_parser("fixed-point", help="replica-symmetric fixed point")
    common(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_fixed_point)

    p = sub.add_parser("curves", help="exponent curve tables")
    common(p)
    p.add_argument("--which", required=True)
    p.add_argument("--npoints", type=int, default=101)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("verify", help="grid verification of the exponent condition")
    common(p)
    p.add_argument("--part", default="all")
    p.add_argument("--refine", type=int, default=1)
    p.add_argument("--subdivide", type=int, default=6)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tap", help="TAP iteration Monte Carlo")
    common(p)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--t", type=int, default=30)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tap)

    p = sub.add_parser("kimroche", help="staged rounding trials")
    common(p)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", choices=("base-case", "tap"), default="base-case")
    p.add_argument("--tap-iters", type=int, default=30)
    p.set_defaults(func=cmd_kimroche)

    p = sub.add_parser("brute", help="exhaustive capacity M_N at small N")
    common(p, alpha=False)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--summary", default=None, help="JSON summary path")
    p.set_defaults(func=cmd_brute)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # solver or simulation failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
