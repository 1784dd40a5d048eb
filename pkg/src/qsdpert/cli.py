"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 domain or assumption error,
3 numerical failure.  Curves and tables are written as CSV, scalar reports
as JSON, every float with 17 significant digits.  A run manifest goes to
``<out>.manifest.json`` next to the output file, or to stderr when the
output is stdout.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys

import numpy as np

from . import __version__
from . import bounds, chain, diffusion, logistic, spectral
from .errors import AssumptionViolated, DomainError, NumericalError

THREADS_ENV = "QSDPERT_THREADS"
FIGURE_M = {1: 2.0, 2: 10.0, 3: 40.0}
FIGURE_POINTS = 400


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        # round-trips exactly; json would otherwise use repr
        return float(format(float(v), ".17g"))
    return v


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


_INTERNAL_ARGS = {"func", "out", "parser", "command", "command_path"}


def _manifest(args, summary=None):
    params = {k: v for k, v in sorted(vars(args).items())
              if k not in _INTERNAL_ARGS and not k.endswith("_command")}
    m = {
        "subcommand": " ".join(args.command_path),
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "artifact_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if summary:
        m["summary"] = summary
    return m


def _emit(args, text, summary=None, extra=None):
    """Write ``text`` to --out (or stdout) and the manifest beside it.

    ``extra`` is an optional (path, text) pair for a second output file.
    """
    manifest = json_text(_manifest(args, summary))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
        with open(args.out + ".manifest.json", "w", encoding="utf-8") as f:
            f.write(manifest)
    else:
        sys.stdout.write(text)
        sys.stderr.write(manifest)
    if extra is not None:
        path, body = extra
        with open(path, "w", encoding="utf-8") as f:
            f.write(body)


# -- handlers ----------------------------------------------------------------


def _cfg(args):
    if args.ode_step is None:
        return spectral.EigenSolveConfig.for_M(args.M)
    return spectral.EigenSolveConfig.for_M(args.M, ode_step=args.ode_step)


def cmd_spectrum(args):
    res = spectral.spectrum(args.M, args.count, _cfg(args))
    _emit(args, csv_text(["n", "eigenvalue"], res.eigenvalues))


def cmd_s_curve(args):
    if not args.lambda_min < args.lambda_max:
        raise DomainError("lambda-min must be below lambda-max")
    if args.steps < 2:
        raise DomainError("steps must be >= 2")
    lams = np.linspace(args.lambda_min, args.lambda_max, args.steps)
    _emit(args, csv_text(["lambda", "s_value"], spectral.s_curve(args.M, lams, _cfg(args))))


def figure_lambdas(M):
    hi = min(M, 6.0)
    return np.linspace(0.05, hi, FIGURE_POINTS + 2)[1:-1]


def cmd_figure_data(args):
    M = FIGURE_M[args.fig]
    lams = figure_lambdas(M)
    curve = spectral.s_curve(M, lams, spectral.EigenSolveConfig.for_M(M))
    _emit(args, csv_text(["lambda", "s_value"], curve), {"M": M})


def cmd_bounds_main(args):
    gap = bounds.SpectralGapData.from_gap(args.nu)
    pert = bounds.PerturbationData(args.hnorm, args.hphi, args.hphi_centered)
    report = {
        "nu": args.nu,
        "main_bound": bounds.eigenfunction_bound(gap, pert),
        "dk_bound": bounds.davis_kahan_bound(gap, args.hphi),
        "weyl_radius": args.hnorm,
    }
    _emit(args, json_text(report))


def cmd_ou_constants(args):
    c = bounds.ou_constants(args.delta)
    _emit(args, json_text({"delta": args.delta, "c2": c.c2, "c3": c.c3,
                           "M_min": c.M_min, "Z": c.Z}))


def cmd_oracle(args):
    if args.seeds < 1:
        raise DomainError("seeds must be >= 1")
    rows = []
    for seed in range(args.seeds):
        inst = bounds.finite_dim_oracle(args.dim, seed)
        rows.append((
            seed,
            inst.exact_eigvec_dist,
            bounds.eigenfunction_bound(inst.gap, inst.pert),
            bounds.davis_kahan_bound(inst.gap, inst.pert.h_phi_norm),
            max(abs(x) for x in inst.exact_eigval_shifts),
        ))
    _emit(args, csv_text(["seed", "exact_dist", "main_bound", "dk_bound", "weyl_max_shift"],
                         rows))


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DomainError(f"cannot read config {path}: {e}") from e


def chains_from_config(conf):
    try:
        Q, kappa, kappa_t = conf["Q"], conf["kappa"], conf["kappa_tilde"]
        x0 = conf.get("x0", 0)
        n_max = int(conf["n_max"])
    except (KeyError, TypeError) as e:
        raise DomainError(f"chain config is missing field {e}") from e
    base = chain.KilledChain(Q, kappa, x0)
    return base, base.with_kappa(kappa_t), n_max


def cmd_chain_verify(args):
    base, tilde, n_max = chains_from_config(_load_json(args.config))
    rep = chain.verify_prop1(base, tilde, n_max, args.rigorous)
    summary = {"all_satisfied": rep.all_satisfied, "truncated_at": rep.truncated_at}
    _emit(args, csv_text(["n", "tv_exact", "bound", "margin"], rep.rows()), summary)


def cmd_chain_simulate(args):
    base, tilde, n_max = chains_from_config(_load_json(args.config))
    c = tilde if args.tilde else base
    n = args.n if args.n is not None else n_max
    sample = chain.simulate_chain(c, n, args.paths, args.seed, args.threads)
    exact = chain.conditional_distribution(c, n)
    rows = [(i, sample.distribution[i], exact[i]) for i in range(c.n_states)]
    summary = {"tv": chain.tv_distance(sample.distribution, exact),
               "survival_fraction": sample.survival_fraction}
    _emit(args, csv_text(["state", "empirical", "exact"], rows), summary)


def cmd_simulate(args):
    dspec = diffusion.DiffusionSpec.ou()
    kspec = diffusion.KillingSpec.truncated_quadratic(args.M)
    curve = diffusion.survival_curve(dspec, kspec, args.T, args.dt, args.particles, args.seed,
                                     args.checkpoints, threads=args.threads)
    hist = diffusion.qsd_estimate(curve.ensemble, args.bins, (args.range_min, args.range_max))
    survival = csv_text(["t", "alive_fraction"], curve.points)
    density = csv_text(["bin_center", "density"], zip(hist.centers, hist.density))
    summary = {
        "decay_rate": curve.rate,
        "survivors": int(curve.ensemble.alive.sum()),
        "l1_vs_normal_half": diffusion.l1_vs_gaussian(hist, 0.0, 0.5),
    }
    if args.qsd_out:
        _emit(args, survival, summary, extra=(args.qsd_out, density))
    else:
        _emit(args, survival + "\n" + density, summary)


def _target_from_csv(path):
    from scipy.interpolate import CubicSpline

    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    except (OSError, ValueError) as e:
        raise DomainError(f"cannot read target grid {path}: {e}") from e
    if raw.shape[1] not in (2, 3) or raw.shape[0] < 4:
        raise DomainError("target CSV needs columns y,log_pi[,A] and at least 4 rows")
    y = raw[:, 0]
    log_pi = CubicSpline(y, raw[:, 1])
    A = CubicSpline(y, raw[:, 2]) if raw.shape[1] == 3 else (lambda t: np.zeros_like(t))
    return log_pi, A


def cmd_kappa_from_target(args):
    if args.target in diffusion.TARGETS:
        log_pi, A = diffusion.TARGETS[args.target]
    else:
        log_pi, A = _target_from_csv(args.target)
    if args.points < 2 or not args.gridmin < args.gridmax:
        raise DomainError("need gridmin < gridmax and at least 2 points")
    grid = np.linspace(args.gridmin, args.gridmax, args.points)
    res = diffusion.kappa_from_target(log_pi, A, grid)
    _emit(args, csv_text(["y", "kappa"], zip(res.grid, res.kappa)), {"K": res.K})


def parse_grid(spec, d):
    try:
        lo, hi, pts = spec.split(":")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except ValueError as e:
        raise DomainError(f"grid spec must look like lo:hi:points, got {spec!r}") from e
    if pts < 1 or not lo <= hi:
        raise DomainError("grid needs lo <= hi and at least one point")
    return logistic.make_grid(lo, hi, pts, d)


def _dataset(path):
    try:
        return logistic.load_csv(path)
    except (OSError, ValueError) as e:
        if isinstance(e, DomainError):
            raise
        raise DomainError(f"cannot read dataset {path}: {e}") from e


def cmd_logistic_kappa(args):
    data = _dataset(args.data)
    grid = parse_grid(args.grid, data.d)
    field = logistic.KappaField.calibrated(data, grid)
    header = [f"x{j}" for j in range(data.d)] + ["kappa"]
    rows = [tuple(g) + (k,) for g, k in zip(grid, field.on_grid())]
    _emit(args, csv_text(header, rows), {"Phi": field.Phi})


def cmd_logistic_robustness(args):
    data = _dataset(args.data)
    try:
        flips = [int(i) for i in args.flips.split(",") if i.strip()]
    except ValueError as e:
        raise DomainError(f"flips must be comma-separated indices: {e}") from e
    grid = parse_grid(args.grid, data.d)
    base = logistic.KappaField.calibrated(data, grid)
    pert = logistic.KappaField.calibrated(logistic.perturb_labels(data, flips), grid)
    rep = logistic.robustness_report(base, pert, args.nu, grid, strict=not args.no_strict)
    _emit(args, json_text(rep.as_dict()))


# -- parser ------------------------------------------------------------------


def _default_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker threads (default ${THREADS_ENV} or 1)")

    p = _Parser(prog="qsdpert", description="Perturbation tools for quasi-stationary distributions.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def add(parent, name, func, help_, path):
        sp = parent.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func, command_path=path)
        return sp

    def spectral_opts(sp):
        sp.add_argument("--M", type=float, required=True)
        sp.add_argument("--ode-step", type=float, default=None)

    sp = add(sub, "spectrum", cmd_spectrum, "lowest eigenvalues of the truncated OU generator",
             ["spectrum"])
    spectral_opts(sp)
    sp.add_argument("--count", type=int, required=True)

    sp = add(sub, "s-curve", cmd_s_curve, "sample the phase mismatch s_M", ["s-curve"])
    spectral_opts(sp)
    sp.add_argument("--lambda-min", type=float, required=True)
    sp.add_argument("--lambda-max", type=float, required=True)
    sp.add_argument("--steps", type=int, required=True)

    sp = add(sub, "figure-data", cmd_figure_data, "s-curve samples for M = 2, 10, 40",
             ["figure-data"])
    sp.add_argument("--fig", type=int, choices=sorted(FIGURE_M), required=True)

    def ou_opts(sp):
        sp.add_argument("--delta", type=float, required=True)

    def oracle_opts(sp):
        sp.add_argument("--dim", type=int, required=True)
        sp.add_argument("--seeds", type=int, required=True)

    bp = sub.add_parser("bounds", help="perturbation bounds")
    bsub = bp.add_subparsers(dest="bounds_command", metavar="KIND")
    bp.set_defaults(func=None, command_path=["bounds"], parser=bp)
    sp = add(bsub, "main", cmd_bounds_main, "eigenfunction and Davis-Kahan bounds",
             ["bounds", "main"])
    sp.add_argument("--nu", type=float, required=True)
    sp.add_argument("--hnorm", type=float, required=True)
    sp.add_argument("--hphi", type=float, required=True)
    sp.add_argument("--hphi-centered", type=float, default=None)
    ou_opts(add(bsub, "ou-constants", cmd_ou_constants, "OU example constants",
                ["bounds", "ou-constants"]))
    oracle_opts(add(bsub, "oracle", cmd_oracle, "random finite-dimensional certification",
                    ["bounds", "oracle"]))
    ou_opts(add(sub, "ou-constants", cmd_ou_constants, "OU example constants", ["ou-constants"]))
    oracle_opts(add(sub, "oracle", cmd_oracle, "random finite-dimensional certification",
                    ["oracle"]))

    cp = sub.add_parser("chain", help="killed finite-state chains")
    csub = cp.add_subparsers(dest="chain_command", metavar="ACTION")
    cp.set_defaults(func=None, command_path=["chain"], parser=cp)
    sp = add(csub, "verify", cmd_chain_verify, "exact TV against the perturbation bound",
             ["chain", "verify"])
    sp.add_argument("--config", required=True)
    sp.add_argument("--rigorous", action="store_true",
                    help="use n / max(alpha, alpha~) in place of n")
    sp = add(csub, "simulate", cmd_chain_simulate, "Monte Carlo conditional law",
             ["chain", "simulate"])
    sp.add_argument("--config", required=True)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tilde", action="store_true", help="simulate the perturbed chain")

    sp = add(sub, "simulate", cmd_simulate, "killed OU ensemble", ["simulate"])
    sp.add_argument("--M", type=float, required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--dt", type=float, required=True)
    sp.add_argument("--particles", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--checkpoints", type=int, default=10)
    sp.add_argument("--bins", type=int, default=60)
    sp.add_argument("--range-min", type=float, default=-3.0)
    sp.add_argument("--range-max", type=float, default=3.0)
    sp.add_argument("--qsd-out", default=None, help="file for the bin_center,density table")

    sp = add(sub, "kappa-from-target", cmd_kappa_from_target,
             "killing rate with a prescribed QSD", ["kappa-from-target"])
    sp.add_argument("--target", required=True,
                    help=f"one of {sorted(diffusion.TARGETS)} or a CSV y,log_pi[,A]")
    sp.add_argument("--gridmin", type=float, required=True)
    sp.add_argument("--gridmax", type=float, required=True)
    sp.add_argument("--points", type=int, required=True)

    lp = sub.add_parser("logistic", help="logistic-regression killing rate")
    lsub = lp.add_subparsers(dest="logistic_command", metavar="ACTION")
    lp.set_defaults(func=None, command_path=["logistic"], parser=lp)
    sp = add(lsub, "kappa", cmd_logistic_kappa, "calibrated killing rate on a grid",
             ["logistic", "kappa"])
    sp.add_argument("--data", required=True)
    sp.add_argument("--grid", required=True, help="lo:hi:points per axis")
    sp = add(lsub, "robustness", cmd_logistic_robustness, "label-flip robustness report",
             ["logistic", "robustness"])
    sp.add_argument("--data", required=True)
    sp.add_argument("--flips", required=True)
    sp.add_argument("--nu", type=float, required=True)
    sp.add_argument("--grid", default="-3:3:41")
    sp.add_argument("--no-strict", action="store_true",
                    help="report instead of failing when ||H|| >= nu/2")
    return p


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return 1
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            getattr(args, "parser", parser).print_usage(sys.stderr)
            return 1
    except UsageError:
        return 1
    if args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return 1
    try:
        args.func(args)
    except AssumptionViolated as e:
        sys.stderr.write(f"assumption violated ({e.condition}): {e}\n")
        return 2
    except DomainError as e:
        sys.stderr.write(f"domain error: {e}\n")
        return 2
    except NumericalError as e:
        sys.stderr.write(f"numerical error: {e}\n")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
