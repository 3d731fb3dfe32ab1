"""Command-line interface.

Subcommands:
    decay        per-step hypergradient errors along a gradient-descent run
    efficiency   efficiency constants over seeded y draws
    compare      numeric checks of the comparison bounds between strategies
    ode1d        scalar super-efficiency residuals for candidate maps
    slope        log-log slope fit of a decay CSV

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    AxesConfig,
    RunConfig,
    build_problem,
    emit_csv,
    fit_loglog_slope,
    read_decay_csv,
    render_svg,
    run_decay,
    run_efficiency_sweep,
)
from .efficiency import compare_bounds, precond_gap, reparam_gap, super_efficiency_residual_1d
from .errors import DataError, HygradError, UsageError
from .estimators import (
    STRATEGIES,
    diag_scaling_reparam,
    exp_family_reparam_1d,
    identity_reparam,
    newton_preconditioner,
    newton_separable_reparam,
    scaled_preconditioner,
)
from .models import sample_y
from .seeding import PRNG_NAME


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so we control exit codes."""

    def error(self, message):
        raise UsageError(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", default="scalar",
                        choices=("ridge", "logistic", "scalar", "linear1d"))
    parser.add_argument("--train", dest="train_path", default=None)
    parser.add_argument("--val", dest="val_path", default=None)
    parser.add_argument("--outer", default="quadratic",
                        choices=("quadratic", "affine"))
    parser.add_argument("--strategies", default="vanilla",
                        help=f"comma-separated subset of {','.join(STRATEGIES)}")
    parser.add_argument("--steps", type=int, default=30)
    parser.add_argument("--y-low", type=float, default=-1.0)
    parser.add_argument("--y-high", type=float, default=1.0)
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", dest="out_path", default=None)
    parser.add_argument("--svg", dest="svg_path", default=None)
    parser.add_argument("--eps", type=float, default=None)
    parser.add_argument("--step-size", type=float, default=None,
                        help="constant descent step; default freezes 1/L at x0")
    parser.add_argument("--dims", type=int, default=None,
                        help="feature-count override for LIBSVM files")


def _config_from(args: argparse.Namespace) -> RunConfig:
    strategies = tuple(s for s in args.strategies.split(",") if s)
    return RunConfig(
        problem=args.problem,
        train_path=args.train_path,
        val_path=args.val_path,
        outer=args.outer,
        strategies=strategies,
        steps=args.steps,
        y_low=args.y_low,
        y_high=args.y_high,
        trials=args.trials,
        seed=args.seed,
        eps=args.eps,
        step_size=args.step_size,
        dims=args.dims,
        out_path=args.out_path,
        svg_path=args.svg_path,
        precond_scale=getattr(args, "precond_scale", 1.0),
    )


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as err:
        raise DataError(f"cannot write {path}: {err}") from err


def _cmd_decay(args) -> int:
    config = _config_from(args)
    traces = run_decay(config)
    _write(config.out_path, emit_csv(traces, kind="decay"))
    if config.svg_path:
        _write(config.svg_path, render_svg(
            traces, AxesConfig(x_label="step", y_label="hypergradient error")))
    if config.out_path:
        print(f"wrote {config.out_path}")
    return 0


def _cmd_efficiency(args) -> int:
    config = _config_from(args)
    records = run_efficiency_sweep(config)
    meta = {"seed": str(config.seed), "problem": config.problem,
            "outer": config.outer}
    _write(config.out_path, emit_csv(records, kind="efficiency", metadata=meta))
    if config.svg_path:
        _write(config.svg_path, render_svg(
            records, AxesConfig(x_label="trial", y_label="efficiency constant")))
    if config.out_path:
        print(f"wrote {config.out_path}")
    return 0


def _reparam_kind(problem, name: str):
    if name == "exp":
        return "exp"
    if name == "diag-rep":
        return diag_scaling_reparam(problem)
    if name == "opt":
        return newton_separable_reparam(problem)
    raise UsageError(f"--reparam must be one of exp, diag-rep, opt (got {name!r})")


def _cmd_compare(args) -> int:
    config = _config_from(args)
    problem = build_problem(config)
    precond = scaled_preconditioner(newton_preconditioner(problem),
                                    config.precond_scale)
    kind = _reparam_kind(problem, args.reparam)
    lines = [f"# precond_scale={repr(config.precond_scale)}",
             f"# prng={PRNG_NAME}", f"# problem={config.problem}",
             f"# reparam={args.reparam}", f"# seed={config.seed}",
             "trial,seed,lhs_phi_minus_p,rhs_phi_minus_p,lhs_p_minus_phi,"
             "rhs_p_minus_phi,delta,delta_lower,sigma,sigma_lower"]
    failures = 0
    for trial in range(config.trials):
        trial_seed = config.seed + trial
        y = sample_y(problem.d_y, config.y_low, config.y_high, trial_seed)
        bounds = compare_bounds(problem, precond, kind, y, eps=config.eps)
        delta, delta_lower, delta_lhs = precond_gap(problem, precond, kind, y,
                                                    eps=config.eps)
        slack_phi = 1e-6 * (1.0 + abs(bounds.lhs_phi_minus_p))
        slack_p = 1e-6 * (1.0 + abs(bounds.lhs_p_minus_phi))
        if bounds.lhs_phi_minus_p < bounds.rhs_phi_minus_p - slack_phi:
            failures += 1
        if bounds.lhs_p_minus_phi < bounds.rhs_p_minus_phi - slack_p:
            failures += 1
        sigma, sigma_lower = float("nan"), float("nan")
        if not isinstance(kind, str):
            from .estimators import SeparableReparam
            if isinstance(kind, SeparableReparam):
                sigma, sigma_lower, _ = reparam_gap(problem, precond, kind, y,
                                                    eps=config.eps)
        lines.append(",".join([
            str(trial), str(trial_seed),
            repr(float(bounds.lhs_phi_minus_p)), repr(float(bounds.rhs_phi_minus_p)),
            repr(float(bounds.lhs_p_minus_phi)), repr(float(bounds.rhs_p_minus_phi)),
            repr(float(delta)), repr(float(delta_lower)),
            repr(float(sigma)), repr(float(sigma_lower)),
        ]))
    _write(config.out_path, "\n".join(lines) + "\n")
    if failures:
        print(f"{failures} comparison inequalities violated", file=sys.stderr)
        return 3
    print(f"all comparison inequalities hold over {config.trials} trials")
    return 0


def _cmd_ode1d(args) -> int:
    config = _config_from(args)
    if config.problem not in ("scalar", "linear1d"):
        raise UsageError("ode1d needs a one-dimensional problem (scalar or linear1d)")
    problem = build_problem(config)
    lines = [f"# prng={PRNG_NAME}", f"# problem={config.problem}",
             f"# seed={config.seed}", "candidate,trial,seed,y,residual"]
    grid = [0.5, 1.0, 2.0]
    for trial in range(config.trials):
        trial_seed = config.seed + trial
        y = sample_y(1, config.y_low, config.y_high, trial_seed)
        candidates = [("identity", identity_reparam())]
        candidates += [(f"exp(a={a:g},b={b:g})", exp_family_reparam_1d(a, b))
                       for a in grid for b in grid]
        for name, phi in candidates:
            residual = super_efficiency_residual_1d(problem, phi, y)
            lines.append(f"{name},{trial},{trial_seed},{repr(float(y[0]))},"
                         f"{repr(float(residual))}")
    _write(config.out_path, "\n".join(lines) + "\n")
    if config.out_path:
        print(f"wrote {config.out_path}")
    return 0


def _cmd_slope(args) -> int:
    try:
        with open(args.in_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise DataError(f"cannot read {args.in_path}: {err}") from err
    traces = read_decay_csv(text)
    if args.strategy:
        traces = [t for t in traces if t.strategy == args.strategy]
        if not traces:
            raise UsageError(f"strategy {args.strategy!r} not present in file")
    for trace in traces:
        slope = fit_loglog_slope(trace, floor=args.floor)
        print(f"{trace.strategy} {repr(slope)}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="hygrad", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_decay = sub.add_parser("decay", help="hypergradient error per descent step")
    _add_common(p_decay)
    p_decay.set_defaults(func=_cmd_decay)

    p_eff = sub.add_parser("efficiency", help="efficiency constants over y draws")
    _add_common(p_eff)
    p_eff.set_defaults(func=_cmd_efficiency)

    p_cmp = sub.add_parser("compare", help="comparison-bound numeric checks")
    _add_common(p_cmp)
    p_cmp.add_argument("--precond-scale", type=float, default=1.0,
                       help="scale the Newton preconditioner to control its error")
    p_cmp.add_argument("--reparam", default="exp",
                       help="reparameterization side: exp, diag-rep, or opt")
    p_cmp.set_defaults(func=_cmd_compare)

    p_ode = sub.add_parser("ode1d", help="scalar super-efficiency residuals")
    _add_common(p_ode)
    p_ode.set_defaults(func=_cmd_ode1d)

    p_slope = sub.add_parser("slope", help="log-log slope of a decay CSV")
    p_slope.add_argument("--in", dest="in_path", required=True)
    p_slope.add_argument("--strategy", default=None)
    p_slope.add_argument("--floor", type=float, default=1e-12)
    p_slope.set_defaults(func=_cmd_slope)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    """Run the CLI; returns the process exit code instead of exiting."""
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except HygradError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
