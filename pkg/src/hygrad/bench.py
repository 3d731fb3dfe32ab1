"""Experiment runner: decay traces, efficiency sweeps, CSV and SVG emission.

A decay run shares one gradient-descent trajectory across all strategies and
reports, per step, the inner error |x_k - x*| and the hypergradient error
|E(x_k, y) - grad h(y)|, the reference gradient being exact at the root up
to the solver tolerance. An efficiency sweep draws seeded y values and
reports the efficiency constant per strategy and trial.

Outputs are deterministic: identical configuration and seed produce
byte-identical CSV and SVG files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .efficiency import EfficiencyReport, efficiency_constant
from .errors import (
    DataError,
    HygradError,
    InsufficientDataError,
    ParseError,
    UsageError,
)
from .estimators import STRATEGIES, ift_estimate, make_estimator
from .models import (
    OuterVariant,
    linear_1d,
    load_libsvm,
    make_logistic,
    make_ridge,
    sample_y,
    scalar_ridge,
)
from .problems import BilevelProblem
from .seeding import PRNG_NAME
from .solvers import exact_root, gradient_descent

Array = np.ndarray

PROBLEM_KINDS = ("ridge", "logistic", "scalar", "linear1d")


@dataclass(frozen=True)
class DecayTrace:
    """Per-step errors of one strategy along a shared trajectory."""

    strategy: str
    rows: list  # (step, inner_error, hyper_error) triples
    metadata: dict


@dataclass(frozen=True)
class SweepRecord:
    """One efficiency-constant measurement inside a sweep."""

    strategy: str
    trial: int
    seed: int
    c_y: float
    report: Optional[EfficiencyReport] = None
    error: str = ""


@dataclass(frozen=True)
class RunConfig:
    """Everything a benchmark run needs, validated on construction."""

    problem: str = "scalar"
    train_path: Optional[str] = None
    val_path: Optional[str] = None
    outer: str = "quadratic"
    strategies: tuple = ("vanilla",)
    steps: int = 30
    y_low: float = -1.0
    y_high: float = 1.0
    trials: int = 10
    seed: int = 0
    eps: Optional[float] = None
    step_size: Optional[float] = None
    dims: Optional[int] = None
    out_path: Optional[str] = None
    svg_path: Optional[str] = None
    precond_scale: float = 1.0

    def __post_init__(self):
        if self.problem not in PROBLEM_KINDS:
            raise UsageError(f"unknown problem {self.problem!r}")
        if self.outer not in ("quadratic", "affine"):
            raise UsageError(f"unknown outer variant {self.outer!r}")
        if not self.strategies:
            raise UsageError("at least one strategy is required")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise UsageError(
                    f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
        if self.steps < 0:
            raise UsageError("steps must be nonnegative")
        if self.trials < 1:
            raise UsageError("trials must be at least 1")
        if not self.y_low < self.y_high:
            raise UsageError("need y-low < y-high")
        if self.eps is not None and self.eps <= 0:
            raise UsageError("eps must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise UsageError("step size must be positive")
        if self.dims is not None and self.dims < 1:
            raise UsageError("dims must be at least 1")


def build_problem(config: RunConfig) -> BilevelProblem:
    """Instantiate the configured problem, loading data files as needed."""
    if config.problem == "scalar":
        return scalar_ridge()
    if config.problem == "linear1d":
        return linear_1d()
    if config.train_path is None:
        raise UsageError(f"problem {config.problem!r} needs --train")
    try:
        train = load_libsvm(config.train_path, dims=config.dims)
        if config.val_path is not None:
            # Dimensions can disagree on trailing empty columns; reload with
            # the union width (or the explicit override) so both line up.
            val = load_libsvm(config.val_path, dims=config.dims)
            dims = max(train.d_x, val.d_x)
            if val.d_x != dims:
                val = load_libsvm(config.val_path, dims=dims)
            if train.d_x != dims:
                train = load_libsvm(config.train_path, dims=dims)
        else:
            if config.outer == "quadratic":
                raise UsageError("quadratic outer objective needs --val")
            val = train
    except OSError as err:
        raise DataError(f"cannot read dataset: {err}") from err
    outer = OuterVariant(config.outer)
    if config.problem == "ridge":
        return make_ridge(train, val, outer)
    return make_logistic(train, val, outer)


def _base_metadata(config: RunConfig, problem: BilevelProblem, y: Array) -> dict:
    meta = {
        "ground_truth": "ift_at_root",
        "prng": PRNG_NAME,
        "problem": problem.name,
        "seed": str(config.seed),
        "y": ";".join(repr(float(v)) for v in y),
    }
    if config.train_path:
        meta["train"] = config.train_path
    if config.val_path:
        meta["val"] = config.val_path
    return meta


def run_decay(config: RunConfig) -> list:
    """Decay traces for every configured strategy along one shared trajectory.

    The hypergradient reference is the implicit formula at the exact root,
    where consistency makes it exact up to the root solver tolerance; a
    difference quotient would put a noise floor well above the quadratic
    strategies' late-iteration errors. The independent finite-difference
    oracle still guards this value in the consistency test suite.
    """
    problem = build_problem(config)
    y = sample_y(problem.d_y, config.y_low, config.y_high, config.seed)
    x0 = np.zeros(problem.d_x)
    trajectory = gradient_descent(problem, y, x0, config.steps,
                                  step_size=config.step_size)
    xstar = exact_root(problem, y)
    grad_true = ift_estimate(problem, xstar, y)

    traces = []
    for strategy in config.strategies:
        estimator = make_estimator(problem, strategy)
        meta = _base_metadata(config, problem, y)
        meta["steps"] = str(config.steps)
        rows = []
        filtered = []
        for k, x in enumerate(trajectory.iterates):
            if strategy == "exp" and np.any(x == 0.0):
                filtered.append(k)
                continue
            try:
                estimate = estimator(x, y)
            except HygradError as err:
                meta[f"aborted_{strategy}"] = f"step {k}: {err}"
                break
            rows.append((k,
                         float(np.linalg.norm(x - xstar)),
                         float(np.linalg.norm(estimate - grad_true))))
        if filtered:
            meta[f"filtered_steps_{strategy}"] = ";".join(str(k) for k in filtered)
        traces.append(DecayTrace(strategy=strategy, rows=rows, metadata=meta))
    return traces


def run_efficiency_sweep(config: RunConfig) -> list:
    """Efficiency constants per strategy over seeded y draws.

    Trial t uses seed (config.seed + t); a numerical failure marks only the
    affected (strategy, trial) record and the sweep continues.
    """
    problem = build_problem(config)
    records = []
    for trial in range(config.trials):
        trial_seed = config.seed + trial
        y = sample_y(problem.d_y, config.y_low, config.y_high, trial_seed)
        for strategy in config.strategies:
            estimator = make_estimator(problem, strategy)
            try:
                report = efficiency_constant(problem, estimator, y, eps=config.eps)
            except HygradError as err:
                records.append(SweepRecord(strategy=strategy, trial=trial,
                                           seed=trial_seed, c_y=float("nan"),
                                           error=str(err)))
                continue
            records.append(SweepRecord(strategy=strategy, trial=trial,
                                       seed=trial_seed, c_y=report.c_y,
                                       report=report))
    return records


# --------------------------------------------------------------------------
# slope fitting

def fit_loglog_slope(trace: DecayTrace, floor: float = 1e-12) -> float:
    """Least-squares slope of log(hyper_error) against log(inner_error).

    Rows at or below the error floor (or with nonpositive inner error) are
    dropped; at least three must remain.
    """
    xs, ys = [], []
    for _, inner, hyper in trace.rows:
        if hyper > floor and inner > 0.0:
            xs.append(np.log(inner))
            ys.append(np.log(hyper))
    if len(xs) < 3:
        raise InsufficientDataError(
            f"only {len(xs)} rows above the floor; need at least 3")
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    dx = xs - xs.mean()
    denom = float(dx @ dx)
    if denom == 0.0:
        raise InsufficientDataError("inner errors have no spread")
    return float(dx @ (ys - ys.mean()) / denom)


# --------------------------------------------------------------------------
# CSV emission

def _fmt(v: float) -> str:
    return repr(float(v))


def emit_csv(items: Sequence[Union[DecayTrace, SweepRecord]],
             kind: Optional[str] = None,
             metadata: Optional[dict] = None) -> str:
    """Serialize traces or sweep records to CSV text.

    Metadata appears first as ``# key=value`` comment lines (sorted, unique),
    then the schema header, then the rows. Floats use shortest round-trip
    formatting; lines end with LF.
    """
    if kind is None:
        if items and isinstance(items[0], SweepRecord):
            kind = "efficiency"
        else:
            kind = "decay"
    meta: dict[str, str] = {}
    lines = []
    if kind == "decay":
        for trace in items:
            meta.update(trace.metadata)
        meta.update(metadata or {})
        lines.extend(f"# {k}={meta[k]}" for k in sorted(meta))
        lines.append("strategy,step,inner_error,hypergrad_error")
        for trace in items:
            for step, inner, hyper in trace.rows:
                lines.append(f"{trace.strategy},{step},{_fmt(inner)},{_fmt(hyper)}")
    elif kind == "efficiency":
        meta["prng"] = PRNG_NAME
        for rec in items:
            if rec.error:
                meta[f"error_{rec.strategy}_{rec.trial}"] = rec.error
        meta.update(metadata or {})
        lines.extend(f"# {k}={meta[k]}" for k in sorted(meta))
        lines.append("strategy,trial,seed,cy")
        for rec in items:
            lines.append(f"{rec.strategy},{rec.trial},{rec.seed},{_fmt(rec.c_y)}")
    else:
        raise UsageError(f"unknown csv kind {kind!r}")
    return "\n".join(lines) + "\n"


def read_decay_csv(text: str) -> list:
    """Parse decay CSV text back into traces (inverse of emit_csv)."""
    meta: dict[str, str] = {}
    by_strategy: dict[str, list] = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value
            continue
        if not header_seen:
            if line != "strategy,step,inner_error,hypergrad_error":
                raise ParseError(f"unexpected header {line!r}", line=lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"expected 4 columns, got {len(parts)}", line=lineno)
        try:
            step = int(parts[1])
            inner = float(parts[2])
            hyper = float(parts[3])
        except ValueError as err:
            raise ParseError(str(err), line=lineno)
        by_strategy.setdefault(parts[0], []).append((step, inner, hyper))
    if not header_seen:
        raise ParseError("no header line found")
    return [DecayTrace(strategy=s, rows=rows, metadata=dict(meta))
            for s, rows in by_strategy.items()]


# --------------------------------------------------------------------------
# SVG emission

_PALETTE = ("#d02820", "#429cb9", "#50b44f", "#ff9c46", "#ff5fff", "#2a2bc0")


@dataclass(frozen=True)
class AxesConfig:
    """Axis labels and canvas geometry for the SVG renderer."""

    x_label: str = "step"
    y_label: str = "error"
    title: str = ""
    width: int = 720
    height: int = 480


def _series_from(items: Sequence[Union[DecayTrace, SweepRecord]]) -> list:
    series = []
    if items and isinstance(items[0], SweepRecord):
        by_strategy: dict[str, list] = {}
        for rec in items:
            by_strategy.setdefault(rec.strategy, []).append((rec.trial, rec.c_y))
        for name, pts in by_strategy.items():
            series.append((name, pts))
    else:
        for trace in items:
            series.append((trace.strategy,
                           [(step, hyper) for step, _, hyper in trace.rows]))
    return series


def render_svg(items: Sequence[Union[DecayTrace, SweepRecord]],
               axes: AxesConfig = AxesConfig()) -> str:
    """Standalone SVG line plot: linear x, log10 y, one polyline per strategy.

    The y axis ticks sit at integer powers of ten. Identical input yields
    byte-identical output; nonpositive values cannot be drawn on the log
    axis and are skipped.
    """
    series = _series_from(items)
    margin_l, margin_r, margin_t, margin_b = 70, 160, 30, 50
    plot_w = axes.width - margin_l - margin_r
    plot_h = axes.height - margin_t - margin_b

    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts if y > 0.0]
    x_min, x_max = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x_min == x_max:
        x_min, x_max = x_min - 0.5, x_max + 0.5
    if ys:
        dec_lo = int(np.floor(np.log10(min(ys))))
        dec_hi = int(np.ceil(np.log10(max(ys))))
        if dec_lo == dec_hi:
            dec_lo -= 1
    else:
        dec_lo, dec_hi = -1, 1

    def sx(x: float) -> float:
        return margin_l + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y: float) -> float:
        ly = np.log10(y)
        return margin_t + (dec_hi - ly) / (dec_hi - dec_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{axes.width}" '
        f'height="{axes.height}" viewBox="0 0 {axes.width} {axes.height}">',
        f'<rect width="{axes.width}" height="{axes.height}" fill="white"/>',
    ]
    if axes.title:
        out.append(f'<text x="{axes.width // 2}" y="20" text-anchor="middle" '
                   f'font-size="14">{axes.title}</text>')

    # frame
    x0, y0 = margin_l, margin_t + plot_h
    x1, y1 = margin_l + plot_w, margin_t
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')

    # y ticks at integer powers of ten (thinned when the range is huge),
    # anchored at the top decade
    n_dec = dec_hi - dec_lo
    dec_step = max(1, int(np.ceil(n_dec / 12)))
    for dec in range(dec_hi, dec_lo - 1, -dec_step):
        py = sy(10.0 ** dec)
        out.append(f'<line x1="{x0 - 4:.2f}" y1="{py:.2f}" x2="{x0}" '
                   f'y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8:.2f}" y="{py + 4:.2f}" text-anchor="end" '
                   f'font-size="11">1e{dec}</text>')

    # x ticks, five evenly spaced
    for i in range(5):
        xv = x_min + (x_max - x_min) * i / 4
        px = sx(xv)
        out.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" '
                   f'y2="{y0 + 4:.2f}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{y0 + 18:.2f}" text-anchor="middle" '
                   f'font-size="11">{xv:g}</text>')

    out.append(f'<text x="{margin_l + plot_w / 2:.2f}" y="{axes.height - 10}" '
               f'text-anchor="middle" font-size="12">{axes.x_label}</text>')
    out.append(f'<text x="16" y="{margin_t + plot_h / 2:.2f}" '
               f'font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {margin_t + plot_h / 2:.2f})">'
               f'{axes.y_label}</text>')

    # one polyline per strategy; legend entries use line elements
    for idx, (name, pts) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts if y > 0.0)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{coords}"/>')
        ly = margin_t + 16 + 18 * idx
        lx = margin_l + plot_w + 16
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}" font-size="12">{name}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
