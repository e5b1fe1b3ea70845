"""Command line front end.

Four subcommands: ``distance`` between two measure files, ``barycenter``
fitting on a dataset file, ``risk-exact`` evaluating the closed-form risk
and its upper bounds, and ``simulate`` running the Monte Carlo harness.

Conventions shared by all subcommands: results go to stdout, diagnostics
and progress to stderr; numeric output uses 17 significant digits; exit
code 0 on success, 2 on input or configuration errors, 3 when a
numerical routine cannot reach its advertised accuracy.  The parsed
argument namespace is the run configuration; validation happens before
any work starts.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys

import numpy as np

from . import dataio, plots
from .barycenter import (
    GroupedDataset,
    nonsmoothed_barycenter,
    parametric_location_estimate,
    smoothed_barycenter,
)
from .errors import (
    DegenerateSampleError,
    DomainError,
    InvariantViolation,
    ModelError,
    ParseError,
    PrecisionError,
    QsyncError,
    UnsupportedDistributionError,
)
from .measures import (
    DEFAULT_GRID_SIZE,
    Gaussian,
    OneSidedExponential,
    Uniform,
    distance_method,
    wasserstein2_squared,
)
from .simulation import (
    Deterministic,
    EstimatorSpec,
    LocationScaleGaussian,
    LocationShiftOfBase,
    monte_carlo_risk,
    risk_grid,
    risk_log_ratios,
)
from .theory import (
    RiskFormulaInput,
    exact_risk_equal_p,
    order_stat_moments,
    risk_upper_bounds,
)

_INPUT_ERRORS = (
    ParseError,
    DomainError,
    InvariantViolation,
    DegenerateSampleError,
    ModelError,
    UnsupportedDistributionError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return dispatch(args)


def dispatch(args) -> int:
    """Run a parsed command, mapping failures to the exit-code contract."""
    try:
        return args.func(args)
    except (*_INPUT_ERRORS, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PrecisionError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except QsyncError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsync",
        description="One-dimensional Wasserstein barycenters: estimation, "
        "exact risk formulas, and Monte Carlo experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser(
        "distance", help="squared Wasserstein distance between two measure files"
    )
    d.add_argument("file_a")
    d.add_argument("file_b")
    d.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE,
                   help="alpha grid for the quadrature fallback")
    d.set_defaults(func=cmd_distance)

    b = sub.add_parser("barycenter", help="fit a barycenter estimate to a dataset file")
    b.add_argument("dataset")
    b.add_argument("--out", required=True, help="output file for the estimate")
    _add_estimator_flags(b)
    b.add_argument("--support", default=None,
                   help="declared sample support as 'lo,hi' (declare 0,1 to "
                        "enable boundary-corrected smoothing)")
    b.add_argument("--reference", default=None,
                   help="reference distribution for the parametric estimator, "
                        "e.g. 'uniform(0,1)'")
    b.add_argument("--plot", action="store_true",
                   help="also render the quantile function next to --out")
    b.set_defaults(func=cmd_barycenter)

    r = sub.add_parser("risk-exact", help="closed-form risk and upper bounds")
    r.add_argument("--distribution", required=True,
                   help="target law: uniform[(lo,hi)], gaussian[(mean,sd)], "
                        "exponential[(rate)]")
    r.add_argument("--n", type=int, required=True, help="number of units")
    r.add_argument("--p", required=True, help="unit size (int, or comma list for bounds)")
    r.add_argument("--V", type=float, required=True,
                   help="integrated quantile variance of the measure law")
    r.add_argument("--expected-j2", type=float, default=None,
                   help="E[J2] override for the general-size bound")
    r.add_argument("--constant", type=float, default=None,
                   help="value plugged into bounds with a free constant")
    r.set_defaults(func=cmd_risk_exact)

    s = sub.add_parser("simulate", help="Monte Carlo risk experiments")
    s.add_argument("--model", required=True,
                   help="deterministic[:dist] | uniform-shift[:delta=d[,lo=..,hi=..]] | "
                        "location-shift:dist[,delta=d] | gaussian-location-scale[:truncated]")
    _add_estimator_flags(s)
    s.add_argument("--n", required=True, help="units (int, or comma list with --grid)")
    s.add_argument("--p", required=True,
                   help="unit sizes (int; comma list = ragged sizes, or grid axis with --grid)")
    s.add_argument("--M", type=int, default=100, help="replications per cell")
    s.add_argument("--seed", type=int, required=True, help="master seed (mandatory)")
    s.add_argument("--grid", action="store_true",
                   help="treat --n/--p comma lists as a full factorial sweep")
    s.add_argument("--ratio", action="store_true",
                   help="run non-smoothed and smoothed estimators and emit the "
                        "log risk-ratio table (needs --out)")
    s.add_argument("--x-grid-size", type=int, default=512,
                   help="tabulated-cdf resolution of the smoothed fast path")
    s.add_argument("--out", default=None, help="output table path")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--plot", action="store_true",
                   help="render figures next to --out (needs --out)")
    s.set_defaults(func=cmd_simulate)
    return parser


def _add_estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--estimator", choices=("nonsmoothed", "smoothed", "parametric"),
                   default="nonsmoothed")
    p.add_argument("--kernel", choices=("auto", "boundary-gaussian", "gaussian"),
                   default="auto",
                   help="smoothing family: boundary-corrected Gaussian on [0,1] "
                        "or a plain Gaussian kernel estimate")
    p.add_argument("--bandwidth", default="silverman",
                   help="silverman | cv | fixed:<h>")
    p.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE,
                   help="alpha grid resolution for grid-valued estimates")


# ---------------------------------------------------------------------------
# Shared parsing helpers


def _split_top_level(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{what}: not a number: {text!r}") from None


def parse_distribution(spec: str):
    """A distribution from 'name' or 'name(arg,...)' notation."""
    spec = spec.strip()
    name, _, rest = spec.partition("(")
    name = name.strip().lower()
    args = []
    if rest:
        if not rest.endswith(")"):
            raise ParseError(f"unbalanced parentheses in distribution {spec!r}")
        inner = rest[:-1].strip()
        if inner:
            args = [_parse_float(tok, f"distribution {spec!r}")
                    for tok in inner.replace(",", " ").split()]
    makers = {"uniform": (Uniform, 2), "gaussian": (Gaussian, 2),
              "exponential": (OneSidedExponential, 1)}
    if name not in makers:
        raise UnsupportedDistributionError(
            f"unknown distribution {name!r}; expected uniform, gaussian, or exponential"
        )
    cls, max_args = makers[name]
    if len(args) > max_args:
        raise ParseError(f"too many parameters for {name}: {spec!r}")
    return cls(*args)


def _parse_kv(text: str, what: str) -> dict:
    out = {}
    for part in _split_top_level(text):
        key, sep, value = part.partition("=")
        if not sep:
            raise ParseError(f"{what}: expected key=value, got {part!r}")
        out[key.strip()] = value.strip()
    return out


def parse_model(spec: str):
    head, _, rest = spec.strip().partition(":")
    head = head.strip().lower()
    if head == "deterministic":
        return Deterministic(parse_distribution(rest) if rest else Uniform(0.0, 1.0))
    if head == "uniform-shift":
        kv = _parse_kv(rest, spec) if rest else {}
        delta = _parse_float(kv.pop("delta", "0.3"), spec)
        lo = _parse_float(kv.pop("lo", "0"), spec)
        hi = _parse_float(kv.pop("hi", "1"), spec)
        if kv:
            raise ParseError(f"unknown model options {sorted(kv)} in {spec!r}")
        return LocationShiftOfBase(Uniform(lo, hi), -delta, delta)
    if head == "location-shift":
        parts = _split_top_level(rest)
        if not parts:
            raise ParseError(f"location-shift needs a base distribution: {spec!r}")
        base = parse_distribution(parts[0])
        kv = _parse_kv(",".join(parts[1:]), spec) if len(parts) > 1 else {}
        delta = _parse_float(kv.pop("delta", "0.3"), spec)
        if kv:
            raise ParseError(f"unknown model options {sorted(kv)} in {spec!r}")
        return LocationShiftOfBase(base, -delta, delta)
    if head == "gaussian-location-scale":
        if not rest:
            return LocationScaleGaussian()
        if rest.strip() == "truncated":
            return LocationScaleGaussian(truncation=(-7.0, 7.0))
        raise ParseError(
            f"unknown gaussian-location-scale variant {rest!r}; use ':truncated'"
        )
    raise ParseError(
        f"unknown model {spec!r}; expected deterministic[:dist], "
        "uniform-shift[:delta=d], location-shift:dist[,delta=d], or "
        "gaussian-location-scale[:truncated]"
    )


def _parse_bandwidth(text: str):
    if text in ("silverman", "cv"):
        return text
    if text.startswith("fixed:"):
        h = _parse_float(text[len("fixed:"):], "--bandwidth")
        if h <= 0.0:
            raise ParseError(f"fixed bandwidth must be positive, got {h}")
        return h
    raise ParseError(
        f"unknown bandwidth {text!r}; expected silverman, cv, or fixed:<h>"
    )


_KIND_BY_FLAG = {
    "nonsmoothed": "non-smoothed",
    "smoothed": "smoothed",
    "parametric": "parametric",
}
_MODE_BY_FLAG = {"auto": "auto", "boundary-gaussian": "boundary", "gaussian": "gaussian"}


def _parse_int_list(text: str, what: str) -> list[int]:
    out = []
    for tok in str(text).replace(",", " ").split():
        try:
            out.append(int(tok))
        except ValueError:
            raise ParseError(f"{what}: not an integer: {tok!r}") from None
    if not out:
        raise ParseError(f"{what}: empty value")
    return out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_distance(args) -> int:
    a = dataio.read_measure(args.file_a)
    b = dataio.read_measure(args.file_b)
    value = wasserstein2_squared(a, b, grid_size=args.grid_size)
    print(dataio.format_float(value))
    print(f"method: {distance_method(a, b)}")
    return 0


def cmd_barycenter(args) -> int:
    units = dataio.read_grouped_dataset(args.dataset)
    support = None
    if args.support is not None:
        lo_hi = _parse_int_or_float_pair(args.support, "--support")
        support = lo_hi
    dataset = GroupedDataset(units, support=support)

    kind = _KIND_BY_FLAG[args.estimator]
    if kind == "non-smoothed":
        estimate = nonsmoothed_barycenter(dataset)
    elif kind == "smoothed":
        estimate = smoothed_barycenter(
            dataset,
            _parse_bandwidth(args.bandwidth),
            mode=_MODE_BY_FLAG[args.kernel],
            grid_size=args.grid_size,
        )
    else:
        if args.reference is None:
            raise DomainError("the parametric estimator needs --reference")
        estimate = parametric_location_estimate(dataset, parse_distribution(args.reference))

    dataio.write_barycenter_file(args.out, estimate, grid_size=args.grid_size)
    _verify_written_estimate(args.out, estimate)
    size_label = ",".join(str(s) for s in estimate.sizes)
    print(f"wrote {args.out} ({estimate.kind}, n={estimate.n}, p={size_label})")
    if args.plot:
        fig_path = os.path.splitext(args.out)[0] + "-quantile.png"
        plots.save_quantile_plot(estimate, fig_path)
        print(f"wrote {fig_path}")
    return 0


def _parse_int_or_float_pair(text: str, what: str) -> tuple[float, float]:
    vals = [_parse_float(tok, what) for tok in str(text).replace(",", " ").split()]
    if len(vals) != 2:
        raise ParseError(f"{what}: expected 'lo,hi', got {text!r}")
    return (vals[0], vals[1])


def _verify_written_estimate(path: str, estimate) -> None:
    # Re-read what was just written; the measure constructors enforce
    # monotonicity, so a corrupt write surfaces here instead of in a
    # later consumer.  17-digit floats round-trip exactly, so the file
    # must reproduce the estimate at its own nodes.
    reread = dataio.read_measure(path)
    if hasattr(reread, "atoms"):
        gap = float(np.max(np.abs(reread.atoms - estimate.measure.atoms)))
    else:
        gap = float(np.max(np.abs(reread.values - estimate.quantile(reread.alphas))))
    if gap != 0.0:
        raise PrecisionError(
            f"post-write check failed: file round-trip moved quantiles by {gap:.3e}"
        )


def cmd_risk_exact(args) -> int:
    dist = parse_distribution(args.distribution)
    sizes = _parse_int_list(args.p, "--p")
    sizes_arg = sizes[0] if len(sizes) == 1 else tuple(sizes)
    inputs = RiskFormulaInput(
        n=args.n,
        sizes=sizes_arg,
        quantile_variance=args.V,
        distribution=dist,
        expected_j2=args.expected_j2,
    )

    p = inputs.equal_size
    if p is not None:
        value = exact_risk_equal_p(inputs)
        print(f"exact = {dataio.format_float(value)}")
        print(f"order-statistic moments: {order_stat_moments(dist, p).method}")
    else:
        print("exact = unavailable (unequal unit sizes; see general-p bound)")

    cases = ["generic-j2"] if p is not None else []
    if p is not None and isinstance(dist, OneSidedExponential):
        cases.append("exponential")
    if p is not None and isinstance(dist, Gaussian):
        cases.append("gaussian")
    cases.append("general-p")
    for case in cases:
        try:
            bound = risk_upper_bounds(inputs, case, constant=args.constant)
        except DomainError as exc:
            print(f"bound {case}: not applicable ({exc})")
            continue
        print(f"bound {bound.describe()}")
    return 0


def cmd_simulate(args) -> int:
    model = parse_model(args.model)
    if args.plot and not args.out:
        raise DomainError("--plot needs --out to name the figure files")
    if args.ratio and not args.out:
        raise DomainError("--ratio needs --out to place the ratio table")

    ns = _parse_int_list(args.n, "--n")

    def progress(report):
        print(
            f"cell n={report.n} p={report.size_label}: risk={report.risk:.6g} "
            f"se={report.se:.3g} ({report.wall_seconds:.1f}s)",
            file=sys.stderr,
        )

    def run(spec: EstimatorSpec):
        if args.grid:
            ps = _parse_int_list(args.p, "--p")
            return risk_grid(model, spec, ns, ps, args.M, args.seed, progress=progress)
        if len(ns) != 1:
            raise DomainError("multiple --n values need --grid")
        p_list = _parse_int_list(args.p, "--p")
        sizes = p_list[0] if len(p_list) == 1 else tuple(p_list)
        report = monte_carlo_risk(model, spec, ns[0], sizes, args.M, args.seed)
        progress(report)
        return [report]

    ratio_rows = None
    if args.ratio:
        plain = run(EstimatorSpec(kind="non-smoothed", grid_size=args.grid_size))
        smooth = run(_smoothed_spec(args))
        reports = plain + smooth
        ratio_rows = risk_log_ratios(plain, smooth)
    else:
        reports = run(_estimator_spec(args))

    fmt = args.format
    table = dataio.reports_table_text(reports, fmt)
    if not args.out:
        sys.stdout.write(table)
        return 0

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(table)
    print(f"wrote {args.out}")
    stem = os.path.splitext(args.out)[0]
    if ratio_rows is not None:
        ratio_path = f"{stem}-ratio.{fmt}"
        with open(ratio_path, "w", encoding="utf-8") as fh:
            fh.write(dataio.ratios_table_text(ratio_rows, fmt))
        print(f"wrote {ratio_path}")
    if args.plot:
        for label in sorted({r.estimator for r in reports}):
            subset = [r for r in reports if r.estimator == label]
            fig_path = f"{stem}-risk-{_slug(label)}.png"
            plots.save_risk_curves(subset, fig_path)
            print(f"wrote {fig_path}")
        if ratio_rows is not None:
            fig_path = f"{stem}-ratio.png"
            plots.save_log_ratio_heatmap(ratio_rows, fig_path)
            print(f"wrote {fig_path}")
    return 0


def _estimator_spec(args) -> EstimatorSpec:
    return EstimatorSpec(
        kind=_KIND_BY_FLAG[args.estimator],
        mode=_MODE_BY_FLAG[args.kernel],
        bandwidth=_parse_bandwidth(args.bandwidth),
        grid_size=args.grid_size,
        x_grid_size=args.x_grid_size,
    )


def _smoothed_spec(args) -> EstimatorSpec:
    return EstimatorSpec(
        kind="smoothed",
        mode=_MODE_BY_FLAG[args.kernel],
        bandwidth=_parse_bandwidth(args.bandwidth),
        grid_size=args.grid_size,
        x_grid_size=args.x_grid_size,
    )


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "-", label).strip("-")


if __name__ == "__main__":
    sys.exit(main())
