"""Command-line front end.

Subcommands:

* ``bound``: exact upper bound, regime and branch index for one config.
* ``sweep``: plot-ready CSV of upper/achievable DoF per antenna ratio.
* ``synthesize``: build, verify and simulate one alignment scheme.
* ``montecarlo``: noisy sum-rate sweep and fitted DoF slope.

Exit codes: 0 success, 1 domain infeasibility or verification failure,
2 usage error.  All output is deterministic given the flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .alignment import (
    allocate_streams,
    assemble_scheme,
    required_row_counts,
    save_scheme,
    verify_alignment_conditions,
)
from .bounds import (
    betas,
    corner_points,
    first_breakpoint,
    gap_report,
    last_breakpoint,
    plateau_interval,
    regime_of,
    slope_interval,
    upper_bound,
)
from .channel import plan_extension, sample_channels
from .config import SystemConfig
from .errors import YChannelError
from .simulation import (
    RECOVERY_TOL,
    end_to_end,
    fit_slope,
    result_record,
    write_records_csv,
)


def _user_count(text: str) -> int:
    value = int(text)
    if value < 3:
        raise argparse.ArgumentTypeError(f"need at least 3 users, got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _ratio(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad ratio {text!r}: {exc}") from exc
    if value <= 0:
        raise argparse.ArgumentTypeError(f"ratios must be positive, got {text}")
    return value


def _snr_grid(text: str) -> list[float]:
    try:
        grid = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad SNR grid {text!r}: {exc}") from exc
    if not grid:
        raise argparse.ArgumentTypeError("SNR grid is empty")
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ychannel",
        description="DoF bounds and alignment relaying for K-user MIMO Y networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bound = sub.add_parser("bound", help="exact DoF upper bound for one config")
    p_bound.add_argument("--k", type=_user_count, required=True, help="user count (>= 3)")
    p_bound.add_argument("--m", type=_positive_int, required=True, help="source antennas")
    p_bound.add_argument("--n", type=_positive_int, required=True, help="relay antennas")
    p_bound.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p_bound.set_defaults(func=cmd_bound)

    p_sweep = sub.add_parser("sweep", help="CSV of bounds over an antenna-ratio grid")
    p_sweep.add_argument("--k", type=_user_count, required=True)
    group = p_sweep.add_mutually_exclusive_group()
    group.add_argument(
        "--grid", type=str, help="comma-separated exact ratios, e.g. 11/5,2,3"
    )
    group.add_argument(
        "--grid-auto",
        type=_positive_int,
        help="evenly spaced grid with this many points over (0, K]",
    )
    p_sweep.add_argument("--out", type=str, help="write CSV here instead of stdout")
    p_sweep.set_defaults(func=cmd_sweep)

    p_syn = sub.add_parser("synthesize", help="build and verify one alignment scheme")
    p_syn.add_argument("--k", type=_user_count, required=True)
    p_syn.add_argument("--m", type=_positive_int, required=True)
    p_syn.add_argument("--n", type=_positive_int, required=True)
    p_syn.add_argument("--beta", type=_positive_int, required=True)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--out", type=str, help="write the scheme JSON here")
    p_syn.set_defaults(func=cmd_synthesize)

    p_mc = sub.add_parser("montecarlo", help="noisy sum-rate sweep and DoF slope")
    p_mc.add_argument("--k", type=_user_count, required=True)
    p_mc.add_argument("--m", type=_positive_int, required=True)
    p_mc.add_argument("--n", type=_positive_int, required=True)
    p_mc.add_argument("--beta", type=_positive_int, required=True)
    p_mc.add_argument("--seeds", type=_positive_int, required=True, help="seed count")
    p_mc.add_argument(
        "--snr-grid", type=_snr_grid, required=True, help="comma-separated SNRs in dB"
    )
    p_mc.add_argument("--base-seed", type=int, default=0)
    p_mc.add_argument("--out", type=str, help="write per-run CSV here")
    p_mc.set_defaults(func=cmd_montecarlo)
    return parser


def cmd_bound(args: argparse.Namespace) -> int:
    cfg = SystemConfig(args.k, args.m, args.n)
    value = upper_bound(cfg)
    label = regime_of(cfg)
    if args.json:
        payload = {
            "k": cfg.K,
            "m": cfg.M,
            "n": cfg.N,
            "upper": str(value),
            "upper_decimal": float(value),
            "regime": label.kind.value,
            "beta": label.beta,
        }
        print(json.dumps(payload))
    else:
        print(f"upper bound: {value} ({float(value):.6g})")
        suffix = "" if label.beta is None else f" (beta={label.beta})"
        print(f"regime: {label.kind.value}{suffix}")
    return 0


@dataclass(frozen=True)
class SweepSpec:
    """A user count and the strictly increasing ratio grid to evaluate."""

    K: int
    ratio_grid: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if not self.ratio_grid:
            raise YChannelError("empty grid")
        if any(b <= a for a, b in zip(self.ratio_grid, self.ratio_grid[1:])):
            raise YChannelError("grid must be strictly increasing")


def _analytic_grid_points(K: int) -> set[Fraction]:
    # branch breakpoints and corner ratios; injected into every sweep so
    # the piecewise kinks are never missed by sampling
    points = {first_breakpoint(K), last_breakpoint(K)}
    for beta in betas(K):
        lo, hi = plateau_interval(K, beta)
        points.update((lo, hi))
        points.add(slope_interval(K, beta)[1])
    points.update(c.abscissa for c in corner_points(K))
    return points


def build_sweep_spec(
    K: int, grid: str | None = None, resolution: int | None = None
) -> SweepSpec:
    points = _analytic_grid_points(K)
    if grid is not None:
        extra = [p for p in grid.split(",") if p.strip()]
        if not extra:
            raise YChannelError("empty grid")
        points.update(_ratio(p) for p in extra)
    else:
        steps = resolution or 100
        points.update(Fraction(j * K, steps) for j in range(1, steps + 1))
    return SweepSpec(K=K, ratio_grid=tuple(sorted(points)))


def sweep_rows(spec: SweepSpec) -> list[dict]:
    rows = []
    for ratio in spec.ratio_grid:
        cfg = SystemConfig(spec.K, ratio.denominator, ratio.numerator)
        report = gap_report(cfg)
        upper_per_m = report.upper / cfg.M
        ach_per_m = report.achievable / cfg.M
        rows.append(
            {
                "ratio": str(ratio),
                "ratio_decimal": float(ratio),
                "upper_per_m": str(upper_per_m),
                "upper_per_m_decimal": float(upper_per_m),
                "achievable_per_m": str(ach_per_m),
                "achievable_per_m_decimal": float(ach_per_m),
                "tight": "true" if report.tight else "false",
            }
        )
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = build_sweep_spec(args.k, args.grid, args.grid_auto)
    rows = sweep_rows(spec)
    fieldnames = list(rows[0].keys())

    def emit(fh) -> None:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            emit(fh)
    else:
        emit(sys.stdout)
    return 0


def cmd_synthesize(args: argparse.Namespace) -> int:
    cfg = SystemConfig(args.k, args.m, args.n)
    alloc = allocate_streams(cfg, args.beta)
    counts = required_row_counts(cfg, alloc, args.beta)
    ch = sample_channels(cfg, args.seed)
    scheme = assemble_scheme(ch, alloc, args.beta)
    print(f"streams per pair: {alloc.per_pair} (total {alloc.d_total})")
    print(f"compression rows: {counts.rows} ({counts.q} per subset)")
    print(f"alignment residual: {scheme.alignment_residual:.3e}")
    print(f"basis condition: {scheme.basis_condition:.3e}")
    report = verify_alignment_conditions(scheme, ch)
    print(f"alignment conditions verified: {'pass' if report.passed else 'FAIL'}")
    result = end_to_end(cfg, args.beta, args.seed, 0.0, max_extension=1)
    print(f"noiseless relay recovery error: {result.relay_recovery_error:.3e}")
    if result.bc_failure is None:
        print(f"noiseless user recovery error: {result.user_recovery_error:.3e}")
    else:
        print(f"downlink construction failed: {result.bc_failure}")
    if args.out:
        save_scheme(scheme, args.out)
        print(f"scheme written to {args.out}")
    ok = report.passed and result.relay_recovery_error <= RECOVERY_TOL
    if result.bc_failure is None and result.user_recovery_error > RECOVERY_TOL:
        ok = False
    return 0 if ok else 1


def cmd_montecarlo(args: argparse.Namespace) -> int:
    cfg = SystemConfig(args.k, args.m, args.n)
    grid = args.snr_grid
    seeds = [args.base_seed + s for s in range(args.seeds)]
    target_corner = next((c for c in corner_points(cfg.K) if c.beta == args.beta), None)
    if target_corner is None:
        raise YChannelError(f"beta={args.beta} has no corner for K={cfg.K}")
    plan = plan_extension(cfg, target_corner)
    effective = SystemConfig(cfg.K, plan.ext.effective_M, plan.ext.effective_N)
    d_total = allocate_streams(effective, args.beta).d_total
    records = []
    curve = np.zeros(len(grid))
    for seed in seeds:
        for col, snr in enumerate(grid):
            result = end_to_end(cfg, args.beta, seed, 10.0 ** (-snr / 10.0))
            records.append(result_record(result))
            if result.sum_rate is None:
                raise YChannelError(f"no rate available at seed {seed}, {snr} dB")
            curve[col] += result.sum_rate
    curve /= len(seeds)
    slope = fit_slope(grid, curve)
    span = max(grid) - min(grid)
    if len(seeds) < 10 or span < 20.0:
        print("warning: low-confidence fit (few seeds or narrow SNR span)")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_records_csv(records, fh)
        print(f"per-run records written to {args.out}")
    for snr, rate in zip(grid, curve):
        print(f"snr {snr:g} dB: mean sum rate {rate:.4f} bits/use")
    print(f"fitted slope: {slope:.4f}")
    print(f"target stream total: {d_total}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except YChannelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
