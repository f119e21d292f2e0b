"""Command-line entry point.

Subcommands: marginals, compare, verify, simulate, probe, schedule, report.
Exit codes are stable across all of them: 0 success, 1 verification or
comparison failure, 2 configuration error.  Identical configuration and seed
produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, HorizonCapError, MartlabError, ScheduleOverflowError
from .exactprob import abs_moment, fraction_str, ui_tail
from .excursion import excursion_marginal, nested_tail_check, resolve_prob_seq
from .kernels import resolve_chain, verify_martingale
from .marginals import MarginalFlow, compare_flows, flow_to_csv, flow_to_json_obj, forward_marginals
from .montecarlo import (
    ExcursionSource,
    KernelChainSource,
    McReport,
    SeedPlan,
    StatRequest,
    counters_to_stats,
    run_stats,
)
from . import delayedwalk

EXACT_CHAINS = ("ssrw", "alternating", "holding")
MC_STATS = ("empirical-marginal", "alternation-rate", "absorption-fraction", "tail-check", "occupancy")
DEFAULT_Y_GRID = (0, 1, 3, 7, 15, 31, 63)


@dataclass
class RunConfig:
    """Flat record of one run; round-trips byte-identically through JSON."""

    command: str
    chain: str | None = None
    horizon: int | None = None
    paths: int | None = None
    seed: int | None = None
    coupling: str | None = None
    prob_seq: str | None = None
    eps_rule: str | None = None
    crossings: int | None = None
    stats: tuple[str, ...] = ()
    marginal_times: tuple[int, ...] = ()
    window: str | None = None
    tail_k: int | None = None
    moment_p: int | None = None
    fmt: str = "csv"

    def to_json_text(self) -> str:
        payload = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_text(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        for key in ("stats", "marginal_times"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    def describe(self) -> dict:
        return json.loads(self.to_json_text())


def _write_text(out: str | None, text: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _exact_flow(args, horizon: int) -> MarginalFlow:
    """Exact marginal flow for an exact-capable chain token."""
    chain = args.chain
    if chain == "delayedwalk":
        raise ConfigError("delayedwalk marginals are schedule-dependent and Monte-Carlo only")
    if chain == "excursion":
        return excursion_marginal(resolve_prob_seq(args.prob_seq), horizon)
    kernel = resolve_chain(chain)
    if chain.startswith("custom:") and not getattr(args, "allow_nonmartingale", False):
        gate = verify_martingale(kernel, max(horizon, 1))
        if not gate.ok:
            raise ConfigError(
                f"custom kernel fails the martingale check ({len(gate.violations)} row(s)); "
                "pass --allow-nonmartingale to proceed"
            )
    return forward_marginals(kernel, horizon)


# --- subcommands -----------------------------------------------------------------


def cmd_marginals(args) -> int:
    flow = _exact_flow(args, args.horizon)
    if args.format == "csv":
        _write_text(args.out, flow_to_csv(flow))
    else:
        _write_text(args.out, json.dumps(flow_to_json_obj(flow), indent=2) + "\n")
    return 0


def cmd_compare(args) -> int:
    flow_a = _exact_flow(_chain_view(args, args.chain_a, args.prob_seq_a), args.horizon)
    flow_b = _exact_flow(_chain_view(args, args.chain_b, args.prob_seq_b), args.horizon)
    cmp = compare_flows(flow_a, flow_b)
    print(cmp.summary())
    if cmp.equal:
        return 0
    for d in cmp.differences[:10]:
        print(f"  n={d.n} first_atom={d.first_atom} a={d.mass_a} b={d.mass_b} tv={d.tv}")
    return 1


@dataclass
class _chain_view:
    """Adapter so compare can reuse the single-chain flow builder per side."""

    base: argparse.Namespace
    chain: str
    prob_seq: str

    def __getattr__(self, name):
        return getattr(self.base, name)


def cmd_verify(args) -> int:
    chain = args.chain
    failures: list[str] = []
    if chain == "excursion":
        flow = excursion_marginal(resolve_prob_seq(args.prob_seq), args.horizon)
        checks = _flow_checks(flow, mirror=True, zero_free=False, mean_zero=True)
        failures.extend(checks)
    else:
        kernel = resolve_chain(chain)
        report = verify_martingale(kernel, args.horizon)
        if not report.ok:
            failures.extend(f"mean violation at n={n} x={x}: {mean}" for n, x, mean in report.violations)
        print(report.summary())
        if chain in ("alternating", "holding"):
            flow = forward_marginals(kernel, args.horizon)
            failures.extend(_flow_checks(flow, mirror=True, zero_free=True, mean_zero=True, support_pow2=True))
        elif chain == "ssrw":
            flow = forward_marginals(kernel, args.horizon)
            failures.extend(_flow_checks(flow, mirror=True, zero_free=False, mean_zero=True))
    if failures:
        for line in failures:
            print(f"FAIL {line}")
        return 1
    print(f"verify: all checks passed for {chain} at horizon {args.horizon}")
    return 0


def _flow_checks(flow, mirror: bool, zero_free: bool, mean_zero: bool, support_pow2: bool = False) -> list[str]:
    from .exactprob import dist_mean

    failures = []
    for n in range(flow.horizon + 1):
        d = flow[n]
        if mean_zero and dist_mean(d) != 0:
            failures.append(f"marginal mean at n={n} is {dist_mean(d)}, not 0")
        if mirror and any(d.mass(x) != d.mass(-x) for x in d.support()):
            failures.append(f"marginal at n={n} is not mirror symmetric")
        if zero_free and n >= 1 and d.mass(0) != 0:
            failures.append(f"marginal at n={n} puts mass {d.mass(0)} on 0")
        if support_pow2 and any(abs(x) > 2**n - 1 for x in d.support()):
            failures.append(f"support at n={n} escapes [-(2^n - 1), 2^n - 1]")
    return failures


def _parse_window(token: str, horizon: int) -> tuple[int, int]:
    if token == "last-quarter":
        return (3 * horizon) // 4, horizon
    try:
        lo, hi = token.split(":")
        return int(lo), int(hi)
    except ValueError as exc:
        raise ConfigError(f"window must be 'last-quarter' or 'lo:hi', got {token!r}") from exc


def cmd_simulate(args) -> int:
    stats_requested = tuple(args.stats.split(",")) if args.stats else ("empirical-marginal",)
    for s in stats_requested:
        if s not in MC_STATS:
            raise ConfigError(f"unknown statistic {s!r}; choose from {', '.join(MC_STATS)}")
    config = RunConfig(
        command="simulate",
        chain=args.chain,
        horizon=args.horizon,
        paths=args.paths,
        seed=args.seed,
        coupling=args.coupling,
        prob_seq=args.prob_seq,
        eps_rule=args.eps_rule,
        crossings=args.crossings,
        stats=stats_requested,
        marginal_times=tuple(int(t) for t in args.marginal_times.split(",")) if args.marginal_times else (),
        window=args.window,
        tail_k=args.tail_k,
        fmt=args.format,
    )
    report = _simulate(config, args)
    text = report.to_json_text() if args.format == "json" else report.to_csv_text()
    _write_text(args.out, text)
    return 0


def _simulate(config: RunConfig, args) -> McReport:
    chain = config.chain
    plan = SeedPlan(config.seed)
    if chain == "delayedwalk":
        bad = [s for s in config.stats if s not in ("occupancy", "alternation-rate")]
        if bad:
            raise ConfigError(f"delayedwalk supports occupancy and alternation-rate, not {bad}")
        schedule = delayedwalk.build_schedule(config.crossings, delayedwalk.resolve_eps_rule(config.eps_rule))
        horizon = config.horizon or schedule.times[-1]
        raw = delayedwalk.delayed_stats(schedule, config.paths, config.seed, horizon=horizon)
        stats: dict = {"schedule": schedule.to_json_obj()}
        if "occupancy" in config.stats:
            rows = delayedwalk.occupancy_rows_from_stats(schedule, raw)
            stats["occupancy"] = [
                {
                    "window_k": r.window_k,
                    "n": r.n,
                    "frequency": r.frequency,
                    "radius": r.radius,
                    "bound": r.bound,
                    "flagged": r.flagged,
                }
                for r in rows
            ]
        if "alternation-rate" in config.stats:
            rows = delayedwalk.alternation_rows_from_stats(schedule, raw)
            stats["alternation_at_schedule"] = [
                {"k": r.k, "t_k": r.t_k, "frequency": r.frequency, "radius": r.radius, "floor": r.floor, "ok": r.ok}
                for r in rows
            ]
        return McReport("simulate", config.describe(), config.paths, config.seed, stats)

    if "occupancy" in config.stats:
        raise ConfigError("occupancy is a delayedwalk statistic")

    if chain == "excursion":
        source = ExcursionSource(config.coupling or "independent", config.prob_seq)
    else:
        if "tail-check" in config.stats:
            raise ConfigError("tail-check is an excursion statistic")
        source = KernelChainSource(chain)
        if chain.startswith("custom:") and not getattr(args, "allow_nonmartingale", False):
            gate = verify_martingale(resolve_chain(chain), min(config.horizon, 20))
            if not gate.ok:
                raise ConfigError(
                    "custom kernel fails the martingale check; pass --allow-nonmartingale to proceed"
                )

    request = StatRequest(
        marginal_times=config.marginal_times if "empirical-marginal" in config.stats else (),
        alternation="alternation-rate" in config.stats,
        absorption_window=_parse_window(config.window, config.horizon)
        if "absorption-fraction" in config.stats
        else None,
    )
    if "empirical-marginal" in config.stats and not request.marginal_times:
        request = StatRequest(
            marginal_times=(config.horizon,),
            alternation=request.alternation,
            absorption_window=request.absorption_window,
        )
    stats = {}
    if request.marginal_times or request.alternation or request.absorption_window:
        counters = run_stats(source, config.paths, config.horizon, plan, request)
        exact_alt = (lambda n: 1 - Fraction(1, 2**n)) if chain == "alternating" else None
        stats.update(counters_to_stats(counters, request, exact_alternation=exact_alt))
    if "tail-check" in config.stats:
        if chain != "excursion" or (config.coupling or "independent") != "nested":
            raise ConfigError("tail-check needs --chain excursion --coupling nested")
        tail = nested_tail_check(resolve_prob_seq(config.prob_seq), config.tail_k or 8, config.paths, config.seed)
        stats["tail_check"] = [
            {
                "k": r.k,
                "exact": fraction_str(r.exact),
                "frequency": r.frequency,
                "radius": r.radius,
                "within": r.within,
            }
            for r in tail.rows
        ]
    return McReport("simulate", config.describe(), config.paths, config.seed, stats)


def cmd_probe(args) -> int:
    if args.p < 1:
        raise ConfigError("moment order must be an integer >= 1")
    flow = _exact_flow(args, args.horizon)
    ys = tuple(int(y) for y in args.y_grid.split(",")) if args.y_grid else DEFAULT_Y_GRID
    if any(y < 0 for y in ys):
        raise ConfigError("tail thresholds must be >= 0")
    header = [f"n,abs_moment_p{args.p}"] + [f"ui_tail_y{y}" for y in ys]
    lines = [",".join(header)]
    for n in range(flow.horizon + 1):
        row = [str(n), fraction_str(abs_moment(flow[n], args.p))]
        row.extend(fraction_str(ui_tail(flow[n], y)) for y in ys)
        lines.append(",".join(row))
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_schedule(args) -> int:
    schedule = delayedwalk.build_schedule(args.crossings, delayedwalk.resolve_eps_rule(args.eps_rule))
    _write_text(args.out, schedule.to_json_text())
    return 0


def cmd_report(args) -> int:
    from . import report as figs

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flow = _exact_flow(args, args.horizon)
    name = flow.kernel.replace(":", "-")

    (out_dir / f"{name}-marginals.csv").write_text(flow_to_csv(flow))
    probe_lines = ["n,abs_moment_p1,ui_tail_y1"]
    for n in range(flow.horizon + 1):
        probe_lines.append(f"{n},{fraction_str(abs_moment(flow[n], 1))},{fraction_str(ui_tail(flow[n], 1))}")
    (out_dir / f"{name}-probe.csv").write_text("\n".join(probe_lines) + "\n")

    written = [
        figs.fig_limit_convergence(flow, out_dir / f"{name}-limit.png"),
        figs.fig_abs_moments(flow, (1, 2), out_dir / f"{name}-moments.png"),
    ]
    empirical = None
    if args.paths:
        source = (
            ExcursionSource(args.coupling or "independent", args.prob_seq)
            if args.chain == "excursion"
            else KernelChainSource(args.chain)
        )
        counters = run_stats(
            source, args.paths, args.horizon, SeedPlan(args.seed), StatRequest(marginal_times=(args.horizon,))
        )
        empirical = {x: c / args.paths for x, c in counters["marginals"][args.horizon].items()}
    written.append(
        figs.fig_marginal_bars(
            flow[args.horizon],
            args.horizon,
            out_dir / f"{name}-marginal-n{args.horizon}.png",
            empirical=empirical,
            title=f"{flow.kernel}: marginal at n = {args.horizon}",
        )
    )
    for path in [out_dir / f"{name}-marginals.csv", out_dir / f"{name}-probe.csv"] + written:
        print(path)
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="martlab",
        description="Exact marginals, martingale verification, and Monte Carlo for the alternation chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_chain(p, default=None):
        p.add_argument("--chain", required=default is None, default=default,
                       help="ssrw | alternating | holding | excursion | delayedwalk | custom:<file>")
        p.add_argument("--prob-seq", default="harmonic", help="harmonic | ones | list:<file> (excursion)")
        p.add_argument("--allow-nonmartingale", action="store_true",
                       help="skip the martingale gate for custom kernels")

    p = sub.add_parser("marginals", help="exact marginal flow as CSV or JSON")
    add_chain(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_marginals)

    p = sub.add_parser("compare", help="exact equality of two marginal flows")
    p.add_argument("--chain-a", required=True)
    p.add_argument("--chain-b", required=True)
    p.add_argument("--prob-seq-a", default="harmonic")
    p.add_argument("--prob-seq-b", default="harmonic")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--allow-nonmartingale", action="store_true")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("verify", help="exact martingale and structural checks")
    add_chain(p)
    p.add_argument("--horizon", type=int, required=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("simulate", help="Monte Carlo statistics as a report file")
    add_chain(p)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coupling", choices=("independent", "nested"), default=None)
    p.add_argument("--stats", default=None, help="comma list: " + ",".join(MC_STATS))
    p.add_argument("--marginal-times", default=None, help="comma list of times for empirical-marginal")
    p.add_argument("--window", default="last-quarter", help="absorption window: last-quarter | lo:hi")
    p.add_argument("--tail-k", type=int, default=8)
    p.add_argument("--crossings", type=int, default=4, help="schedule depth for delayedwalk")
    p.add_argument("--eps-rule", default="pow2", help="pow2 | file:<json list>")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("probe", help="moment and tail diagnostics of the exact marginals")
    add_chain(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--p", type=int, default=1, help="absolute moment order")
    p.add_argument("--y-grid", default=None, help="comma list of tail thresholds")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("schedule", help="certified delay schedule as JSON")
    p.add_argument("--crossings", type=int, required=True)
    p.add_argument("--eps-rule", default="pow2")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("report", help="figures plus CSV for one chain into a directory")
    add_chain(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--paths", type=int, default=0, help="optional empirical overlay")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coupling", choices=("independent", "nested"), default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "horizon", None) is not None and args.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if args.command == "simulate" and args.chain != "delayedwalk" and args.horizon is None:
            raise ConfigError("--horizon is required unless the chain is delayedwalk")
        return args.fn(args)
    except ScheduleOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, HorizonCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MartlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # an exact-layer invariant was violated mid-run
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
