"""Deterministic Monte Carlo over chains and excursion processes.

Every path is a pure function of (master seed, path index): per-path seeds
come from the documented avalanche mix in `_rng`, so results are identical
for any worker count or execution order.  Workers only ever exchange integer
counters, which merge associatively; floats appear when estimates are
finalized.

Sampling converts exact rational rows to cumulative double thresholds once
per (time, state) and caches them; the conversion error is orders of
magnitude below the statistical radii (3 * sqrt(p(1-p)/paths) throughout).
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from . import _rng
from .errors import ConfigError
from .excursion import CouplingStrategy, resolve_prob_seq, sample_excursion_path
from .kernels import Kernel, resolve_chain

THREADS_ENV = "MARTLAB_THREADS"
MIN_CONDITIONING = 100


@dataclass(frozen=True)
class SeedPlan:
    """Master seed plus the per-path derivation documented in `_rng`."""

    master_seed: int

    def seed_for(self, index: int) -> int:
        return _rng.path_seed(self.master_seed, index)


@dataclass(frozen=True)
class KernelChainSource:
    """A Markov-chain sampling source identified by its chain token."""

    chain: str

    def describe(self) -> dict:
        return {"kind": "kernel", "chain": self.chain}


@dataclass(frozen=True)
class ExcursionSource:
    """An excursion-gated walk identified by coupling tag and probability-sequence token."""

    coupling: str
    prob_seq: str = "harmonic"

    def describe(self) -> dict:
        return {"kind": "excursion", "coupling": self.coupling, "prob_seq": self.prob_seq}


@dataclass(frozen=True)
class DelayedWalkSource:
    """The delayed alternating walk, identified by schedule depth and eps rule."""

    crossings: int
    eps_rule: str = "pow2"

    def describe(self) -> dict:
        return {"kind": "delayedwalk", "crossings": self.crossings, "eps_rule": self.eps_rule}


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return max(1, n)


# --- path generation ----------------------------------------------------------


class _RowCache:
    """Per-kernel cache of cumulative double thresholds; None marks a fair-walk row."""

    __slots__ = ("kernel", "rows")

    def __init__(self, kernel: Kernel):
        self.kernel = kernel
        self.rows: dict[tuple[int, int], tuple[tuple[float, ...], tuple[int, ...]] | None] = {}

    def row(self, n: int, x: int):
        key = (n, x)
        try:
            return self.rows[key]
        except KeyError:
            pass
        dist = self.kernel.law(n, x)
        items = dist.items()
        if len(items) == 2 and items[0][0] == x - 1 and items[1][0] == x + 1 and items[0][1] == items[1][1]:
            entry = None
        else:
            cum = 0.0
            thresholds = []
            targets = []
            for y, m in items:
                cum += float(m)
                thresholds.append(cum)
                targets.append(y)
            entry = (tuple(thresholds), tuple(targets))
        self.rows[key] = entry
        return entry


def _sample_initial(kernel: Kernel, seed: int) -> tuple[int, int]:
    """Initial state and the number of draws consumed (0 for a point mass)."""
    items = kernel.initial.items()
    if len(items) == 1:
        return items[0][0], 0
    u = _rng.uniform_at(seed, 0)
    cum = 0.0
    for y, m in items:
        cum += float(m)
        if u < cum:
            return y, 1
    return items[-1][0], 1


def sample_kernel_path(kernel: Kernel, horizon: int, seed: int, cache: _RowCache | None = None) -> list[int]:
    """One chain path M_0..M_horizon from the documented per-path stream."""
    if cache is None:
        cache = _RowCache(kernel)
    x, ctr = _sample_initial(kernel, seed)
    path = [x]
    for n in range(horizon):
        u = _rng.u64_at(seed, ctr)
        ctr += 1
        row = cache.row(n, x)
        if row is None:
            x += 1 if (u >> 63) == 0 else -1
        else:
            u01 = (u >> 11) * _rng.TWO_NEG53
            thresholds, targets = row
            x = targets[-1]
            for t, y in zip(thresholds, targets):
                if u01 < t:
                    x = y
                    break
        path.append(x)
    return path


def run_paths(source, paths: int, horizon: int, seed_plan: SeedPlan) -> Iterator[tuple[int, list[int]]]:
    """Stream (index, path) pairs; identical per index regardless of consumption order."""
    if paths < 1:
        raise ConfigError("paths must be >= 1")
    if isinstance(source, KernelChainSource):
        kernel = resolve_chain(source.chain)
        cache = _RowCache(kernel)
        for i in range(paths):
            yield i, sample_kernel_path(kernel, horizon, seed_plan.seed_for(i), cache)
    elif isinstance(source, ExcursionSource):
        cs = CouplingStrategy(source.coupling, resolve_prob_seq(source.prob_seq))
        for i in range(paths):
            path, _ = sample_excursion_path(cs, horizon, seed_plan.seed_for(i))
            yield i, path
    elif isinstance(source, DelayedWalkSource):
        from .delayedwalk import build_schedule, resolve_eps_rule, sample_delayed_path

        schedule = build_schedule(source.crossings, resolve_eps_rule(source.eps_rule))
        for i in range(paths):
            yield i, sample_delayed_path(schedule, horizon, seed_plan.seed_for(i))
    else:
        raise ConfigError(f"unsupported simulation source {source!r}")


# --- single-statistic estimators over a stream of paths ------------------------


def empirical_marginal(paths: Iterable[Sequence[int]], n: int) -> dict[int, float]:
    """Frequency table of path values at time n; frequencies sum to 1 (fp tolerance)."""
    counts: dict[int, int] = {}
    total = 0
    for path in paths:
        counts[path[n]] = counts.get(path[n], 0) + 1
        total += 1
    if total == 0:
        raise ValueError("no paths supplied")
    return {x: c / total for x, c in sorted(counts.items())}


@dataclass
class AlternationRate:
    n: int
    conditioning_count: int
    flips: int
    insufficient: bool

    @property
    def estimate(self) -> float:
        return self.flips / self.conditioning_count if self.conditioning_count else float("nan")

    @property
    def radius(self) -> float:
        if not self.conditioning_count:
            return float("nan")
        p = self.estimate
        return 3.0 * (p * (1.0 - p) / self.conditioning_count) ** 0.5


def alternation_rate(paths: Iterable[Sequence[int]], n: int) -> AlternationRate:
    """Frequency of {M_{n+1} = -M_n} among paths with M_n in {-1, +1}.

    Signals insufficient data (rather than erroring) below 100 conditioning
    observations.
    """
    cond = flips = 0
    for path in paths:
        x = path[n]
        if x == 1 or x == -1:
            cond += 1
            if path[n + 1] == -x:
                flips += 1
    return AlternationRate(n, cond, flips, insufficient=cond < MIN_CONDITIONING)


@dataclass
class AbsorptionEstimate:
    window: tuple[int, int]
    paths: int
    constant: int
    constant_in_pm1: int
    sign_counts: dict[int, int]

    @property
    def fraction(self) -> float:
        return self.constant / self.paths

    @property
    def fraction_in_pm1(self) -> float:
        return self.constant_in_pm1 / self.paths

    @property
    def radius(self) -> float:
        p = self.fraction
        return 3.0 * (p * (1.0 - p) / self.paths) ** 0.5

    def sign_law(self) -> dict[int, float]:
        total = sum(self.sign_counts.values())
        return {s: c / total for s, c in sorted(self.sign_counts.items())} if total else {}


def absorption_fraction(paths: Iterable[Sequence[int]], window: tuple[int, int]) -> AbsorptionEstimate:
    """Fraction of paths constant on [window lo, window hi], plus the law of constants in {-1,+1}."""
    lo, hi = window
    if lo < 0 or hi < lo:
        raise ValueError(f"bad window {window}")
    total = constant = in_pm1 = 0
    sign_counts: dict[int, int] = {-1: 0, 1: 0}
    for path in paths:
        total += 1
        v = path[lo]
        if all(path[m] == v for m in range(lo + 1, hi + 1)):
            constant += 1
            if v == 1 or v == -1:
                in_pm1 += 1
                sign_counts[v] += 1
    if total == 0:
        raise ValueError("no paths supplied")
    return AbsorptionEstimate(window, total, constant, in_pm1, sign_counts)


# --- combined streaming runs (parallelizable) ----------------------------------


@dataclass
class StatRequest:
    """Which statistics one run should accumulate."""

    marginal_times: tuple[int, ...] = ()
    alternation: bool = False
    absorption_window: tuple[int, int] | None = None

    def validate(self, horizon: int) -> None:
        for n in self.marginal_times:
            if not 0 <= n <= horizon:
                raise ConfigError(f"marginal time {n} outside [0, {horizon}]")
        if self.absorption_window is not None:
            lo, hi = self.absorption_window
            if not 0 <= lo <= hi <= horizon:
                raise ConfigError(f"absorption window {self.absorption_window} outside [0, {horizon}]")


def _blank_counters(request: StatRequest, horizon: int) -> dict:
    return {
        "paths": 0,
        "marginals": {n: {} for n in request.marginal_times},
        "alt_cond": [0] * horizon,
        "alt_flip": [0] * horizon,
        "absorb_constant": 0,
        "absorb_in_pm1": 0,
        "absorb_signs": {-1: 0, 1: 0},
    }


def _merge_counters(a: dict, b: dict) -> dict:
    a["paths"] += b["paths"]
    for n, table in b["marginals"].items():
        mine = a["marginals"][n]
        for x, c in table.items():
            mine[x] = mine.get(x, 0) + c
    a["alt_cond"] = [u + v for u, v in zip(a["alt_cond"], b["alt_cond"])]
    a["alt_flip"] = [u + v for u, v in zip(a["alt_flip"], b["alt_flip"])]
    a["absorb_constant"] += b["absorb_constant"]
    a["absorb_in_pm1"] += b["absorb_in_pm1"]
    for s in (-1, 1):
        a["absorb_signs"][s] += b["absorb_signs"][s]
    return a


def _accumulate_path(counters: dict, path: Sequence[int], request: StatRequest) -> None:
    counters["paths"] += 1
    for n in request.marginal_times:
        table = counters["marginals"][n]
        x = path[n]
        table[x] = table.get(x, 0) + 1
    if request.alternation:
        cond = counters["alt_cond"]
        flip = counters["alt_flip"]
        for n in range(len(path) - 1):
            x = path[n]
            if x == 1 or x == -1:
                cond[n] += 1
                if path[n + 1] == -x:
                    flip[n] += 1
    if request.absorption_window is not None:
        lo, hi = request.absorption_window
        v = path[lo]
        if all(path[m] == v for m in range(lo + 1, hi + 1)):
            counters["absorb_constant"] += 1
            if v == 1 or v == -1:
                counters["absorb_in_pm1"] += 1
                counters["absorb_signs"][v] += 1


def _run_range(source, horizon: int, master_seed: int, lo: int, hi: int, request: StatRequest) -> dict:
    """Counters for path indices [lo, hi); top-level so process pools can pickle it."""
    counters = _blank_counters(request, horizon)
    if isinstance(source, KernelChainSource):
        kernel = resolve_chain(source.chain)
        cache = _RowCache(kernel)
        for i in range(lo, hi):
            path = sample_kernel_path(kernel, horizon, _rng.path_seed(master_seed, i), cache)
            _accumulate_path(counters, path, request)
    elif isinstance(source, ExcursionSource):
        cs = CouplingStrategy(source.coupling, resolve_prob_seq(source.prob_seq))
        for i in range(lo, hi):
            path, _ = sample_excursion_path(cs, horizon, _rng.path_seed(master_seed, i))
            _accumulate_path(counters, path, request)
    else:
        raise ConfigError(f"unsupported simulation source {source!r}")
    return counters


def run_stats(source, paths: int, horizon: int, seed_plan: SeedPlan, request: StatRequest, workers: int | None = None) -> dict:
    """One streaming pass over all paths; counters merge identically for any worker split."""
    if paths < 1:
        raise ConfigError("paths must be >= 1")
    request.validate(horizon)
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or paths < 2 * workers:
        return _run_range(source, horizon, seed_plan.master_seed, 0, paths, request)
    bounds = [round(i * paths / workers) for i in range(workers + 1)]
    merged = _blank_counters(request, horizon)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_range, source, horizon, seed_plan.master_seed, lo, hi, request)
            for lo, hi in zip(bounds, bounds[1:])
            if hi > lo
        ]
        for fut in futures:
            _merge_counters(merged, fut.result())
    return merged


# --- reports -------------------------------------------------------------------


def _radius(p: float, n: int) -> float:
    return 3.0 * (p * (1.0 - p) / n) ** 0.5


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class McReport:
    """Deterministic record of one Monte Carlo run: config echo, estimates, radii."""

    kind: str
    config: dict
    paths: int
    master_seed: int
    stats: dict = field(default_factory=dict)

    def payload(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "config_digest": config_digest(self.config),
            "paths": self.paths,
            "master_seed": self.master_seed,
            "stats": self.stats,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.payload(), sort_keys=True, indent=2) + "\n"

    def to_csv_text(self) -> str:
        lines = ["statistic,key,value"]
        digest = config_digest(self.config)
        lines.append(f"meta,kind,{self.kind}")
        lines.append(f"meta,paths,{self.paths}")
        lines.append(f"meta,master_seed,{self.master_seed}")
        lines.append(f"meta,config_digest,{digest}")
        for name in sorted(self.stats):
            rows = self.stats[name]
            if isinstance(rows, list):
                for row in rows:
                    keyed = ";".join(f"{k}={row[k]}" for k in sorted(row))
                    lines.append(f"{name},row,{keyed}")
            else:
                lines.append(f"{name},value,{rows}")
        return "\n".join(lines) + "\n"


def counters_to_stats(counters: dict, request: StatRequest, exact_alternation=None) -> dict:
    """Finalize integer counters into the float rows carried by a report."""
    paths = counters["paths"]
    stats: dict = {}
    if request.marginal_times:
        marg = []
        for n in request.marginal_times:
            table = counters["marginals"][n]
            for x in sorted(table):
                freq = table[x] / paths
                marg.append({"n": n, "x": x, "frequency": freq, "radius": _radius(freq, paths)})
        stats["empirical_marginal"] = marg
    if request.alternation:
        rows = []
        for n, (cond, flip) in enumerate(zip(counters["alt_cond"], counters["alt_flip"])):
            row = {"n": n, "conditioning": cond, "insufficient": cond < MIN_CONDITIONING}
            if cond:
                p = flip / cond
                row["rate"] = p
                row["radius"] = _radius(p, cond)
            if exact_alternation is not None:
                row["exact"] = float(exact_alternation(n))
            rows.append(row)
        stats["alternation_rate"] = rows
    if request.absorption_window is not None:
        frac = counters["absorb_constant"] / paths
        signs = counters["absorb_signs"]
        total_signs = signs[-1] + signs[1]
        stats["absorption_fraction"] = [
            {
                "window_lo": request.absorption_window[0],
                "window_hi": request.absorption_window[1],
                "fraction": frac,
                "radius": _radius(frac, paths),
                "fraction_in_pm1": counters["absorb_in_pm1"] / paths,
                "sign_minus": signs[-1] / total_signs if total_signs else None,
                "sign_plus": signs[1] / total_signs if total_signs else None,
                "sign_radius": _radius(0.5, total_signs) if total_signs else None,
            }
        ]
    return stats
