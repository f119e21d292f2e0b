"""Bounded-increment construction: a fair walk alternating between -1 and +1
with calibrated random delays.

A path holds at (-1)^(k-1) M_1, starts its k-th crossing at a time drawn
uniformly from the integer grid [t_{k+1}/2, t_{k+1}), and then follows fair
+-1 steps until it first reaches the opposite sign.  The deterministic times
t_k are chosen inductively so that being at the wrong sign at t_{k+1} has
probability at most eps_{k+1}, split evenly between the two failure modes:

  * the crossing takes more than L*_k steps, where L*_k is the exact
    (eps_{k+1}/2)-quantile of the crossing length law, and
  * the uniform start falls within L*_k of the window end, which has
    probability L*_k / (t_{k+1}/2) <= L*_k / (t_{k+1}/2 - L*_k) <= eps_{k+1}/2.

Both certificates are exact rational inequalities recorded in the schedule.

The crossing length L (first passage of the walk from +1 to -1) takes even
values, P(L = 2j) = Catalan(j) / 4^j; the table and quantiles are computed
from the integer Catalan recurrence, and the test suite checks them against a
direct killed-walk recursion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterator, Union

import numpy as np

from . import _rng
from .errors import BudgetInsufficientError, ConfigError, ScheduleOverflowError
from .exactprob import fraction_str

DEFAULT_QUANTILE_STEP_CAP = 2**18
DEFAULT_TIME_CAP = 2**40
SCALAR_HORIZON_CAP = 2**22

MIN_CROSSING_STEPS = 2


def _catalan_stream() -> Iterator[tuple[int, int]]:
    """Yields (j, count of first-passage paths of length 2j) = (j, Catalan(j))."""
    a = 1
    j = 1
    while True:
        yield j, a
        a = a * 2 * (2 * j + 1) // (j + 2)
        j += 1


@dataclass(frozen=True)
class CrossingLawDP:
    """Exact crossing-length distribution truncated at an even step budget.

    counts[j - 1] paths of length 2j, each with probability 4^-j; the mass
    beyond the budget is kept exactly in `tail`.
    """

    budget: int
    counts: tuple[int, ...]
    tail: Fraction

    def pmf(self, m: int) -> Fraction:
        if m < MIN_CROSSING_STEPS or m % 2 or m > self.budget:
            return Fraction(0)
        j = m // 2
        return Fraction(self.counts[j - 1], 4**j)

    def tail_at(self, m: int) -> Fraction:
        """P(L > m) for 0 <= m <= budget."""
        if m < 0 or m > self.budget:
            raise ValueError(f"tail query {m} outside [0, {self.budget}]")
        num, four_j = 1, 1
        for j in range(1, m // 2 + 1):
            num = 4 * num - self.counts[j - 1]
            four_j *= 4
        return Fraction(num, four_j)


def crossing_law(budget: int) -> CrossingLawDP:
    """Exact crossing-length table for even budget >= 2, with exact tail mass."""
    if budget < MIN_CROSSING_STEPS:
        raise ValueError("budget must be >= 2")
    budget -= budget % 2
    counts = []
    tail_num = 1
    for j, a in _catalan_stream():
        if 2 * j > budget:
            break
        counts.append(a)
        tail_num = 4 * tail_num - a
    return CrossingLawDP(budget, tuple(counts), Fraction(tail_num, 4 ** (budget // 2)))


def quantile(law: CrossingLawDP, eps: Fraction) -> int:
    """Smallest even m >= 2 with P(L > m) <= eps, read exactly from the table."""
    eps = Fraction(eps)
    if not law.tail < eps:
        raise BudgetInsufficientError(
            f"table tail {law.tail} at budget {law.budget} cannot certify eps={eps}"
        )
    num, four_j = 1, 1
    for j in range(1, law.budget // 2 + 1):
        num = 4 * num - law.counts[j - 1]
        four_j *= 4
        if num * eps.denominator <= eps.numerator * four_j:
            return 2 * j
    raise BudgetInsufficientError(f"no quantile found within budget {law.budget}")  # pragma: no cover


class _TailScanner:
    """Streaming quantiles without storing the table (schedules need depths ~10^4..10^5)."""

    def __init__(self, step_cap: int):
        self.step_cap = step_cap
        self._gen = _catalan_stream()
        self._j = 0
        self._tail_num = 1
        self._four_j = 1

    def quantile(self, eps: Fraction) -> tuple[int, Fraction]:
        """Advance to the smallest even m with P(L > m) <= eps; eps calls must be nonincreasing."""
        if self._j and self._tail_num * eps.denominator <= eps.numerator * self._four_j:
            return 2 * self._j, Fraction(self._tail_num, self._four_j)
        while 2 * (self._j + 1) <= self.step_cap:
            j, a = next(self._gen)
            self._j = j
            self._tail_num = 4 * self._tail_num - a
            self._four_j *= 4
            if self._tail_num * eps.denominator <= eps.numerator * self._four_j:
                return 2 * j, Fraction(self._tail_num, self._four_j)
        raise BudgetInsufficientError(
            f"crossing-length quantile at eps={eps} needs more than {self.step_cap} steps"
        )


# --- epsilon rules and schedules -----------------------------------------------


@dataclass(frozen=True)
class EpsRule:
    name: str
    fn: Callable[[int], Fraction]

    def eps(self, k: int) -> Fraction:
        value = Fraction(self.fn(k))
        if not 0 < value < 1:
            raise ConfigError(f"eps_{k} = {value} outside (0, 1)")
        return value


def pow2_eps_rule() -> EpsRule:
    return EpsRule("pow2", lambda k: Fraction(1, 2**k))


def eps_rule_from_values(values: list, name: str = "custom") -> EpsRule:
    fracs = [Fraction(v) for v in values]

    def fn(k: int) -> Fraction:
        if k > len(fracs):
            raise ConfigError(f"eps rule {name!r} has only {len(fracs)} values, needs eps_{k}")
        return fracs[k - 1]

    return EpsRule(name, fn)


def eps_rule_from_file(path: Union[str, Path]) -> EpsRule:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read eps rule {path}: {exc}") from exc
    if not isinstance(data, list):
        raise ConfigError("eps rule file must be a JSON list of rationals")
    return eps_rule_from_values(data, name=path.stem)


def resolve_eps_rule(token: str) -> EpsRule:
    if token == "pow2":
        return pow2_eps_rule()
    if token.startswith("file:"):
        return eps_rule_from_file(token[len("file:"):])
    raise ConfigError(f"unknown eps rule {token!r}")


@dataclass(frozen=True)
class Schedule:
    """Certified crossing schedule: tolerances, times, and quantile certificates.

    times[k] is even for k >= 1 with times[k]/2 > times[k-1]; quantiles[k] is
    the crossing-length bound used to place times[k+1], and the recorded
    inequality quantiles[k] / (times[k+1]/2 - quantiles[k]) <= eps[k+1]/2
    holds exactly by construction.
    """

    eps: tuple[Fraction, ...]
    times: tuple[int, ...]
    quantiles: tuple[int, ...]
    quantile_tails: tuple[Fraction, ...]
    eps_rule_name: str = "pow2"

    @property
    def depth(self) -> int:
        return len(self.times)

    def eps_at(self, k: int) -> Fraction:
        return self.eps[k - 1]

    def time_at(self, k: int) -> int:
        return self.times[k - 1]

    def certificate(self, k: int) -> tuple[Fraction, Fraction]:
        """(lhs, rhs) of the late-start inequality placing t_{k+1}, 1 <= k < depth."""
        lstar = self.quantiles[k - 1]
        half = self.times[k] // 2
        return Fraction(lstar, half - lstar), self.eps[k] / 2

    def to_json_obj(self) -> dict:
        rows = []
        for k in range(1, self.depth + 1):
            row = {
                "k": k,
                "eps_k": fraction_str(self.eps[k - 1]),
                "t_k": self.times[k - 1],
                "Lstar_k": None,
                "quantile_tail_approx": None,
                "certificate_lhs": None,
                "certificate_rhs": None,
            }
            if k < self.depth:
                lhs, rhs = self.certificate(k)
                row["Lstar_k"] = self.quantiles[k - 1]
                # the exact tail Fraction can have ten-thousand-digit terms;
                # the export carries a double, the object keeps the exact value
                row["quantile_tail_approx"] = float(self.quantile_tails[k - 1])
                row["certificate_lhs"] = fraction_str(lhs)
                row["certificate_rhs"] = fraction_str(rhs)
            rows.append(row)
        return {"eps_rule": self.eps_rule_name, "depth": self.depth, "rows": rows}

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2) + "\n"


def build_schedule(
    depth: int,
    eps_rule: EpsRule | None = None,
    *,
    quantile_step_cap: int = DEFAULT_QUANTILE_STEP_CAP,
    time_cap: int = DEFAULT_TIME_CAP,
) -> Schedule:
    """Inductive schedule construction: t_1 = 1, then the smallest even t_{k+1}
    with t_{k+1}/2 > t_k and L*_k / (t_{k+1}/2 - L*_k) <= eps_{k+1}/2.
    """
    if depth < 1:
        raise ConfigError("schedule depth must be >= 1")
    rule = eps_rule or pow2_eps_rule()
    eps = [rule.eps(k) for k in range(1, depth + 1)]
    for k in range(1, depth):
        if not eps[k] < eps[k - 1]:
            raise ConfigError(
                f"eps rule {rule.name!r} must be strictly decreasing: eps_{k}={eps[k - 1]}, eps_{k + 1}={eps[k]}"
            )

    times = [1]
    quantiles: list[int] = []
    tails: list[Fraction] = []
    scanner = _TailScanner(quantile_step_cap)
    for k in range(1, depth):
        target = eps[k] / 2
        try:
            lstar, tail = scanner.quantile(target)
        except BudgetInsufficientError as exc:
            raise ScheduleOverflowError(
                len(times), f"quantile budget exhausted after {len(times)} time(s): {exc}"
            ) from exc
        # certificate: lstar / (half - lstar) <= target  <=>  half >= lstar + lstar/target
        half = max(times[-1] + 1, _ceil_fraction(lstar + Fraction(lstar, 1) / target))
        t_next = 2 * half
        if t_next > time_cap:
            raise ScheduleOverflowError(
                len(times),
                f"t_{k + 1} = {t_next} exceeds time cap {time_cap}; {len(times)} crossing time(s) fit",
            )
        quantiles.append(lstar)
        tails.append(tail)
        times.append(t_next)

    return Schedule(tuple(eps), tuple(times), tuple(quantiles), tuple(tails), rule.name)


def _ceil_fraction(f: Fraction) -> int:
    return -((-f.numerator) // f.denominator)


# --- sampling -------------------------------------------------------------------
#
# Per-path draw order (identical in the scalar and block engines):
#   draw 0:            sign of M_1
#   per crossing k:    one draw for the start time T_k, then one draw per
#                      crossing step until the opposite sign is reached
# Paths cut by the horizon mid-crossing stop consuming draws entirely.


def _start_time(schedule: Schedule, k: int, hold_start: int, u: int) -> int:
    t_next = schedule.times[k]
    lo = t_next // 2
    glo = max(lo, hold_start + 1)
    size = t_next - glo
    if size >= 1:
        return glo + (u % size)
    return hold_start


def sample_delayed_path(schedule: Schedule, horizon: int, seed: int) -> list[int]:
    """One materialized path M_0..M_horizon (reference implementation).

    Holds are constant runs; crossings are fair +-1 steps; increments stay in
    {-1, 0, +1} by construction.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > SCALAR_HORIZON_CAP:
        raise ValueError(f"horizon {horizon} above scalar cap {SCALAR_HORIZON_CAP}; use delayed_stats")
    m1 = 1 if (_rng.u64_at(seed, 0) >> 63) == 0 else -1
    ctr = 1
    path = [0] * (horizon + 1)
    path[1] = m1

    val = m1
    hold_start = 1
    for k in range(1, schedule.depth):
        start = _start_time(schedule, k, hold_start, _rng.u64_at(seed, ctr))
        ctr += 1
        hold_end = min(start, horizon)
        for n in range(hold_start, hold_end + 1):
            path[n] = val
        if start >= horizon:
            return path
        # crossing: relative walk from 0 until it reaches -2
        w = 0
        t = start
        while t < horizon:
            u = _rng.u64_at(seed, ctr)
            ctr += 1
            w += 1 if (u >> 63) == 0 else -1
            t += 1
            path[t] = val * (1 + w)
            if w == -2:
                break
        else:
            return path  # horizon cut mid-crossing
        val = -val
        hold_start = t
    for n in range(hold_start, horizon + 1):
        path[n] = val
    return path


# --- block engine ----------------------------------------------------------------


class _QueryCounters:
    """Per-query-time tallies: occupancy of {-1, +1} and sign matches at the t_k."""

    def __init__(self, schedule: Schedule, horizon: int, grid_per_window: int):
        qs: set[int] = set()
        for k in range(1, schedule.depth):
            a, b = schedule.times[k - 1], schedule.times[k]
            span = np.linspace(a, min(b, horizon), grid_per_window)
            qs.update(int(round(v)) for v in span if 1 <= v <= horizon)
        qs.update(t for t in schedule.times if t <= horizon)
        self.times = np.array(sorted(qs), dtype=np.int64)
        self.count = len(self.times)
        self.occ_hits = np.zeros(self.count, dtype=np.int64)
        self.answered = np.zeros(self.count, dtype=np.int64)
        # slots that are exactly some t_k carry the alternation target parity
        self.is_tk = np.zeros(self.count, dtype=bool)
        self.parity = np.zeros(self.count, dtype=np.int64)
        self.k_of_slot = np.zeros(self.count, dtype=np.int64)
        for k, t in enumerate(schedule.times, start=1):
            if t <= horizon:
                slot = int(np.searchsorted(self.times, t))
                self.is_tk[slot] = True
                self.parity[slot] = 1 if (k - 1) % 2 == 0 else -1
                self.k_of_slot[slot] = k
        self.match_hits = np.zeros(self.count, dtype=np.int64)

    def record(self, slots: np.ndarray, values: np.ndarray, m1: np.ndarray) -> None:
        np.add.at(self.answered, slots, 1)
        np.add.at(self.occ_hits, slots, (np.abs(values) == 1).astype(np.int64))
        mask = self.is_tk[slots]
        if mask.any():
            s = slots[mask]
            np.add.at(self.match_hits, s, (values[mask] == self.parity[s] * m1[mask]).astype(np.int64))


def delayed_stats(
    schedule: Schedule,
    paths: int,
    master_seed: int,
    horizon: int | None = None,
    grid_per_window: int = 33,
    mem_elements: int = 2**22,
) -> dict:
    """Vectorized run over all paths, evaluating M only at the query grid.

    Holds are skipped analytically; crossings are simulated in counter-based
    blocks so results are independent of block sizes and worker counts.
    """
    if paths < 1:
        raise ConfigError("paths must be >= 1")
    horizon = schedule.times[-1] if horizon is None else horizon
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")

    q = _QueryCounters(schedule, horizon, grid_per_window)
    qtimes, nq = q.times, q.count

    idx_all = np.arange(paths, dtype=np.int64)
    seeds = _rng.path_seed_array(master_seed, idx_all)
    first = _rng.u64_block(seeds, np.zeros(paths, dtype=np.uint64), 1)[:, 0]
    m1 = np.where((first >> np.uint64(63)) == 0, 1, -1).astype(np.int64)
    ctr = np.ones(paths, dtype=np.uint64)

    val = m1.copy()
    hold_start = np.ones(paths, dtype=np.int64)
    alive = np.ones(paths, dtype=bool)
    qptr = np.zeros(paths, dtype=np.int64)

    def pump_hold(members: np.ndarray, hold_end: np.ndarray) -> None:
        """Answer queries in [hold_start, hold_end] with the member's hold value."""
        while True:
            has = qptr[members] < nq
            if not has.any():
                return
            sub = members[has]
            due = qtimes[qptr[sub]] <= hold_end[has]
            if not due.any():
                return
            sub = sub[due]
            q.record(qptr[sub], val[sub], m1[sub])
            qptr[sub] += 1

    for k in range(1, schedule.depth):
        t_next = schedule.times[k]
        members = idx_all[alive]
        if members.size == 0:
            break
        draws = _rng.u64_block(seeds[members], ctr[members], 1)[:, 0]
        ctr[members] += np.uint64(1)
        lo = t_next // 2
        glo = np.maximum(lo, hold_start[members] + 1)
        size = np.maximum(t_next - glo, 1)
        start = glo + (draws % size.astype(np.uint64)).astype(np.int64)
        start = np.where(t_next - glo >= 1, start, hold_start[members])

        pump_hold(members, np.minimum(start, horizon))

        crossing = members[start < horizon]
        if crossing.size:
            t0 = start[start < horizon]
            _run_crossings(
                crossing, t0, seeds, ctr, val, m1, hold_start, alive, qptr, q, horizon, mem_elements
            )
        done_holding = members[start >= horizon]
        alive[done_holding] = False

    members = idx_all[alive]
    if members.size:
        pump_hold(members, np.full(members.size, horizon, dtype=np.int64))

    assert int(q.answered.sum()) == paths * nq, "every path must answer every query"

    tk_slots = np.flatnonzero(q.is_tk)
    return {
        "paths": paths,
        "master_seed": master_seed,
        "horizon": horizon,
        "query_times": q.times.tolist(),
        "occupancy_hits": q.occ_hits.tolist(),
        "alternation": [
            {
                "k": int(q.k_of_slot[s]),
                "t_k": int(q.times[s]),
                "matches": int(q.match_hits[s]),
            }
            for s in tk_slots
        ],
    }


def _run_crossings(members, t0, seeds, ctr, val, m1, hold_start, alive, qptr, q, horizon, mem_elements):
    """Simulate one crossing for each member path, answering mid-crossing queries.

    The relative walk w runs from 0 until it reaches -2; the absolute value at
    crossing offset j is val * (1 + w_j).  Paths that reach the horizon first
    stop for good.
    """
    n = members.size
    w = np.zeros(n, dtype=np.int64)
    off = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    qt = q.times

    while active.any():
        rows = np.flatnonzero(active)
        acteidx = members[rows]
        width = int(min(16384, max(64, mem_elements // rows.size)))
        block = _rng.u64_block(seeds[acteidx], ctr[acteidx], width)
        steps = np.where((block >> np.uint64(63)) == 0, 1, -1).astype(np.int8)
        cum = np.cumsum(steps, axis=1, dtype=np.int64)
        pos = w[rows, None] + cum

        allowed = np.minimum(width, horizon - (t0[rows] + off[rows]))
        hit_cols = pos == -2
        any_hit = hit_cols.any(axis=1)
        first = np.where(any_hit, hit_cols.argmax(axis=1), width)
        hit_ok = any_hit & (first + 1 <= allowed)
        consumed = np.where(hit_ok, first + 1, allowed)

        # answer queries landing inside the consumed part of this block
        base = t0[rows] + off[rows]
        while True:
            pending = qptr[acteidx] < q.count
            if not pending.any():
                break
            due = pending & (qt[np.minimum(qptr[acteidx], q.count - 1)] <= base + consumed)
            if not due.any():
                break
            r = np.flatnonzero(due)
            col = qt[qptr[acteidx[r]]] - base[r] - 1
            values = val[acteidx[r]] * (1 + pos[r, col])
            q.record(qptr[acteidx[r]], values, m1[acteidx[r]])
            qptr[acteidx[r]] += 1

        ctr[acteidx] += consumed.astype(np.uint64)
        off[rows] += consumed
        w[rows] = pos[np.arange(rows.size), consumed - 1]

        finished = np.zeros(n, dtype=bool)
        finished[rows[hit_ok]] = True
        cut = np.zeros(n, dtype=bool)
        cut[rows[~hit_ok & (t0[rows] + off[rows] >= horizon)]] = True

        done_members = members[finished]
        hold_start[done_members] = t0[finished] + off[finished]
        val[done_members] = -val[done_members]
        alive[members[cut]] = False
        qptr[members[cut]] = q.count  # all their queries within horizon are answered
        active &= ~(finished | cut)


# --- reports ----------------------------------------------------------------------


@dataclass
class OccupancyRow:
    window_k: int
    n: int
    frequency: float
    radius: float
    bound: float

    @property
    def flagged(self) -> bool:
        return self.frequency + self.radius < self.bound


@dataclass
class OccupancyReport:
    paths: int
    master_seed: int
    rows: list[OccupancyRow]

    @property
    def flags(self) -> list[OccupancyRow]:
        return [r for r in self.rows if r.flagged]

    @property
    def ok(self) -> bool:
        return not self.flags


def occupancy_rows_from_stats(schedule: Schedule, stats: dict) -> list[OccupancyRow]:
    paths = stats["paths"]
    rows = []
    for t, hits in zip(stats["query_times"], stats["occupancy_hits"]):
        k = _window_of(schedule, t)
        if k is None:
            continue
        freq = hits / paths
        radius = 3.0 * (freq * (1.0 - freq) / paths) ** 0.5
        bound = 1.0 - 2.0 * float(schedule.eps_at(k))
        rows.append(OccupancyRow(k, t, freq, radius, bound))
    return rows


def _window_of(schedule: Schedule, n: int) -> int | None:
    """Index k with t_k <= n < t_{k+1} (t_K itself falls in the last window)."""
    if schedule.depth < 2 or n < schedule.times[0] or n > schedule.times[-1]:
        return None
    for k in range(1, schedule.depth):
        if schedule.times[k - 1] <= n < schedule.times[k]:
            return k
    return schedule.depth - 1


def occupancy_check(
    schedule: Schedule, horizon: int, paths: int, master_seed: int, grid_per_window: int = 33
) -> OccupancyReport:
    """Empirical P(M_n in {-1, +1}) over per-window grids against the 1 - 2 eps_k floor."""
    stats = delayed_stats(schedule, paths, master_seed, horizon=horizon, grid_per_window=grid_per_window)
    return OccupancyReport(paths, master_seed, occupancy_rows_from_stats(schedule, stats))


@dataclass
class AlternationScheduleRow:
    k: int
    t_k: int
    frequency: float
    radius: float
    floor: float

    @property
    def ok(self) -> bool:
        return self.frequency >= self.floor - self.radius


def alternation_rows_from_stats(schedule: Schedule, stats: dict) -> list[AlternationScheduleRow]:
    paths = stats["paths"]
    rows = []
    for entry in stats["alternation"]:
        freq = entry["matches"] / paths
        radius = 3.0 * (freq * (1.0 - freq) / paths) ** 0.5
        rows.append(
            AlternationScheduleRow(
                entry["k"], entry["t_k"], freq, radius, 1.0 - float(schedule.eps_at(entry["k"]))
            )
        )
    return rows
