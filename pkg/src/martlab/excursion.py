"""Excursion-gated martingales built from a fair walk.

The walk's k-th excursion away from 0 is kept or zeroed according to an event
A_k with P(A_k) = p_k, sampled independently of the walk.  Marginals depend
only on the p_k; the joint structure of the events (independent vs nested) is
what separates almost-sure divergence from almost-sure convergence.

Exact marginals come from a joint (position, zero-return count) table:
the event {walk at x != 0 at time n, inside excursion k} is exactly
{S_n = x, k - 1 zero returns in steps 1..n}, so

    mu_n(x) = sum_k q_n(x, k - 1) p_k        (x != 0)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Union

from . import _rng
from .errors import ConfigError
from .exactprob import Dist, check_horizon, as_fraction
from .marginals import MarginalFlow

HALF = Fraction(1, 2)


class ProbSeq:
    """A sequence p_k in (0, 1] of excursion-keeping probabilities."""

    def __init__(self, name: str, values: list[Fraction] | None = None, tail: str = "constant"):
        self.name = name
        self._values = values
        self._tail = tail

    @classmethod
    def harmonic(cls) -> "ProbSeq":
        return cls("harmonic")

    @classmethod
    def constant_one(cls) -> "ProbSeq":
        return cls("ones", [Fraction(1)], "constant")

    @classmethod
    def from_values(cls, values: list, tail: str = "constant", name: str = "custom") -> "ProbSeq":
        fracs = [as_fraction(v) for v in values]
        if not fracs:
            raise ConfigError("probability sequence needs at least one value")
        for v in fracs:
            if not 0 < v <= 1:
                raise ConfigError(f"probability {v} outside (0, 1]")
        if tail not in ("constant", "reciprocal"):
            raise ConfigError(f"tail rule must be 'constant' or 'reciprocal', got {tail!r}")
        return cls(name, fracs, tail)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ProbSeq":
        """Load {'values': ['1', '1/2', ...], 'tail': 'constant'|'reciprocal'} from JSON."""
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read probability sequence {path}: {exc}") from exc
        if not isinstance(data, dict) or "values" not in data:
            raise ConfigError("probability sequence file needs a 'values' list")
        return cls.from_values(data["values"], data.get("tail", "constant"), name=path.stem)

    def p(self, k: int) -> Fraction:
        """Exact p_k for k >= 1."""
        if k < 1:
            raise ValueError("excursion index starts at 1")
        if self._values is None:
            return Fraction(1, k)
        n = len(self._values)
        if k <= n:
            return self._values[k - 1]
        if self._tail == "constant":
            return self._values[-1]
        # reciprocal tail: continues the last value with 1/k decay
        return self._values[-1] * n / k

    def nonincreasing(self, upto: int = 64) -> bool:
        """True when p_1 >= p_2 >= ... as far as the rule can vary (nested coupling needs this)."""
        if self._values is None:
            return True
        probe = max(upto, len(self._values) + 2)
        return all(self.p(k) >= self.p(k + 1) for k in range(1, probe))


def resolve_prob_seq(token: str) -> ProbSeq:
    """Map a token (harmonic | ones | list:<file>) to a ProbSeq."""
    if token == "harmonic":
        return ProbSeq.harmonic()
    if token == "ones":
        return ProbSeq.constant_one()
    if token.startswith("list:"):
        return ProbSeq.from_file(token[len("list:"):])
    raise ConfigError(f"unknown probability sequence {token!r}")


INDEPENDENT = "independent"
NESTED = "nested"


@dataclass(frozen=True)
class CouplingStrategy:
    """How the events A_k are jointly realized for the given marginals p_k.

    independent: fresh uniform per event.
    nested:      one uniform U per path, A_k = {U < p_k}, so A_1 >= A_2 >= ...
                 and the number of occurring events N satisfies P(N >= k) = p_k.
    """

    tag: str
    prob_seq: ProbSeq

    def __post_init__(self):
        if self.tag not in (INDEPENDENT, NESTED):
            raise ConfigError(f"coupling must be '{INDEPENDENT}' or '{NESTED}', got {self.tag!r}")
        if self.tag == NESTED and not self.prob_seq.nonincreasing():
            raise ConfigError("nested coupling requires a nonincreasing probability sequence")


@dataclass(frozen=True)
class JointZeroCountDP:
    """Exact table q_n(x, j) = P(S_n = x, j zero returns in steps 1..n)."""

    horizon: int
    table: tuple[dict[tuple[int, int], Fraction], ...]

    def q(self, n: int, x: int, j: int) -> Fraction:
        return self.table[n].get((x, j), Fraction(0))


def joint_zero_count(horizon: int) -> JointZeroCountDP:
    """Forward recursion; stepping onto 0 increments the return count."""
    check_horizon(horizon)
    levels: list[dict[tuple[int, int], Fraction]] = [{(0, 0): Fraction(1)}]
    for _ in range(horizon):
        nxt: dict[tuple[int, int], Fraction] = {}
        for (x, j), mass in levels[-1].items():
            half = mass * HALF
            for y in (x - 1, x + 1):
                key = (y, j + 1 if y == 0 else j)
                prev = nxt.get(key)
                nxt[key] = half if prev is None else prev + half
        levels.append(nxt)
    return JointZeroCountDP(horizon, tuple(levels))


def excursion_marginal(ps: ProbSeq, horizon: int) -> MarginalFlow:
    """Exact marginal flow of the gated process for any probability sequence."""
    dp = joint_zero_count(horizon)
    flow = []
    for n in range(horizon + 1):
        masses: dict[int, Fraction] = {}
        off_zero = Fraction(0)
        for (x, j), mass in dp.table[n].items():
            if x == 0:
                continue
            contrib = mass * ps.p(j + 1)
            prev = masses.get(x)
            masses[x] = contrib if prev is None else prev + contrib
            off_zero += contrib
        at_zero = 1 - off_zero
        if at_zero != 0:
            masses[0] = at_zero
        flow.append(Dist(masses))
    return MarginalFlow(f"excursion:{ps.name}", tuple(flow))


def expected_event_count(ps: ProbSeq, upto: int) -> Fraction:
    """Exact expected number of occurring events among the first `upto`: sum of p_k.

    By linearity this does not depend on the coupling.
    """
    if upto < 1:
        raise ValueError("event count horizon must be >= 1")
    total = Fraction(0)
    for k in range(1, upto + 1):
        total += ps.p(k)
    return total


# --- sampling ---------------------------------------------------------------
#
# Per-path draw order (fixed for reproducibility): nested coupling draws its
# shared uniform at counter 0; each walk step consumes one draw; independent
# event draws are consumed lazily, in walk order, when an excursion starts.


def sample_excursion_path(
    cs: CouplingStrategy, horizon: int, seed: int
) -> tuple[list[int], dict[int, bool]]:
    """One gated path M_0..M_horizon plus the trace {k: A_k occurred} of started excursions."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ctr = 0
    nested_u = None
    if cs.tag == NESTED:
        nested_u = _rng.uniform_at(seed, ctr)
        ctr += 1

    events: dict[int, bool] = {}
    probs = cs.prob_seq

    def event(k: int) -> bool:
        # sampling layer works in doubles; exactness lives in the DP side
        nonlocal ctr
        hit = events.get(k)
        if hit is None:
            if cs.tag == NESTED:
                hit = nested_u < float(probs.p(k))
            else:
                hit = _rng.uniform_at(seed, ctr) < float(probs.p(k))
                ctr += 1
            events[k] = hit
        return hit

    path = [0]
    s = 0
    returns = 0
    for _ in range(horizon):
        u = _rng.u64_at(seed, ctr)
        ctr += 1
        s += 1 if (u >> 63) == 0 else -1
        if s == 0:
            returns += 1
            path.append(0)
        else:
            path.append(s if event(returns + 1) else 0)
    return path, events


def sample_event_sequence(cs: CouplingStrategy, upto: int, seed: int) -> list[bool]:
    """The first `upto` events alone (they are independent of the walk)."""
    thresholds = [float(cs.prob_seq.p(k)) for k in range(1, upto + 1)]
    if cs.tag == NESTED:
        u = _rng.uniform_at(seed, 0)
        return [u < t for t in thresholds]
    return [_rng.uniform_at(seed, k) < thresholds[k] for k in range(upto)]


def event_trace_to_csv(traces: "list[tuple[int, dict[int, bool]]]") -> str:
    """CSV export of per-path event traces: `path_id,k,occurred`, ids then k ascending."""
    lines = ["path_id,k,occurred"]
    for path_id, events in sorted(traces):
        for k in sorted(events):
            lines.append(f"{path_id},{k},{int(events[k])}")
    return "\n".join(lines) + "\n"


@dataclass
class TailCheckRow:
    k: int
    exact: Fraction
    frequency: float
    radius: float

    @property
    def within(self) -> bool:
        return abs(self.frequency - float(self.exact)) <= self.radius


@dataclass
class TailCheckReport:
    paths: int
    master_seed: int
    rows: list[TailCheckRow]

    @property
    def ok(self) -> bool:
        return all(r.within for r in self.rows)


def nested_tail_check(ps: ProbSeq, upto: int, paths: int, master_seed: int) -> TailCheckReport:
    """Empirical frequency of {N >= k} against the exact identity P(N >= k) = p_k.

    Under nesting N >= k iff A_k, so the check samples the shared uniform
    directly; radii are the 3-sigma binomial bounds at the exact p_k.
    """
    cs = CouplingStrategy(NESTED, ps)
    counts = [0] * upto
    for i in range(paths):
        seq = sample_event_sequence(cs, upto, _rng.path_seed(master_seed, i))
        for k in range(upto):
            if seq[k]:
                counts[k] += 1
    rows = []
    for k in range(1, upto + 1):
        p = ps.p(k)
        freq = counts[k - 1] / paths
        radius = 3.0 * (float(p) * (1.0 - float(p)) / paths) ** 0.5
        rows.append(TailCheckRow(k, p, freq, radius))
    return TailCheckReport(paths, master_seed, rows)


def event_count_variance(cs: CouplingStrategy, upto: int) -> Fraction:
    """Exact variance of the occurred-event count among the first `upto`.

    Independent coupling: sum p_k (1 - p_k).  Nested coupling: the count is
    #{k: U < p_k}, whose second moment is sum (2k - 1) p_k.
    """
    ps = cs.prob_seq
    if cs.tag == INDEPENDENT:
        return sum((ps.p(k) * (1 - ps.p(k)) for k in range(1, upto + 1)), Fraction(0))
    mean = expected_event_count(ps, upto)
    second = sum(((2 * k - 1) * ps.p(k) for k in range(1, upto + 1)), Fraction(0))
    return second - mean * mean


def event_count_stats(cs: CouplingStrategy, upto: int, paths: int, master_seed: int) -> dict:
    """Mean number of occurring events among the first `upto`, with exact reference.

    The exact mean is sum p_k for either coupling (linearity); the 3-sigma
    radius uses the coupling's own exact variance.
    """
    total = 0
    for i in range(paths):
        seq = sample_event_sequence(cs, upto, _rng.path_seed(master_seed, i))
        total += sum(seq)
    exact = expected_event_count(cs.prob_seq, upto)
    var = float(event_count_variance(cs, upto))
    return {
        "coupling": cs.tag,
        "upto": upto,
        "paths": paths,
        "mean_count": total / paths,
        "exact_mean": exact,
        "radius": 3.0 * (var / paths) ** 0.5,
    }
