"""Transition kernels: the simple symmetric walk and the two alternation chains.

A kernel is a total function law(n, x) -> Dist together with an initial law.
Both inhomogeneous chains start at 0, behave as a fair walk away from
{-1, +1}, and at +-1 either alternate sign (first chain) or hold (second
chain), compensated by rare jumps to +-(2^(n+1) - 1) tuned so every row has
mean exactly x.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Union

from .errors import ConfigError
from .exactprob import Dist, as_fraction, check_horizon, dist_mean, point_mass


@dataclass(frozen=True)
class Kernel:
    """Time-indexed transition law on signed integer states."""

    name: str
    law: Callable[[int, int], Dist]
    initial: Dist


def pn_qn(n: int) -> tuple[Fraction, Fraction]:
    """The split (p_n, q_n) with p_n = 1/(2 - 2^-n), q_n = 1 - p_n.

    Chosen so that p_n * (2^(n+1) - 1) + q_n * (-(2^(n+1) - 1)) == 1, i.e. the
    two-point jump law out of +1 has mean exactly 1.
    """
    p = Fraction(2**n, 2 ** (n + 1) - 1)
    return p, 1 - p


def _ssrw_row(x: int) -> Dist:
    return Dist({x - 1: Fraction(1, 2), x + 1: Fraction(1, 2)})


def ssrw_kernel() -> Kernel:
    """Simple symmetric random walk started at 0."""
    return Kernel("ssrw", lambda n, x: _ssrw_row(x), point_mass(0))


def alternating_kernel() -> Kernel:
    """Chain forced to alternate between -1 and +1 with probability 1 - 2^-n.

    Rows at +-1 carry the compensating jump to +-(2^(n+1) - 1) with mass 2^-n;
    every other state uses the fair-walk row.  At n = 0 the alternation mass
    1 - 2^-0 vanishes and is dropped, leaving the (unreachable) row a point
    mass at 2^1 - 1.
    """

    def law(n: int, x: int) -> Dist:
        if x == 1 or x == -1:
            stay = 1 - Fraction(1, 2**n)
            jump = Fraction(1, 2**n)
            return Dist({-x: stay, x * (2 ** (n + 1) - 1): jump})
        return _ssrw_row(x)

    return Kernel("alternating", law, point_mass(0))


def holding_kernel() -> Kernel:
    """Marginal-preserving modification: holds at +-1 instead of alternating.

    The compensating mass 2^-n now splits p_n : q_n between the far states
    +-(2^(n+1) - 1), with the same-sign target getting p_n, so the row keeps
    mean x while the chain gets absorbed at +-1 instead of flipping forever.
    """

    def law(n: int, x: int) -> Dist:
        if x == 1 or x == -1:
            hold = 1 - Fraction(1, 2**n)
            p, q = pn_qn(n)
            far = 2 ** (n + 1) - 1
            scale = Fraction(1, 2**n)
            return Dist({x: hold, x * far: scale * p, -x * far: scale * q})
        return _ssrw_row(x)

    return Kernel("holding", law, point_mass(0))


BUILTIN_KERNELS = {
    "ssrw": ssrw_kernel,
    "alternating": alternating_kernel,
    "holding": holding_kernel,
}


def mirror_dist(d: Dist) -> Dist:
    """Reflection of a distribution through 0."""
    return Dist({-x: m for x, m in d.items()})


def reachable_states(kernel: Kernel, horizon: int) -> list[set[int]]:
    """Support-level reachability: states[n] reachable at time n, n = 0..horizon."""
    levels = [set(kernel.initial.support())]
    for n in range(horizon):
        nxt: set[int] = set()
        for x in levels[-1]:
            nxt.update(kernel.law(n, x).support())
        levels.append(nxt)
    return levels


@dataclass
class MartingaleReport:
    """Outcome of the exact step-mean verification of a kernel."""

    kernel: str
    horizon: int
    checked: int
    violations: list[tuple[int, int, Fraction]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return f"{self.kernel}: martingale step identity holds at all {self.checked} reachable (n, x)"
        lines = [f"{self.kernel}: {len(self.violations)} violation(s) among {self.checked} reachable (n, x)"]
        for n, x, mean in self.violations:
            lines.append(f"  n={n} x={x} mean={mean}")
        return "\n".join(lines)


def verify_martingale(kernel: Kernel, horizon: int) -> MartingaleReport:
    """Check dist_mean(law(n, x)) == x exactly at every reachable (n, x), n < horizon.

    Violations are reported, not raised; the horizon is capped like every
    exact computation.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    check_horizon(horizon)
    levels = reachable_states(kernel, horizon - 1)
    report = MartingaleReport(kernel.name, horizon, checked=0)
    for n, states in enumerate(levels):
        for x in sorted(states):
            mean = dist_mean(kernel.law(n, x))
            report.checked += 1
            if mean != x:
                report.violations.append((n, x, mean))
    return report


# --- declarative custom kernels ---------------------------------------------
#
# JSON schema:
#   {
#     "name": "lazy-walk",
#     "initial": {"0": "1/1"},
#     "default_row": "ssrw" | "hold",
#     "rows": [{"n": 2 | null, "x": 1, "masses": {"-1": "1/2", "3": "1/4", ...}}]
#   }
# A row with "n": null applies at every time.  Masses are exact "num/den"
# strings; each row must sum to exactly 1 (enforced by Dist).


def load_kernel_spec(source: Union[str, Path, dict], name: str | None = None) -> Kernel:
    """Build a Kernel from a declarative JSON description (path or dict)."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read kernel file {path}: {exc}") from exc
        default_name = path.stem
    else:
        data = source
        default_name = "custom"
    if not isinstance(data, dict):
        raise ConfigError("kernel file must contain a JSON object")

    kernel_name = name or data.get("name") or default_name
    try:
        initial = Dist({int(x): as_fraction(m) for x, m in data.get("initial", {"0": 1}).items()})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad initial distribution: {exc}") from exc

    default_row = data.get("default_row", "ssrw")
    if default_row not in ("ssrw", "hold"):
        raise ConfigError(f"default_row must be 'ssrw' or 'hold', got {default_row!r}")

    timed: dict[tuple[int, int], Dist] = {}
    untimed: dict[int, Dist] = {}
    for row in data.get("rows", []):
        try:
            x = int(row["x"])
            masses = Dist({int(t): as_fraction(m) for t, m in row["masses"].items()})
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad kernel row {row!r}: {exc}") from exc
        n = row.get("n")
        if n is None:
            untimed[x] = masses
        else:
            timed[(int(n), x)] = masses

    def law(n: int, x: int) -> Dist:
        hit = timed.get((n, x))
        if hit is not None:
            return hit
        hit = untimed.get(x)
        if hit is not None:
            return hit
        if default_row == "hold":
            return point_mass(x)
        return _ssrw_row(x)

    return Kernel(kernel_name, law, initial)


def resolve_chain(token: str) -> Kernel:
    """Map a chain token (ssrw | alternating | holding | custom:<file>) to a Kernel."""
    if token in BUILTIN_KERNELS:
        return BUILTIN_KERNELS[token]()
    if token.startswith("custom:"):
        return load_kernel_spec(token[len("custom:"):])
    raise ConfigError(f"unknown chain {token!r}")
