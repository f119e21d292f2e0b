"""Exact marginal laws of a kernel: forward recursion, enumeration oracle, comparison.

The forward recursion is the production path; the path-tree enumeration never
merges states and exists purely as an independent check that must agree atom
for atom.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from .errors import EnumerationBudgetError
from .exactprob import Dist, check_horizon, fraction_str, tv_distance
from .kernels import Kernel

ENUMERATION_NODE_BUDGET = 10**7


@dataclass(frozen=True)
class MarginalFlow:
    """The sequence of exact single-time laws mu[0..horizon] of one chain."""

    kernel: str
    mu: tuple[Dist, ...]

    @property
    def horizon(self) -> int:
        return len(self.mu) - 1

    def __getitem__(self, n: int) -> Dist:
        return self.mu[n]


def forward_marginals(kernel: Kernel, horizon: int) -> MarginalFlow:
    """Exact forward recursion mu[n+1](y) = sum_x mu[n](x) law(n, x)(y).

    Supports are kept complete; nothing is pruned, so flows from different
    kernels can be compared for exact equality.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    check_horizon(horizon)
    flow = [kernel.initial]
    for n in range(horizon):
        nxt: dict[int, Fraction] = {}
        for x, mass in flow[-1].items():
            for y, step in kernel.law(n, x).items():
                contrib = mass * step
                prev = nxt.get(y)
                nxt[y] = contrib if prev is None else prev + contrib
        flow.append(Dist(nxt))
    return MarginalFlow(kernel.name, tuple(flow))


def enumerate_paths_oracle(kernel: Kernel, horizon: int, node_budget: int = ENUMERATION_NODE_BUDGET) -> MarginalFlow:
    """Marginals by explicit enumeration of the whole path tree.

    Every partial path is a separate branch; masses are only combined when a
    level is converted to a Dist at the end, so this is independent of the
    forward recursion's state merging.
    """
    check_horizon(horizon)
    levels: list[dict[int, Fraction]] = [dict() for _ in range(horizon + 1)]
    nodes = 0

    # iterative DFS over partial paths (state, time, path probability)
    stack: list[tuple[int, int, Fraction]] = [(x, 0, m) for x, m in kernel.initial.items()]
    while stack:
        x, n, prob = stack.pop()
        nodes += 1
        if nodes > node_budget:
            raise EnumerationBudgetError(f"path tree exceeds {node_budget} nodes at horizon {horizon}")
        level = levels[n]
        prev = level.get(x)
        level[x] = prob if prev is None else prev + prob
        if n < horizon:
            for y, step in kernel.law(n, x).items():
                stack.append((y, n + 1, prob * step))

    return MarginalFlow(kernel.name, tuple(Dist(level) for level in levels))


@dataclass(frozen=True)
class FlowDifference:
    n: int
    first_atom: int
    mass_a: Fraction
    mass_b: Fraction
    tv: Fraction


@dataclass
class FlowComparison:
    """Per-time verdicts of an exact marginal comparison."""

    kernel_a: str
    kernel_b: str
    horizon: int
    differences: list[FlowDifference]

    @property
    def equal(self) -> bool:
        return not self.differences

    @property
    def first_difference(self) -> FlowDifference | None:
        return self.differences[0] if self.differences else None

    def summary(self) -> str:
        if self.equal:
            return f"EQUAL: {self.kernel_a} and {self.kernel_b} share every marginal up to n={self.horizon}"
        d = self.differences[0]
        return (
            f"DIFFER: first at n={d.n}, x={d.first_atom} "
            f"({self.kernel_a}: {d.mass_a}, {self.kernel_b}: {d.mass_b}, tv={d.tv})"
        )


def compare_flows(a: MarginalFlow, b: MarginalFlow) -> FlowComparison:
    """Exact per-n comparison; differences report the first differing atom in (n, x) order."""
    if a.horizon != b.horizon:
        raise ValueError(f"horizon mismatch: {a.horizon} vs {b.horizon}")
    diffs = []
    for n in range(a.horizon + 1):
        da, db = a[n], b[n]
        if da == db:
            continue
        first = min(x for x in set(da.support()) | set(db.support()) if da.mass(x) != db.mass(x))
        diffs.append(FlowDifference(n, first, da.mass(first), db.mass(first), tv_distance(da, db)))
    return FlowComparison(a.kernel, b.kernel, a.horizon, diffs)


# --- export ------------------------------------------------------------------


def flow_to_csv(flow: MarginalFlow) -> str:
    """CSV rows `n,x,numerator,denominator`, n ascending then x ascending."""
    lines = ["n,x,numerator,denominator"]
    for n in range(flow.horizon + 1):
        for x, m in flow[n].items():
            lines.append(f"{n},{x},{m.numerator},{m.denominator}")
    return "\n".join(lines) + "\n"


def flow_from_csv(text: str) -> list[Dist]:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "n,x,numerator,denominator":
        raise ValueError("expected header 'n,x,numerator,denominator'")
    levels: dict[int, dict[int, Fraction]] = {}
    for ln in lines[1:]:
        n, x, num, den = ln.split(",")
        levels.setdefault(int(n), {})[int(x)] = Fraction(int(num), int(den))
    return [Dist(levels[n]) for n in sorted(levels)]


def flow_to_json_obj(flow: MarginalFlow) -> dict:
    return {
        "kernel": flow.kernel,
        "horizon": flow.horizon,
        "marginals": [
            {"n": n, "masses": {str(x): fraction_str(m) for x, m in flow[n].items()}}
            for n in range(flow.horizon + 1)
        ],
    }
