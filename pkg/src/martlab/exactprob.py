"""Exact rational probability: finite-support integer distributions and their functionals.

Every probability in the exact layer is a `fractions.Fraction`; floats appear
only in the Monte Carlo layer at sampling time.  A `Dist` stores no zero-mass
atoms and always sums to exactly 1, so distribution equality is plain map
equality.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, Union

from .errors import HorizonCapError

# Chains reach magnitude 2^(n+1) - 1, so exact horizons are capped at desk
# scale rather than letting supports grow without bound.
HORIZON_CAP = 60

MassLike = Union[int, str, Fraction]

ZERO = Fraction(0)
ONE = Fraction(1)
HALF = Fraction(1, 2)


def as_fraction(value: MassLike) -> Fraction:
    """Coerce an int, Fraction, or 'num/den' string to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"exact probability expected int/str/Fraction, got {type(value).__name__}")


def check_horizon(horizon: int, cap: int = HORIZON_CAP) -> None:
    if horizon > cap:
        raise HorizonCapError(f"horizon {horizon} exceeds state-width cap {cap}")


class Dist:
    """Finite-support probability distribution on signed integers.

    Invariants enforced at construction: all stored masses are strictly
    positive Fractions, zero-mass atoms are dropped, and the masses sum to
    exactly 1.
    """

    __slots__ = ("_masses",)

    def __init__(self, masses: Union[Mapping[int, MassLike], Iterable[tuple[int, MassLike]]]):
        items = masses.items() if isinstance(masses, Mapping) else masses
        cleaned: dict[int, Fraction] = {}
        total = ZERO
        for x, m in items:
            m = as_fraction(m)
            if m < 0:
                raise ValueError(f"negative mass {m} at state {x}")
            if m == 0:
                continue
            x = int(x)
            if x in cleaned:
                raise ValueError(f"duplicate state {x}")
            cleaned[x] = m
            total += m
        if total != 1:
            raise ValueError(f"masses must sum to exactly 1, got {total}")
        self._masses = cleaned

    def mass(self, x: int) -> Fraction:
        return self._masses.get(x, ZERO)

    def support(self) -> list[int]:
        return sorted(self._masses)

    def items(self) -> list[tuple[int, Fraction]]:
        """Atoms in ascending state order (the canonical iteration order)."""
        return sorted(self._masses.items())

    def as_dict(self) -> dict[int, Fraction]:
        return dict(self._masses)

    def __len__(self) -> int:
        return len(self._masses)

    def __contains__(self, x: int) -> bool:
        return x in self._masses

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dist):
            return NotImplemented
        return self._masses == other._masses

    def __hash__(self) -> int:
        return hash(frozenset(self._masses.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{x}: {m}" for x, m in self.items())
        return f"Dist({{{inner}}})"


def point_mass(x: int) -> Dist:
    return Dist({x: ONE})


def uniform_pm1() -> Dist:
    """The uniform distribution on {-1, +1}."""
    return Dist({-1: HALF, 1: HALF})


def dist_mean(d: Dist) -> Fraction:
    """Exact mean sum(x * d(x))."""
    total = ZERO
    for x, m in d._masses.items():
        total += x * m
    return total


def abs_moment(d: Dist, p: int) -> Fraction:
    """Exact absolute moment sum(|x|^p * d(x)) for integer p >= 1."""
    if not isinstance(p, int) or p < 1:
        raise ValueError(f"moment order must be an integer >= 1, got {p!r}")
    total = ZERO
    for x, m in d._masses.items():
        total += abs(x) ** p * m
    return total


def ui_tail(d: Dist, y: int) -> Fraction:
    """Exact tail functional sum_{|x| > y} |x| * d(x) for integer y >= 0."""
    if y < 0:
        raise ValueError(f"tail threshold must be >= 0, got {y}")
    total = ZERO
    for x, m in d._masses.items():
        if abs(x) > y:
            total += abs(x) * m
    return total


def tv_distance(a: Dist, b: Dist) -> Fraction:
    """Exact total variation distance: half the L1 distance of the pmfs."""
    states = set(a._masses) | set(b._masses)
    total = ZERO
    for x in states:
        total += abs(a.mass(x) - b.mass(x))
    return total / 2


# --- serialization ----------------------------------------------------------
#
# CSV form: one atom per line, `x,numerator,denominator`, states ascending.
# JSON form: object mapping str(x) -> "num/den".  Both round-trip bit-exactly.


def dist_to_csv(d: Dist) -> str:
    lines = ["x,numerator,denominator"]
    for x, m in d.items():
        lines.append(f"{x},{m.numerator},{m.denominator}")
    return "\n".join(lines) + "\n"


def dist_from_csv(text: str) -> Dist:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "x,numerator,denominator":
        raise ValueError("expected header 'x,numerator,denominator'")
    masses = {}
    for ln in lines[1:]:
        x, num, den = ln.split(",")
        masses[int(x)] = Fraction(int(num), int(den))
    return Dist(masses)


def fraction_str(m: Fraction) -> str:
    return f"{m.numerator}/{m.denominator}"


def dist_to_json_obj(d: Dist) -> dict[str, str]:
    return {str(x): fraction_str(m) for x, m in d.items()}


def dist_from_json_obj(obj: Mapping[str, str]) -> Dist:
    return Dist({int(x): Fraction(s) for x, s in obj.items()})
