"""First entry times and jump (induced) transformations computed by iteration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import EntryCapExceeded, NoPiece, OutOfDomain
from .interval_dynamics import Interval, PiecewiseMap, eval_map, is_exact

DEFAULT_ENTRY_CAP = 10**5


@dataclass(frozen=True)
class JumpSpec:
    base: PiecewiseMap
    target: Interval
    entry_cap: int = DEFAULT_ENTRY_CAP

    def __post_init__(self):
        if not self.target.issubset(self.base.ambient):
            raise ValueError(f"target {self.target} is not inside {self.base.ambient}")
        if self.entry_cap < 1:
            raise ValueError("entry_cap must be at least 1")


class _IntegerOrbit:
    """Exact iteration of a finite piecewise map on integer pairs (p, q).

    Same semantics as eval_map (closed domains, lowest index first) without
    the Fraction overhead; used for exact arguments.
    """

    def __init__(self, T: PiecewiseMap, target: Interval):
        self.exceptional = [(ex.numerator, ex.denominator, ey.numerator, ey.denominator)
                            for ex, ey in T.exceptional]
        self.pieces = [
            (p.domain.lo.numerator, p.domain.lo.denominator,
             p.domain.hi.numerator, p.domain.hi.denominator, *p.map.coefficients)
            for p in T.pieces
        ]
        self.target = (target.lo.numerator, target.lo.denominator,
                       target.hi.numerator, target.hi.denominator)

    @staticmethod
    def _inside(p, q, lp, lq, hp, hq):
        return lp * q <= p * lq and p * hq <= hp * q

    def step(self, p, q):
        for ep, eq, yp, yq in self.exceptional:
            if p * eq == ep * q:
                return yp, yq
        for lp, lq, hp, hq, a, b, c, d in self.pieces:
            if self._inside(p, q, lp, lq, hp, hq):
                num, den = a * p + b * q, c * p + d * q
                if den < 0:
                    num, den = -num, -den
                g = math.gcd(num, den)
                return num // g, den // g
        raise NoPiece(f"no piece of the map contains {Fraction(p, q)}")

    def entry(self, x: Fraction, cap: int):
        p, q = x.numerator, x.denominator
        for k in range(cap + 1):
            if self._inside(p, q, *self.target):
                return k, Fraction(p, q, _normalize=False)
            if k == cap:
                break
            p, q = self.step(p, q)
        raise EntryCapExceeded(x, cap)


def _orbit_entry(spec: JumpSpec, x):
    """(e(x), T^e(x)) with the target set taken closed."""
    if x not in spec.base.ambient:
        raise OutOfDomain(f"{x} is outside {spec.base.ambient}")
    if is_exact(x) and spec.base.family is None:
        return _integer_orbit(spec.base, spec.target).entry(Fraction(x), spec.entry_cap)
    y = x
    for k in range(spec.entry_cap + 1):
        if y in spec.target:
            return k, y
        if k == spec.entry_cap:
            break
        y = eval_map(spec.base, y)
    raise EntryCapExceeded(x, spec.entry_cap)


@lru_cache(maxsize=64)
def _integer_orbit(T: PiecewiseMap, target: Interval) -> _IntegerOrbit:
    return _IntegerOrbit(T, target)


def first_entry_time(spec: JumpSpec, x) -> int:
    return _orbit_entry(spec, x)[0]


def jump_apply(spec: JumpSpec, x):
    """J(x) = T^(e(x)+1)(x)."""
    return eval_map(spec.base, _orbit_entry(spec, x)[1])


@dataclass
class EquivalenceReport:
    samples: int
    compared: int
    max_deviation: float
    exact: bool
    excluded: list = field(default_factory=list)
    worst_x: str = ""
    mismatches: int = 0

    @property
    def ok(self) -> bool:
        return self.compared > 0 and self.mismatches == 0

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "samples": self.samples,
            "compared": self.compared,
            "max_deviation": self.max_deviation,
            "exact": self.exact,
            "mismatches": self.mismatches,
            "excluded": len(self.excluded),
            "worst_x": self.worst_x,
        }


def check_jump_equals(spec: JumpSpec, closed: PiecewiseMap, samples: Iterable, tol: float = 0.0) -> EquivalenceReport:
    """Max deviation between the iterated jump map and a closed form.

    Exact samples must agree exactly; float samples within ``tol``.  Samples
    whose orbit hits the entry cap, or that fall on an undefined point of
    either map, are excluded and counted.
    """
    n = compared = mismatches = 0
    worst, worst_x, exact = 0.0, "", True
    excluded = []
    for x in samples:
        n += 1
        try:
            lhs = jump_apply(spec, x)
            rhs = eval_map(closed, x)
        except (EntryCapExceeded, NoPiece):
            excluded.append(x)
            continue
        compared += 1
        if is_exact(x):
            dev = abs(lhs - rhs)
            bad = dev != 0
        else:
            exact = False
            dev = abs(float(lhs) - float(rhs))
            bad = dev > tol
        mismatches += bad
        if dev > worst or not worst_x:
            worst, worst_x = float(dev), str(x)
    return EquivalenceReport(n, compared, worst, exact, excluded, worst_x, mismatches)


@dataclass
class EntryReport:
    samples: int
    finite: int
    max_entry_time: int

    @property
    def fraction(self) -> float:
        return self.finite / self.samples if self.samples else 0.0

    def to_dict(self) -> dict:
        return {"samples": self.samples, "finite": self.finite,
                "fraction": self.fraction, "max_entry_time": self.max_entry_time}


def check_entry_condition(spec: JumpSpec, sample_count: int, cap: int | None = None,
                          lo=None, hi=None, seed: int = 0) -> EntryReport:
    """Fraction of uniform float samples whose orbit enters the target set."""
    cap = spec.entry_cap if cap is None else cap
    capped = JumpSpec(spec.base, spec.target, cap)
    amb = spec.base.ambient
    lo = float(amb.lo if lo is None else lo)
    hi = float(amb.hi if hi is None else hi)
    xs = np.random.default_rng(seed).uniform(lo, hi, sample_count)
    finite, worst = 0, 0
    for x in xs:
        try:
            e = first_entry_time(capped, float(x))
        except (EntryCapExceeded, NoPiece):
            continue
        finite += 1
        worst = max(worst, e)
    return EntryReport(sample_count, finite, worst)


def random_rationals(count: int, ambient: Interval, seed: int = 0, max_den: int = 2**16) -> list[Fraction]:
    """Seeded rational samples p/q, 1 <= p <= q, scaled into the ambient interval."""
    rng = np.random.default_rng(seed)
    out = []
    dens = rng.integers(1, max_den, size=count)
    fracs = rng.random(count)
    for q, u in zip(dens.tolist(), fracs.tolist()):
        q = int(q)
        t = Fraction(1 + min(int(u * q), q - 1), q)
        out.append(ambient.lo + ambient.length * t)
    return out
