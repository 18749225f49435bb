"""Branching function systems {f_i} on an interval and their coding maps.

Branches are Moebius maps defined on the whole ambient interval.  Indices
start at 1.  Infinite-arity systems are a rule (``FamilyRule`` or
``JumpRule``) together with a truncation depth used wherever the branches
have to be enumerated.

The base measure is Lebesgue throughout, so the Radon-Nikodym derivative
of a branch is |f_i'|.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .errors import ArityMismatch, IndexOutOfRange, InvalidSystem, NonDifferentiable
from .interval_dynamics import (
    CountablePieces,
    Interval,
    JumpRule,
    Moebius,
    Piece,
    PiecewiseMap,
    _coverage,
    rule_from_json,
)

INF = "inf"
DEFAULT_DEPTH = 64


@dataclass(frozen=True)
class BranchSystem:
    ambient: Interval
    branches: tuple = ()
    rule: object = None
    truncation: int = DEFAULT_DEPTH
    # an explicitly supplied coding map; None means "invert the branches"
    coding_map: PiecewiseMap | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if (self.rule is None) == (not self.branches):
            raise ValueError("give either a finite branch tuple or an infinite rule")
        if self.rule is None and len(self.branches) < 2:
            raise ValueError("a branching function system needs at least two branches")

    @property
    def arity(self):
        return INF if self.rule is not None else len(self.branches)

    @property
    def depth(self) -> int:
        """Number of branches enumerated by finite computations."""
        return self.truncation if self.rule is not None else len(self.branches)

    def branch(self, i: int) -> Moebius:
        if i < 1 or (self.rule is None and i > len(self.branches)):
            raise IndexOutOfRange(f"branch index {i} outside 1..{self.arity}")
        return self.rule.moebius(i) if self.rule is not None else self.branches[i - 1]

    def range(self, i: int) -> Interval:
        return self.branch(i).image(self.ambient)

    def in_range(self, i: int, x) -> bool:
        """chi_{R_i}(x) with the half-open convention [lo, hi)."""
        r = self.range(i)
        return r.contains_half_open(x, close_right=r.hi == self.ambient.hi)

    def with_coding_map(self, T: PiecewiseMap | None) -> BranchSystem:
        return replace(self, coding_map=T)

    def with_truncation(self, K: int) -> BranchSystem:
        return replace(self, truncation=K)

    def to_json(self) -> dict:
        out = {"ambient": self.ambient.to_json(), "arity": self.arity if self.rule is None else INF}
        if self.rule is None:
            out["branches"] = [f.to_json() for f in self.branches]
        else:
            out["rule"] = self.rule.to_json()
            out["truncation"] = self.truncation
        if self.coding_map is not None:
            out["coding_map"] = self.coding_map.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict, name: str = "") -> BranchSystem:
        ambient = Interval.from_json(data["ambient"])
        coding = data.get("coding_map")
        coding = PiecewiseMap.from_json(coding) if coding else None
        if data.get("arity") == INF or "rule" in data:
            return cls(ambient, rule=rule_from_json(data["rule"]),
                       truncation=int(data.get("truncation", DEFAULT_DEPTH)),
                       coding_map=coding, name=name)
        return cls(ambient, branches=tuple(Moebius.from_json(b) for b in data["branches"]),
                   coding_map=coding, name=name)


@dataclass
class SystemReport:
    arity: object
    overlaps: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    escapes: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)
    ranges: list = field(default_factory=list)
    coverage_residual: Fraction = Fraction(0)

    @property
    def ok(self) -> bool:
        return not (self.overlaps or self.gaps or self.escapes or self.degenerate)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "arity": self.arity,
            "ranges": [r.to_json() for r in self.ranges],
            "overlaps": [[str(a), str(b)] for a, b in self.overlaps],
            "gaps": [[str(a), str(b)] for a, b in self.gaps],
            "escapes": self.escapes,
            "degenerate": self.degenerate,
            "coverage_residual": str(self.coverage_residual),
        }


def validate_system(f: BranchSystem) -> SystemReport:
    report = SystemReport(arity=f.arity)
    ranges = []
    for i in range(1, f.depth + 1):
        g = f.branch(i)
        if g.has_pole_in(f.ambient):
            # |f_i'| blows up (and changes nothing about sign): not a valid branch
            report.degenerate.append(i)
            continue
        r = g.image(f.ambient)
        ranges.append(r)
        if not r.issubset(f.ambient):
            report.escapes.append(i)
    report.ranges = ranges
    holes = _coverage(f.ambient, ranges, report)
    if f.arity == INF:
        report.coverage_residual = f.ambient.length - sum((r.length for r in ranges), Fraction(0))
        last = ranges[-1] if ranges else None
        holes = [h for h in holes if last is None or not (h[1] == last.lo or h[0] == last.hi)]
    report.gaps = holes
    return report


def coding_map_of(f: BranchSystem) -> PiecewiseMap:
    """The map F with F o f_i = id, as pieces (R_i, f_i^{-1})."""
    if f.coding_map is not None:
        return f.coding_map
    report = validate_system(f)
    if not report.ok:
        raise InvalidSystem(f"not a branching function system: {report.to_dict()}")
    if f.arity == INF:
        return PiecewiseMap(f.ambient, family=CountablePieces(f.rule, "inverse"),
                            truncation=f.truncation, name=f.name)
    pieces = tuple(Piece(g.image(f.ambient), g.inverse()) for g in f.branches)
    return PiecewiseMap(f.ambient, pieces=pieces, name=f.name)


def compose_branches(f: BranchSystem, word: Sequence[int]) -> Moebius:
    """f_{w1} o f_{w2} o ... o f_{wm}."""
    if not word:
        raise ValueError("word must be nonempty")
    out = f.branch(word[-1])
    for i in reversed(word[:-1]):
        out = f.branch(i).compose(out)
    return out


def jump_family(f: BranchSystem, K: int = DEFAULT_DEPTH) -> BranchSystem:
    """g_n = f_2^(n-1) o f_1, truncated at depth K."""
    if f.arity != 2:
        raise ArityMismatch(f"jump family needs arity 2, got {f.arity}")
    name = f"jump({f.name})" if f.name else ""
    return BranchSystem(f.ambient, rule=JumpRule(f.branch(1), f.branch(2)), truncation=K, name=name)


def rn_derivative(branch: Moebius, x):
    """Phi_{f_i}(x) = |f_i'(x)| for Lebesgue base measure."""
    if branch.denominator_at(x) == 0:
        raise NonDifferentiable(f"{branch} has a pole at {x}")
    return branch.abs_derivative(x)


def require_arity_two(f: BranchSystem):
    if f.arity != 2:
        raise ArityMismatch(f"expected an arity-2 system, got {f.arity}")
