"""Piecewise linear-fractional maps on a closed interval.

Every map here is built from :class:`Moebius` pieces with integer
coefficients, so evaluation is exact when the argument is a ``Fraction``
(or ``int``) and float64 when it is a ``float``.  Numpy arrays are accepted
by :meth:`Moebius.__call__` for the grid code.

Conventions
-----------
* Piece domains are closed.  When two pieces share an endpoint the one with
  the lower index wins.
* Countable families of pieces are produced on demand from a rule; the
  ``truncation`` index only bounds enumeration (validation, Ulam matrices),
  not evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Iterator, Union

import numpy as np

from .errors import NoPiece, NonDifferentiable, OutOfDomain, OutOfRange, TailUnbounded

Number = Union[Fraction, int, float]


def as_fraction(value) -> Fraction:
    """Parse ``"p/q"`` strings, ints, Fractions and floats (exactly)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


def frac_str(value) -> str:
    return str(as_fraction(value))


def is_exact(x) -> bool:
    return isinstance(x, Rational)


# -- float helpers -----------------------------------------------------------

_SPLITTER = 134217729.0  # 2**27 + 1


def _to_float(v: int) -> float:
    try:
        return float(v)
    except OverflowError:
        return math.copysign(math.inf, v)


def _split(a: float) -> tuple[float, float]:
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _fma(a: float, x: float, b: float) -> float:
    """a*x + b with a compensated (TwoProduct + TwoSum) evaluation."""
    p = a * x
    a_hi, a_lo = _split(a)
    x_hi, x_lo = _split(x)
    e = ((a_hi * x_hi - p) + a_hi * x_lo + a_lo * x_hi) + a_lo * x_lo
    s = p + b
    bb = s - p
    t = (p - (s - bb)) + (b - bb)
    return s + (t + e)


# -- intervals ---------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", as_fraction(self.lo))
        object.__setattr__(self, "hi", as_fraction(self.hi))
        if not self.lo < self.hi:
            raise ValueError(f"empty or degenerate interval [{self.lo}, {self.hi}]")
        object.__setattr__(self, "_fb", (float(self.lo), float(self.hi)))
        object.__setattr__(self, "_hash", hash((self.lo, self.hi)))

    def __hash__(self):
        return self._hash

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    def _float_side(self, x: float):
        # strict comparisons against the rounded endpoints are exact verdicts;
        # only a tie with a rounded endpoint needs the rational comparison
        flo, fhi = self._fb
        if flo < x < fhi:
            return True
        if x < flo or x > fhi:
            return False
        return None

    def __contains__(self, x) -> bool:
        if type(x) is Fraction:
            p, q = x.numerator, x.denominator
            lo, hi = self.lo, self.hi
            return lo.numerator * q <= p * lo.denominator and p * hi.denominator <= hi.numerator * q
        if type(x) is float:
            side = self._float_side(x)
            if side is not None:
                return side
        return self.lo <= x <= self.hi

    def contains_half_open(self, x, close_right: bool = False) -> bool:
        """Membership in [lo, hi), or [lo, hi] when ``close_right``."""
        if type(x) is float:
            side = self._float_side(x)
            if side is not None:
                return side
        return self.lo <= x < self.hi or (close_right and x == self.hi)

    def overlap(self, other: Interval) -> Fraction:
        return max(Fraction(0), min(self.hi, other.hi) - max(self.lo, other.lo))

    def intersect(self, other: Interval) -> Interval | None:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo < hi else None

    def issubset(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def to_json(self) -> list[str]:
        return [frac_str(self.lo), frac_str(self.hi)]

    @classmethod
    def from_json(cls, data) -> Interval:
        if isinstance(data, str):
            data = data.split(",")
        lo, hi = data
        return cls(as_fraction(lo), as_fraction(hi))

    def __str__(self):
        return f"[{self.lo}, {self.hi}]"


UNIT = Interval(Fraction(0), Fraction(1))


# -- Moebius maps ------------------------------------------------------------


@dataclass(frozen=True)
class Moebius:
    """x -> (a x + b) / (c x + d) with coprime integer coefficients.

    The constructor accepts any rationals and normalises projectively:
    denominators are cleared, the common gcd removed and the sign fixed so
    that ``c > 0``, or ``c == 0`` and ``d > 0``.  Two maps are therefore
    equal as functions iff they compare equal.
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        coeffs = [as_fraction(v) for v in (self.a, self.b, self.c, self.d)]
        den = math.lcm(*(q.denominator for q in coeffs))
        ints = [int(q * den) for q in coeffs]
        g = math.gcd(*ints)
        if g == 0:
            raise ValueError("zero matrix is not a Moebius map")
        ints = [v // g for v in ints]
        if ints[2] < 0 or (ints[2] == 0 and ints[3] < 0):
            ints = [-v for v in ints]
        a, b, c, d = ints
        if a * d - b * c == 0:
            raise ValueError(f"singular Moebius coefficients {ints}")
        for name, v in zip("abcd", ints):
            object.__setattr__(self, name, v)
        object.__setattr__(self, "_f", tuple(_to_float(v) for v in ints))

    @classmethod
    def from_matrix(cls, m) -> Moebius:
        (a, b), (c, d) = m
        return cls(a, b, c, d)

    @property
    def matrix(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return ((self.a, self.b), (self.c, self.d))

    @property
    def coefficients(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    def is_affine(self) -> bool:
        return self.c == 0

    def __call__(self, x):
        a, b, c, d = self.a, self.b, self.c, self.d
        if isinstance(x, np.ndarray):
            fa, fb, fc, fd = self._f
            return (fa * x + fb) / (fc * x + fd)
        if isinstance(x, float):
            fa, fb, fc, fd = self._f
            return _fma(fa, x, fb) / _fma(fc, x, fd)
        x = as_fraction(x)
        p, q = x.numerator, x.denominator
        den = c * p + d * q
        if den == 0:
            raise ZeroDivisionError(f"pole of {self} at {x}")
        return Fraction(a * p + b * q, den)

    def denominator_at(self, x):
        if isinstance(x, (float, np.ndarray)):
            return self._f[2] * x + self._f[3]
        return self.c * as_fraction(x) + self.d

    def derivative(self, x):
        """Signed derivative det / (c x + d)**2."""
        if isinstance(x, (float, np.ndarray)):
            den = _fma(self._f[2], x, self._f[3]) if isinstance(x, float) else self.denominator_at(x)
            return float(self.det) / (den * den)
        den = self.denominator_at(x)
        if den == 0:
            raise NonDifferentiable(f"pole of {self} at {x}")
        return Fraction(self.det) / (den * den)

    def abs_derivative(self, x):
        return abs(self.derivative(x))

    def value_and_abs_derivative(self, x: Fraction):
        """(g(x), |g'(x)|) for rational x, in integer arithmetic."""
        p, q = x.numerator, x.denominator
        num, den = self.a * p + self.b * q, self.c * p + self.d * q
        if den == 0:
            raise NonDifferentiable(f"pole of {self} at {x}")
        return Fraction(num, den), Fraction(abs(self.det) * q * q, den * den)

    def inverse(self) -> Moebius:
        return Moebius(self.d, -self.b, -self.c, self.a)

    def compose(self, other: Moebius) -> Moebius:
        """self o other (matrix product self * other)."""
        a, b, c, d = self.coefficients
        e, f, g, h = other.coefficients
        return Moebius(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)

    def power(self, n: int) -> Moebius:
        if n < 0:
            return self.inverse().power(-n)
        result = IDENTITY
        base = self
        while n:
            if n & 1:
                result = result.compose(base)
            base = base.compose(base)
            n >>= 1
        return result

    def has_pole_in(self, dom: Interval) -> bool:
        lo, hi = self.denominator_at(dom.lo), self.denominator_at(dom.hi)
        return lo == 0 or hi == 0 or (lo < 0) != (hi < 0)

    def image(self, dom: Interval) -> Interval:
        if self.has_pole_in(dom):
            raise NonDifferentiable(f"{self} has a pole in {dom}")
        y0, y1 = self(dom.lo), self(dom.hi)
        return Interval(min(y0, y1), max(y0, y1))

    def sup_abs_derivative(self, dom: Interval) -> Fraction:
        if self.has_pole_in(dom):
            raise NonDifferentiable(f"{self} has a pole in {dom}")
        m = min(abs(self.denominator_at(dom.lo)), abs(self.denominator_at(dom.hi)))
        return Fraction(abs(self.det)) / (m * m)

    def to_json(self) -> list[str]:
        return [str(v) for v in self.coefficients]

    @classmethod
    def from_json(cls, data) -> Moebius:
        return cls(*(as_fraction(v) for v in data))

    def __str__(self):
        if self.c == 0:
            return f"x -> ({self.a}*x + {self.b})/{self.d}"
        return f"x -> ({self.a}*x + {self.b})/({self.c}*x + {self.d})"


IDENTITY = Moebius(1, 0, 0, 1)


def _matrix_add(m1, m2, s=1):
    return tuple(as_fraction(u) + s * as_fraction(v) for u, v in zip(m1, m2))


# -- indexed families --------------------------------------------------------


@dataclass(frozen=True)
class FamilyRule:
    """Coefficients ``base + s(k) * step`` for k = 1, 2, ...

    ``kind="harmonic"`` uses s(k) = k; ``kind="geometric"`` uses
    s(k) = ratio**(-k) with 0 < ratio < 1.  When the rule describes the
    pieces of a map (rather than branches) the k-th domain is the image of
    [1/(k+1), 1/k] (harmonic) or [ratio**k, ratio**(k-1)] (geometric) under
    the affine bijection from [0, 1] onto the ambient interval.
    """

    kind: str
    base: tuple
    step: tuple
    ratio: Fraction = Fraction(1, 2)

    def __post_init__(self):
        if self.kind not in ("harmonic", "geometric"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        object.__setattr__(self, "base", tuple(as_fraction(v) for v in self.base))
        object.__setattr__(self, "step", tuple(as_fraction(v) for v in self.step))
        object.__setattr__(self, "ratio", as_fraction(self.ratio))
        if self.kind == "geometric" and not 0 < self.ratio < 1:
            raise ValueError("geometric ratio must lie in (0, 1)")
        object.__setattr__(self, "_hash", hash((self.kind, self.base, self.step, self.ratio)))

    def __hash__(self):
        return self._hash

    def s(self, k: int) -> Fraction:
        return Fraction(k) if self.kind == "harmonic" else self.ratio ** (-k)

    def moebius(self, k: int) -> Moebius:
        if k < 1:
            raise IndexError(k)
        return _family_moebius(self, k)

    def unit_domain(self, k: int) -> tuple[Fraction, Fraction]:
        if self.kind == "harmonic":
            return Fraction(1, k + 1), Fraction(1, k)
        return self.ratio**k, self.ratio ** (k - 1)

    def tail_derivative_bound(self, K: int, ambient: Interval) -> Fraction:
        """Upper bound for sum_{k>K} sup_ambient |g_k'|."""
        aB, bB, cB, dB = self.base
        aS, bS, cS, dS = self.step
        if aS * dS - bS * cS != 0:
            raise TailUnbounded("step matrix is invertible; branch derivatives do not decay")
        alpha = abs(aB * dB - bB * cB)
        beta = abs(aB * dS + aS * dB - bB * cS - bS * cB)
        ends = (ambient.lo, ambient.hi)
        s_vals = [cS * x + dS for x in ends]
        if s_vals[0] == 0 or s_vals[1] == 0 or (s_vals[0] < 0) != (s_vals[1] < 0):
            raise TailUnbounded("step denominator vanishes on the ambient interval")
        m = min(abs(v) for v in s_vals)
        M = max(abs(cB * x + dB) for x in ends)
        if self.kind == "harmonic":
            if beta != 0:
                raise TailUnbounded("harmonic family with non-summable derivative tail")
            if m * K <= M:
                raise TailUnbounded(f"truncation K={K} too small for a rigorous tail bound")
            return alpha / (m * (m * K - M))
        q = 1 / self.ratio
        eps = M / (m * q ** (K + 1))
        if eps >= 1:
            raise TailUnbounded(f"truncation K={K} too small for a rigorous tail bound")
        geo2 = q ** (-2 * (K + 1)) / (1 - q**-2)
        geo1 = q ** (-(K + 1)) / (1 - 1 / q)
        return (alpha * geo2 + beta * geo1) / (m * m * (1 - eps) ** 2)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "base": [frac_str(v) for v in self.base],
            "step": [frac_str(v) for v in self.step],
        }
        if self.kind == "geometric":
            out["ratio"] = frac_str(self.ratio)
        return out


@lru_cache(maxsize=65536)
def _family_moebius(rule: FamilyRule, k: int) -> Moebius:
    return Moebius(*_matrix_add(rule.base, rule.step, rule.s(k)))


@dataclass(frozen=True)
class JumpRule:
    """Branches g_n = f2^(n-1) o f1 of an arity-2 system."""

    f1: Moebius
    f2: Moebius

    kind = "jump"

    def __hash__(self):
        return hash((self.f1.coefficients, self.f2.coefficients))

    def moebius(self, n: int) -> Moebius:
        if n < 1:
            raise IndexError(n)
        return _jump_moebius(self, n)

    def as_harmonic(self) -> FamilyRule | None:
        """Closed harmonic form when f2 is parabolic, else None."""
        a, b, c, d = self.f2.coefficients
        tr, det = a + d, self.f2.det
        if tr * tr != 4 * det or tr == 0:
            return None
        lam = Fraction(tr, 2)
        n_mat = ((a / lam - 1, b / lam), (c / lam, d / lam - 1))
        (p, q), (r, s) = self.f1.matrix
        nf1 = (
            n_mat[0][0] * p + n_mat[0][1] * r,
            n_mat[0][0] * q + n_mat[0][1] * s,
            n_mat[1][0] * p + n_mat[1][1] * r,
            n_mat[1][0] * q + n_mat[1][1] * s,
        )
        base = _matrix_add((p, q, r, s), nf1, -1)
        return FamilyRule("harmonic", base, nf1)

    def tail_derivative_bound(self, K: int, ambient: Interval) -> Fraction:
        rho = self.f2.sup_abs_derivative(ambient)
        if rho < 1:
            return self.f1.sup_abs_derivative(ambient) * rho**K / (1 - rho)
        harmonic = self.as_harmonic()
        if harmonic is None:
            raise TailUnbounded("f2 is neither contracting nor parabolic")
        return harmonic.tail_derivative_bound(K, ambient)

    def to_json(self) -> dict:
        return {"kind": "jump", "f1": self.f1.to_json(), "f2": self.f2.to_json()}


@lru_cache(maxsize=65536)
def _jump_moebius(rule: JumpRule, n: int) -> Moebius:
    return rule.f2.power(n - 1).compose(rule.f1)


def rule_from_json(data: dict):
    if data["kind"] == "jump":
        return JumpRule(Moebius.from_json(data["f1"]), Moebius.from_json(data["f2"]))
    return FamilyRule(
        data["kind"], data["base"], data["step"], as_fraction(data.get("ratio", "1/2"))
    )


# -- piecewise maps ----------------------------------------------------------


@dataclass(frozen=True)
class Piece:
    domain: Interval
    map: Moebius

    def range(self) -> Interval:
        return self.map.image(self.domain)


@dataclass(frozen=True)
class CountablePieces:
    """The k-th piece of a countable family, produced on demand.

    ``mode="forward"``: the rule gives the piece maps and domains follow the
    rule's kind.  ``mode="inverse"``: the rule gives branches g_k and the
    k-th piece is (g_k(ambient), g_k^{-1}), i.e. the coding map.
    """

    rule: object
    mode: str = "forward"

    def piece(self, k: int, ambient: Interval) -> Piece:
        return _family_piece(self, k, ambient)

    def domain(self, k: int, ambient: Interval) -> Interval:
        return _family_domain(self, k, ambient)

    def max_index(self, ambient: Interval) -> int:
        # exponentially shrinking domains: 2**-4096 is far below any float
        if self.rule.kind == "geometric":
            return 4096
        if self.rule.kind == "jump" and self.rule.f2.sup_abs_derivative(ambient) < 1:
            return 4096
        return 2**1100

    def _guess(self, x, ambient: Interval) -> int | None:
        """Candidate index from the closed form of forward-mode domains."""
        if self.mode != "forward" or not isinstance(self.rule, FamilyRule):
            return None
        if ambient == UNIT:
            t = x
        elif is_exact(x):
            t = (x - ambient.lo) / ambient.length
        else:
            t = (x - float(ambient.lo)) / float(ambient.length)
        if not 0 < t <= 1:
            return None
        if self.rule.kind == "harmonic":
            u = 1 / as_fraction(t)
            return max(1, math.ceil(u) - 1)
        k = math.log(float(t)) / math.log(float(self.rule.ratio))
        return max(1, math.ceil(k)) if math.isfinite(k) else None

    def locate(self, x, ambient: Interval) -> int | None:
        """Smallest k whose closed domain contains x.

        Forward families guess k from the domain formula and confirm it
        exactly; otherwise a galloping search is used.  Assumes the domains
        are ordered monotonically in k, which holds for every family built
        by this package (validated by validate_piecewise).
        """
        guess = self._guess(x, ambient)
        if guess is not None:
            for k in range(max(1, guess - 1), guess + 2):
                if x in self.domain(k, ambient):
                    return k
        d1, d2 = self.domain(1, ambient), self.domain(2, ambient)
        leftward = d2.lo < d1.lo
        if x in d1:
            return 1

        def reached(k):
            d = self.domain(k, ambient)
            return x >= d.lo if leftward else x <= d.hi

        hi, cap = 2, self.max_index(ambient)
        while not reached(hi):
            hi *= 2
            if hi > cap:
                return None
        lo = hi // 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if reached(mid):
                hi = mid
            else:
                lo = mid
        return hi if x in self.domain(hi, ambient) else None

    def to_json(self) -> dict:
        out = dict(self.rule.to_json())
        if self.mode == "inverse":
            out = {"kind": "inverse", "rule": out}
        return out

    @classmethod
    def from_json(cls, data: dict) -> CountablePieces:
        if data["kind"] == "inverse":
            return cls(rule_from_json(data["rule"]), "inverse")
        return cls(rule_from_json(data), "forward")


@lru_cache(maxsize=65536)
def _family_domain(fam: CountablePieces, k: int, ambient: Interval) -> Interval:
    if fam.mode == "forward":
        t0, t1 = fam.rule.unit_domain(k)
        return Interval(ambient.lo + ambient.length * t0, ambient.lo + ambient.length * t1)
    return fam.rule.moebius(k).image(ambient)


@lru_cache(maxsize=65536)
def _family_piece(fam: CountablePieces, k: int, ambient: Interval) -> Piece:
    g = fam.rule.moebius(k)
    if fam.mode == "forward":
        return Piece(_family_domain(fam, k, ambient), g)
    return Piece(_family_domain(fam, k, ambient), g.inverse())


@dataclass(frozen=True)
class PiecewiseMap:
    ambient: Interval
    pieces: tuple = ()
    family: CountablePieces | None = None
    exceptional: tuple = ()
    truncation: int = 64
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(
            self, "exceptional", tuple((as_fraction(x), as_fraction(y)) for x, y in self.exceptional)
        )

    def iter_pieces(self, limit: int | None = None) -> Iterator[Piece]:
        """Finite pieces followed by family pieces 1..limit (default: truncation)."""
        yield from self.pieces
        if self.family is not None:
            for k in range(1, (limit or self.truncation) + 1):
                yield self.family.piece(k, self.ambient)

    def active_piece(self, x) -> Piece | None:
        for p in self.pieces:
            if x in p.domain:
                return p
        if self.family is not None:
            k = self.family.locate(x, self.ambient)
            if k is not None:
                return self.family.piece(k, self.ambient)
        return None

    def exceptional_value(self, x):
        for ex, ey in self.exceptional:
            if type(x) is float and x != float(ex):
                continue
            if x == ex:
                return ey
        return None

    def __call__(self, x):
        return eval_map(self, x)

    def to_json(self) -> dict:
        out = {
            "ambient": self.ambient.to_json(),
            "pieces": [{"dom": p.domain.to_json(), "moebius": p.map.to_json()} for p in self.pieces],
        }
        if self.family is not None:
            out["family_rule"] = self.family.to_json()
            out["truncation"] = self.truncation
        if self.exceptional:
            out["exceptional"] = [[frac_str(x), frac_str(y)] for x, y in self.exceptional]
        return out

    @classmethod
    def from_json(cls, data: dict, name: str = "") -> PiecewiseMap:
        fam = data.get("family_rule")
        return cls(
            ambient=Interval.from_json(data["ambient"]),
            pieces=tuple(
                Piece(Interval.from_json(p["dom"]), Moebius.from_json(p["moebius"]))
                for p in data.get("pieces", [])
            ),
            family=CountablePieces.from_json(fam) if fam else None,
            exceptional=tuple(tuple(e) for e in data.get("exceptional", [])),
            truncation=int(data.get("truncation", 64)),
            name=name,
        )


def _check_ambient(T: PiecewiseMap, x):
    if x not in T.ambient:
        raise OutOfDomain(f"{x} is outside the ambient interval {T.ambient}")


def eval_map(T: PiecewiseMap, x):
    _check_ambient(T, x)
    ey = T.exceptional_value(x)
    if ey is not None:
        return float(ey) if isinstance(x, float) else ey
    piece = T.active_piece(x)
    if piece is None:
        raise NoPiece(f"no piece of the map contains {x}")
    return piece.map(x)


def eval_derivative(T: PiecewiseMap, x):
    _check_ambient(T, x)
    if T.exceptional_value(x) is not None:
        raise NonDifferentiable(f"{x} is an exceptional point")
    piece = T.active_piece(x)
    if piece is None:
        raise NoPiece(f"no piece of the map contains {x}")
    dom = piece.domain
    on_edge = (x == dom.lo and x != T.ambient.lo) or (x == dom.hi and x != T.ambient.hi)
    if on_edge:
        raise NonDifferentiable(f"{x} is a piece boundary")
    return piece.map.derivative(x)


def invert_piece(piece: Piece, y):
    rng = piece.range()
    if y not in rng:
        raise OutOfRange(f"{y} is outside the range {rng} of the piece")
    return piece.map.inverse()(y)


@dataclass
class ValidationReport:
    overlaps: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    poles: list = field(default_factory=list)
    escapes: list = field(default_factory=list)
    truncation_residual: Fraction = Fraction(0)

    @property
    def ok(self) -> bool:
        return not (self.overlaps or self.gaps or self.poles or self.escapes)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "overlaps": [[str(a), str(b)] for a, b in self.overlaps],
            "gaps": [[str(a), str(b)] for a, b in self.gaps],
            "poles": [str(p) for p in self.poles],
            "escapes": [str(p) for p in self.escapes],
            "truncation_residual": str(self.truncation_residual),
        }


def _coverage(ambient: Interval, domains: list[Interval], report: ValidationReport):
    domains = sorted(domains, key=lambda d: (d.lo, d.hi))
    for d1, d2 in zip(domains, domains[1:]):
        if d1.hi > d2.lo:
            report.overlaps.append((d2.lo, min(d1.hi, d2.hi)))
    cursor = ambient.lo
    holes = []
    for d in domains:
        if d.lo > cursor:
            holes.append((cursor, d.lo))
        cursor = max(cursor, d.hi)
    if cursor < ambient.hi:
        holes.append((cursor, ambient.hi))
    return holes


def validate_piecewise(T: PiecewiseMap) -> ValidationReport:
    report = ValidationReport()
    domains = []
    for piece in T.iter_pieces():
        if not piece.domain.issubset(T.ambient):
            report.escapes.append(piece.domain)
        domains.append(piece.domain)
        if piece.map.has_pole_in(piece.domain):
            report.poles.append(piece.domain)
        elif not piece.range().issubset(T.ambient):
            report.escapes.append(piece.domain)
    holes = _coverage(T.ambient, domains, report)
    if T.family is not None:
        # the unenumerated tail accumulates at one end; it is not a defect
        tail = _family_tail_hole(T, holes)
        if tail is not None:
            holes.remove(tail)
            report.truncation_residual = tail[1] - tail[0]
    report.gaps.extend(holes)
    return report


def _family_tail_hole(T: PiecewiseMap, holes):
    last = T.family.domain(T.truncation, T.ambient)
    for h in holes:
        if h[1] == last.lo or h[0] == last.hi:
            return h
    return None
