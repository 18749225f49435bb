"""Densities, transfer-operator invariance and density transport.

A :class:`Density` is a rational function ``num/den`` with rational
coefficients times a float normalisation ``scale``.  Exact (``Fraction``)
arguments are evaluated on the unnormalised rational part, so identities
between densities that share a scale can be checked with no tolerance;
float arguments return the normalised value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np
from scipy import integrate

from . import _poly as P
from .branching import INF, BranchSystem, require_arity_two
from .errors import NonDifferentiable, NoPiece, QuadratureFailure, TailUnbounded
from .interval_dynamics import (
    UNIT,
    FamilyRule,
    Interval,
    JumpRule,
    Moebius,
    Piece,
    PiecewiseMap,
    as_fraction,
    eval_derivative,
    eval_map,
    is_exact,
)

LOG2 = math.log(2.0)
LOG4_3 = math.log(4.0 / 3.0)

# beyond this many branches the exact transfer sum switches to float64
EXACT_TERM_LIMIT = 4096


@dataclass(frozen=True)
class Density:
    num: tuple
    den: tuple = P.ONE
    scale: float = 1.0
    scale_tag: str = "1"
    ambient: Interval = UNIT
    name: str = field(default="", compare=False)

    def __post_init__(self):
        num, den = P.poly(self.num), P.poly(self.den)
        if den == P.ZERO:
            raise ZeroDivisionError("density with zero denominator")
        g = P.gcd(num, den)
        if P.degree(g) > 0:
            num, den = P.divmod_(num, g)[0], P.divmod_(den, g)[0]
        if P.degree(den) == 0 and den != P.ONE:
            num, den = P.scale(num, 1 / den[0]), P.ONE
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def constant(cls, c=1, **kw) -> Density:
        return cls(P.poly([c]), P.ONE, **kw)

    def exact(self, x) -> Fraction:
        """Unnormalised value num(x)/den(x); exact for rational x."""
        return P.evaluate(self.num, x) / P.evaluate(self.den, x)

    def __call__(self, x):
        if isinstance(x, np.ndarray):
            return self.scale * P.evaluate(self.num, x) / P.evaluate(self.den, x)
        if is_exact(x):
            return self.exact(x)
        x = float(x)
        return self.scale * P.evaluate(self.num, x) / P.evaluate(self.den, x)

    def value(self, x) -> float:
        """Normalised float value at any argument."""
        return self.scale * float(self.exact(as_fraction(x))) if is_exact(x) else self(float(x))

    @property
    def poles(self) -> list[float]:
        return P.real_roots(self.den, float(self.ambient.lo), float(self.ambient.hi))

    @property
    def integrable(self) -> bool:
        return not self.poles

    def sup(self) -> float:
        if not self.integrable:
            return math.inf
        lo, hi = float(self.ambient.lo), float(self.ambient.hi)
        crit = P.add(P.mul(P.derivative(self.num), self.den),
                     P.scale(P.mul(self.num, P.derivative(self.den)), -1))
        pts = [lo, hi] + P.real_roots(crit, lo, hi)
        return max(abs(self(float(t))) for t in pts)

    def integral(self, lo=None, hi=None) -> float:
        lo = float(self.ambient.lo if lo is None else lo)
        hi = float(self.ambient.hi if hi is None else hi)
        if hi <= lo:
            return 0.0
        if any(lo <= p <= hi for p in self.poles):
            raise QuadratureFailure(f"density has a pole in [{lo}, {hi}]")
        val, err = integrate.quad(lambda t: self(float(t)), lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)
        if not math.isfinite(val) or err > 1e-11:
            raise QuadratureFailure(f"quadrature error estimate {err:.3g} on [{lo}, {hi}]")
        return val

    def normalized(self) -> Density:
        z = self.integral()
        return Density(self.num, self.den, self.scale / z, f"{self.scale_tag}/{z!r}", self.ambient, self.name)

    def with_scale(self, scale: float, tag: str) -> Density:
        return Density(self.num, self.den, scale, tag, self.ambient, self.name)

    def projective_ratio(self, other: Density) -> Fraction | None:
        """c with self == c * other as rational functions, else None."""
        lhs = P.mul(self.num, other.den)
        rhs = P.mul(other.num, self.den)
        if P.degree(lhs) != P.degree(rhs):
            return None
        c = lhs[-1] / rhs[-1]
        return c if lhs == P.scale(rhs, c) else None

    def is_projectively_equal(self, other: Density) -> bool:
        c = self.projective_ratio(other)
        return c is not None and c > 0

    def describe(self) -> str:
        return f"{self.scale_tag} * ({P.to_str(self.num)}) / ({P.to_str(self.den)})"

    def to_json(self) -> dict:
        return {
            "num": [str(c) for c in self.num],
            "den": [str(c) for c in self.den],
            "scale": self.scale,
            "scale_tag": self.scale_tag,
            "ambient": self.ambient.to_json(),
            "integrable": self.integrable,
        }

    @classmethod
    def from_json(cls, data: dict, name: str = "") -> Density:
        return cls(
            P.poly([as_fraction(c) for c in data["num"]]),
            P.poly([as_fraction(c) for c in data["den"]]),
            float(data.get("scale", 1.0)),
            data.get("scale_tag", "1"),
            Interval.from_json(data.get("ambient", ["0", "1"])),
            name,
        )


# catalog densities -----------------------------------------------------------

LEBESGUE = Density.constant(1, name="lebesgue")
GAUSS_GAMMA = Density(P.ONE, P.poly([1, 1]), 1 / LOG2, "1/log(2)", name="gamma")
FAREY_THETA = Density(P.ONE, P.poly([0, 1]), 1.0, "1", name="theta")
CHAN_MU2 = Density(P.ONE, P.poly([2, 3, 1]), 1 / LOG4_3, "1/log(4/3)", name="mu2")


# transfer operator -------------------------------------------------------------


@dataclass
class TransferValue:
    value: object
    tail_bound: float
    terms: int
    exact: bool
    next_terms: tuple = ()


def _as_callable(phi):
    if isinstance(phi, Density):
        return phi
    if hasattr(phi, "interpolate"):
        return phi.interpolate
    return phi


def _coefficient_arrays(rule, K: int):
    """Float coefficient arrays (a, b, c, d) of branches 1..K."""
    if isinstance(rule, JumpRule):
        harmonic = rule.as_harmonic()
        if harmonic is not None:
            rule = harmonic
    if isinstance(rule, FamilyRule):
        k = np.arange(1, K + 1, dtype=float)
        with np.errstate(over="ignore"):
            s = k if rule.kind == "harmonic" else float(1 / rule.ratio) ** k
        return [float(b) + s * float(st) for b, st in zip(rule.base, rule.step)]
    mats = [rule.moebius(k).coefficients for k in range(1, K + 1)]
    return [np.array([float(m[j]) for m in mats]) for j in range(4)]


def _tail_bound(f: BranchSystem, phi, K: int) -> float:
    if f.arity != INF:
        return 0.0
    sup_phi = phi.sup() if isinstance(phi, Density) else float(np.max(np.abs(phi.values)))
    if not math.isfinite(sup_phi):
        raise TailUnbounded("density is unbounded; no tail estimate for an infinite sum")
    return sup_phi * float(f.rule.tail_derivative_bound(K, f.ambient))


def transfer_apply(f: BranchSystem, phi, x, K: int | None = None) -> TransferValue:
    """(L phi)(x) = sum_{i<=K} |f_i'(x)| phi(f_i(x)) with a tail bound.

    Exact when x is rational, phi is a Density and the sum has at most
    EXACT_TERM_LIMIT terms; the value is then in phi's unnormalised units.
    Otherwise float64 (normalised units) with a vectorised sum.
    """
    K = f.depth if K is None or f.arity != INF else K
    fn = _as_callable(phi)
    exact = is_exact(x) and isinstance(phi, Density) and K <= EXACT_TERM_LIMIT
    tail = _tail_bound(f, phi, K)
    if exact:
        x = as_fraction(x)
        total = Fraction(0)
        for i in range(1, K + 1):
            g = f.branch(i)
            total += g.abs_derivative(x) * phi.exact(g(x))
        nxt = ()
        if f.arity == INF:
            nxt = tuple(f.branch(i).abs_derivative(x) * phi.exact(f.branch(i)(x)) for i in range(K + 1, K + 4))
        unnorm_tail = tail / phi.scale
        return TransferValue(total, unnorm_tail, K, True, nxt)
    xf = float(x)
    if f.arity != INF:
        total = math.fsum(f.branch(i).abs_derivative(xf) * float(fn(f.branch(i)(xf))) for i in range(1, K + 1))
        return TransferValue(total, 0.0, K, False)
    a, b, c, d = _coefficient_arrays(f.rule, K)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        den = c * xf + d
        det = np.abs(a * d - b * c)
        y = (a * xf + b) / den
        w = det / (den * den)
        w = np.where(np.isfinite(w), w, 0.0)
        y = np.where(np.isfinite(y), y, 0.0)
    vals = fn(y) if isinstance(phi, Density) else np.array([float(fn(v)) for v in y])
    total = math.fsum((w * vals).tolist())
    return TransferValue(total, tail, K, False)


@dataclass
class ResidualReport:
    samples: int
    max_abs_residual: float
    max_tail_bound: float
    exact: bool
    ok: bool
    worst_x: str = ""
    excluded: int = 0
    extrapolated_max_abs: float | None = None

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "max_abs_residual": self.max_abs_residual,
            "max_tail_bound": self.max_tail_bound,
            "exact": self.exact,
            "ok": self.ok,
            "worst_x": self.worst_x,
            "excluded": self.excluded,
            "extrapolated_max_abs": self.extrapolated_max_abs,
        }


def _geometric_remainder(terms: tuple) -> Fraction | None:
    """Sum of the series continuing ``terms`` if they are exactly geometric."""
    t1, t2, t3 = terms
    if t1 == 0 or t2 * t2 != t1 * t3:
        return None
    r = t2 / t1
    return t1 / (1 - r) if 0 <= r < 1 else None


def invariance_residual(f: BranchSystem, phi: Density, samples: Iterable, K: int | None = None) -> ResidualReport:
    """max_x |(L phi)(x) - phi(x)|, passing when within the tail bound.

    For exact infinite sums the residual is also re-evaluated after adding
    the closed-form remainder of an exactly geometric tail, when the next
    terms are geometric (``extrapolated_max_abs``).
    """
    worst, worst_x, worst_tail = 0.0, "", 0.0
    ok, all_exact, n = True, True, 0
    extrap = None
    for x in samples:
        n += 1
        tv = transfer_apply(f, phi, x, K)
        target = phi.exact(as_fraction(x)) if tv.exact else phi.value(x)
        res = target - tv.value
        all_exact &= tv.exact
        if tv.exact and tv.tail_bound == 0:
            good = res == 0
        else:
            # terms are nonnegative, so the truncation error has a sign
            good = -1e-15 * abs(float(target)) <= float(res) <= tv.tail_bound + 1e-15 * abs(float(target))
        ok &= good
        scaled = abs(float(res)) * (phi.scale if tv.exact else 1.0)
        if scaled >= worst:
            worst, worst_x = scaled, str(x)
        worst_tail = max(worst_tail, tv.tail_bound * (phi.scale if tv.exact else 1.0))
        if tv.exact and tv.next_terms:
            rem = _geometric_remainder(tv.next_terms)
            if rem is not None:
                e = abs(float(res - rem)) * phi.scale
                extrap = e if extrap is None else max(extrap, e)
    return ResidualReport(n, worst, worst_tail, all_exact, ok, worst_x, 0, extrap)


def K_for_tail(f: BranchSystem, phi: Density, bound: float = 1e-6, start: int = 1) -> int:
    """Smallest truncation depth whose rigorous tail bound is <= ``bound``."""
    K, last_fail = max(start, 1), 0
    while True:
        try:
            if _tail_bound(f, phi, K) <= bound:
                break
        except TailUnbounded:
            if K > 2**40:
                raise
        last_fail = K
        K *= 2
    lo, hi = last_fail, K
    while hi - lo > 1:
        mid = (lo + hi) // 2
        try:
            good = _tail_bound(f, phi, mid) <= bound
        except TailUnbounded:
            good = False
        lo, hi = (lo, mid) if good else (mid, hi)
    return hi


# density transport -------------------------------------------------------------


def transport_density(f: BranchSystem, phi: Density) -> Density:
    """psi(x) = |f_1'(x)| * phi(f_1(x)), kept in closed form.

    Returned unnormalised, with phi's scale; densities are meaningful only
    up to a positive multiple here.
    """
    require_arity_two(f)
    g = f.branch(1)
    a, b, c, d = g.coefficients
    n, m = max(P.degree(phi.num), 0), max(P.degree(phi.den), 0)
    num_t = P.compose_moebius(phi.num, a, b, c, d)
    den_t = P.compose_moebius(phi.den, a, b, c, d)
    lin = P.poly([d, c])
    # phi(g x) = num_t (cx+d)^m / (den_t (cx+d)^n);  |g'| = |det| / (cx+d)^2
    e = m - n - 2
    num = P.scale(num_t, abs(g.det))
    den = den_t
    if e >= 0:
        num = P.mul(num, P.power(lin, e))
    else:
        den = P.mul(den, P.power(lin, -e))
    name = f"transport({phi.name})" if phi.name else ""
    return Density(num, den, phi.scale, phi.scale_tag, f.ambient, name)


# induced measure ---------------------------------------------------------------


def _preimage_pieces(T: PiecewiseMap, E: Interval):
    for piece in T.iter_pieces():
        rng = piece.range()
        hit = rng.intersect(E)
        if hit is None:
            continue
        inv = piece.map.inverse()
        u, v = inv(hit.lo), inv(hit.hi)
        yield Interval(min(u, v), max(u, v))


def induced_measure(T: PiecewiseMap, A: Interval, phi: Density, E: Interval) -> float:
    """nu(E) = mu_phi(T^{-1}(E) n A), integrating phi over exact preimages."""
    if not E.issubset(T.ambient):
        raise ValueError(f"{E} is not inside {T.ambient}")
    total = []
    for pre in _preimage_pieces(T, E):
        part = pre.intersect(A)
        if part is not None:
            total.append(phi.integral(part.lo, part.hi))
    return math.fsum(total)


def dyadic_intervals(ambient: Interval, depth: int) -> list[Interval]:
    out = []
    for level in range(depth + 1):
        n = 2**level
        for j in range(n):
            out.append(Interval(ambient.lo + ambient.length * Fraction(j, n),
                                ambient.lo + ambient.length * Fraction(j + 1, n)))
    return out


def induced_consistency(T: PiecewiseMap, f: BranchSystem, phi: Density, depth: int = 6) -> dict:
    """Compare nu(E) with the integral of the transported density over E."""
    A = f.range(1)
    psi = transport_density(f, phi)
    worst, worst_E = 0.0, None
    intervals = dyadic_intervals(T.ambient, depth)
    for E in intervals:
        dev = abs(induced_measure(T, A, phi, E) - psi.integral(E.lo, E.hi))
        if dev >= worst:
            worst, worst_E = dev, E
    return {"intervals": len(intervals), "max_deviation": worst,
            "worst_interval": worst_E.to_json() if worst_E else None}


# pullback ----------------------------------------------------------------------


def as_map(g: Moebius, ambient: Interval = UNIT) -> PiecewiseMap:
    return PiecewiseMap(ambient, pieces=(Piece(ambient, g),))


def pullback_check(T: PiecewiseMap, psi1: Density, psi2: Density, samples: Iterable) -> ResidualReport:
    """max |psi1(x) - |T'(x)| psi2(T(x))| over samples."""
    same_units = psi1.scale_tag == psi2.scale_tag and psi1.scale == psi2.scale
    worst, worst_x, n, excluded, exact_all = 0.0, "", 0, 0, True
    for x in samples:
        try:
            slope = abs(eval_derivative(T, x))
            y = eval_map(T, x)
        except (NonDifferentiable, NoPiece):
            excluded += 1
            continue
        n += 1
        if same_units and is_exact(x):
            dev = abs(psi1.exact(x) - slope * psi2.exact(y))
            dev = float(dev) * psi1.scale
        else:
            exact_all = False
            dev = abs(psi1.value(x) - float(slope) * psi2.value(y))
        if dev >= worst:
            worst, worst_x = dev, str(x)
    return ResidualReport(n, worst, 0.0, exact_all, worst == 0 if exact_all else worst <= 1e-12,
                          worst_x, excluded)
