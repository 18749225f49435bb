"""Isometries S(f_i) on L2 of the ambient interval and Cuntz-relation checks.

Two evaluation modes:

* closed form: a word of generators is evaluated pointwise on a test
  function given by a formula.  Each letter moves the evaluation point and
  multiplies a squared weight; with rational points the weight stays
  rational, so the result is a finite sum of ``c * sqrt(w)`` with rational
  ``c`` and ``w`` (a :class:`RadicalSum`) and identities can be decided
  exactly.  A numpy version evaluates the same formulas on float arrays.
* grid: functions are :class:`GridFunction` samples at the M cell
  midpoints and ``phi(T(x))`` is read off by linear interpolation (clamped
  at the ends).  Used for inner products and quadrature-level checks.

(S_i phi)(x) = chi_{R_i}(x) sqrt|T'(x)| phi(T(x)) and
(S_i^* phi)(x) = sqrt|f_i'(x)| phi(f_i(x)), with T the coding map.
Ranges R_i are taken half-open, [lo, hi), closed when hi is the right end
of the ambient interval.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .branching import INF, BranchSystem, compose_branches, jump_family, require_arity_two
from .errors import GridMismatch, IndexOutOfRange, NoPiece
from .interval_dynamics import (
    UNIT,
    CountablePieces,
    Interval,
    PiecewiseMap,
    ValidationReport,
    _coverage,
    as_fraction,
    is_exact,
)

DEFAULT_GRID = 4096
# exact checks run at this many rational cell midpoints
DEFAULT_EXACT_NODES = 64


# -- exact sums of square roots ------------------------------------------------


def _rational_sqrt(q: Fraction) -> Fraction | None:
    if q < 0:
        return None
    p, d = q.numerator, q.denominator
    a, b = math.isqrt(p), math.isqrt(d)
    return Fraction(a, b) if a * a == p and b * b == d else None


class RadicalSum:
    """sum_k c_k sqrt(w_k) with rational c_k and positive rational w_k.

    Terms whose radicands differ by a rational square are merged, so the
    remaining radicands are pairwise in distinct square classes; square
    roots of such radicands are linearly independent over Q, which makes
    :meth:`is_zero` an exact test.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=()):
        self.terms: list[list] = []
        for c, w in terms:
            self.add(c, w)

    def add(self, c, w) -> RadicalSum:
        if c == 0 or w == 0:
            return self
        w = Fraction(w)
        for t in self.terms:
            s = _rational_sqrt(w / t[0])
            if s is not None:
                t[1] += c * s
                return self
        self.terms.append([w, Fraction(c)])
        return self

    def __add__(self, other: RadicalSum) -> RadicalSum:
        out = RadicalSum((c, w) for w, c in self.terms)
        for w, c in other.terms:
            out.add(c, w)
        return out

    def __neg__(self) -> RadicalSum:
        return RadicalSum((-c, w) for w, c in self.terms)

    def __sub__(self, other: RadicalSum) -> RadicalSum:
        return self + (-other)

    def scaled(self, s) -> RadicalSum:
        return RadicalSum((c * s, w) for w, c in self.terms)

    def is_zero(self) -> bool:
        return all(c == 0 for _, c in self.terms)

    def __float__(self) -> float:
        return math.fsum(float(c) * math.sqrt(float(w)) for w, c in self.terms)

    def squared_if_single(self) -> Fraction | None:
        """The exact square of the value when it has a single term."""
        live = [(w, c) for w, c in self.terms if c != 0]
        if not live:
            return Fraction(0)
        if len(live) == 1:
            w, c = live[0]
            return c * c * w
        return None

    def __repr__(self):
        body = " + ".join(f"{c}*sqrt({w})" for w, c in self.terms if c != 0)
        return f"RadicalSum({body or '0'})"


# -- test functions ------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """A closed-form real function, exact on rationals and vectorised on arrays.

    ``sq_antiderivative`` is an exact antiderivative of phi**2, used for
    exact L2 norms over intervals.
    """

    name: str
    fn: Callable
    sq_antiderivative: Callable | None = None

    __test__ = False  # not a pytest class

    def __call__(self, y):
        return self.fn(y)

    def norm2_on(self, lo, hi):
        if self.sq_antiderivative is None:
            raise ValueError(f"no exact antiderivative for {self.name}")
        return self.sq_antiderivative(as_fraction(hi)) - self.sq_antiderivative(as_fraction(lo))


def _step(y):
    if isinstance(y, np.ndarray):
        return (y <= 0.5).astype(float)
    return Fraction(1) if y <= Fraction(1, 2) else Fraction(0)


def _recip(y):
    return 1 / (y + 1)


STANDARD_TEST_FUNCTIONS = (
    TestFunction("one", lambda y: y * 0 + 1, lambda t: t),
    TestFunction("x", lambda y: y, lambda t: t**3 / 3),
    TestFunction("x^2", lambda y: y * y, lambda t: t**5 / 5),
    TestFunction("chi[0,1/2]", _step, lambda t: min(t, Fraction(1, 2))),
    TestFunction("1/(x+1)", _recip, lambda t: -1 / (t + 1)),
)


def get_test_function(name: str) -> TestFunction:
    for tf in STANDARD_TEST_FUNCTIONS:
        if tf.name == name:
            return tf
    raise KeyError(name)


# -- operator words ------------------------------------------------------------

GEN, ADJ = "gen", "adj"


@dataclass(frozen=True)
class OperatorWord:
    """A finite linear combination of products of generators and adjoints.

    ``terms`` is a tuple of ``(coefficient, letters)`` where ``letters`` is a
    tuple of ``("gen" | "adj", index)`` written as an operator product: the
    rightmost letter acts first.
    """

    terms: tuple

    def __post_init__(self):
        terms = tuple((Fraction(c), tuple((k, int(i)) for k, i in letters)) for c, letters in self.terms)
        if not terms or any(not letters for _, letters in terms):
            raise ValueError("an operator word needs at least one letter")
        for _, letters in terms:
            for kind, i in letters:
                if kind not in (GEN, ADJ):
                    raise ValueError(f"unknown letter kind {kind!r}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def gen(cls, i: int, power: int = 1) -> OperatorWord:
        return cls(((1, ((GEN, i),) * power),))

    @classmethod
    def adj(cls, i: int, power: int = 1) -> OperatorWord:
        return cls(((1, ((ADJ, i),) * power),))

    @classmethod
    def from_letters(cls, letters) -> OperatorWord:
        return cls(((1, tuple(letters)),))

    def __mul__(self, other):
        if isinstance(other, OperatorWord):
            return OperatorWord(tuple((c1 * c2, l1 + l2) for c1, l1 in self.terms for c2, l2 in other.terms))
        return OperatorWord(tuple((c * other, l) for c, l in self.terms))

    def __rmul__(self, other):
        return self * other

    def __add__(self, other: OperatorWord) -> OperatorWord:
        return OperatorWord(self.terms + other.terms)

    def adjoint(self) -> OperatorWord:
        flip = {GEN: ADJ, ADJ: GEN}
        return OperatorWord(tuple((c, tuple((flip[k], i) for k, i in reversed(l))) for c, l in self.terms))

    def max_index(self) -> int:
        return max(i for _, l in self.terms for _, i in l)

    def __str__(self):
        def letter(k, i):
            return f"S{i}" + ("*" if k == ADJ else "")

        parts = []
        for c, l in self.terms:
            body = " ".join(letter(k, i) for k, i in l)
            parts.append(body if c == 1 else f"{c} {body}")
        return " + ".join(parts)

    @classmethod
    def parse(cls, text: str) -> OperatorWord:
        """Parse e.g. ``"S2^3 S1"`` or ``"S1 S2 S1* + S1^2 S2*"``.

        Letters may also be written ``t2`` / ``s2``; an optional leading
        rational is the coefficient of a term.
        """
        terms = []
        for chunk in text.split("+"):
            tokens = chunk.split()
            if not tokens:
                raise ValueError(f"empty term in {text!r}")
            coeff = Fraction(1)
            if re.fullmatch(r"-?\d+(/\d+)?", tokens[0]):
                coeff = Fraction(tokens.pop(0))
            letters = []
            for tok in tokens:
                m = re.fullmatch(r"[SsTt]?(\d+)(\*)?(?:\^(\d+))?", tok)
                if not m:
                    raise ValueError(f"cannot parse letter {tok!r}")
                kind = ADJ if m.group(2) else GEN
                letters.extend([(kind, int(m.group(1)))] * int(m.group(3) or 1))
            terms.append((coeff, tuple(letters)))
        return cls(tuple(terms))


def embedding_word(n: int) -> OperatorWord:
    """t2^(n-1) t1, the image of the n-th generator of O_infinity."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return OperatorWord((((1, ((GEN, 2),) * (n - 1) + ((GEN, 1),))),))


def alternative_embedding_word(n: int) -> OperatorWord:
    """t2^(n-1) (t1 t2 t1* + t1^2 t2*)."""
    head = ((GEN, 2),) * (n - 1)
    return OperatorWord(
        (
            (1, head + ((GEN, 1), (GEN, 2), (ADJ, 1))),
            (1, head + ((GEN, 1), (GEN, 1), (ADJ, 2))),
        )
    )


# -- per-system evaluation helpers ---------------------------------------------


# exact letter steps remembered per system before the memo is reset
_STEP_CACHE = 200_000


class _Ops:
    """Cached branches, inverses and ranges of one branch system."""

    def __init__(self, f: BranchSystem):
        self.f = f
        self.T = f.coding_map
        self._cache = {}
        self._steps = {}

    def _entry(self, i: int):
        e = self._cache.get(i)
        if e is None:
            g = self.f.branch(i)
            r = g.image(self.f.ambient)
            e = (g, g.inverse(), r, r.hi == self.f.ambient.hi, (float(r.lo), float(r.hi)))
            self._cache[i] = e
        return e

    def in_range(self, i, y) -> bool:
        _, _, r, close, _ = self._entry(i)
        return r.contains_half_open(y, close)

    def in_range_array(self, i, y: np.ndarray) -> np.ndarray:
        _, _, r, close, (lo, hi) = self._entry(i)
        mask = (y >= lo) & (y < hi)
        if close:
            mask |= y == hi
        return mask

    # one letter, exact scalar: returns (new point, |derivative|) or None
    def step(self, kind, i, y):
        if type(y) is not Fraction:
            return self._step(kind, i, y)
        key = (kind, i, y)
        try:
            return self._steps[key]
        except KeyError:
            pass
        if len(self._steps) > _STEP_CACHE:
            self._steps.clear()
        g, inv, *_ = self._entry(i)
        if kind == ADJ:
            res = g.value_and_abs_derivative(y)
        elif not self.in_range(i, y):
            res = None
        elif self.T is not None:
            piece = self.T.active_piece(y)
            if piece is None:
                raise NoPiece(f"coding map undefined at {y}")
            res = piece.map.value_and_abs_derivative(y)
        else:
            res = inv.value_and_abs_derivative(y)
        self._steps[key] = res
        return res

    def _step(self, kind, i, y):
        g, inv, *_ = self._entry(i)
        if kind == ADJ:
            return g(y), g.abs_derivative(y)
        if not self.in_range(i, y):
            return None
        if self.T is not None:
            piece = self.T.active_piece(y)
            if piece is None:
                raise NoPiece(f"coding map undefined at {y}")
            return piece.map(y), piece.map.abs_derivative(y)
        return inv(y), inv.abs_derivative(y)

    def step_array(self, kind, i, y: np.ndarray):
        g, inv, *_ = self._entry(i)
        if kind == ADJ:
            return g(y), np.abs(g.derivative(y)), np.ones(y.shape, dtype=bool)
        mask = self.in_range_array(i, y)
        if self.T is not None:
            ty, slope = _map_array(self.T, y)
            return ty, slope, mask
        with np.errstate(divide="ignore", invalid="ignore"):
            return inv(y), np.abs(inv.derivative(y)), mask


def _map_array(T: PiecewiseMap, y: np.ndarray):
    """(T(y), |T'(y)|) on float arrays; lower-index pieces win on overlaps."""
    out = np.full(y.shape, np.nan)
    slope = np.full(y.shape, np.nan)
    pieces = list(T.iter_pieces())
    with np.errstate(divide="ignore", invalid="ignore"):
        for p in reversed(pieces):
            lo, hi = float(p.domain.lo), float(p.domain.hi)
            m = (y >= lo) & (y <= hi)
            if m.any():
                out[m] = p.map(y[m])
                slope[m] = np.abs(p.map.derivative(y[m]))
    for ex, ey in T.exceptional:
        m = y == float(ex)
        out[m] = float(ey)
    return out, slope


@lru_cache(maxsize=64)
def _ops(f: BranchSystem) -> _Ops:
    return _Ops(f)


def _check_indices(f: BranchSystem, word: OperatorWord):
    if f.arity != INF and word.max_index() > f.arity:
        raise IndexOutOfRange(f"word uses index {word.max_index()} but arity is {f.arity}")
    for _, l in word.terms:
        for _, i in l:
            if i < 1:
                raise IndexOutOfRange(f"index {i} must be >= 1")


# -- closed-form evaluation ----------------------------------------------------


def trace_letters(f: BranchSystem, letters: Sequence, x):
    """Follow the evaluation point through a product of letters.

    Returns ``(weight_squared, point)`` with
    ``(word phi)(x) = sqrt(weight_squared) * phi(point)``, or ``None`` when
    a characteristic function vanishes.  Exact for rational x.
    """
    ops = _ops(f)
    w = Fraction(1) if is_exact(x) else 1.0
    y = as_fraction(x) if is_exact(x) else float(x)
    for kind, i in letters:
        res = ops.step(kind, i, y)
        if res is None:
            return None
        y, d = res
        w = w * d
    return w, y


def eval_word(f: BranchSystem, word: OperatorWord, phi, x):
    """(word phi)(x) in closed form: a RadicalSum for rational x, else float."""
    _check_indices(f, word)
    exact = is_exact(x)
    total = RadicalSum() if exact else []
    for c, letters in word.terms:
        tr = trace_letters(f, letters, x)
        if tr is None:
            continue
        w, y = tr
        if exact:
            total.add(c * phi(y), w)
        else:
            total.append(float(c) * math.sqrt(w) * float(phi(y)))
    return total if exact else math.fsum(total)


def eval_word_array(f: BranchSystem, word: OperatorWord, phi, xs) -> np.ndarray:
    """Vectorised float closed-form evaluation at the points ``xs``."""
    _check_indices(f, word)
    xs = np.asarray(xs, dtype=float)
    ops = _ops(f)
    total = np.zeros_like(xs)
    for c, letters in word.terms:
        y, w, alive = xs.copy(), np.ones_like(xs), np.ones(xs.shape, dtype=bool)
        for kind, i in letters:
            y, d, m = ops.step_array(kind, i, y)
            alive &= m
            # dead lanes may carry nan or inf slopes; they are masked out
            with np.errstate(invalid="ignore", over="ignore"):
                w = np.where(alive, w * d, 0.0)
            y = np.where(alive, y, 0.0)
        total += float(c) * np.where(alive, np.sqrt(w) * phi(y), 0.0)
    return total


def exact_nodes(ambient: Interval, M: int) -> list[Fraction]:
    return [ambient.lo + ambient.length * Fraction(2 * m + 1, 2 * M) for m in range(M)]


# -- grid functions ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridFunction:
    ambient: Interval
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("a grid function needs at least two nodes")
        object.__setattr__(self, "values", vals)

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return float(self.ambient.length) / self.M

    @property
    def nodes(self) -> np.ndarray:
        return _nodes(self.ambient, self.M)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.M, self.h)

    @classmethod
    def from_callable(cls, fn, M: int = DEFAULT_GRID, ambient: Interval = UNIT) -> GridFunction:
        x = _nodes(ambient, M)
        return cls(ambient, np.asarray(fn(x), dtype=float) * np.ones(M))

    def same_grid(self, other: GridFunction) -> bool:
        return self.M == other.M and self.ambient == other.ambient

    def interpolate(self, y):
        return np.interp(y, self.nodes, self.values)

    def norm2(self) -> float:
        return float(np.real(inner_product(self, self)))

    def __add__(self, other: GridFunction) -> GridFunction:
        _require_same(self, other)
        return GridFunction(self.ambient, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        _require_same(self, other)
        return GridFunction(self.ambient, self.values - other.values)

    def scaled(self, s) -> GridFunction:
        return GridFunction(self.ambient, s * self.values)


@lru_cache(maxsize=16)
def _nodes_cached(lo: float, length: float, M: int) -> np.ndarray:
    out = lo + length * (np.arange(M) + 0.5) / M
    out.setflags(write=False)
    return out


def _nodes(ambient: Interval, M: int) -> np.ndarray:
    return _nodes_cached(float(ambient.lo), float(ambient.length), M)


def _require_same(a: GridFunction, b: GridFunction):
    if not a.same_grid(b):
        raise GridMismatch(f"grids differ: M={a.M} on {a.ambient} vs M={b.M} on {b.ambient}")


def _require_ambient(f: BranchSystem, phi: GridFunction):
    if phi.ambient != f.ambient:
        raise GridMismatch(f"function lives on {phi.ambient}, system on {f.ambient}")


def inner_product(phi: GridFunction, psi: GridFunction):
    _require_same(phi, psi)
    return phi.h * np.sum(np.conj(phi.values) * psi.values)


def apply_generator(f: BranchSystem, i: int, phi: GridFunction) -> GridFunction:
    _require_ambient(f, phi)
    x = phi.nodes
    y, slope, mask = _ops(f).step_array(GEN, i, x)
    vals = np.zeros(phi.M, dtype=phi.values.dtype)
    vals[mask] = np.sqrt(slope[mask]) * phi.interpolate(y[mask])
    return GridFunction(phi.ambient, vals)


def apply_adjoint(f: BranchSystem, i: int, phi: GridFunction) -> GridFunction:
    _require_ambient(f, phi)
    x = phi.nodes
    y, slope, _ = _ops(f).step_array(ADJ, i, x)
    return GridFunction(phi.ambient, np.sqrt(slope) * phi.interpolate(y))


def apply_word(f: BranchSystem, word: OperatorWord, phi: GridFunction) -> GridFunction:
    """Grid-mode application; the rightmost letter acts first."""
    _check_indices(f, word)
    total = np.zeros(phi.M, dtype=phi.values.dtype)
    for c, letters in word.terms:
        cur = phi
        for kind, i in reversed(letters):
            cur = apply_generator(f, i, cur) if kind == GEN else apply_adjoint(f, i, cur)
        total = total + float(c) * cur.values
    return GridFunction(phi.ambient, total)


# -- relation checks -----------------------------------------------------------


@dataclass
class Deviation:
    """Largest deviation of an identity over exact nodes."""

    checked: int = 0
    nonzero: int = 0
    max_abs: float = 0.0
    worst: str = ""

    def record(self, diff: RadicalSum, where: str):
        self.checked += 1
        if not diff.is_zero():
            self.nonzero += 1
            v = abs(float(diff))
            if v >= self.max_abs:
                self.max_abs, self.worst = v, where

    @property
    def exact_zero(self) -> bool:
        return self.nonzero == 0

    def to_dict(self) -> dict:
        return {"checked": self.checked, "nonzero": self.nonzero, "max_abs": self.max_abs,
                "exact_zero": self.exact_zero, "worst": self.worst}


def _compare(f, lhs: OperatorWord, rhs, tests, nodes, dev: Deviation, label: str):
    """Record lhs phi - rhs(phi, x) at every node for every test function."""
    for x in nodes:
        traces = [(c, trace_letters(f, l, x)) for c, l in lhs.terms]
        for tf in tests:
            val = RadicalSum()
            for c, tr in traces:
                if tr is not None:
                    val.add(c * tf(tr[1]), tr[0])
            dev.record(val - rhs(tf, x), f"{label} phi={tf.name} x={x}")


def _identity(tf, x):
    return RadicalSum([(tf(x), 1)])


def _zero(tf, x):
    return RadicalSum()


def _bv_gap_bound(F: np.ndarray, G: np.ndarray, h: float) -> float:
    """Midpoint-rule error estimate h * (TV(F) + TV(G)), doubled for safety."""
    tv = float(np.sum(np.abs(np.diff(F))) + np.sum(np.abs(np.diff(G))))
    return 2.0 * h * tv + 4.0 * h * h


@dataclass
class RelationReport:
    arity: object
    indices: list
    isometry: Deviation = field(default_factory=Deviation)
    orthogonality: Deviation = field(default_factory=Deviation)
    projections: Deviation = field(default_factory=Deviation)
    completeness: Deviation = field(default_factory=Deviation)
    tail: list = field(default_factory=list)
    monotone: bool = True
    adjointness: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        exact = all(d.exact_zero for d in (self.isometry, self.orthogonality, self.projections, self.completeness))
        tails = all(t["exact_match"] for t in self.tail)
        gaps = all(a["gap"] <= a["bound"] for a in self.adjointness)
        return exact and tails and gaps and self.monotone

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "arity": self.arity,
            "indices": self.indices,
            "isometry": self.isometry.to_dict(),
            "orthogonality": self.orthogonality.to_dict(),
            "projections": self.projections.to_dict(),
            "completeness": self.completeness.to_dict(),
            "partial_sum_tail": self.tail,
            "monotone": self.monotone,
            "adjointness": self.adjointness,
        }


def _range_weight(f: BranchSystem, i: int):
    ops = _ops(f)
    return lambda x: 1 if ops.in_range(i, x) else 0


def check_cuntz_relations(
    f: BranchSystem,
    test_functions: Sequence[TestFunction] = STANDARD_TEST_FUNCTIONS,
    K: int | Sequence[int] | None = None,
    nodes: int = DEFAULT_EXACT_NODES,
    grid: int = DEFAULT_GRID,
    pair_limit: int = 6,
) -> RelationReport:
    """Exact relation checks at rational nodes plus grid adjointness gaps.

    * S_i^* S_j phi = delta_ij phi and S_i S_i^* phi = chi_{R_i} phi, exact.
    * arity N: sum_{i<=N} S_i S_i^* phi = phi, exact.
    * infinite arity, for each K: the residual phi - sum_{i<=K} S_i S_i^* phi
      equals chi_U phi at every node (U the part of the ambient interval not
      covered by R_1..R_K), its squared norm is computed exactly from the
      test function's antiderivative, and the partial sums of
      <S_i S_i^* phi, phi> are checked to be nondecreasing and <= |phi|^2.
    * |<S_i phi, psi> - <phi, S_i^* psi>| against a quadrature error bound.
    """
    if not test_functions:
        raise ValueError("need at least one test function")
    tests = list(test_functions)
    n_idx = f.arity if f.arity != INF else pair_limit
    idx = list(range(1, min(n_idx, pair_limit) + 1))
    report = RelationReport(f.arity, idx)
    xs = exact_nodes(f.ambient, nodes)

    for i in idx:
        for j in idx:
            word = OperatorWord.adj(i) * OperatorWord.gen(j)
            target = report.isometry if i == j else report.orthogonality
            _compare(f, word, _identity if i == j else _zero, tests, xs, target, f"S{i}*S{j}")
        chi = _range_weight(f, i)
        _compare(f, OperatorWord.gen(i) * OperatorWord.adj(i),
                 lambda tf, x, chi=chi: RadicalSum([(chi(x) * tf(x), 1)]), tests, xs,
                 report.projections, f"S{i}S{i}*")

    if f.arity != INF:
        word = OperatorWord(tuple((1, ((GEN, i), (ADJ, i))) for i in range(1, f.arity + 1)))
        _compare(f, word, _identity, tests, xs, report.completeness, "sum S_i S_i*")
    else:
        depths = [f.depth] if K is None else ([K] if isinstance(K, int) else list(K))
        for k in depths:
            report.tail.append(_tail_check(f, k, tests, xs, report))

    report.adjointness = _adjointness(f, idx, tests, grid)
    return report


def _uncovered(f: BranchSystem, K: int) -> list[tuple]:
    ranges = [f.range(i) for i in range(1, K + 1)]
    return _coverage(f.ambient, ranges, ValidationReport())


def _tail_check(f: BranchSystem, K: int, tests, xs, report: RelationReport) -> dict:
    holes = _uncovered(f, K)
    ops = _ops(f)

    def covered(x):
        # each point lies in at most one half-open range
        return any(ops.in_range(i, x) for i in _candidates(f, x, K))

    dev = Deviation()
    for x in xs:
        # only the branch whose range holds x contributes; skip the others
        idx = [i for i in _candidates(f, x, K) if ops.in_range(i, x)]
        for tf in tests:
            val = RadicalSum()
            for i in idx:
                tr = trace_letters(f, ((GEN, i), (ADJ, i)), x)
                if tr is not None:
                    val.add(tf(tr[1]), tr[0])
            resid = RadicalSum([(tf(x), 1)]) - val
            expect = RadicalSum() if covered(x) else RadicalSum([(tf(x), 1)])
            dev.record(resid - expect, f"tail K={K} phi={tf.name} x={x}")
    report.completeness.checked += dev.checked
    report.completeness.nonzero += dev.nonzero
    if dev.max_abs > report.completeness.max_abs:
        report.completeness.max_abs, report.completeness.worst = dev.max_abs, dev.worst

    per_fn = {}
    for tf in tests:
        total = tf.norm2_on(f.ambient.lo, f.ambient.hi)
        resid = sum((tf.norm2_on(a, b) for a, b in holes), Fraction(0))
        # <sum_{i<=k} S_i S_i^* phi, phi> = integral of phi^2 over R_1..R_k
        partial = [tf.norm2_on(*_range_ends(f, i)) for i in range(1, K + 1)]
        running, prev, mono = Fraction(0), Fraction(0), True
        for p in partial:
            running += p
            mono &= running >= prev and running <= total
            prev = running
        report.monotone &= mono
        per_fn[tf.name] = {"residual_norm2": str(resid), "residual_norm2_float": float(resid),
                           "total_norm2": str(total), "monotone": mono,
                           "matches_partial_sums": total - running == resid}
    return {
        "K": K,
        "uncovered": [[str(a), str(b)] for a, b in holes],
        "exact_match": dev.exact_zero and all(v["matches_partial_sums"] for v in per_fn.values()),
        "functions": per_fn,
    }


def _range_ends(f, i):
    r = f.range(i)
    return r.lo, r.hi


def _candidates(f: BranchSystem, x, K: int) -> list[int]:
    """Indices i <= K whose range may contain x."""
    if f.rule is not None and f.coding_map is None:
        k = CountablePieces(f.rule, "inverse").locate(x, f.ambient)
        if k is None:
            return []
        return [i for i in (k - 1, k, k + 1) if 1 <= i <= K]
    return list(range(1, K + 1))


def _adjointness(f: BranchSystem, idx, tests, M: int) -> list:
    out = []
    ambient = f.ambient
    for i in idx:
        for a, tf in enumerate(tests):
            psi_tf = tests[(a + 1) % len(tests)]
            phi = GridFunction.from_callable(tf, M, ambient)
            psi = GridFunction.from_callable(psi_tf, M, ambient)
            s_phi = apply_generator(f, i, phi)
            s_psi = apply_adjoint(f, i, psi)
            F = s_phi.values * psi.values
            G = phi.values * s_psi.values
            gap = abs(float(np.real(inner_product(s_phi, psi) - inner_product(phi, s_psi))))
            out.append({"i": i, "phi": tf.name, "psi": psi_tf.name, "gap": gap,
                        "bound": _bv_gap_bound(F, G, phi.h)})
    return out


# -- embedding -----------------------------------------------------------------


@dataclass
class EmbeddingReport:
    n_max: int
    deviation: Deviation
    moebius_match: list
    per_n: list

    @property
    def ok(self) -> bool:
        return self.deviation.exact_zero and all(self.moebius_match)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "n_max": self.n_max, "deviation": self.deviation.to_dict(),
                "moebius_match": all(self.moebius_match), "per_n": self.per_n}


def check_embedding(
    f: BranchSystem,
    n_max: int,
    test_functions: Sequence[TestFunction] = STANDARD_TEST_FUNCTIONS,
    nodes: int = DEFAULT_EXACT_NODES,
) -> EmbeddingReport:
    """S(f_2)^(n-1) S(f_1) against S(g_n) of the jump family, n <= n_max.

    Compares both the Moebius coefficients of f_2^(n-1) o f_1 and g_n and
    the pointwise closed-form values on the test functions at rational
    nodes.  The prefix S(f_2)^(n-1) is shared across n.
    """
    require_arity_two(f)
    g = jump_family(f, max(n_max, 1))
    tests = list(test_functions)
    xs = exact_nodes(f.ambient, nodes)
    ops = _ops(f)
    dev = Deviation()
    per_n = [Deviation() for _ in range(n_max)]
    matches = [compose_branches(f, [2] * (n - 1) + [1]) == g.branch(n) for n in range(1, n_max + 1)]
    for x in xs:
        state = (Fraction(1), x)  # after the prefix S2^(n-1)
        for n in range(1, n_max + 1):
            lhs = RadicalSum()
            if state is not None:
                res = ops.step(GEN, 1, state[1])
                if res is not None:
                    w, y = state[0] * res[1], res[0]
                    lhs_tr = (w, y)
                else:
                    lhs_tr = None
            else:
                lhs_tr = None
            rhs_tr = trace_letters(g, ((GEN, n),), x)
            for tf in tests:
                lhs = RadicalSum([(tf(lhs_tr[1]), lhs_tr[0])]) if lhs_tr else RadicalSum()
                rhs = RadicalSum([(tf(rhs_tr[1]), rhs_tr[0])]) if rhs_tr else RadicalSum()
                where = f"n={n} phi={tf.name} x={x}"
                dev.record(lhs - rhs, where)
                per_n[n - 1].record(lhs - rhs, where)
            if state is not None:
                res = ops.step(GEN, 2, state[1])
                state = None if res is None else (state[0] * res[1], res[0])
    rows = [{"n": n + 1, "moebius_match": matches[n], **per_n[n].to_dict()} for n in range(n_max)]
    return EmbeddingReport(n_max, dev, matches, rows)


def check_alternative_embedding(
    f: BranchSystem,
    n_max: int = 8,
    test_functions: Sequence[TestFunction] = STANDARD_TEST_FUNCTIONS,
    nodes: int = 32,
) -> Deviation:
    """w_n^* w_m phi = delta_nm phi for the words of alternative_embedding_word."""
    require_arity_two(f)
    tests = list(test_functions)
    xs = exact_nodes(f.ambient, nodes)
    dev = Deviation()
    words = [alternative_embedding_word(n) for n in range(1, n_max + 1)]
    for n, wn in enumerate(words, 1):
        for m, wm in enumerate(words, 1):
            _compare(f, wn.adjoint() * wm, _identity if n == m else _zero, tests, xs, dev, f"w{n}*w{m}")
    return dev


def transport_via_adjoint(f: BranchSystem, phi_density, x) -> Fraction:
    """{S(f_1)^* sqrt(phi)}(x)^2, computed exactly from the traced weight."""
    tr = trace_letters(f, ((ADJ, 1),), x)
    w, y = tr
    return w * phi_density.exact(y)
