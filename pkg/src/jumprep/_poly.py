"""Dense univariate polynomials over Q, stored lowest degree first.

Only what the density algebra needs: arithmetic, Euclid gcd, Horner
evaluation (exact on Fractions, vectorised on numpy arrays) and real roots.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

Poly = tuple  # tuple[Fraction, ...]


def poly(coeffs: Sequence) -> Poly:
    out = [Fraction(c) for c in coeffs]
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out) if out else (Fraction(0),)


ZERO = poly([0])
ONE = poly([1])


def degree(p: Poly) -> int:
    return -1 if p == ZERO else len(p) - 1


def add(p: Poly, q: Poly) -> Poly:
    n = max(len(p), len(q))
    return poly([(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)])


def scale(p: Poly, s) -> Poly:
    return poly([c * s for c in p])


def mul(p: Poly, q: Poly) -> Poly:
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return poly(out)


def power(p: Poly, n: int) -> Poly:
    out = ONE
    for _ in range(n):
        out = mul(out, p)
    return out


def divmod_(p: Poly, q: Poly) -> tuple[Poly, Poly]:
    if q == ZERO:
        raise ZeroDivisionError("polynomial division by zero")
    rem = list(p)
    dq = degree(q)
    quot = [Fraction(0)] * max(1, len(p) - dq)
    while degree(poly(rem)) >= dq and poly(rem) != ZERO:
        rem = list(poly(rem))
        shift = len(rem) - 1 - dq
        c = rem[-1] / q[-1]
        quot[shift] = c
        for j, b in enumerate(q):
            rem[shift + j] -= c * b
    return poly(quot), poly(rem)


def monic(p: Poly) -> Poly:
    return scale(p, 1 / p[-1]) if p != ZERO else p


def gcd(p: Poly, q: Poly) -> Poly:
    while q != ZERO:
        p, q = q, divmod_(p, q)[1]
    return monic(p)


def derivative(p: Poly) -> Poly:
    return poly([i * c for i, c in enumerate(p)][1:] or [0])


def evaluate(p: Poly, x):
    """Horner evaluation; exact for Fraction/int ``x``, float for float or ndarray."""
    if isinstance(x, np.ndarray) or isinstance(x, float):
        acc = np.zeros_like(x, dtype=float) if isinstance(x, np.ndarray) else 0.0
        for c in reversed(p):
            acc = acc * x + float(c)
        return acc
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def compose_moebius(p: Poly, a, b, c, d) -> Poly:
    """Numerator of p((a x + b)/(c x + d)) after clearing (c x + d)**deg(p)."""
    n = max(degree(p), 0)
    lin_num = poly([b, a])
    lin_den = poly([d, c])
    out = ZERO
    for j, coef in enumerate(p):
        if coef:
            out = add(out, scale(mul(power(lin_num, j), power(lin_den, n - j)), coef))
    return out


def real_roots(p: Poly, lo: float, hi: float, tol: float = 1e-12) -> list[float]:
    if degree(p) <= 0:
        return []
    roots = np.roots([float(c) for c in reversed(p)])
    return sorted(
        float(r.real) for r in roots if abs(r.imag) <= tol and lo - tol <= r.real <= hi + tol
    )


def to_str(p: Poly, var: str = "x") -> str:
    terms = []
    for i, c in enumerate(p):
        if c == 0:
            continue
        mono = "" if i == 0 else (var if i == 1 else f"{var}^{i}")
        if mono and c == 1:
            terms.append(mono)
        elif mono:
            terms.append(f"{c}*{mono}")
        else:
            terms.append(str(c))
    return " + ".join(terms) if terms else "0"
