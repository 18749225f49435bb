"""Independent numerical estimates of invariant densities.

Neither oracle uses the closed-form densities: the Ulam matrix is built from
exact piece inverses, and the Birkhoff histogram from a float orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cuntz import GridFunction
from .errors import NonConvergence, OrbitEscape
from .interval_dynamics import FamilyRule, PiecewiseMap, eval_map
from .measures import Density

# families of pieces are enumerated until their remaining tail is this short,
# relative to a cell, or until this many pieces per cell
_TAIL_FRACTION = 1e-12
_PIECES_PER_CELL = 2


@dataclass
class UlamResult:
    density: GridFunction
    masses: np.ndarray
    iterations: int
    pieces: int
    redistributed: float

    def to_dict(self) -> dict:
        return {"cells": int(self.masses.size), "iterations": self.iterations, "pieces": self.pieces,
                "redistributed_mass": self.redistributed, "mass_sum": float(self.masses.sum())}


def _family_piece_count(T: PiecewiseMap, M: int) -> int:
    if T.family is None:
        return 0
    cell = float(T.ambient.length) / M
    cap = _PIECES_PER_CELL * M
    k = 1
    while k < cap:
        # distance from piece k's far end to the accumulation point
        d = T.family.domain(k, T.ambient)
        d_next = T.family.domain(k + 1, T.ambient)
        tail = float(d_next.lo - T.ambient.lo) if d_next.lo < d.lo else float(T.ambient.hi - d_next.hi)
        if tail <= _TAIL_FRACTION * cell:
            break
        k += 1
    return k


def ulam_matrix(T: PiecewiseMap, M: int):
    """Row-stochastic transition matrix between M uniform cells.

    P[m, j] = |cell_m n T^{-1}(cell_j)| / |cell_m|, from the closed-form
    inverse of every piece.  Rows that lose mass to the unenumerated tail
    of a countable family receive the deficit in proportion to the last
    enumerated piece meeting that row.  Returns (P, pieces, redistributed).
    """
    lo, L = float(T.ambient.lo), float(T.ambient.length)
    cw = L / M
    edges = lo + cw * np.arange(M + 1)
    P = np.zeros((M, M))
    flat = P.reshape(-1)
    last_profile = {}
    n_pieces = 0
    pieces = list(T.pieces)
    if T.family is not None:
        pieces += [T.family.piece(k, T.ambient) for k in range(1, _family_piece_count(T, M) + 1)]
    for piece in pieces:
        n_pieces += 1
        d0, d1 = float(piece.domain.lo), float(piece.domain.hi)
        h, hinv = piece.map, piece.map.inverse()
        r = piece.range()
        r0, r1 = float(r.lo), float(r.hi)
        inner_t = edges[(edges > r0) & (edges < r1)]
        inner_s = edges[(edges > d0) & (edges < d1)]
        pts = np.concatenate(([d0, d1], hinv(inner_t) if inner_t.size else [], inner_s))
        pts = np.unique(np.clip(pts, d0, d1))
        seg = np.diff(pts)
        keep = seg > 0
        if not keep.any():
            continue
        a, seg = pts[:-1][keep], seg[keep]
        mid = a + seg / 2
        src = np.clip(((mid - lo) / cw).astype(np.int64), 0, M - 1)
        tgt = np.clip(((h(mid) - lo) / cw).astype(np.int64), 0, M - 1)
        np.add.at(flat, src * M + tgt, seg / cw)
        if T.family is not None:
            for m in np.unique(src):
                last_profile[int(m)] = (tgt[src == m], seg[src == m])
    redistributed = 0.0
    rowsum = P.sum(axis=1)
    for m in np.nonzero(rowsum < 1 - 1e-13)[0]:
        prof = last_profile.get(int(m))
        if prof is None:
            continue
        tgt, seg = prof
        deficit = 1.0 - rowsum[m]
        np.add.at(P[m], tgt, deficit * seg / seg.sum())
        redistributed += deficit * cw
    return P, n_pieces, redistributed


def ulam_density(T: PiecewiseMap, M: int = 4096, tol: float = 1e-13, max_iter: int = 20000) -> UlamResult:
    """Fixed probability vector of the Ulam matrix by power iteration."""
    if M < 2:
        raise ValueError("need at least two cells")
    P, n_pieces, redistributed = ulam_matrix(T, M)
    v = np.full(M, 1.0 / M)
    PT = np.ascontiguousarray(P.T)
    for it in range(1, max_iter + 1):
        w = PT @ v
        w /= w.sum()
        if np.abs(w - v).sum() <= tol:
            v = w
            break
        v = w
    else:
        raise NonConvergence(f"Ulam power iteration did not settle within {max_iter} steps")
    v = np.clip(v, 0.0, None)
    v /= v.sum()
    dens = GridFunction(T.ambient, v * M / float(T.ambient.length))
    return UlamResult(dens, v, it, n_pieces, redistributed)


def cell_masses(rho: Density, M: int) -> np.ndarray:
    """Exact-to-quadrature masses of a normalised density on M uniform cells."""
    lo, L = float(rho.ambient.lo), float(rho.ambient.length)
    edges = lo + L * np.arange(M + 1) / M
    return np.array([rho.integral(edges[m], edges[m + 1]) for m in range(M)])


def l1_distance(masses: np.ndarray, rho: Density) -> float:
    """L1 distance between a piecewise-constant density and rho."""
    return float(np.abs(masses - cell_masses(rho, masses.size)).sum())


# -- Birkhoff histograms ---------------------------------------------------------


def _fast_step(T: PiecewiseMap):
    """A float step function equivalent to eval_map on float arguments."""
    amb_lo, amb_hi = float(T.ambient.lo), float(T.ambient.hi)
    fin = [(float(p.domain.lo), float(p.domain.hi), *(float(v) for v in p.map.coefficients)) for p in T.pieces]
    exc = {float(x): float(y) for x, y in T.exceptional}
    fam = T.family
    rule = fam.rule if fam is not None and fam.mode == "forward" and isinstance(fam.rule, FamilyRule) else None
    unit = T.ambient.lo == 0 and T.ambient.hi == 1
    if rule is not None:
        base = [float(v) for v in rule.base]
        stp = [float(v) for v in rule.step]
        harmonic = rule.kind == "harmonic"
        q = float(1 / rule.ratio)
        log_r = math.log(float(rule.ratio))

    def step(y: float) -> float:
        if y in exc:
            return exc[y]
        for lo, hi, a, b, c, d in fin:
            if lo <= y <= hi:
                return (a * y + b) / (c * y + d)
        if rule is not None and unit and y > 0:
            if harmonic:
                k = max(1, math.ceil(1.0 / y) - 1)
                s = float(k)
            else:
                k = max(1, math.ceil(math.log(y) / log_r))
                s = q**k
            return ((base[0] + s * stp[0]) * y + base[1] + s * stp[1]) / (
                (base[2] + s * stp[2]) * y + base[3] + s * stp[3])
        return float(eval_map(T, y))

    return step, amb_lo, amb_hi


@dataclass
class OrbitResult:
    histogram: GridFunction
    probabilities: np.ndarray
    steps: int
    reseeds: int

    def to_dict(self) -> dict:
        return {"bins": int(self.probabilities.size), "steps": self.steps, "reseeds": self.reseeds}


def birkhoff_histogram(T: PiecewiseMap, n_steps: int = 10**6, bins: int = 64, seed: int = 0,
                       x0: float | None = None, dither: float = 2.0**-44) -> OrbitResult:
    """Occupation histogram of one float orbit x0, T(x0), ..., T^(n-1)(x0).

    Every iterate is multiplied by (1 + u) with u uniform in
    [-dither, dither]: float orbits of maps with power-of-two slopes
    otherwise lose one mantissa bit per step and collapse onto a fixed
    point.  The default injects about eight random low-order bits per step.  An orbit that lands on a fixed exceptional point is restarted
    from a fresh seeded point.
    """
    rng = np.random.default_rng(seed)
    step, lo, hi = _fast_step(T)
    width = hi - lo
    y = float(rng.uniform(lo, hi)) if x0 is None else float(x0)
    noise = (rng.uniform(-dither, dither, n_steps) if dither else np.zeros(n_steps)).tolist()
    fresh = rng.uniform(lo, hi, 1024).tolist()
    orbit = [0.0] * n_steps
    reseeds = 0
    for i in range(n_steps):
        orbit[i] = y
        y = step(y)
        y += y * noise[i]
        if not lo <= y <= hi:
            if abs(y - lo) < 1e-12 * width:
                y = lo
            elif abs(y - hi) < 1e-12 * width:
                y = hi
            else:
                raise OrbitEscape(f"iterate {i + 1} left the ambient interval: {y}")
        if y == lo or (y == orbit[i] and step(y) == y):
            y = fresh[reseeds % len(fresh)]
            reseeds += 1
    counts, _ = np.histogram(orbit, bins=bins, range=(lo, hi))
    probs = counts / n_steps
    return OrbitResult(GridFunction(T.ambient, probs * bins / width), probs, n_steps, reseeds)
