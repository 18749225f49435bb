import math
from fractions import Fraction as F

import numpy as np
import pytest

from jumprep.errors import NoPiece, NonDifferentiable, OutOfDomain, OutOfRange
from jumprep.interval_dynamics import (
    UNIT,
    CountablePieces,
    FamilyRule,
    Interval,
    JumpRule,
    Moebius,
    Piece,
    PiecewiseMap,
    eval_derivative,
    eval_map,
    invert_piece,
    validate_piecewise,
)
from jumprep.catalog import get_entry


def gauss_oracle(x: F) -> F:
    # independent reference: fractional part of 1/x
    if x == 0:
        return F(0)
    return 1 / x - math.floor(1 / x)


def farey_oracle(x: F) -> F:
    return x / (1 - x) if x <= F(1, 2) else (1 - x) / x


def tent_oracle(x):
    return 1 - abs(1 - 2 * x)


def test_moebius_normalisation_makes_equality_functional():
    assert Moebius(2, 4, 6, 8) == Moebius(1, 2, 3, 4)
    assert Moebius(-1, -2, -3, -4) == Moebius(1, 2, 3, 4)
    assert Moebius(F(1, 2), 0, 0, F(1, 4)) == Moebius(2, 0, 0, 1)
    with pytest.raises(ValueError):
        Moebius(1, 2, 2, 4)


def test_moebius_compose_and_power():
    f1 = Moebius(0, 1, 1, 1)  # 1/(x+1)
    f2 = Moebius(1, 0, 1, 1)  # x/(x+1)
    # f2 o f1 = 1/(x+2)
    assert f2.compose(f1) == Moebius(0, 1, 1, 2)
    assert f2.power(3) == Moebius(1, 0, 3, 1)
    assert f2.power(-1) == f2.inverse()
    x = F(3, 7)
    assert f2.power(5)(x) == f2(f2(f2(f2(f2(x)))))


def test_moebius_float_and_array_paths():
    g = Moebius(-1, 1, 1, 0)
    assert g(0.25) == pytest.approx(3.0, rel=0, abs=0)
    arr = g(np.array([0.5, 0.25]))
    assert arr.tolist() == [1.0, 3.0]
    assert g.derivative(F(1, 2)) == -4


def test_interval_float_membership_is_exact():
    third = Interval(F(1, 3), 1)
    x = 1 / 3  # the float just below or above 1/3
    assert (x in third) == (F(x) >= F(1, 3))
    assert 0.5 in third and 0.2 not in third


def test_interval_json_forms():
    assert Interval.from_json("1/4, 1/2") == Interval(F(1, 4), F(1, 2))
    assert Interval.from_json(["0", "1"]) == UNIT
    with pytest.raises(ValueError):
        Interval(1, 1)


@pytest.mark.parametrize("x", [F(2, 5), F(1, 7), F(5, 9), F(99, 100), F(1, 3), F(1, 2), F(1)])
def test_gauss_map_matches_oracle(x):
    T = get_entry("gauss").map
    got = eval_map(T, x)
    # at 1/n the lower-index piece wins, giving 1 instead of 0
    if (1 / x).denominator == 1 and x != 1:
        assert got == 1
    else:
        assert got == gauss_oracle(x)


def test_gauss_examples():
    T = get_entry("gauss").map
    assert eval_map(T, F(2, 5)) == F(1, 2)
    assert eval_map(T, F(0)) == 0
    assert eval_derivative(T, F(2, 5)) == F(-25, 4)
    assert eval_map(T, 0.4) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("x", [F(k, 37) for k in range(0, 38)])
def test_farey_and_tent_match_oracles(x):
    assert eval_map(get_entry("farey").map, x) == farey_oracle(x)
    assert eval_map(get_entry("tent").map, x) == tent_oracle(x)


def test_eval_errors():
    T = get_entry("farey").map
    with pytest.raises(OutOfDomain):
        eval_map(T, F(3, 2))
    with pytest.raises(NonDifferentiable):
        eval_derivative(T, F(1, 2))
    with pytest.raises(NonDifferentiable):
        eval_derivative(get_entry("gauss").map, F(0))
    with pytest.raises(NoPiece):
        eval_map(get_entry("tent_jump").map, F(0))


def test_invert_piece():
    p = Piece(Interval(F(1, 2), 1), Moebius(-1, 1, 1, 0))
    assert invert_piece(p, F(1)) == F(1, 2)
    assert invert_piece(p, F(0)) == 1
    with pytest.raises(OutOfRange):
        invert_piece(p, F(2))


def test_validate_flags_overlap_and_pole():
    T = PiecewiseMap(UNIT, pieces=(Piece(Interval(0, F(1, 2)), Moebius(2, 0, 0, 1)),
                                   Piece(Interval(F(1, 4), 1), Moebius(1, 0, 0, 1))))
    rep = validate_piecewise(T)
    assert rep.overlaps == [(F(1, 4), F(1, 2))]
    pole = PiecewiseMap(UNIT, pieces=(Piece(UNIT, Moebius(1, 0, 2, -1)),))
    assert validate_piecewise(pole).poles


def test_validate_catalog_and_truncation_residual():
    rep = validate_piecewise(get_entry("gauss").map)
    assert rep.ok
    assert rep.truncation_residual == F(1, 65)
    assert validate_piecewise(get_entry("farey").map).ok


def test_family_locate_lower_index_wins():
    fam = CountablePieces(FamilyRule("harmonic", (0, 1, 1, 0), (-1, 0, 0, 0)))
    assert fam.locate(F(1, 3), UNIT) == 2
    assert fam.locate(F(2, 7), UNIT) == 3
    geo = CountablePieces(FamilyRule("geometric", (0, 2, 0, 1), (-1, 0, 0, 0), F(1, 2)))
    assert geo.locate(F(1, 4), UNIT) == 2
    assert geo.locate(F(3, 16), UNIT) == 3
    assert geo.locate(0.3, UNIT) == 2


def test_jump_rule_harmonic_form():
    rule = JumpRule(Moebius(0, 1, 1, 1), Moebius(1, 0, 1, 1))
    h = rule.as_harmonic()
    for k in range(1, 20):
        assert h.moebius(k) == rule.moebius(k) == Moebius(0, 1, 1, k)


def test_tail_bounds_are_rigorous():
    gauss = FamilyRule("harmonic", (0, 1, 1, 0), (0, 0, 0, 1))
    for K in (10, 100):
        bound = gauss.tail_derivative_bound(K, UNIT)
        actual = sum(F(1, k * k) for k in range(K + 1, 20000))
        assert bound >= actual
        assert bound <= F(2, K)
    chan = FamilyRule("geometric", (0, 1, 0, 0), (0, 0, F(1, 2), F(1, 2)), F(1, 2))
    bound = chan.tail_derivative_bound(10, UNIT)
    assert bound >= sum(F(1, 2 ** (k - 1)) for k in range(11, 200))
