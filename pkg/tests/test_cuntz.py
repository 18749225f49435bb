import math
from fractions import Fraction as F

import numpy as np
import pytest

from jumprep.catalog import get_entry
from jumprep.cuntz import (
    STANDARD_TEST_FUNCTIONS,
    GridFunction,
    OperatorWord,
    RadicalSum,
    alternative_embedding_word,
    apply_adjoint,
    apply_generator,
    apply_word,
    check_alternative_embedding,
    check_cuntz_relations,
    check_embedding,
    embedding_word,
    eval_word,
    eval_word_array,
    get_test_function,
    inner_product,
    transport_via_adjoint,
)
from jumprep.errors import ArityMismatch, GridMismatch, IndexOutOfRange
from jumprep.interval_dynamics import Interval, Moebius, Piece, PiecewiseMap, UNIT
from jumprep.measures import FAREY_THETA, transport_density

FAREY = get_entry("farey").branch_system


def test_radical_sum_zero_test_is_exact():
    # sqrt(8) - 2 sqrt(2) = 0 exactly
    assert (RadicalSum([(1, 8)]) - RadicalSum([(2, 2)])).is_zero()
    assert not (RadicalSum([(1, 2)]) - RadicalSum([(1, 3)])).is_zero()
    assert RadicalSum([(3, F(9, 4))]).squared_if_single() == F(81, 4)
    assert float(RadicalSum([(1, 2), (1, 3)])) == pytest.approx(math.sqrt(2) + math.sqrt(3))


def test_word_parsing_and_adjoint():
    w = OperatorWord.parse("S2^3 S1")
    assert w == embedding_word(4)
    assert str(w.adjoint()) == "S1* S2* S2* S2*"
    assert OperatorWord.parse("t1 t2 t1* + t1^2 t2*") == alternative_embedding_word(1)
    assert OperatorWord.parse("1/2 S1") == OperatorWord.gen(1) * F(1, 2)
    with pytest.raises(ValueError):
        OperatorWord.parse("S1 Q2")
    with pytest.raises(ValueError):
        embedding_word(0)


def test_generator_value_by_hand():
    # farey: S1 phi(x) = chi_[1/2,1](x) sqrt|T'(x)| phi(T x), T = (1-x)/x
    x = F(2, 3)
    val = eval_word(FAREY, OperatorWord.gen(1), get_test_function("x"), x)
    # |T'(2/3)| = 9/4, T(2/3) = 1/2
    assert (val - RadicalSum([(F(1, 2), F(9, 4))])).is_zero()
    assert eval_word(FAREY, OperatorWord.gen(1), get_test_function("x"), F(1, 3)).is_zero()


def test_adjoint_value_by_hand():
    # S1* phi(x) = sqrt|f1'(x)| phi(f1 x), f1 = 1/(1+x)
    val = eval_word(FAREY, OperatorWord.adj(1), get_test_function("one"), F(1))
    assert float(val) == 0.5
    fl = eval_word(FAREY, OperatorWord.adj(1), get_test_function("x"), 0.5)
    assert fl == pytest.approx(math.sqrt(4 / 9) * (2 / 3), abs=1e-15)


def test_word_index_checked():
    with pytest.raises(IndexOutOfRange):
        eval_word(FAREY, OperatorWord.gen(3), get_test_function("one"), F(1, 2))


def test_array_evaluation_matches_scalar():
    xs = np.linspace(0.01, 0.99, 37)
    w = OperatorWord.parse("S1* S2 + S2 S2*")
    tf = get_test_function("1/(x+1)")
    arr = eval_word_array(FAREY, w, tf, xs)
    for x, v in zip(xs, arr):
        assert v == pytest.approx(eval_word(FAREY, w, tf, float(x)), abs=1e-12)


@pytest.mark.parametrize("name", ["farey", "tent", "chan_sigma2"])
def test_finite_relations_exact(name):
    rep = check_cuntz_relations(get_entry(name).branch_system)
    assert rep.ok
    assert rep.isometry.checked > 0 and rep.completeness.checked > 0


def test_gauss_partial_sum_residuals():
    rep = check_cuntz_relations(get_entry("gauss").branch_system, K=[10, 100])
    by_k = {row["K"]: row for row in rep.tail}
    assert by_k[10]["uncovered"] == [["0", "1/11"]]
    assert by_k[10]["functions"]["one"]["residual_norm2"] == "1/11"
    # |x|^2 on [0, 1/11] is (1/11)^3 / 3
    assert by_k[10]["functions"]["x"]["residual_norm2"] == str(F(1, 11) ** 3 / 3)
    assert by_k[100]["functions"]["one"]["residual_norm2"] == "1/101"
    assert rep.monotone and rep.ok


def test_relations_detect_a_broken_system():
    bad_map = PiecewiseMap(UNIT, pieces=(Piece(Interval(0, F(1, 2)), Moebius(1, 0, -1, 1)),
                                         Piece(Interval(F(1, 2), 1), Moebius(-3, 5, 0, 5))))
    broken = FAREY.with_coding_map(bad_map)
    rep = check_cuntz_relations(broken)
    assert not rep.ok
    assert rep.isometry.nonzero > 0


def test_embedding_and_alternative_words():
    rep = check_embedding(FAREY, 12)
    assert rep.ok and len(rep.per_n) == 12
    dev = check_alternative_embedding(FAREY, 4)
    assert dev.exact_zero and dev.checked == 16 * 32 * len(STANDARD_TEST_FUNCTIONS)
    with pytest.raises(ArityMismatch):
        check_embedding(get_entry("gauss").branch_system, 3)


def test_grid_isometry_and_adjointness_approximate():
    M = 4096
    tf = get_test_function("1/(x+1)")
    phi = GridFunction.from_callable(tf, M)
    psi = GridFunction.from_callable(get_test_function("x"), M)
    for i in (1, 2):
        s_phi = apply_generator(FAREY, i, phi)
        assert s_phi.norm2() == pytest.approx(phi.norm2(), rel=1e-3)
        lhs = inner_product(s_phi, psi)
        rhs = inner_product(phi, apply_adjoint(FAREY, i, psi))
        assert abs(lhs - rhs) < 1e-3
    back = apply_word(FAREY, OperatorWord.parse("S1* S1"), phi)
    # interpolation across the edge of R_1 only disturbs the boundary cells
    assert (back - phi).norm2() < 1e-4


def test_grid_mismatch():
    a = GridFunction.from_callable(lambda x: x, 64)
    b = GridFunction.from_callable(lambda x: x, 128)
    with pytest.raises(GridMismatch):
        inner_product(a, b)
    other = GridFunction.from_callable(lambda x: x, 64, Interval(0, 2))
    with pytest.raises(GridMismatch):
        apply_generator(FAREY, 1, other)


def test_transport_via_adjoint_equals_closed_form():
    psi = transport_density(FAREY, FAREY_THETA)
    for x in (F(1, 5), F(1, 2), F(7, 9)):
        assert transport_via_adjoint(FAREY, FAREY_THETA, x) == psi.exact(x)
