import math
from fractions import Fraction as F

import numpy as np
import pytest

from jumprep import _poly as P
from jumprep.catalog import get_entry
from jumprep.errors import QuadratureFailure, TailUnbounded
from jumprep.interval_dynamics import Interval, Moebius
from jumprep.measures import (
    CHAN_MU2,
    FAREY_THETA,
    GAUSS_GAMMA,
    LEBESGUE,
    Density,
    K_for_tail,
    as_map,
    dyadic_intervals,
    induced_measure,
    invariance_residual,
    pullback_check,
    transfer_apply,
    transport_density,
)


def system(name):
    return get_entry(name).branch_system


def test_catalog_densities_are_probability_densities():
    assert GAUSS_GAMMA.integral() == pytest.approx(1.0, abs=1e-13)
    assert CHAN_MU2.integral() == pytest.approx(1.0, abs=1e-13)
    assert LEBESGUE.integral() == 1.0
    assert GAUSS_GAMMA(0.0) == pytest.approx(1 / math.log(2), abs=1e-15)
    assert GAUSS_GAMMA.exact(F(1)) == F(1, 2)
    assert GAUSS_GAMMA.value(F(1)) == pytest.approx(0.5 / math.log(2), abs=1e-15)


def test_theta_is_flagged_non_integrable():
    assert not FAREY_THETA.integrable
    assert FAREY_THETA.poles == [0.0]
    assert FAREY_THETA.sup() == math.inf
    with pytest.raises(QuadratureFailure):
        FAREY_THETA.integral()
    # away from the pole it integrates normally
    assert FAREY_THETA.integral(0.5, 1.0) == pytest.approx(math.log(2), abs=1e-14)


def test_density_construction_cancels_common_factors():
    d = Density(P.poly([1, 1]), P.poly([2, 3, 1]))  # (1+x)/((1+x)(2+x))
    assert d.den == P.poly([2, 1]) and d.num == P.ONE
    c = Density(P.poly([2]), P.poly([4]))
    assert c.num == P.poly([F(1, 2)]) and c.den == P.ONE
    with pytest.raises(ZeroDivisionError):
        Density(P.ONE, P.ZERO)


def test_projective_ratio_and_json():
    doubled = Density(P.poly([2]), P.poly([1, 1]))
    assert doubled.projective_ratio(GAUSS_GAMMA) == 2
    assert GAUSS_GAMMA.projective_ratio(CHAN_MU2) is None
    back = Density.from_json(CHAN_MU2.to_json())
    assert back == CHAN_MU2


@pytest.mark.parametrize("x", [F(1, 3), F(1, 2), F(5, 7)])
@pytest.mark.parametrize("K", [2, 10, 100])
def test_gauss_transfer_truncated_sum_telescopes(x, K):
    # sum_{k<=K} 1/((x+k)(x+k+1)) = 1/(x+1) - 1/(x+K+1)
    tv = transfer_apply(system("gauss"), GAUSS_GAMMA, x, K)
    assert tv.exact
    assert tv.value == 1 / (x + 1) - 1 / (x + K + 1)
    assert tv.tail_bound * GAUSS_GAMMA.scale >= 0
    assert 1 / (x + K + 1) <= tv.tail_bound


def test_gauss_tail_bound_needs_depth_two():
    with pytest.raises(TailUnbounded):
        transfer_apply(system("gauss"), GAUSS_GAMMA, F(1, 2), 1)


def test_tent_jump_truncated_sum_is_geometric():
    tv = transfer_apply(system("tent_jump"), LEBESGUE, F(1, 3), 20)
    assert tv.value == 1 - F(1, 2**20)
    rep = invariance_residual(system("tent_jump"), LEBESGUE, [F(1, 3), F(3, 4)], K=20)
    assert rep.extrapolated_max_abs == 0
    assert rep.ok


@pytest.mark.parametrize("name", ["tent", "farey", "chan_sigma2"])
def test_finite_invariance_exact(name):
    e = get_entry(name)
    xs = [F(k, 17) for k in range(1, 17)]
    rep = invariance_residual(e.branch_system, e.invariant_density, xs)
    assert rep.exact and rep.max_abs_residual == 0 and rep.ok


def test_wrong_density_is_not_invariant():
    rep = invariance_residual(system("farey"), GAUSS_GAMMA, [F(1, 3), F(2, 3)])
    assert not rep.ok and rep.max_abs_residual > 0.01


def test_float_transfer_path():
    tv = transfer_apply(system("gauss"), GAUSS_GAMMA, 0.25, 100_000)
    assert not tv.exact
    assert abs(tv.value - GAUSS_GAMMA(0.25)) <= tv.tail_bound + 1e-15


def test_K_for_tail():
    K = K_for_tail(system("gauss"), GAUSS_GAMMA, 1e-6)
    assert K == 1_442_697
    assert K_for_tail(system("chan_tau2"), CHAN_MU2, 1e-6) == 22
    with pytest.raises(TailUnbounded):
        transfer_apply(system("gauss"), FAREY_THETA, 0.5, 10)


def test_transport_reference_densities():
    psi = transport_density(system("farey"), FAREY_THETA)
    assert psi.num == P.ONE and psi.den == P.poly([1, 1])
    chan = transport_density(system("chan_sigma2"), GAUSS_GAMMA)
    assert chan.projective_ratio(CHAN_MU2) == 1
    tent = transport_density(system("tent"), LEBESGUE)
    assert tent.den == P.ONE and tent.num == P.poly([F(1, 2)])


def test_pullback_identity():
    # psi(x) = |f1'(x)| phi(f1(x)) holds for the transported density by construction
    f = system("farey")
    psi = transport_density(f, FAREY_THETA)
    rep = pullback_check(as_map(f.branch(1)), psi, FAREY_THETA, [F(k, 9) for k in range(1, 9)])
    assert rep.ok and rep.max_abs_residual == 0


def test_dyadic_intervals():
    ivs = dyadic_intervals(Interval(0, 1), 6)
    assert len(ivs) == 127
    assert ivs[0] == Interval(0, 1) and ivs[-1] == Interval(F(63, 64), 1)


def test_induced_measure_by_hand():
    # Farey with theta: T^{-1}(E) n [1/2,1] = f1(E), theta integral = log((1+b)/(1+a))
    e = get_entry("farey")
    A = Interval(F(1, 2), 1)
    for a, b in [(0, 1), (F(1, 4), F(1, 2)), (F(3, 8), F(7, 8))]:
        got = induced_measure(e.map, A, FAREY_THETA, Interval(a, b))
        assert got == pytest.approx(math.log((1 + b) / (1 + a)), abs=1e-13)
    with pytest.raises(ValueError):
        induced_measure(e.map, A, FAREY_THETA, Interval(0, 2))


def test_grid_function_as_transfer_input():
    from jumprep.cuntz import GridFunction

    g = GridFunction.from_callable(lambda x: np.ones_like(x), 256)
    tv = transfer_apply(system("tent"), g, 0.3)
    assert tv.value == pytest.approx(1.0, abs=1e-14)
    assert Moebius(1, 0, 0, 1)(0.3) == 0.3
