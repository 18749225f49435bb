from fractions import Fraction as F

import pytest

from jumprep.branching import (
    INF,
    BranchSystem,
    coding_map_of,
    compose_branches,
    jump_family,
    rn_derivative,
    validate_system,
)
from jumprep.catalog import get_entry
from jumprep.errors import ArityMismatch, IndexOutOfRange, InvalidSystem, NonDifferentiable
from jumprep.interval_dynamics import UNIT, Interval, Moebius, eval_map


def test_farey_branches_and_ranges():
    f = get_entry("farey").branch_system
    assert f.arity == 2
    assert f.branch(1)(F(1, 3)) == F(3, 4)
    assert f.branch(2)(F(1, 3)) == F(1, 4)
    assert f.range(1) == Interval(F(1, 2), 1)
    assert f.range(2) == Interval(0, F(1, 2))
    # half-open ranges: 1/2 belongs to R_1 only, 1 belongs to R_1 (right end)
    assert f.in_range(1, F(1, 2)) and not f.in_range(2, F(1, 2))
    assert f.in_range(1, F(1))
    with pytest.raises(IndexOutOfRange):
        f.branch(3)


def test_gauss_branches_are_one_over_x_plus_k():
    f = get_entry("gauss").branch_system
    assert f.arity == INF
    for k in range(1, 40):
        assert f.branch(k) == Moebius(0, 1, 1, k)
        assert f.range(k) == Interval(F(1, k + 1), F(1, k))


def test_compose_branches_reference_values():
    assert compose_branches(get_entry("farey").branch_system, (2, 1)) == Moebius(0, 1, 1, 2)
    x = F(2, 9)
    # tent branches: f1 = 1 - x/2, f2 = x/2; f2 o f2 o f1 = (2 - x)/8
    assert compose_branches(get_entry("tent").branch_system, (2, 2, 1))(x) == (2 - x) / 8
    with pytest.raises(ValueError):
        compose_branches(get_entry("tent").branch_system, ())


@pytest.mark.parametrize("name", ["tent", "farey", "chan_sigma2", "gauss", "tent_jump", "chan_tau2"])
def test_catalog_systems_validate(name):
    rep = validate_system(get_entry(name).branch_system)
    assert rep.ok, rep.to_dict()


def test_truncated_gauss_coverage_residual():
    f = get_entry("gauss").branch_system.with_truncation(100)
    assert validate_system(f).coverage_residual == F(1, 101)


def test_validation_catches_overlap_and_escape():
    overlap = BranchSystem(UNIT, branches=(Moebius(1, 0, 0, 2), Moebius(1, 1, 0, 3)))
    assert validate_system(overlap).overlaps
    escape = BranchSystem(UNIT, branches=(Moebius(1, 0, 0, 2), Moebius(1, 1, 0, 1)))
    assert validate_system(escape).escapes == [2]
    gap = BranchSystem(UNIT, branches=(Moebius(1, 0, 0, 4), Moebius(1, 1, 0, 2)))
    assert validate_system(gap).gaps == [(F(1, 4), F(1, 2))]
    with pytest.raises(InvalidSystem):
        coding_map_of(gap)


def test_constructor_rejects_bad_shapes():
    with pytest.raises(ValueError):
        BranchSystem(UNIT, branches=(Moebius(1, 0, 0, 2),))
    with pytest.raises(ValueError):
        BranchSystem(UNIT)


@pytest.mark.parametrize("name", ["farey", "tent", "chan_sigma2", "gauss", "chan_tau2", "tent_jump"])
def test_coding_map_inverts_every_branch(name):
    f = get_entry(name).branch_system
    T = coding_map_of(f)
    for i in range(1, min(f.depth, 12) + 1):
        for x in (F(1, 7), F(2, 5), F(5, 6)):
            assert eval_map(T, f.branch(i)(x)) == x


@pytest.mark.parametrize("base,jump", [("farey", "gauss"), ("chan_sigma2", "chan_tau2"), ("tent", "tent_jump")])
def test_jump_family_matches_catalog_branches(base, jump):
    g = jump_family(get_entry(base).branch_system, 32)
    h = get_entry(jump).branch_system
    for n in range(1, 33):
        assert g.branch(n) == h.branch(n)
        assert g.branch(n) == compose_branches(get_entry(base).branch_system, [2] * (n - 1) + [1])


def test_jump_family_requires_arity_two():
    with pytest.raises(ArityMismatch):
        jump_family(get_entry("gauss").branch_system)


def test_rn_derivative():
    g = Moebius(0, 1, 1, 1)
    assert rn_derivative(g, F(1)) == F(1, 4)
    with pytest.raises(NonDifferentiable):
        rn_derivative(Moebius(1, 0, 1, -1), F(1))


@pytest.mark.parametrize("name", ["farey", "gauss", "chan_tau2"])
def test_json_round_trip(name):
    f = get_entry(name).branch_system
    assert BranchSystem.from_json(f.to_json()) == f
