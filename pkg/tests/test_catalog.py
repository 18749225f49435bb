import json
from fractions import Fraction as F

import pytest

from jumprep.branching import coding_map_of
from jumprep.catalog import CatalogEntry, get_entry, list_entries, load_entry
from jumprep.errors import UnknownEntry
from jumprep.interval_dynamics import Interval, eval_map, validate_piecewise
from jumprep.jump import random_rationals


def test_catalog_lists_all_six_entries():
    assert list_entries() == ["tent", "tent_jump", "farey", "gauss", "chan_sigma2", "chan_tau2"]


def test_unknown_entry():
    with pytest.raises(UnknownEntry):
        get_entry("logistic")
    with pytest.raises(KeyError):
        get_entry("logistic")
    with pytest.raises(UnknownEntry):
        load_entry("/nonexistent/entry.json")


def test_jump_partners():
    assert get_entry("gauss").jump_partner == ("farey", Interval(F(1, 2), 1))
    assert get_entry("chan_tau2").jump_partner == ("chan_sigma2", Interval(F(1, 2), 1))
    assert get_entry("tent_jump").jump_partner == ("tent", Interval(F(1, 2), 1))
    assert get_entry("farey").closed_form_jump is get_entry("gauss").map


@pytest.mark.parametrize("name", ["tent", "tent_jump", "farey", "gauss", "chan_sigma2", "chan_tau2"])
def test_entry_is_consistent(name):
    e = get_entry(name)
    assert validate_piecewise(e.map).ok
    # the catalog map is the coding map of the catalog branch system
    T = coding_map_of(e.branch_system)
    for x in random_rationals(200, e.map.ambient, seed=3):
        assert eval_map(T, x) == eval_map(e.map, x)


@pytest.mark.parametrize("name", ["tent", "tent_jump", "farey", "gauss", "chan_sigma2", "chan_tau2"])
def test_json_round_trip_and_file_loading(name, tmp_path):
    e = get_entry(name)
    data = json.loads(json.dumps(e.to_json()))
    back = CatalogEntry.from_json(data)
    assert back.map == e.map
    assert back.branch_system == e.branch_system
    assert back.jump_partner == e.jump_partner
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(e.to_json()))
    loaded = load_entry(str(path))
    assert loaded.map == e.map
