"""Built-in maps, branch systems and densities, keyed by name."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .branching import BranchSystem
from .errors import UnknownEntry
from .interval_dynamics import UNIT, CountablePieces, FamilyRule, Interval, Moebius, Piece, PiecewiseMap
from .measures import CHAN_MU2, FAREY_THETA, GAUSS_GAMMA, LEBESGUE, Density

HALF = Fraction(1, 2)
LOWER = Interval(0, HALF)
UPPER = Interval(HALF, 1)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    map: PiecewiseMap
    branch_system: BranchSystem
    invariant_density: Density | None = None
    # (name of the base map, target set A) for maps that are jump transformations
    jump_partner: tuple | None = None
    # closed form of the jump transformation of this map, when it has one
    closed_form_jump: PiecewiseMap | None = None
    description: str = field(default="", compare=False)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "description": self.description,
            "map": self.map.to_json(),
            "branch_system": self.branch_system.to_json(),
            "invariant_density": self.invariant_density.to_json() if self.invariant_density else None,
            "jump_partner": None,
            "closed_form_jump": self.closed_form_jump.to_json() if self.closed_form_jump else None,
        }
        if self.jump_partner is not None:
            base, A = self.jump_partner
            out["jump_partner"] = {"base": base, "set": A.to_json()}
        return out

    @classmethod
    def from_json(cls, data: dict) -> CatalogEntry:
        name = data["name"]
        partner = data.get("jump_partner")
        dens = data.get("invariant_density")
        cfj = data.get("closed_form_jump")
        return cls(
            name=name,
            map=PiecewiseMap.from_json(data["map"], name=name),
            branch_system=BranchSystem.from_json(data["branch_system"], name=name),
            invariant_density=Density.from_json(dens) if dens else None,
            jump_partner=(partner["base"], Interval.from_json(partner["set"])) if partner else None,
            closed_form_jump=PiecewiseMap.from_json(cfj) if cfj else None,
            description=data.get("description", ""),
        )


def _finite(name, pieces, exceptional=()):
    return PiecewiseMap(UNIT, pieces=tuple(Piece(Interval(*d), Moebius(*m)) for d, m in pieces),
                        exceptional=exceptional, name=name)


def _countable(name, rule, exceptional=()):
    return PiecewiseMap(UNIT, family=CountablePieces(rule), exceptional=exceptional, name=name)


def _maps() -> dict:
    # tent: 2x on [0,1/2], 2-2x on [1/2,1]
    tent = _finite("tent", [((0, HALF), (2, 0, 0, 1)), ((HALF, 1), (-2, 2, 0, 1))])
    # jump map of the tent: 2 - 2^n x on [2^-n, 2^-(n-1)]
    tent_jump = _countable("tent_jump", FamilyRule("geometric", (0, 2, 0, 1), (-1, 0, 0, 0), HALF))
    # Farey: x/(1-x) on [0,1/2], (1-x)/x on [1/2,1]
    farey = _finite("farey", [((0, HALF), (1, 0, -1, 1)), ((HALF, 1), (-1, 1, 1, 0))])
    # Gauss: 1/x - n on [1/(n+1), 1/n], 0 -> 0
    gauss = _countable("gauss", FamilyRule("harmonic", (0, 1, 1, 0), (-1, 0, 0, 0)), ((0, 0),))
    # 2x on [0,1/2], 1/x - 1 on [1/2,1]
    chan_sigma2 = _finite("chan_sigma2", [((0, HALF), (2, 0, 0, 1)), ((HALF, 1), (-1, 1, 1, 0))])
    # 1/(2^(k-1) x) - 1 on [2^-k, 2^-(k-1)], 0 -> 0
    chan_tau2 = _countable(
        "chan_tau2", FamilyRule("geometric", (0, 1, 0, 0), (-HALF, 0, HALF, 0), HALF), ((0, 0),)
    )
    return dict(tent=tent, tent_jump=tent_jump, farey=farey, gauss=gauss,
                chan_sigma2=chan_sigma2, chan_tau2=chan_tau2)


def _systems() -> dict:
    def fin(name, *branches):
        return BranchSystem(UNIT, branches=tuple(Moebius(*b) for b in branches), name=name)

    def inf(name, rule):
        return BranchSystem(UNIT, rule=rule, name=name)

    return dict(
        tent=fin("tent", (-1, 2, 0, 2), (1, 0, 0, 2)),
        # (2 - x) / 2^n
        tent_jump=inf("tent_jump", FamilyRule("geometric", (-1, 2, 0, 0), (0, 0, 0, 1), HALF)),
        farey=fin("farey", (0, 1, 1, 1), (1, 0, 1, 1)),
        # 1 / (x + k)
        gauss=inf("gauss", FamilyRule("harmonic", (0, 1, 1, 0), (0, 0, 0, 1))),
        chan_sigma2=fin("chan_sigma2", (0, 1, 1, 1), (1, 0, 0, 2)),
        # 1 / (2^(k-1) (x + 1))
        chan_tau2=inf("chan_tau2", FamilyRule("geometric", (0, 1, 0, 0), (0, 0, HALF, HALF), HALF)),
    )


_DESCRIPTIONS = {
    "tent": "tent map 1 - |1 - 2x|",
    "tent_jump": "jump transformation of the tent map on [1/2, 1]",
    "farey": "Farey map",
    "gauss": "Gauss map 1/x - floor(1/x)",
    "chan_sigma2": "slow map 2x | 1/x - 1 whose jump map is chan_tau2",
    "chan_tau2": "map 1/(2^(k-1) x) - 1 on [2^-k, 2^-(k-1)]",
}

_DENSITIES = {
    "tent": LEBESGUE,
    "tent_jump": LEBESGUE,
    "farey": FAREY_THETA,
    "gauss": GAUSS_GAMMA,
    "chan_sigma2": GAUSS_GAMMA,
    "chan_tau2": CHAN_MU2,
}

_JUMPS = {"gauss": "farey", "tent_jump": "tent", "chan_tau2": "chan_sigma2"}

_ORDER = ["tent", "tent_jump", "farey", "gauss", "chan_sigma2", "chan_tau2"]


@lru_cache(maxsize=None)
def _build() -> dict:
    maps, systems = _maps(), _systems()
    base_of = {base: jump for jump, base in _JUMPS.items()}
    out = {}
    for name in _ORDER:
        partner = None
        if name in _JUMPS:
            base = _JUMPS[name]
            partner = (base, systems[base].range(1))
        out[name] = CatalogEntry(
            name=name,
            map=maps[name],
            branch_system=systems[name],
            invariant_density=_DENSITIES[name],
            jump_partner=partner,
            closed_form_jump=maps[base_of[name]] if name in base_of else None,
            description=_DESCRIPTIONS[name],
        )
    return out


def list_entries() -> list[str]:
    return list(_ORDER)


def get_entry(name: str) -> CatalogEntry:
    try:
        return _build()[name]
    except KeyError:
        raise UnknownEntry(f"no catalog entry named {name!r}; known: {', '.join(_ORDER)}") from None


def load_entry(source: str) -> CatalogEntry:
    """A catalog name or the path of a JSON descriptor written by ``to_json``."""
    if source in _ORDER:
        return get_entry(source)
    if source.endswith(".json"):
        try:
            with open(source) as fh:
                return CatalogEntry.from_json(json.load(fh))
        except FileNotFoundError:
            raise UnknownEntry(f"no such descriptor file {source!r}") from None
    return get_entry(source)
