"""Jump transformations of piecewise Moebius interval maps, their branching
function systems, Cuntz-algebra representations and invariant densities."""

from .branching import BranchSystem, coding_map_of, compose_branches, jump_family, validate_system
from .catalog import CatalogEntry, get_entry, list_entries
from .cuntz import (
    GridFunction,
    OperatorWord,
    apply_adjoint,
    apply_generator,
    apply_word,
    check_cuntz_relations,
    check_embedding,
    inner_product,
)
from .interval_dynamics import Interval, Moebius, PiecewiseMap, eval_derivative, eval_map, validate_piecewise
from .jump import JumpSpec, check_entry_condition, check_jump_equals, first_entry_time, jump_apply
from .measures import (
    Density,
    induced_measure,
    invariance_residual,
    pullback_check,
    transfer_apply,
    transport_density,
)
from .oracles import birkhoff_histogram, ulam_density

__version__ = "0.1.0"

__all__ = [
    "BranchSystem",
    "coding_map_of",
    "compose_branches",
    "jump_family",
    "validate_system",
    "CatalogEntry",
    "get_entry",
    "list_entries",
    "GridFunction",
    "OperatorWord",
    "apply_adjoint",
    "apply_generator",
    "apply_word",
    "check_cuntz_relations",
    "check_embedding",
    "inner_product",
    "Interval",
    "Moebius",
    "PiecewiseMap",
    "eval_derivative",
    "eval_map",
    "validate_piecewise",
    "JumpSpec",
    "check_entry_condition",
    "check_jump_equals",
    "first_entry_time",
    "jump_apply",
    "Density",
    "induced_measure",
    "invariance_residual",
    "pullback_check",
    "transfer_apply",
    "transport_density",
    "birkhoff_histogram",
    "ulam_density",
]
