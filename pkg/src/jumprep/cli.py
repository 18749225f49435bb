"""Command-line front end.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 for usage errors (bad arguments, unknown catalog names).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .branching import INF, BranchSystem, coding_map_of, jump_family, validate_system
from .catalog import CatalogEntry, get_entry, list_entries, load_entry
from .cuntz import (
    DEFAULT_GRID,
    OperatorWord,
    check_alternative_embedding,
    check_cuntz_relations,
    check_embedding,
    eval_word_array,
    get_test_function,
)
from .errors import JumpRepError, UnknownEntry
from .interval_dynamics import Interval, as_fraction, eval_map, validate_piecewise
from .jump import DEFAULT_ENTRY_CAP, JumpSpec, check_jump_equals, first_entry_time, jump_apply, random_rationals
from .measures import (
    CHAN_MU2,
    FAREY_THETA,
    GAUSS_GAMMA,
    LEBESGUE,
    Density,
    K_for_tail,
    as_map,
    induced_consistency,
    invariance_residual,
    pullback_check,
    transport_density,
)
from .oracles import birkhoff_histogram, l1_distance, ulam_density

DENSITIES = {"lebesgue": LEBESGUE, "gamma": GAUSS_GAMMA, "theta": FAREY_THETA, "mu2": CHAN_MU2}
JUMP_PAIRS = [("farey", "gauss"), ("chan_sigma2", "chan_tau2"), ("tent", "tent_jump")]
FIGURE_SAMPLES = 1024


def _env_int(name: str, default: int) -> int:
    val = os.environ.get(name)
    return int(val) if val else default


@dataclass(frozen=True)
class RunConfig:
    backend: str = "exact"
    grid: int = DEFAULT_GRID
    depth: int = 100
    entry_cap: int = DEFAULT_ENTRY_CAP
    seed: int = 0
    samples: int = 2000
    nmax: int = 20
    output: str | None = None

    def __post_init__(self):
        if self.backend not in ("exact", "float"):
            raise ValueError("backend must be 'exact' or 'float'")
        if self.grid < 2 or self.depth < 1 or self.entry_cap < 1 or self.samples < 1 or self.nmax < 1:
            raise ValueError("grid >= 2, depth >= 1, entry_cap >= 1, samples >= 1 and nmax >= 1 required")


def _json_default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Interval):
        return obj.to_json()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(report) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"


def _write(text: str, output: str | None):
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows, header=("x", "value")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for x, v in rows:
        w.writerow([repr(float(x)), repr(float(v))])
    return buf.getvalue()


# -- verify-all ------------------------------------------------------------------


class _Suite:
    def __init__(self):
        self.checks = []

    def add(self, name: str, ok: bool, detail: dict):
        self.checks.append({"name": name, "ok": bool(ok), "detail": detail})

    def run(self, name: str, fn):
        try:
            ok, detail = fn()
        except JumpRepError as exc:
            ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
        self.add(name, ok, detail)

    def report(self, config: RunConfig) -> dict:
        failed = [c["name"] for c in self.checks if not c["ok"]]
        cfg = asdict(config)
        cfg.pop("output")
        return {"ok": not failed, "first_failure": failed[0] if failed else None,
                "failures": failed, "config": cfg, "checks": self.checks}


def _samples(config: RunConfig, ambient: Interval, salt: int):
    if config.backend == "exact":
        return random_rationals(config.samples, ambient, config.seed + salt)
    rng = np.random.default_rng(config.seed + salt)
    lo = max(float(ambient.lo), 1e-3)
    return rng.uniform(lo, float(ambient.hi), config.samples).tolist()


def _density_points(ambient: Interval, count: int = 25):
    return [ambient.lo + ambient.length * Fraction(k, count + 1) for k in range(1, count + 1)]


def _validation(entry: CatalogEntry):
    pw = validate_piecewise(entry.map)
    bs = validate_system(entry.branch_system)
    return pw.ok and bs.ok, {"map": pw.to_dict(), "branch_system": bs.to_dict()}


def _relations(f: BranchSystem, config: RunConfig):
    K = None if f.arity != INF else sorted({10, config.depth})
    rep = check_cuntz_relations(f, K=K, grid=config.grid)
    return rep.ok, rep.to_dict()


def _invariance(f: BranchSystem, phi: Density, config: RunConfig):
    K = K_for_tail(f, phi, 1e-6) if f.arity == INF else None
    pts = _density_points(f.ambient)
    if config.backend == "float":
        pts = [float(x) for x in pts]
    rep = invariance_residual(f, phi, pts, K)
    detail = rep.to_dict()
    detail["K"] = K
    return rep.ok, detail


def _pair_checks(suite: _Suite, base: CatalogEntry, jump: CatalogEntry, config: RunConfig, salt: int):
    f = base.branch_system
    tag = f"{base.name}->{jump.name}"
    A = f.range(1)

    def jump_eq():
        spec = JumpSpec(base.map, A, config.entry_cap)
        tol = 0.0 if config.backend == "exact" else 1e-9
        rep = check_jump_equals(spec, jump.map, _samples(config, base.map.ambient, salt), tol)
        return rep.ok, rep.to_dict()

    def coding_eq():
        # the jump map is the coding map of the jump family
        T = coding_map_of(jump_family(f, config.depth))
        xs = _samples(config, base.map.ambient, salt + 1)[:500]
        bad = 0
        for x in xs:
            if eval_map(T, x) != eval_map(jump.map, x):
                bad += 1
        return bad == 0, {"samples": len(xs), "mismatches": bad}

    def embed():
        rep = check_embedding(f, config.nmax)
        return rep.ok, rep.to_dict()

    def transport():
        psi = transport_density(f, base.invariant_density)
        ratio = psi.projective_ratio(jump.invariant_density)
        detail = {"transported": psi.describe(), "expected": jump.invariant_density.describe(),
                  "ratio": ratio, "integrable_input": base.invariant_density.integrable}
        pb = pullback_check(_branch_map(f), psi, base.invariant_density, _density_points(f.ambient))
        detail["pullback"] = pb.to_dict()
        return ratio is not None and ratio > 0 and pb.ok, detail

    def induced():
        rep = induced_consistency(base.map, f, base.invariant_density, 6)
        return rep["max_deviation"] <= 1e-10, rep

    def alt_words():
        dev = check_alternative_embedding(f, 8)
        return dev.exact_zero, dev.to_dict()

    suite.run(f"{tag}: jump equals closed form", jump_eq)
    suite.run(f"{tag}: jump equals coding map of jump family", coding_eq)
    suite.run(f"{tag}: embedding", embed)
    suite.run(f"{tag}: density transport", transport)
    suite.run(f"{tag}: induced measure", induced)
    suite.run(f"{tag}: alternative embedding words", alt_words)


def _branch_map(f: BranchSystem):
    return as_map(f.branch(1), f.ambient)


def _entry_checks(suite: _Suite, entry: CatalogEntry, config: RunConfig):
    f = entry.branch_system
    suite.run(f"{entry.name}: validation", lambda: _validation(entry))
    suite.run(f"{entry.name}: cuntz relations", lambda: _relations(f, config))
    phi = entry.invariant_density
    if phi is not None and (f.arity != INF or phi.integrable):
        suite.run(f"{entry.name}: invariance", lambda: _invariance(f, entry.invariant_density, config))


def run_verify_all(config: RunConfig, entries: list[CatalogEntry] | None = None) -> dict:
    """Run the verification suite and return a deterministic report.

    Without ``entries`` every catalog entry and every jump pair is checked;
    otherwise only the supplied entries.
    """
    suite = _Suite()
    if entries:
        for e in entries:
            _entry_checks(suite, e, config)
        return suite.report(config)
    for name in list_entries():
        _entry_checks(suite, get_entry(name), config)
    for salt, (base, jump) in enumerate(JUMP_PAIRS):
        _pair_checks(suite, get_entry(base), get_entry(jump), config, 1000 * salt)
    return suite.report(config)


# -- figures ---------------------------------------------------------------------


def figure_rows(entry: CatalogEntry, n: int = FIGURE_SAMPLES):
    """(x, map(x)) at x = (j+1)/n of the ambient interval, j < n."""
    amb = entry.map.ambient
    rows = []
    for j in range(n):
        x = amb.lo + amb.length * Fraction(j + 1, n)
        rows.append((x, eval_map(entry.map, x)))
    return rows


def emit_figure(name: str, config: RunConfig | None = None) -> str:
    text = _csv(figure_rows(load_entry(name)))
    _write(text, config.output if config else None)
    return text


# -- argument parsing --------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--output", "-o", help="write the report to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumprep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="list or show built-in entries")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.add_argument("--emit", choices=["json", "csv"], default="json")
    _add_common(p)

    p = sub.add_parser("jump", help="first entry time and jump map by iteration")
    p.add_argument("action", nargs="?", choices=["apply", "verify"], default="apply")
    p.add_argument("--map", required=True, help="catalog name or JSON descriptor")
    p.add_argument("--set", help='target interval "lo,hi" (default: range of the first branch)')
    p.add_argument("--x", help="point, e.g. 3/8 or 0.375")
    p.add_argument("--against", help="closed-form map to compare with (verify)")
    p.add_argument("--samples", type=int, default=10**4)
    p.add_argument("--backend", choices=["exact", "float"], default="exact")
    p.add_argument("--entry-cap", type=int, default=DEFAULT_ENTRY_CAP)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("cuntz", help="Cuntz relations and the embedding check")
    p.add_argument("action", choices=["check", "embed"])
    p.add_argument("--map", required=True)
    p.add_argument("--depth", type=int, default=_env_int("JUMPREP_DEPTH", 100))
    p.add_argument("--grid", type=int, default=_env_int("JUMPREP_GRID", DEFAULT_GRID))
    p.add_argument("--nmax", type=int, default=20)
    p.add_argument("--emit", choices=["json", "csv"], default="json")
    p.add_argument("--index", type=int, default=1, help="generator index for --emit csv")
    p.add_argument("--phi", default="one", help="test function for --emit csv")
    p.add_argument("--word", help='operator word for --emit csv, e.g. "S2^2 S1"')
    _add_common(p)

    p = sub.add_parser("measure", help="invariant densities and oracles")
    p.add_argument("action", choices=["invariance", "transport", "ulam", "orbit"])
    p.add_argument("--map", required=True)
    p.add_argument("--density", help=f"one of {', '.join(DENSITIES)} (default: the catalog density)")
    p.add_argument("--cells", type=int, default=_env_int("JUMPREP_GRID", DEFAULT_GRID))
    p.add_argument("--steps", type=int, default=10**6)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit", choices=["json", "csv"], default="json")
    _add_common(p)

    p = sub.add_parser("verify-all", help="run the full verification suite")
    p.add_argument("--backend", choices=["exact", "float"], default="exact")
    p.add_argument("--grid", type=int, default=_env_int("JUMPREP_GRID", DEFAULT_GRID))
    p.add_argument("--depth", type=int, default=_env_int("JUMPREP_DEPTH", 100))
    p.add_argument("--entry-cap", type=int, default=DEFAULT_ENTRY_CAP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--nmax", type=int, default=20)
    p.add_argument("--entry", action="append", default=[],
                   help="check only this JSON entry descriptor (repeatable)")
    _add_common(p)

    p = sub.add_parser("figure", help="emit 1024 (x, y) samples of a catalog map as CSV")
    p.add_argument("name")
    _add_common(p)
    return parser


def _density_for(entry: CatalogEntry, name: str | None) -> Density:
    if name is None:
        if entry.invariant_density is None:
            raise UnknownEntry(f"{entry.name} has no catalog density; pass --density")
        return entry.invariant_density
    if name not in DENSITIES:
        raise UnknownEntry(f"unknown density {name!r}; known: {', '.join(DENSITIES)}")
    return DENSITIES[name]


def _cmd_catalog(args) -> int:
    if args.action == "list":
        _write(dumps(list_entries()), args.output)
        return 0
    if not args.name:
        raise UnknownEntry("catalog show needs a name")
    entry = load_entry(args.name)
    _write(_csv(figure_rows(entry)) if args.emit == "csv" else dumps(entry.to_json()), args.output)
    return 0


def _cmd_jump(args) -> int:
    entry = load_entry(args.map)
    A = Interval.from_json(args.set) if args.set else entry.branch_system.range(1)
    spec = JumpSpec(entry.map, A, args.entry_cap)
    if args.action == "apply":
        if args.x is None:
            raise UnknownEntry("jump needs --x")
        x = float(args.x) if args.backend == "float" else as_fraction(args.x)
        out = {"map": entry.name, "set": A.to_json(), "x": str(x),
               "entry_time": first_entry_time(spec, x), "jump": str(jump_apply(spec, x))}
        _write(dumps(out), args.output)
        return 0
    if not args.against:
        raise UnknownEntry("jump verify needs --against")
    closed = load_entry(args.against).map
    if args.backend == "exact":
        xs = random_rationals(args.samples, entry.map.ambient, args.seed)
        tol = 0.0
    else:
        lo = max(float(entry.map.ambient.lo), 1e-3)
        xs = np.random.default_rng(args.seed).uniform(lo, float(entry.map.ambient.hi), args.samples).tolist()
        tol = 1e-9
    rep = check_jump_equals(spec, closed, xs, tol)
    out = {"map": entry.name, "against": args.against, "set": A.to_json(), "backend": args.backend,
           **rep.to_dict()}
    _write(dumps(out), args.output)
    return 0 if rep.ok else 1


def _cmd_cuntz(args) -> int:
    entry = load_entry(args.map)
    f = entry.branch_system
    if args.emit == "csv":
        word = OperatorWord.parse(args.word) if args.word else OperatorWord.gen(args.index)
        tf = get_test_function(args.phi)
        xs = (np.arange(args.grid) + 0.5) / args.grid
        amb = f.ambient
        xs = float(amb.lo) + float(amb.length) * xs
        vals = eval_word_array(f, word, tf, xs)
        _write(_csv(zip(xs, vals)), args.output)
        return 0
    if args.action == "check":
        K = None if f.arity != INF else sorted({10, args.depth})
        rep = check_cuntz_relations(f, K=K, grid=args.grid)
    else:
        rep = check_embedding(f, args.nmax)
    _write(dumps({"map": entry.name, **rep.to_dict()}), args.output)
    return 0 if rep.ok else 1


def _cmd_measure(args) -> int:
    entry = load_entry(args.map)
    f = entry.branch_system
    if args.action == "invariance":
        phi = _density_for(entry, args.density)
        ok, detail = _invariance(f, phi, RunConfig())
        _write(dumps({"map": entry.name, "density": phi.describe(), **detail}), args.output)
        return 0 if ok else 1
    if args.action == "transport":
        phi = _density_for(entry, args.density)
        psi = transport_density(f, phi)
        out = {"map": entry.name, "density": phi.describe(), "transported": psi.describe(),
               "integrable_input": phi.integrable, "integrable_output": psi.integrable,
               "transported_json": psi.to_json()}
        _write(dumps(out), args.output)
        return 0
    if args.action == "ulam":
        res = ulam_density(entry.map, args.cells)
        if args.emit == "csv":
            _write(_csv(zip(res.density.nodes, res.density.values)), args.output)
            return 0
        out = {"map": entry.name, **res.to_dict()}
        if entry.invariant_density is not None and entry.invariant_density.integrable:
            out["l1_to_catalog_density"] = l1_distance(res.masses, entry.invariant_density)
        _write(dumps(out), args.output)
        return 0
    res = birkhoff_histogram(entry.map, args.steps, args.bins, args.seed)
    if args.emit == "csv":
        _write(_csv(zip(res.histogram.nodes, res.histogram.values)), args.output)
        return 0
    out = {"map": entry.name, "seed": args.seed, **res.to_dict()}
    if entry.invariant_density is not None and entry.invariant_density.integrable:
        out["l1_to_catalog_density"] = l1_distance(res.probabilities, entry.invariant_density)
    _write(dumps(out), args.output)
    return 0


def _cmd_verify_all(args) -> int:
    config = RunConfig(args.backend, args.grid, args.depth, args.entry_cap, args.seed, args.samples,
                       args.nmax, args.output)
    entries = [load_entry(p) for p in args.entry]
    report = run_verify_all(config, entries or None)
    _write(dumps(report), args.output)
    return 0 if report["ok"] else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"catalog": _cmd_catalog, "jump": _cmd_jump, "cuntz": _cmd_cuntz,
                "measure": _cmd_measure, "verify-all": _cmd_verify_all}
    try:
        if args.command == "figure":
            _write(_csv(figure_rows(load_entry(args.name))), args.output)
            return 0
        return handlers[args.command](args)
    except (UnknownEntry, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"jumprep: error: {msg}", file=sys.stderr)
        return 2
    except JumpRepError as exc:
        print(f"jumprep: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
