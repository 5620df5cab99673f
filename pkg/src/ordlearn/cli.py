"""Command-line front door.

Exit codes: 0 success, 1 expectation violated, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from decimal import Decimal
from pathlib import Path

import jsonschema

from ._io import atomic_write_text
from .conditions import (check_dub, check_mlrp, check_pairwise_ub, check_pidd, check_scd,
                         check_unbounded_beliefs, check_universal_dub, implication_audit)
from .core import Belief, UtilityTable, make_belief
from .dynamics import scan_hits, simulate_run, stationary_scan
from .errors import OrdLearnError, Unsupported, UnknownScenario
from .experiments.gallery import lookup, registry, run_gallery
from .reports import ProbePlan, _jsonable
from .signals import from_descriptor

OK, VIOLATION, USAGE = 0, 1, 2

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}

MODEL_SCHEMA = {"oneOf": [
    {"type": "object", "additionalProperties": False, "required": ["kind", "states", "signals", "matrix"],
     "properties": {"kind": {"const": "finite"}, "states": {"type": "array", "items": {"type": "integer"}},
                    "signals": _vec, "matrix": _mat}},
    {"type": "object", "additionalProperties": False, "required": ["kind", "family", "state_window"],
     "properties": {"kind": {"const": "location"},
                    "family": {"enum": ["normal", "laplace", "student_t", "custom"]},
                    "params": {"type": "object", "additionalProperties": _num},
                    "state_window": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}}},
    {"type": "object", "additionalProperties": False, "required": ["kind", "prior", "entries"],
     "properties": {"kind": {"const": "posterior_sequence"}, "prior": _vec,
                    "states": {"type": "array", "items": {"type": "integer"}},
                    "entries": {"type": "array", "items": {
                        "type": "object", "additionalProperties": False, "required": ["q", "nu"],
                        "properties": {"q": _num, "nu": _vec}}}}},
]}

UTILITY_SCHEMA = {"oneOf": [
    {"type": "object", "additionalProperties": False, "required": ["actions", "matrix"],
     "properties": {"actions": {"type": "array", "minItems": 2}, "matrix": _mat}},
    {"type": "object", "additionalProperties": False, "required": ["kind"],
     "properties": {"kind": {"const": "quadratic_loss"}, "actions": {"type": "array", "items": {"type": "integer"}}}},
]}

CONFIG_SCHEMA = {
    "type": "object", "additionalProperties": False, "required": ["model"],
    "properties": {
        "model": MODEL_SCHEMA,
        "utility": UTILITY_SCHEMA,
        "prior": _vec,
        "options": {"type": "object", "additionalProperties": False, "properties": {
            "horizon": {"type": "integer"}, "runs": {"type": "integer"}, "seed": {"type": "integer"},
            "grid_step": _num, "true_state": {"type": "integer"},
            "support": {"type": "array", "items": {"type": "integer"}},
            "probe": {"type": "object", "additionalProperties": False, "properties": {
                "eps_limit": _num, "delta": _num, "trend_window": {"type": "integer"},
                "max_power": {"type": "integer"}}},
        }},
    },
}


class UsageError(Exception):
    pass


def _floats(x):
    if isinstance(x, Decimal):
        return float(x)
    if isinstance(x, list):
        return [_floats(v) for v in x]
    if isinstance(x, dict):
        return {k: _floats(v) for k, v in x.items()}
    return x


def load_config(path) -> dict:
    """Read and validate a run configuration; reals are parsed as decimals first."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"), parse_float=Decimal)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise UsageError(f"invalid config: {exc.message} at {list(exc.absolute_path)}") from None
    return _floats(raw)


def build(cfg: dict):
    """Model, utility (or None) and prior from a validated configuration."""
    try:
        model = from_descriptor(cfg["model"])
        sp = model.space
        u = None
        if "utility" in cfg:
            ud = cfg["utility"]
            if ud.get("kind") == "quadratic_loss":
                u = UtilityTable.quadratic_loss(sp, ud.get("actions"))
            else:
                u = UtilityTable(sp, tuple(ud["actions"]), ud["matrix"])
        prior = make_belief(sp, cfg["prior"]) if "prior" in cfg else Belief.uniform(sp)
    except OrdLearnError as exc:
        raise UsageError(f"invalid primitives: {exc}") from None
    return model, u, prior


def _opt(args, cfg, key, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get("options", {}).get(key, default)


def _plan(cfg) -> ProbePlan:
    return ProbePlan(**cfg.get("options", {}).get("probe", {}))


def _out(args) -> Path:
    p = Path(args.out or ".")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    model, u, prior = build(cfg)
    plan = _plan(cfg)
    reports = {}
    if u is not None:
        reports["scd"] = check_scd(u)
    try:
        reports["mlrp"] = check_mlrp(model)
    except Unsupported:
        reports["mlrp"] = None
    reports["dub"] = check_dub(model, plan)
    reports["universal_dub"] = check_universal_dub(model, plan)
    reports["pairwise_ub"] = check_pairwise_ub(model, plan)
    reports["unbounded_beliefs"] = check_unbounded_beliefs(model, plan)
    reports["pidd"] = check_pidd(model, [prior], plan)
    audit = implication_audit(model, plan, {k: reports[k] for k in
                                            ("mlrp", "unbounded_beliefs", "universal_dub", "dub", "pairwise_ub")})
    reports["implication_audit"] = audit
    body = {k: (r.to_json() if r is not None else {"condition": k, "verdict": "n/a"}) for k, r in reports.items()}
    atomic_write_text(_out(args) / "check.json", _dump(body))
    for k, r in reports.items():
        print(f"{k:20s} {r.verdict if r is not None else 'n/a'}")
    return OK if audit.holds else VIOLATION


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    model, u, prior = build(cfg)
    if u is None:
        raise UsageError("simulate needs a utility")
    horizon = _opt(args, cfg, "horizon", 5000)
    runs = _opt(args, cfg, "runs", 1)
    seed = _opt(args, cfg, "seed", 0)
    if horizon < 1 or runs < 1:
        raise UsageError("horizon and runs must be at least 1")
    out = _out(args)
    summary = []
    for i in range(runs):
        try:
            tr = simulate_run(u, model, prior, horizon, [seed, i], true_state=cfg.get("options", {}).get("true_state"))
        except OrdLearnError as exc:
            raise UsageError(str(exc)) from None
        tr.to_csv(out / f"run_{i}.csv")
        summary.append({"run": i, "seed": [seed, i], "true_state": tr.true_state, "steps": tr.n_steps,
                        "cascade_at": tr.cascade_at, "herd_at": tr.herd_at, "final_action": tr.action_at(tr.n_steps),
                        "stationarity_mode": tr.stationarity_mode})
    atomic_write_text(out / "simulate.json", _dump(summary))
    print(_dump(summary), end="")
    return OK


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    model, u, _ = build(cfg)
    if u is None:
        raise UsageError("scan needs a utility")
    step = _opt(args, cfg, "grid_step", 0.02)
    if not 0 < step < 1:
        raise UsageError("grid step must lie in (0, 1)")
    support = cfg.get("options", {}).get("support")
    try:
        entries = stationary_scan(u, model, support, step, _plan(cfg))
    except OrdLearnError as exc:
        raise UsageError(str(exc)) from None
    hits = scan_hits(entries)
    body = {"grid_step": step, "support": support, "beliefs": len(entries),
            "hits": [{"support": list(e.belief.support), "mass": list(e.belief.mass), "verdict": e.verdict}
                     for e in hits]}
    atomic_write_text(_out(args) / "scan.json", _dump(body))
    print(f"{len(entries)} beliefs scanned, {len(hits)} stationary without adequate knowledge")
    return OK


def _list() -> int:
    for key, name, claim in registry():
        print(f"{key}  {name:20s} {claim}")
    return OK


def cmd_experiment(args) -> int:
    if not args.name:
        return _list()
    try:
        lookup(args.name)
    except UnknownScenario:
        raise UsageError(f"unknown scenario {args.name!r}") from None
    opts = {"seed": args.seed or 0, "runs": args.runs, "horizon": args.horizon, "grid_step": args.grid_step,
            "jobs": args.jobs}
    rep = run_gallery(args.name, out=_out(args), **opts)
    for k, v in sorted(rep.checks.items()):
        print(f"{'pass' if v else 'FAIL'}  {k}")
    return OK if rep.expectation_met else VIOLATION


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ordlearn", description="Observational learning with ordered states.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--runs", type=int)
        sp.add_argument("--grid-step", dest="grid_step", type=float)
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    for name, fn in (("check", cmd_check), ("simulate", cmd_simulate), ("scan", cmd_scan)):
        sp = sub.add_parser(name)
        common(sp)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("experiment")
    sp.add_argument("name", nargs="?", default="")
    common(sp, config=False)
    sp.set_defaults(func=cmd_experiment)
    sp = sub.add_parser("gallery-list")
    sp.set_defaults(func=lambda a: _list())
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
