"""Command-line entry point: ``shapedispatch <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attack_analysis import AttackModel, MeterPlacement, air_volume, overload_profile, profile_to_csv
from .dispatch_defense import (
    EmptyRegionError,
    pareto_sweep_dispatch,
    polygon_to_csv,
    preventive_region,
    region_polygon_2d,
    sweep_to_csv,
)
from .grid_model import CaseParseError, CaseValidationError, load_case, shift_factors
from .pipeline import (
    ConfigError,
    build_case,
    dispatch_rows_summary,
    f6,
    load_config,
    read_hstar,
    run_pipeline,
    shape_sweep_to_csv,
    shaping_summary,
)
from .shaping_defense import pareto_sweep_shaping, resolve_big_m, solve_p2, solution_json, verify_against_oracle, undefended_volume

logger = logging.getLogger("shapedispatch")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (default: packaged base case)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--verify", action="store_true", help="solve min-followers too and run the oracle check")
    common.add_argument("--omega-air", type=_floats, help="shaping weight (a list for pareto-shape)")
    common.add_argument("--budget", type=_ints, help="meter budget (a list for pareto-shape)")
    common.add_argument("--omega-g", type=_floats, help="dispatch weights, comma-separated")
    common.add_argument("--seed", type=int, help="recorded in the report; only randomized tests use it")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="shapedispatch", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze-attack", parents=[common], help="undefended overload profile and AIR volume")
    sub.add_parser("shape", parents=[common], help="solve the meter-placement MILP")
    d = sub.add_parser("dispatch", parents=[common], help="dispatch against a given H*")
    d.add_argument("--hstar", type=Path, required=True, help="H* as JSON list, solution JSON or overloads CSV")
    sub.add_parser("pareto-shape", parents=[common], help="sweep omega_air or budget")
    pd = sub.add_parser("pareto-dispatch", parents=[common], help="sweep omega_g (solves P2 unless --hstar)")
    pd.add_argument("--hstar", type=Path)
    r = sub.add_parser("region2d", parents=[common], help="polygon of a 3-generator preventive region")
    r.add_argument("--case", type=Path, help="case file (overrides the config case)")
    r.add_argument("--hstar", type=Path)
    sub.add_parser("pipeline", parents=[common], help="shape, hand over H*, dispatch")
    return p


def _config(args):
    cfg = load_config(args.config)
    sh = cfg.shaping
    if args.omega_air and args.command != "pareto-shape":
        sh = dataclasses.replace(sh, omega_air=args.omega_air[0])
    if args.budget and args.command != "pareto-shape":
        sh = dataclasses.replace(sh, budget=args.budget[0])
    changes = {"shaping": sh}
    if args.omega_g:
        changes["dispatch_omegas"] = tuple(args.omega_g)
    if args.verify:
        changes.update(oracle_check=True, dual_solve=True)
    if args.seed is not None:
        changes["seed"] = args.seed
    return dataclasses.replace(cfg, **changes)


def _emit(args, name: str, text: str) -> None:
    if args.out is None:
        return
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / name).write_text(text)


def _hstar(args, case, S, cfg):
    if getattr(args, "hstar", None) is not None:
        H = read_hstar(args.hstar)
        if H.shape != (case.n_lines,):
            raise ConfigError(f"H* has {H.size} entries, case has {case.n_lines} lines")
        return H
    return solve_p2(case, S, cfg.tau, cfg.shaping).H_star


def cmd_analyze_attack(args) -> int:
    cfg = _config(args)
    case, S = build_case(cfg)
    bm = resolve_big_m(case, S, np.full(case.n_loads, cfg.tau), cfg.shaping)
    prof = overload_profile(case, S, AttackModel.uniform(case, cfg.tau, bm.M), MeterPlacement.none(case), verify=cfg.dual_solve)
    print(f6(air_volume(prof, case)))
    _emit(args, "overloads.csv", profile_to_csv(prof, case))
    return 0


def cmd_shape(args) -> int:
    cfg = _config(args)
    case, S = build_case(cfg)
    sol = solve_p2(case, S, cfg.tau, cfg.shaping)
    report = verify_against_oracle(case, S, cfg.tau, sol) if cfg.oracle_check else None
    v0 = undefended_volume(case, S, cfg.tau, sol.big_m.M)
    print(json.dumps(shaping_summary(case, sol, v0), indent=2))
    _emit(args, "shaping.json", solution_json(sol, report) + "\n")
    bm = sol.big_m
    prof = overload_profile(case, S, AttackModel.uniform(case, cfg.tau, bm.M), sol.placement)
    _emit(args, "overloads.csv", profile_to_csv(prof, case))
    if report is not None and not report.passed:
        print(f"oracle check failed at line {report.worst_line}: {report.max_deviation:.3g}", file=sys.stderr)
        return 2
    return 0


def cmd_pareto_shape(args) -> int:
    cfg = _config(args)
    case, S = build_case(cfg)
    if args.budget:
        kw = {"budget_list": args.budget}
    else:
        kw = {"omega_list": args.omega_air or cfg.shape_omegas or [cfg.shaping.omega_air]}
    rows = pareto_sweep_shaping(case, S, cfg.tau, cfg.shaping, **kw)
    text = shape_sweep_to_csv(rows)
    print(text, end="")
    _emit(args, "pareto_shape.csv", text)
    return 0 if all(r.placement is not None for r in rows) else 2


def _dispatch(args, name: str) -> int:
    cfg = _config(args)
    case, S = build_case(cfg)
    region = preventive_region(case, S, _hstar(args, case, S, cfg))
    if region.is_empty:
        raise EmptyRegionError("preventive region is empty")
    rows = pareto_sweep_dispatch(region, case.costs, list(cfg.dispatch_omegas))
    text = sweep_to_csv(rows, case.n_generators)
    print(text, end="")
    _emit(args, name, text)
    if args.out is not None:
        (args.out / "dispatch.json").write_text(json.dumps(dispatch_rows_summary(rows), indent=2) + "\n")
    return 0 if all(r.solution is not None for r in rows) else 2


def cmd_dispatch(args) -> int:
    return _dispatch(args, "dispatch.csv")


def cmd_pareto_dispatch(args) -> int:
    return _dispatch(args, "pareto_dispatch.csv")


def cmd_region2d(args) -> int:
    if args.case is not None:
        case = load_case(args.case)
        S = shift_factors(case)
        H = read_hstar(args.hstar) if args.hstar else np.zeros(case.n_lines)
    else:
        cfg = _config(args)
        case, S = build_case(cfg)
        H = _hstar(args, case, S, cfg)
    if case.n_generators != 3:
        raise ConfigError(f"region2d needs a 3-generator case, this one has {case.n_generators}")
    verts = region_polygon_2d(preventive_region(case, S, H))
    text = polygon_to_csv(verts)
    print(text, end="")
    _emit(args, "region2d.csv", text)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    out = args.out or Path("out")
    report = run_pipeline(cfg, out)
    s = report.summary
    if report.exit_code == 0:
        print(f"undefended volume {f6(s['undefended_volume'])}")
        print(f"defended volume   {f6(s['shaping']['volume'])} with {s['shaping']['C_AIR']} meters")
        print(f"outputs in {out}")
    else:
        print(s.get("error", "pipeline failed"), file=sys.stderr)
    return report.exit_code


COMMANDS = {
    "analyze-attack": cmd_analyze_attack,
    "shape": cmd_shape,
    "dispatch": cmd_dispatch,
    "pareto-shape": cmd_pareto_shape,
    "pareto-dispatch": cmd_pareto_dispatch,
    "region2d": cmd_region2d,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CaseParseError, CaseValidationError, EmptyRegionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
