"""Trace the meter-budget frontier: defended volume for each budget.

    python scripts/sweep_meter_budget.py --budgets 0-11 [--omega 0.15] [--workers 2] [--out frontier.csv]

Large budgets take longest; each point is an independent MILP.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from shapedispatch.pipeline import build_case, load_config, shape_sweep_to_csv
from shapedispatch.shaping_defense import pareto_sweep_shaping


def _budgets(text: str) -> list[int]:
    if "-" in text:
        lo, hi = (int(t) for t in text.split("-"))
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",")]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--budgets", type=_budgets, default=list(range(0, 12)))
    ap.add_argument("--omega", type=float, help="meter-cost weight (default: config value)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    shaping = cfg.shaping if args.omega is None else dataclasses.replace(cfg.shaping, omega_air=args.omega)
    case, S = build_case(cfg)
    rows = pareto_sweep_shaping(case, S, cfg.tau, shaping, budget_list=args.budgets, max_workers=args.workers)
    text = shape_sweep_to_csv(rows)
    print(text, end="")
    if args.out:
        args.out.write_text(text)
    return 0 if all(r.placement is not None for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
