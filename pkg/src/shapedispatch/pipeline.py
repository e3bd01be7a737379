"""Configuration, the shape-then-dispatch pipeline, and report writers."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Sequence

import numpy as np

from ._fmt import f6
from .attack_analysis import (
    AttackModel,
    MeterPlacement,
    air_volume,
    is_unattackable_by_meters,
    overload_profile,
    profile_to_csv,
)
from .dispatch_defense import (
    pareto_sweep_dispatch,
    polygon_to_csv,
    preventive_region,
    region_polygon_2d,
    sweep_to_csv,
)
from .grid_model import (
    GridCase,
    ShiftFactorMatrix,
    apply_modifications,
    load_case,
    modification_from_dict,
    shift_factors,
)
from .shaping_defense import (
    ShapeSweepRow,
    ShapingConfig,
    ShapingSolution,
    big_m_bounds,
    pareto_sweep_shaping,
    resolve_big_m,
    solve_p2,
    verify_against_oracle,
)

logger = logging.getLogger(__name__)

DATA_DIR = files("shapedispatch") / "data"
BASE_CONFIG = DATA_DIR / "base_case.json"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def r6(x):
    """Round (arrays too) to 6 decimals for JSON output."""
    if isinstance(x, (list, tuple, np.ndarray)):
        return [r6(v) for v in x]
    return float(f6(x))


@dataclass(frozen=True)
class PipelineConfig:
    case_path: Path
    modifications: tuple = ()
    tau: float = 0.5
    shaping: ShapingConfig = field(default_factory=ShapingConfig)
    shape_omegas: tuple[float, ...] = ()
    shape_budgets: tuple[int, ...] = ()
    dispatch_omegas: tuple[float, ...] = (0.01, 0.015, 0.03, 0.06, 0.10)
    oracle_check: bool = True
    dual_solve: bool = False
    seed: int | None = None

    def __post_init__(self):
        if not Path(self.case_path).is_file():
            raise ConfigError(f"case file not found: {self.case_path}")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if any(w < 0 for w in self.dispatch_omegas):
            raise ConfigError("dispatch omega_g values must be >= 0")


def config_from_dict(doc: dict, base_dir: Path | None = None) -> PipelineConfig:
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    try:
        case_path = Path(doc["case"])
    except KeyError:
        raise ConfigError("config needs a 'case' entry") from None
    if not case_path.is_absolute():
        case_path = base_dir / case_path
    sh = dict(doc.get("shaping", {}))
    big_m = sh.get("big_m", "auto")
    try:
        shaping = ShapingConfig(
            omega_air=float(sh.get("omega_air", 0.15)),
            budget=int(sh.get("budget", 15)),
            big_m=big_m if big_m == "auto" else tuple(float(v) for v in big_m),
            duality_cuts=bool(sh.get("duality_cuts", True)),
            time_limit=float(sh.get("time_limit", 300.0)),
            mip_gap=float(sh.get("mip_gap", 1e-6)),
        )
        mods = tuple(modification_from_dict(m) for m in doc.get("modifications", []))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad config: {exc}") from None
    ps = doc.get("pareto_shape", {})
    verify = doc.get("verify", {})
    return PipelineConfig(
        case_path=case_path,
        modifications=mods,
        tau=float(doc.get("tau", 0.5)),
        shaping=shaping,
        shape_omegas=tuple(float(w) for w in ps.get("omega_air", ())),
        shape_budgets=tuple(int(b) for b in ps.get("budget", ())),
        dispatch_omegas=tuple(float(w) for w in doc.get("dispatch", {}).get("omega_g", (0.01, 0.015, 0.03, 0.06, 0.10))),
        oracle_check=bool(verify.get("oracle", True)),
        dual_solve=bool(verify.get("dual_solve", False)),
        seed=doc.get("seed"),
    )


def load_config(path=None) -> PipelineConfig:
    """Read a JSON config; relative case paths resolve against the config's folder."""
    path = BASE_CONFIG if path is None else Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc, Path(str(path)).parent)


def build_case(config: PipelineConfig) -> tuple[GridCase, ShiftFactorMatrix]:
    case = apply_modifications(load_case(config.case_path), config.modifications)
    return case, shift_factors(case)


def hstar_checksum(H: Sequence[float]) -> str:
    return hashlib.sha256(np.ascontiguousarray(H, dtype="<f8").tobytes()).hexdigest()


# ---------------------------------------------------------------- writers


def shape_sweep_to_csv(rows: Sequence[ShapeSweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega_air", "budget", "C_AIR", "volume", "reduction_pct", "delta", "epsilon", "status"])
    for row in rows:
        if row.placement is None:
            w.writerow([f6(row.omega_air), row.budget, "", "", "", "", "", row.status])
            continue
        d, e = row.placement.bitstrings()
        w.writerow([f6(row.omega_air), row.budget, row.cost, f6(row.volume), f6(row.reduction_pct), d, e, row.status])
    return buf.getvalue()


def read_hstar(path) -> np.ndarray:
    """H* from a solution JSON (``H_star`` key), a JSON list, or an overloads CSV."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        rows = list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))
        if not rows or "H" not in rows[0]:
            raise ConfigError(f"{path}: CSV needs an 'H' column")
        return np.array([float(r["H"]) for r in rows])
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc = doc.get("H_star", doc.get("shaping", {}).get("H_star"))
    if not isinstance(doc, list):
        raise ConfigError(f"{path}: no H* vector found")
    return np.array(doc, dtype=float)


def shaping_summary(case: GridCase, sol: ShapingSolution, v0: float) -> dict:
    d, e = sol.placement.bitstrings()
    return {
        "status": sol.status.value,
        "metered_load_buses": sorted(sol.placement.metered_load_buses(case)),
        "metered_lines": sol.placement.metered_lines(),
        "delta": d,
        "epsilon": e,
        "C_AIR": sol.cost,
        "volume": r6(sol.volume),
        "benefit": r6(sol.benefit),
        "reduction_pct": r6(0.0 if v0 == 0 else 100 * (v0 - sol.volume) / v0),
        "objective": r6(sol.objective),
        "gap": sol.gap,
        "H_star": r6(sol.H_star),
        "unattackable_lines": [
            n for n in range(1, case.n_lines + 1) if is_unattackable_by_meters(case, sol.placement, n)
        ],
    }


def dispatch_rows_summary(rows) -> list[dict]:
    out = []
    for row in rows:
        s = row.solution
        if s is None:
            out.append({"omega_g": row.omega_g, "error": row.error})
            continue
        out.append(
            {
                "omega_g": row.omega_g,
                "r": r6(s.r),
                "r_pct": r6(row.r_pct),
                "cost": r6(s.cost),
                "cost_pct": r6(row.cost_pct),
                "G": r6(s.G),
                "boundaries": list(s.nearest_boundaries),
            }
        )
    return out


# ---------------------------------------------------------------- pipeline


@dataclass
class PipelineReport:
    summary: dict
    files: dict[str, Path]
    exit_code: int


def run_pipeline(config: PipelineConfig, out_dir, backend="highs") -> PipelineReport:
    """Shape, check, hand H* over, dispatch. Writes each output as soon as it exists."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    summary: dict = {"config": {"case": Path(config.case_path).name, "tau": config.tau, "seed": config.seed}}

    def write(name, text):
        (out / name).write_text(text)
        written[name] = out / name

    def flush():
        write("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")

    stage = "setup"
    try:
        case, S = build_case(config)
        tau = config.tau
        lower = big_m_bounds(case, S, tau)
        bm = resolve_big_m(case, S, np.full(case.n_loads, tau), config.shaping)
        summary["big_m"] = {"lower_bounds": r6(lower.as_tuple()), "used": r6(bm.as_tuple())}

        stage = "attack"
        attack = AttackModel.uniform(case, tau, bm.M)
        prof0 = overload_profile(case, S, attack, MeterPlacement.none(case), verify=config.dual_solve)
        v0 = air_volume(prof0, case)
        summary["undefended_volume"] = r6(v0)

        stage = "shape"
        sol = solve_p2(case, S, tau, config.shaping, backend)
        summary["shaping"] = shaping_summary(case, sol, v0)
        if config.oracle_check:
            rep = verify_against_oracle(case, S, tau, sol)
            summary["shaping"]["oracle_max_deviation"] = float(f"{rep.max_deviation:.3e}")
            if not rep.passed:
                raise StageError("shape", f"oracle check failed at line {rep.worst_line}")
        prof = overload_profile(case, S, attack, sol.placement, verify=config.dual_solve)
        write("overloads.csv", profile_to_csv(prof, case))

        if config.shape_omegas or config.shape_budgets:
            stage = "pareto-shape"
            kw = {"omega_list": config.shape_omegas} if config.shape_omegas else {"budget_list": config.shape_budgets}
            rows = pareto_sweep_shaping(case, S, tau, config.shaping, backend=backend, **kw)
            write("pareto_shape.csv", shape_sweep_to_csv(rows))
            summary["pareto_shape_failures"] = sum(r.placement is None for r in rows)

        stage = "dispatch"
        H = sol.H_star  # exactly the vector stage 1 delivered
        summary["H_star_sha256"] = hstar_checksum(H)
        region = preventive_region(case, S, H)
        summary["dispatch_region_empty"] = region.is_empty
        if region.is_empty:
            raise StageError("dispatch", "preventive region is empty")
        rows = pareto_sweep_dispatch(region, case.costs, config.dispatch_omegas)
        write("pareto_dispatch.csv", sweep_to_csv(rows, case.n_generators))
        summary["dispatch"] = dispatch_rows_summary(rows)
        if case.n_generators == 3:
            write("region2d.csv", polygon_to_csv(region_polygon_2d(region)))
        flush()
        return PipelineReport(summary, written, 0)
    except StageError as exc:
        summary["error"] = str(exc)
    except Exception as exc:  # noqa: BLE001 - tag and report
        summary["error"] = f"[{stage}] {exc}"
    logger.error(summary["error"])
    flush()
    return PipelineReport(summary, written, 2)
