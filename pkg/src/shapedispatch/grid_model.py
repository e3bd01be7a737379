"""DC grid data: case parsing, modifications, shift factors and incidence matrices.

Two input formats are understood:

* ``matpower-m`` -- the bus/gen/branch tables of a MATPOWER case file. Loads are
  the buses with nonzero ``Pd``; ``rateA = 0`` means an unlimited line; branch
  and generator rows with ``status = 0`` are dropped. Resistance, charging,
  shunts, voltages, tap ratios and phase shifts are read but ignored (the
  susceptance of a line is ``1 / x``).
* ``native-json`` -- a small per-unit schema, see :func:`case_to_json`.

Line ids and generator/load positions are 1-based in the order of appearance.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np


class CaseParseError(ValueError):
    """Raised for malformed case text. Carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line else ""
        super().__init__(f"{message}{where}")


class CaseValidationError(ValueError):
    """Raised when a parsed case violates a physical invariant."""


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    reactance: float
    flow_limit: float = math.inf


@dataclass(frozen=True)
class Generator:
    bus: int
    g_min: float
    g_max: float
    cost: float = 0.0


@dataclass(frozen=True)
class Load:
    bus: int
    demand: float


@dataclass(frozen=True)
class GridCase:
    """Immutable DC network in per-unit on ``base_power`` MVA."""

    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    base_power: float = 100.0
    name: str = "case"

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "loads", tuple(self.loads))
        validate_case(self)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def n_loads(self) -> int:
        return len(self.loads)

    @property
    def demand(self) -> np.ndarray:
        return np.array([ld.demand for ld in self.loads], dtype=float)

    @property
    def flow_limits(self) -> np.ndarray:
        return np.array([ln.flow_limit for ln in self.lines], dtype=float)

    @property
    def g_min(self) -> np.ndarray:
        return np.array([g.g_min for g in self.generators], dtype=float)

    @property
    def g_max(self) -> np.ndarray:
        return np.array([g.g_max for g in self.generators], dtype=float)

    @property
    def costs(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators], dtype=float)

    def bus_index(self, bus: int) -> int:
        try:
            return self.buses.index(int(bus))
        except ValueError:
            raise KeyError(f"unknown bus {bus}") from None

    def line_index(self, line_id: int) -> int:
        """0-based position of the 1-based ``line_id``."""
        if not 1 <= int(line_id) <= self.n_lines:
            raise KeyError(f"unknown line {line_id} (case has {self.n_lines} lines)")
        return int(line_id) - 1

    def incident_lines(self, bus: int) -> list[int]:
        """0-based indices of the lines touching ``bus``."""
        return [i for i, ln in enumerate(self.lines) if bus in (ln.from_bus, ln.to_bus)]


def validate_case(case: GridCase) -> None:
    if not case.buses:
        raise CaseValidationError("case has no buses")
    if len(set(case.buses)) != len(case.buses):
        raise CaseValidationError("bus ids are not unique")
    known = set(case.buses)
    for i, ln in enumerate(case.lines, start=1):
        if ln.from_bus not in known or ln.to_bus not in known:
            raise CaseValidationError(f"line {i} references an unknown bus")
        if ln.from_bus == ln.to_bus:
            raise CaseValidationError(f"line {i} is a self-loop")
        if not ln.flow_limit > 0:
            raise CaseValidationError(f"line {i} flow limit must be > 0, got {ln.flow_limit}")
        if ln.reactance == 0 or not math.isfinite(ln.reactance):
            raise CaseValidationError(f"line {i} has zero or non-finite reactance")
    for i, g in enumerate(case.generators, start=1):
        if g.bus not in known:
            raise CaseValidationError(f"generator {i} references unknown bus {g.bus}")
        if not (g.g_max >= g.g_min >= 0):
            raise CaseValidationError(f"generator {i} needs g_max >= g_min >= 0")
    for i, ld in enumerate(case.loads, start=1):
        if ld.bus not in known:
            raise CaseValidationError(f"load {i} references unknown bus {ld.bus}")
        if not ld.demand >= 0:
            raise CaseValidationError(f"load {i} has negative demand")
    if not _connected(case):
        raise CaseValidationError("line graph is not connected")
    total_cap = sum(g.g_max for g in case.generators)
    total_dem = sum(ld.demand for ld in case.loads)
    if total_cap < total_dem - 1e-12:
        raise CaseValidationError(
            f"generation capacity {total_cap:.6g} below total demand {total_dem:.6g}"
        )


def _connected(case: GridCase) -> bool:
    adj: dict[int, set[int]] = {b: set() for b in case.buses}
    for ln in case.lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    seen = {case.buses[0]}
    stack = [case.buses[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(case.buses)


# ---------------------------------------------------------------- parsing

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[", re.MULTILINE)
_SCALAR_RE = re.compile(r"mpc\.baseMVA\s*=\s*([^;\n%]+)")


def _strip_comments(text: str) -> str:
    # keep line/column positions stable: blank the comment instead of deleting it
    return "\n".join(
        line[: line.index("%")] + " " * (len(line) - line.index("%")) if "%" in line else line
        for line in text.split("\n")
    )


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _parse_matrix(text: str, start: int) -> tuple[np.ndarray, int]:
    end = text.find("]", start)
    if end < 0:
        raise CaseParseError("unterminated matrix, missing ']'", *_position(text, start))
    body = text[start:end]
    rows = []
    offset = start
    for chunk in re.split(r"[;\n]", body):
        tokens = chunk.replace(",", " ").split()
        if tokens:
            row = []
            for tok in tokens:
                try:
                    row.append(float(tok))
                except ValueError:
                    pos = text.find(tok, offset)
                    raise CaseParseError(f"invalid number {tok!r}", *_position(text, pos)) from None
            rows.append(row)
        offset += len(chunk) + 1
    if rows and len({len(r) for r in rows}) != 1:
        raise CaseParseError("ragged matrix rows", *_position(text, start))
    return np.array(rows, dtype=float), end


def _parse_matpower(text: str) -> GridCase:
    clean = _strip_comments(text)
    tables: dict[str, np.ndarray] = {}
    for m in _MATRIX_RE.finditer(clean):
        mat, _ = _parse_matrix(clean, m.end())
        tables[m.group(1)] = mat
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseParseError(f"missing mpc.{required} table", 1, 1)
    base = 100.0
    sm = _SCALAR_RE.search(clean)
    if sm:
        try:
            base = float(sm.group(1))
        except ValueError:
            raise CaseParseError("invalid baseMVA", *_position(clean, sm.start(1))) from None

    bus, gen, branch = tables["bus"], tables["gen"], tables["branch"]
    if bus.shape[1] < 3 or gen.shape[1] < 10 or branch.shape[1] < 4:
        raise CaseParseError("bus/gen/branch tables have too few columns", 1, 1)
    buses = [int(b) for b in bus[:, 0]]
    loads = [Load(int(row[0]), row[2] / base) for row in bus if row[2] != 0]
    generators = [
        Generator(int(row[0]), g_min=row[9] / base, g_max=row[8] / base)
        for row in gen
        if row[7] > 0
    ]
    lines = []
    for row in branch:
        if branch.shape[1] > 10 and row[10] <= 0:
            continue
        rate = row[5] if branch.shape[1] > 5 else 0.0
        limit = rate / base if rate > 0 else math.inf
        lines.append(Line(int(row[0]), int(row[1]), reactance=row[3], flow_limit=limit))
    return GridCase(tuple(buses), tuple(lines), tuple(generators), tuple(loads), base, "matpower")


def _parse_json(text: str) -> GridCase:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(exc.msg, exc.lineno, exc.colno) from None
    try:
        lines = tuple(
            Line(
                int(ln["from"]),
                int(ln["to"]),
                reactance=float(ln["x"]),
                flow_limit=math.inf if ln.get("limit") is None else float(ln["limit"]),
            )
            for ln in data["lines"]
        )
        gens = tuple(
            Generator(int(g["bus"]), float(g.get("pmin", 0.0)), float(g["pmax"]), float(g.get("cost", 0.0)))
            for g in data["generators"]
        )
        loads = tuple(Load(int(ld["bus"]), float(ld["demand"])) for ld in data.get("loads", []))
        return GridCase(
            tuple(int(b) for b in data["buses"]),
            lines,
            gens,
            loads,
            float(data.get("base_mva", 100.0)),
            str(data.get("name", "case")),
        )
    except (KeyError, TypeError) as exc:
        raise CaseParseError(f"missing or malformed field: {exc}", 1, 1) from None


def parse_case(text: str, format: str = "native-json") -> GridCase:
    """Parse case text in ``matpower-m`` or ``native-json`` format."""
    if not text or not text.strip():
        raise CaseParseError("empty case text", 1, 1)
    if format == "matpower-m":
        return _parse_matpower(text)
    if format == "native-json":
        return _parse_json(text)
    raise ValueError(f"unknown case format {format!r}")


def load_case(path, format: str | None = None) -> GridCase:
    path = Path(path)
    if format is None:
        format = "matpower-m" if path.suffix == ".m" else "native-json"
    return parse_case(path.read_text(), format)


def case_to_json(case: GridCase) -> str:
    """Serialize to the native schema (per-unit, ``limit: null`` for unlimited)."""
    doc = {
        "name": case.name,
        "base_mva": case.base_power,
        "buses": list(case.buses),
        "lines": [
            {
                "from": ln.from_bus,
                "to": ln.to_bus,
                "x": ln.reactance,
                "limit": None if math.isinf(ln.flow_limit) else ln.flow_limit,
            }
            for ln in case.lines
        ],
        "generators": [
            {"bus": g.bus, "pmin": g.g_min, "pmax": g.g_max, "cost": g.cost} for g in case.generators
        ],
        "loads": [{"bus": ld.bus, "demand": ld.demand} for ld in case.loads],
    }
    return json.dumps(doc, indent=2)


# ---------------------------------------------------------------- modifications

@dataclass(frozen=True)
class AddLoad:
    bus: int
    demand: float


@dataclass(frozen=True)
class SetLineLimit:
    line: Union[int, str]  # 1-based id or "all"
    limit: float


@dataclass(frozen=True)
class SetGenLimits:
    gen: Union[int, str]  # 1-based position or "all"
    g_min: float
    g_max: float


@dataclass(frozen=True)
class SetGenCosts:
    costs: tuple[float, ...]


Modification = Union[AddLoad, SetLineLimit, SetGenLimits, SetGenCosts]


def modification_from_dict(d: dict) -> Modification:
    kind = d.get("type")
    if kind == "add_load":
        return AddLoad(int(d["bus"]), float(d["demand"]))
    if kind == "set_line_limit":
        return SetLineLimit(d["line"] if d["line"] == "all" else int(d["line"]), float(d["limit"]))
    if kind == "set_gen_limits":
        return SetGenLimits(d.get("gen", "all"), float(d["pmin"]), float(d["pmax"]))
    if kind == "set_gen_costs":
        return SetGenCosts(tuple(float(c) for c in d["costs"]))
    raise ValueError(f"unknown modification type {kind!r}")


def apply_modifications(case: GridCase, mods: Iterable[Modification]) -> GridCase:
    """Return a new case with ``mods`` applied in order; ``case`` is untouched."""
    lines = list(case.lines)
    gens = list(case.generators)
    loads = list(case.loads)
    for mod in mods:
        if isinstance(mod, AddLoad):
            case.bus_index(mod.bus)
            loads.append(Load(mod.bus, mod.demand))
        elif isinstance(mod, SetLineLimit):
            targets = range(len(lines)) if mod.line == "all" else [case.line_index(mod.line)]
            for i in targets:
                lines[i] = replace(lines[i], flow_limit=mod.limit)
        elif isinstance(mod, SetGenLimits):
            if mod.gen == "all":
                targets = range(len(gens))
            elif 1 <= int(mod.gen) <= len(gens):
                targets = [int(mod.gen) - 1]
            else:
                raise KeyError(f"unknown generator {mod.gen}")
            for i in targets:
                gens[i] = replace(gens[i], g_min=mod.g_min, g_max=mod.g_max)
        elif isinstance(mod, SetGenCosts):
            if len(mod.costs) != len(gens):
                raise ValueError(f"expected {len(gens)} generator costs, got {len(mod.costs)}")
            gens = [replace(g, cost=c) for g, c in zip(gens, mod.costs)]
        else:
            raise TypeError(f"not a modification: {mod!r}")
    return replace(case, lines=tuple(lines), generators=tuple(gens), loads=tuple(loads))


# ---------------------------------------------------------------- matrices


@dataclass(frozen=True)
class ShiftFactorMatrix:
    entries: np.ndarray = field(repr=False)
    slack_bus: int

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def shape(self):
        return self.entries.shape

    def __matmul__(self, other):
        return self.entries @ other


@dataclass(frozen=True)
class IncidencePair:
    U_G: np.ndarray = field(repr=False)
    U_D: np.ndarray = field(repr=False)


def default_slack(case: GridCase) -> int:
    return case.generators[0].bus if case.generators else case.buses[0]


def shift_factors(case: GridCase, slack: int | None = None) -> ShiftFactorMatrix:
    """DC power transfer distribution factors, flow = S @ net bus injection."""
    if slack is None:
        slack = default_slack(case)
    s = case.bus_index(slack)
    n_bus, n_line = case.n_buses, case.n_lines
    inc = np.zeros((n_line, n_bus))
    b = np.empty(n_line)
    for i, ln in enumerate(case.lines):
        inc[i, case.bus_index(ln.from_bus)] = 1.0
        inc[i, case.bus_index(ln.to_bus)] = -1.0
        b[i] = 1.0 / ln.reactance
    bbus = inc.T @ (b[:, None] * inc)
    keep = [k for k in range(n_bus) if k != s]
    red = bbus[np.ix_(keep, keep)]
    if n_bus > 1 and np.linalg.matrix_rank(red) < len(keep):
        raise np.linalg.LinAlgError("singular susceptance matrix (network disconnected?)")
    S = np.zeros((n_line, n_bus))
    if keep:
        S[:, keep] = (b[:, None] * inc[:, keep]) @ np.linalg.inv(red)
    return ShiftFactorMatrix(S, int(slack))


def incidence(case: GridCase) -> IncidencePair:
    U_G = np.zeros((case.n_buses, case.n_generators))
    for j, g in enumerate(case.generators):
        U_G[case.bus_index(g.bus), j] = 1.0
    U_D = np.zeros((case.n_buses, case.n_loads))
    for j, ld in enumerate(case.loads):
        U_D[case.bus_index(ld.bus), j] = 1.0
    return IncidencePair(U_G, U_D)


def line_flows(case: GridCase, S: ShiftFactorMatrix, G: Sequence[float], D: Sequence[float] | None = None) -> np.ndarray:
    """F = S (U_G G - U_D D)."""
    inc = incidence(case)
    D = case.demand if D is None else np.asarray(D, dtype=float)
    return S.entries @ (inc.U_G @ np.asarray(G, dtype=float) - inc.U_D @ D)
