"""Write a :class:`Model` as CPLEX LP-format text.

Variable names have ``[``/``]`` mapped to ``_`` (``dD3[2]`` -> ``dD3_2_``);
constraints without a name are written as ``c<k>``. Sections: objective,
``Subject To``, ``Bounds`` (``free`` for unbounded variables), ``Binaries``.
"""

from __future__ import annotations

import math
import re

from .model import Model, VarKind

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _name(raw: str) -> str:
    return _BAD.sub("_", raw)


def _expr(terms: dict[int, float], names: list[str]) -> str:
    if not terms:
        return "0 " + names[0] if names else "0"
    parts = []
    for idx in sorted(terms):
        v = terms[idx]
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {abs(v):.12g} {names[idx]}")
    out = " ".join(parts)
    return out[2:] if out.startswith("+ ") else out


def to_lp_string(model: Model) -> str:
    names = [_name(n) for n in model.var_names]
    out = [f"\\ {model.name}", "Minimize" if model.sense == "min" else "Maximize"]
    obj = _expr(model.objective.terms, names)
    if model.objective.constant:
        obj += f" + {model.objective.constant:.12g} __constant"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    op = {"<=": "<=", ">=": ">=", "==": "="}
    for k, con in enumerate(model.constraints):
        label = _name(con.name) if con.name else f"c{k}"
        out.append(f" {label}: {_expr(con.expr.terms, names)} {op[con.sense]} {con.rhs:.12g}")
    out.append("Bounds")
    for name, kind, lo, hi in zip(names, model.kinds, model.lower, model.upper):
        if kind is VarKind.BINARY and lo == 0 and hi == 1:
            continue
        if math.isinf(lo) and math.isinf(hi):
            out.append(f" {name} free")
        elif lo == hi:
            out.append(f" {name} = {lo:.12g}")
        else:
            lo_s = "-inf" if math.isinf(lo) else f"{lo:.12g}"
            hi_s = "+inf" if math.isinf(hi) else f"{hi:.12g}"
            out.append(f" {lo_s} <= {name} <= {hi_s}")
    if model.objective.constant:
        out.append(" __constant = 1")
    bins = [n for n, k in zip(names, model.kinds) if k is VarKind.BINARY]
    if bins:
        out.append("Binaries")
        out.extend(f" {n}" for n in bins)
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: Model, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_lp_string(model))
