"""Thin LP/MILP layer. All third-party solver calls live in this subpackage."""

from __future__ import annotations

from .highs import HighsBackend
from .lpfile import to_lp_string, write_lp
from .model import Constraint, LinExpr, Model, ModelError, VarBlock, VarKind
from .reference import ReferenceBackend
from .result import BackendError, SolveParams, SolveResult, Status

_BACKENDS = {"highs": HighsBackend, "reference": ReferenceBackend}

DEFAULT_PARAMS = SolveParams()


def get_backend(name: str = "highs"):
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise BackendError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}") from None


def solve(model: Model, params: SolveParams | None = None, backend="highs") -> SolveResult:
    """Solve ``model`` with the named (or given) backend."""
    if isinstance(backend, str):
        backend = get_backend(backend)
    return backend.solve(model, params or DEFAULT_PARAMS)


__all__ = [
    "BackendError",
    "Constraint",
    "DEFAULT_PARAMS",
    "HighsBackend",
    "LinExpr",
    "Model",
    "ModelError",
    "ReferenceBackend",
    "SolveParams",
    "SolveResult",
    "Status",
    "VarBlock",
    "VarKind",
    "get_backend",
    "solve",
    "to_lp_string",
    "write_lp",
]
