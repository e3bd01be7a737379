"""Backend-neutral LP/MILP model: variable blocks, linear expressions, constraints."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ModelError(ValueError):
    """Raised for malformed models (undeclared variables, crossed bounds)."""


class LinExpr:
    """Sparse affine expression ``sum(coef * x[i]) + constant``."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: dict[int, float] | None = None, constant: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.constant = float(constant)

    @staticmethod
    def _coerce(other) -> "LinExpr":
        if isinstance(other, LinExpr):
            return other
        if np.isscalar(other):
            return LinExpr(constant=float(other))
        return NotImplemented

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def add_term(self, index: int, coef: float) -> "LinExpr":
        # in-place accumulate, used by the builders in hot loops
        if coef:
            self.terms[index] = self.terms.get(index, 0.0) + float(coef)
        return self

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = self.copy()
        for k, v in other.terms.items():
            out.terms[k] = out.terms.get(k, 0.0) + v
        out.constant += other.constant
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.terms.items()}, -self.constant)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        s = float(scalar)
        return LinExpr({k: v * s for k, v in self.terms.items()}, self.constant * s)

    __rmul__ = __mul__

    def __le__(self, other):
        return Constraint.from_sides(self, "<=", other)

    def __ge__(self, other):
        return Constraint.from_sides(self, ">=", other)

    def __eq__(self, other):  # noqa: D105 - builds a constraint, as in most modelling layers
        return Constraint.from_sides(self, "==", other)

    __hash__ = None

    def __repr__(self):
        body = " + ".join(f"{v:g}*x{k}" for k, v in sorted(self.terms.items()))
        return f"LinExpr({body or '0'} + {self.constant:g})"


@dataclass
class Constraint:
    expr: LinExpr  # constant folded into rhs
    sense: str
    rhs: float
    name: str | None = None

    @classmethod
    def from_sides(cls, lhs, sense, rhs) -> "Constraint":
        diff = LinExpr._coerce(lhs) - LinExpr._coerce(rhs)
        rhs_value = -diff.constant
        diff.constant = 0.0
        return cls(diff, sense, rhs_value)


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass(frozen=True)
class VarBlock:
    """A contiguous run of model variables sharing a name."""

    name: str
    start: int
    size: int
    kind: VarKind

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)

    def __len__(self):
        return self.size

    def __getitem__(self, i: int) -> LinExpr:
        if not -self.size <= i < self.size:
            raise IndexError(f"{self.name}[{i}] out of range")
        return LinExpr({self.start + (i % self.size): 1.0})

    def __iter__(self):
        return (self[i] for i in range(self.size))

    def dot(self, coefs: Sequence[float]) -> LinExpr:
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape != (self.size,):
            raise ModelError(f"{self.name}: expected {self.size} coefficients, got {coefs.shape}")
        return LinExpr({self.start + i: c for i, c in enumerate(coefs) if c != 0.0})

    def sum(self) -> LinExpr:
        return self.dot(np.ones(self.size))


@dataclass
class Model:
    """Variables, linear constraints and a linear objective.

    Not thread-safe during construction; build one model per thread.
    """

    name: str = "model"
    var_names: list[str] = field(default_factory=list)
    kinds: list[VarKind] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    sense: str = "min"
    blocks: dict[str, VarBlock] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def add_vars(self, name: str, size: int, kind: str = "continuous", lb=0.0, ub=np.inf) -> VarBlock:
        if name in self.blocks:
            raise ModelError(f"duplicate variable block {name!r}")
        kind = VarKind(kind)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (size,))
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (size,))
        if kind is VarKind.BINARY:
            lb, ub = np.maximum(lb, 0.0), np.minimum(ub, 1.0)
        if np.any(lb > ub):
            raise ModelError(f"{name}: lower bound exceeds upper bound")
        block = VarBlock(name, self.n_vars, size, kind)
        self.blocks[name] = block
        self.var_names.extend(f"{name}[{i}]" for i in range(size))
        self.kinds.extend([kind] * size)
        self.lower.extend(lb.tolist())
        self.upper.extend(ub.tolist())
        return block

    def add_var(self, name: str, kind: str = "continuous", lb=0.0, ub=np.inf) -> LinExpr:
        return self.add_vars(name, 1, kind, lb, ub)[0]

    def fix(self, var: LinExpr, value: float) -> None:
        (idx,) = var.terms
        self.lower[idx] = self.upper[idx] = float(value)

    def add_constraint(self, con: Constraint, name: str | None = None) -> int:
        if not isinstance(con, Constraint):
            raise ModelError("add_constraint expects a Constraint (use <=, >= or == on a LinExpr)")
        if con.sense not in ("<=", ">=", "=="):
            raise ModelError(f"bad sense {con.sense!r}")
        if name is not None:
            con.name = name
        self.constraints.append(con)
        return len(self.constraints) - 1

    def add_constraints(self, cons: Iterable[Constraint], prefix: str | None = None) -> list[int]:
        return [
            self.add_constraint(c, None if prefix is None else f"{prefix}[{i}]")
            for i, c in enumerate(cons)
        ]

    def set_objective(self, expr, sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be 'min' or 'max', got {sense!r}")
        self.objective = LinExpr._coerce(expr)
        self.sense = sense

    def check(self) -> None:
        n = self.n_vars
        for k, con in enumerate(self.constraints):
            for idx in con.expr.terms:
                if not 0 <= idx < n:
                    raise ModelError(f"constraint {k} references undeclared variable {idx}")
        for idx in self.objective.terms:
            if not 0 <= idx < n:
                raise ModelError(f"objective references undeclared variable {idx}")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ModelError("a variable has lower bound above upper bound")

    @property
    def is_mip(self) -> bool:
        return any(k is VarKind.BINARY for k in self.kinds)

    def constraint_matrix(self):
        """CSR matrix of constraint rows plus row lower/upper bounds."""
        rows, cols, vals = [], [], []
        lo = np.empty(self.n_constraints)
        hi = np.empty(self.n_constraints)
        for r, con in enumerate(self.constraints):
            for idx, v in con.expr.terms.items():
                rows.append(r)
                cols.append(idx)
                vals.append(v)
            lo[r] = con.rhs if con.sense in (">=", "==") else -np.inf
            hi[r] = con.rhs if con.sense in ("<=", "==") else np.inf
        A = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_constraints, self.n_vars))
        return A, lo, hi

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for idx, v in self.objective.terms.items():
            c[idx] = v
        return c

    def counts(self) -> dict[str, int]:
        n_bin = sum(k is VarKind.BINARY for k in self.kinds)
        return {"binary": n_bin, "continuous": self.n_vars - n_bin, "constraints": self.n_constraints}
