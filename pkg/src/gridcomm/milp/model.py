"""Immutable mixed-binary linear model and its solution record."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

LE, EQ, GE = -1, 0, 1
_SENSE_TEXT = {LE: "<=", EQ: "=", GE: ">="}
_SENSE_PARSE = {"<=": LE, "=": EQ, "==": EQ, ">=": GE}

FEAS_TOL = 1e-7
INT_TOL = 1e-6
GAP_TOL = 1e-6


class ModelError(ValueError):
    """Malformed model detected at build time."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True, eq=False)
class MilpModel:
    """Minimize ``c @ x`` s.t. ``A x (sense) rhs``, ``lb <= x <= ub``.

    Arrays are read-only; use :class:`ModelBuilder` to construct one.
    """

    var_names: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    con_names: tuple[str, ...]
    A: np.ndarray
    sense: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    name: str = ""
    index: Mapping[str, int] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_constraints(self) -> int:
        return len(self.con_names)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.binary)

    def var(self, name: str) -> int:
        return self.index[name]

    def constraint_residual(self, x: np.ndarray) -> float:
        """Largest violation of any constraint or bound at ``x``."""
        ax = self.A @ x
        viol = np.zeros(len(ax))
        viol = np.where(self.sense == LE, ax - self.rhs, viol)
        viol = np.where(self.sense == GE, self.rhs - ax, viol)
        viol = np.where(self.sense == EQ, np.abs(ax - self.rhs), viol)
        worst = float(viol.max(initial=0.0))
        worst = max(worst, float((self.lb - x).max(initial=0.0)), float((x - self.ub).max(initial=0.0)))
        return worst

    def to_lp_string(self) -> str:
        """Dump in an LP-like text format.

        Grammar::

            minimize
              obj: <terms>
            subject to
              <name>: <terms> <op> <rhs>
            bounds
              <lb> <= <var> <= <ub>
            binary
              <var> ...
            end
        """
        def terms(row: np.ndarray) -> str:
            parts = []
            for j in np.flatnonzero(row):
                coef = row[j]
                sign = "-" if coef < 0 else "+"
                parts.append(f"{sign} {abs(coef):.17g} {self.var_names[j]}")
            return " ".join(parts) if parts else "0"

        lines = ["minimize", f"  obj: {terms(self.c)}", "subject to"]
        for i, name in enumerate(self.con_names):
            lines.append(f"  {name}: {terms(self.A[i])} {_SENSE_TEXT[int(self.sense[i])]} {self.rhs[i]:.17g}")
        lines.append("bounds")
        for j, name in enumerate(self.var_names):
            if self.binary[j]:
                continue
            lo = "-inf" if math.isinf(self.lb[j]) else f"{self.lb[j]:.17g}"
            hi = "+inf" if math.isinf(self.ub[j]) else f"{self.ub[j]:.17g}"
            lines.append(f"  {lo} <= {name} <= {hi}")
        lines.append("binary")
        for j in self.binary_indices:
            lines.append(f"  {self.var_names[j]}")
        lines.append("end")
        return "\n".join(lines) + "\n"


class ModelBuilder:
    """Accumulates variables and constraints, then freezes a :class:`MilpModel`."""

    def __init__(self, name: str = "") -> None:
        self.name = name
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._binary: list[bool] = []
        self._rows: list[dict[int, float]] = []
        self._sense: list[int] = []
        self._rhs: list[float] = []
        self._con_names: list[str] = []
        self._obj: dict[int, float] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> int:
        return self._index[name]

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, binary: bool = False) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable {name!r}")
        if binary:
            if math.isinf(lb):
                lb = 0.0
            if math.isinf(ub):
                ub = 1.0
            if lb not in (0.0, 1.0) or ub not in (0.0, 1.0):
                raise ModelError(f"binary variable {name!r} needs bounds within {{0, 1}}")
        if lb > ub or math.isnan(lb) or math.isnan(ub):
            raise ModelError(f"variable {name!r} has empty bounds [{lb}, {ub}]")
        idx = len(self._names)
        self._names.append(name)
        self._index[name] = idx
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._binary.append(binary)
        return idx

    def add_constraint(
        self,
        terms: Mapping[int, float] | Iterable[tuple[int, float]],
        sense: int | str,
        rhs: float,
        name: str | None = None,
    ) -> int:
        if isinstance(sense, str):
            sense = _SENSE_PARSE[sense]
        row: dict[int, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for var, coef in items:
            if isinstance(var, str):
                var = self._index[var]
            if not 0 <= var < len(self._names):
                raise ModelError(f"constraint references undeclared variable {var}")
            row[var] = row.get(var, 0.0) + float(coef)
        if name is None:
            name = f"c{len(self._con_names)}"
        self._rows.append(row)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._con_names.append(name)
        return len(self._rows) - 1

    def set_objective(self, terms: Mapping[int, float] | Iterable[tuple[int, float]]) -> None:
        items = terms.items() if isinstance(terms, Mapping) else terms
        self._obj = {}
        for var, coef in items:
            if isinstance(var, str):
                var = self._index[var]
            self._obj[var] = self._obj.get(var, 0.0) + float(coef)

    def build(self) -> MilpModel:
        n, m = len(self._names), len(self._rows)
        A = np.zeros((m, n))
        for i, row in enumerate(self._rows):
            for j, coef in row.items():
                A[i, j] = coef
        c = np.zeros(n)
        for j, coef in self._obj.items():
            if not 0 <= j < n:
                raise ModelError(f"objective references undeclared variable {j}")
            c[j] = coef
        rhs = np.array(self._rhs, dtype=float)
        if not (np.isfinite(A).all() and np.isfinite(c).all() and np.isfinite(rhs).all()):
            raise ModelError("non-finite coefficient")
        if len(set(self._con_names)) != m:
            raise ModelError("duplicate constraint name")
        arrays = dict(
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            binary=np.array(self._binary, dtype=bool),
            A=A,
            sense=np.array(self._sense, dtype=np.int8),
            rhs=rhs,
            c=c,
        )
        for arr in arrays.values():
            arr.setflags(write=False)
        return MilpModel(
            var_names=tuple(self._names),
            con_names=tuple(self._con_names),
            name=self.name,
            index=dict(self._index),
            **arrays,
        )


@dataclass(frozen=True, eq=False)
class MilpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float = math.nan
    nodes: int = 0
    lp_iterations: int = 0
    index: Mapping[str, int] = field(default_factory=dict, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, name: str) -> float:
        if self.x is None:
            raise KeyError(f"no values in a {self.status.value} solution")
        return float(self.x[self.index[name]])

    def get(self, name: str, default: float = 0.0) -> float:
        if self.x is None or name not in self.index:
            return default
        return float(self.x[self.index[name]])
