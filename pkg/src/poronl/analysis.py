"""Error norms against exact solutions, max-over-time errors and observed orders."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .assembly import ElementData
from .errors import OrderUndefined
from .fe_basis import DofLayout, QuadratureRule, make_quadrature
from .mesh import TriMesh
from .mms import ManufacturedSolution

ERROR_KEYS = ("u_L2", "u_H1", "p_L2", "p_H1")
CSV_COLUMNS = ("h", "tau", "field", "norm", "error", "order")

# non-polynomial integrands; see error_norms
ERROR_QUAD_DEGREE = 7


def fe_fields(u: np.ndarray, p: np.ndarray, ed: ElementData):
    """FE displacement/pressure values and gradients at the quadrature points.

    Returns u (2, nt, nq), grad u (2, 2, nt, nq) with [i, j] = d u_i/d x_j,
    p (nt, nq) and grad p (2, nt, 1).
    """
    nt, nq = ed.W.shape
    uq = (ed.u_eval_op @ u).reshape(2, nt, nq)
    guq = (ed.u_grad_op @ u).reshape(2, 2, nt, nq)
    pq = (ed.p1_eval_op @ p).reshape(nt, nq)
    gpq = (ed.p1_grad_op @ p).reshape(2, nt, 1)
    return uq, guq, pq, gpq


class ExactCache:
    """Spatial profiles of a separable exact solution at the quadrature points."""

    def __init__(self, exact: ManufacturedSolution, ed: ElementData):
        x, y = ed.x, ed.y
        self.exact = exact
        self.U = exact.U(x, y)
        self.gradU = exact.gradU(x, y)
        self.P = np.broadcast_to(exact.P(x, y), x.shape)
        self.gradP = exact.gradP(x, y)

    def fields(self, t: float):
        T = self.exact.time_law(t)
        return T * self.U, T * self.gradU, T * self.P, T * self.gradP


def error_norms(state, exact: ManufacturedSolution, t: float, mesh: TriMesh, layout: DofLayout,
                quad: QuadratureRule | None = None, elem: ElementData | None = None,
                cache: ExactCache | None = None) -> dict[str, float]:
    """L2 and full H1 errors of u and p at time ``t``.

    The exact fields are trigonometric, so the default rule has exactness 7
    independent of the assembly rule.
    """
    ed = elem or ElementData(mesh, layout, quad or make_quadrature(ERROR_QUAD_DEGREE))
    W = ed.W
    cache = cache or ExactCache(exact, ed)
    u_ex, gu_ex, p_ex, gp_ex = cache.fields(t)
    uq, guq, pq, gpq = fe_fields(state.u, state.p, ed)
    eu = u_ex - uq
    egu = gu_ex - guq
    ep = p_ex - pq
    egp = gp_ex - gpq

    def integ(v2):
        return float(np.sum(W * v2))

    u_l2 = integ(np.sum(eu ** 2, axis=0))
    u_h1 = u_l2 + integ(np.sum(egu ** 2, axis=(0, 1)))
    p_l2 = integ(ep ** 2)
    p_h1 = p_l2 + integ(np.sum(egp ** 2, axis=0))
    return {k: math.sqrt(max(v, 0.0)) for k, v in zip(ERROR_KEYS, (u_l2, u_h1, p_l2, p_h1))}


@dataclass
class ErrorRecord:
    """Per-node errors of one run and their max over time."""

    h: float
    tau: float
    times: list[float] = field(default_factory=list)
    errors: list[dict[str, float]] = field(default_factory=list)

    def add(self, t: float, errs: dict[str, float]) -> None:
        if any(v < 0 or not math.isfinite(v) for v in errs.values()):
            raise ValueError(f"invalid error values at t={t}: {errs}")
        self.times.append(float(t))
        self.errors.append(dict(errs))

    @property
    def R(self) -> dict[str, float]:
        return max_over_time(self.errors)

    @property
    def final(self) -> dict[str, float]:
        return self.errors[-1]


def max_over_time(records: Sequence[dict[str, float]]) -> dict[str, float]:
    """Componentwise maximum over the recorded time nodes."""
    if len(records) == 0:
        raise ValueError("max_over_time needs at least one record")
    keys = records[0].keys()
    return {k: max(r[k] for r in records) for k in keys}


def observed_order(e_coarse: float, e_fine: float, refinement_ratio: float = 2.0) -> float:
    if not (e_coarse > 0 and e_fine > 0):
        raise OrderUndefined(f"order undefined for errors ({e_coarse!r}, {e_fine!r})")
    return math.log(e_coarse / e_fine) / math.log(refinement_ratio)


@dataclass
class ConvergenceTable:
    """Errors of one field/norm over a refinement sequence."""

    field: str
    norm: str
    h: list[float] = field(default_factory=list)
    tau: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    variable: str = "h"  # the refined quantity

    def add_row(self, h: float, tau: float, error: float) -> None:
        self.h.append(h)
        self.tau.append(tau)
        self.errors.append(error)

    @property
    def orders(self) -> list[float | None]:
        """Order of row k from rows k-1, k; None where undefined."""
        steps = self.h if self.variable == "h" else self.tau
        out: list[float | None] = [None]
        for k in range(1, len(self.errors)):
            try:
                out.append(observed_order(self.errors[k - 1], self.errors[k], steps[k - 1] / steps[k]))
            except OrderUndefined:
                out.append(None)
        return out

    def rows(self) -> list[tuple]:
        return [(h, tau, self.field, self.norm, e, o)
                for h, tau, e, o in zip(self.h, self.tau, self.errors, self.orders)]


def tables_from_records(records: Iterable[ErrorRecord], variable: str = "h") -> dict[str, ConvergenceTable]:
    """One table per error key, rows in refinement order, using R(h, tau)."""
    tables = {k: ConvergenceTable(*k.split("_"), variable=variable) for k in ERROR_KEYS}
    for rec in records:
        R = rec.R
        for k in ERROR_KEYS:
            tables[k].add_row(rec.h, rec.tau, R[k])
    return tables


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def write_csv(tables: Iterable[ConvergenceTable], out: IO[str], header: Sequence[str] = ()) -> None:
    """CSV with columns h, tau, field, norm, error, order; header lines start with '#'."""
    for line in header:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for tab in tables:
        for row in tab.rows():
            w.writerow([_fmt(v) for v in row])
