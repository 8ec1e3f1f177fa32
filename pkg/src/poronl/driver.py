"""One manufactured-solution run: mesh, forms, initial state, time loop, errors."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import IO

from .analysis import ErrorRecord, ExactCache, error_norms, ERROR_QUAD_DEGREE
from .assembly import ElementData, FormMatrices, assemble_forms
from .errors import DivergenceError, SolverError
from .fe_basis import DofLayout, build_dof_layout, make_quadrature
from .mesh import TriMesh, build_unit_square_mesh
from .mms import ManufacturedSolution
from .scheme import (
    ManufacturedProblem,
    SchemeConfig,
    StateVec,
    initialize,
    make_step_solver,
    time_loop,
)


@dataclass(eq=False)
class RunResult:
    record: ErrorRecord
    state: StateVec
    mesh: TriMesh
    layout: DofLayout
    forms: FormMatrices
    wall_time: float


def run_simulation(exact: ManufacturedSolution, n: int, config: SchemeConfig, *,
                   quad_degree: int = 5, error_degree: int = ERROR_QUAD_DEGREE,
                   edge_degree: int = 7, xi_dirichlet: bool = False,
                   diagnostics: IO[str] | None = None, record_errors: bool = True) -> RunResult:
    """Run ``config`` on the uniform n x n mesh of the unit square.

    Errors are recorded at every time node, including t = 0.
    """
    t0 = time.perf_counter()
    mesh = build_unit_square_mesh(n)
    layout = build_dof_layout(mesh)
    params = exact.params
    ed = ElementData(mesh, layout, make_quadrature(quad_degree))
    ed_err = ed if error_degree == quad_degree else ElementData(mesh, layout, make_quadrature(error_degree))
    forms = assemble_forms(mesh, layout, params, ed.quad, ed)
    data = ManufacturedProblem(mesh, layout, exact, ed, edge_degree=edge_degree,
                               xi_dirichlet=xi_dirichlet)
    state = initialize(mesh, layout, params, exact, forms, ed_err)
    solver = make_step_solver(forms, params, config, data.bc_dofs)

    record = ErrorRecord(h=mesh.h, tau=config.tau)
    cache = ExactCache(exact, ed_err)

    def callback(s: StateVec) -> None:
        if record_errors:
            record.add(s.t, error_norms(s, exact, s.t, mesh, layout, elem=ed_err, cache=cache))

    try:
        state = time_loop(state, solver, forms, params, config, data, callback, diagnostics)
    except (SolverError, DivergenceError) as exc:
        raise type(exc)(f"{exc} [example={exact.name}, n={n}, {config}]") from exc
    return RunResult(record, state, mesh, layout, forms, time.perf_counter() - t0)
