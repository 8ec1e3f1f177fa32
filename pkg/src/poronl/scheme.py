"""Crank-Nicolson and backward Euler time stepping for the (u, xi, eta) system.

The nonlocal term in the divergence equation is

    I(t) = e^{-t/sigma} * int_0^t e^{s/sigma} v(s) ds,   sigma = lambda* kappa3,

with v = (kappa3 xi - kappa1 eta) / sigma.  Only the scaled accumulator
``J_hat^n = e^{-t_n/sigma} J^n`` is stored, so nothing overflows when sigma is
tiny (about 7e-14 for the reference parameters).

Two quadratures of the history integral are available:

``"trapezoid"``
    The trapezoid rule applied to the full integrand ``e^{s/sigma} v(s)``.
``"exponential"`` (default)
    The kernel is integrated exactly against the linear interpolant of v.
    For tau << sigma both rules agree to O(tau^2); for tau >> sigma the
    trapezoid rule forces ``kappa3 xi ~ kappa1 eta`` instead of the intended
    limit ``I -> v * sigma``, so only the exponential rule is consistent in
    that regime.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Callable

import numpy as np
import scipy.sparse as sps

from .assembly import (
    DirichletLift,
    ElementData,
    FormMatrices,
    assemble_load,
    compute_boundary_dofs,
    p1_load,
)
from .errors import ConfigError, DivergenceError
from .fe_basis import DofLayout, make_quadrature
from .mesh import ALL_SIDES, BoundaryTag, TriMesh
from .mms import ManufacturedSolution, PhysicalParams, traction_data
from .sparse import LinearSolver, factorize

SCHEME_KINDS = ("cn", "be")
HISTORY_RULES = ("exponential", "trapezoid")


@dataclass(frozen=True)
class SchemeConfig:
    tau: float
    T_final: float
    scheme_kind: str = "cn"
    energy_log: bool = False
    history_rule: str = "exponential"

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError(f"tau must be positive, got {self.tau!r}")
        if not (self.T_final > 0 and math.isfinite(self.T_final)):
            raise ConfigError(f"T_final must be positive, got {self.T_final!r}")
        if self.scheme_kind not in SCHEME_KINDS:
            raise ConfigError(f"scheme_kind must be one of {SCHEME_KINDS}, got {self.scheme_kind!r}")
        if self.history_rule not in HISTORY_RULES:
            raise ConfigError(f"history_rule must be one of {HISTORY_RULES}, got {self.history_rule!r}")
        ratio = self.T_final / self.tau
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ConfigError(f"T_final/tau = {ratio!r} is not an integer number of steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_final / self.tau))


@dataclass(frozen=True, eq=False)
class StateVec:
    u: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    p: np.ndarray
    Jxi_scaled: np.ndarray
    Jeta_scaled: np.ndarray
    t: float = 0.0
    n: int = 0
    decay: float = 1.0  # e^{-t_n / sigma}

    def block(self) -> np.ndarray:
        return np.concatenate([self.u, self.xi, self.eta])


# --- history weights -----------------------------------------------------

def _g1(z: float) -> float:
    """(e^{-z} - 1 + z) / z^2, accurate for small z."""
    if z < 0.5:
        return sum((-1) ** k / math.factorial(k) * z ** (k - 2) for k in range(2, 20))
    return (math.exp(-z) - 1.0 + z) / (z * z)


def _g0(z: float) -> float:
    """(1 - e^{-z}(1 + z)) / z^2, accurate for small z."""
    if z < 0.5:
        return sum((-1) ** k * (k - 1) / math.factorial(k) * z ** (k - 2) for k in range(2, 20))
    return (1.0 - math.exp(-z) * (1.0 + z)) / (z * z)


def _gE(z: float) -> float:
    """(1 - e^{-z}) / z."""
    return -math.expm1(-z) / z


@dataclass(frozen=True)
class HistoryWeights:
    """Weights of the scaled history recursion over one step.

    Full step:  J^{n+1} = E J^n + a1 v^{n+1} + a0 v^n
    Half step:  I(t_{n+1/2}) = d J^n + b1 v^{n+1} + b0 v^n
    """

    E: float
    a1: float
    a0: float
    d: float
    b1: float
    b0: float


def history_weights(tau: float, sigma: float, rule: str = "exponential") -> HistoryWeights:
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    z = tau / sigma
    E, d = math.exp(-z), math.exp(-0.5 * z)
    if rule == "trapezoid":
        return HistoryWeights(E, 0.5 * tau, 0.5 * tau * E, d, tau / 8.0, tau / 8.0 + 0.25 * tau * d)
    if rule == "exponential":
        b1 = 0.25 * tau * _g1(0.5 * z)
        return HistoryWeights(E, tau * _g1(z), tau * _g0(z), d, b1, 0.5 * tau * _gE(0.5 * z) - b1)
    raise ConfigError(f"unknown history rule {rule!r}")


def advance_history(J: np.ndarray, v_old: np.ndarray, v_new: np.ndarray, w: HistoryWeights) -> np.ndarray:
    return w.E * J + w.a1 * v_new + w.a0 * v_old


def update_history(state: StateVec, xi_new: np.ndarray, eta_new: np.ndarray, tau: float,
                   sigma: float, rule: str = "trapezoid") -> tuple[np.ndarray, np.ndarray]:
    """Advance the scaled accumulators of xi and eta by one step."""
    w = history_weights(tau, sigma, rule)
    return (advance_history(state.Jxi_scaled, state.xi, xi_new, w),
            advance_history(state.Jeta_scaled, state.eta, eta_new, w))


# --- problem data ----------------------------------------------------------

class ProblemData:
    """Loads and Dirichlet data of one discrete problem.

    Subclasses implement :meth:`loads` (block vector [u | xi | eta]) and
    :meth:`dirichlet` (values for ``bc_dofs``).  ``div_u0`` is the vector
    (div u_0, psi_i) entering the divergence equation.
    """

    def __init__(self, layout: DofLayout, bc_dofs: np.ndarray, div_u0: np.ndarray | None = None):
        self.layout = layout
        self.bc_dofs = np.asarray(bc_dofs, dtype=np.int64)
        self.div_u0 = np.zeros(layout.n_p1) if div_u0 is None else np.asarray(div_u0, dtype=float)

    def loads(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def dirichlet(self, t: float) -> np.ndarray:
        raise NotImplementedError


class CallableProblem(ProblemData):
    """Problem data given by plain functions of time."""

    def __init__(self, layout, bc_dofs, loads: Callable[[float], np.ndarray],
                 dirichlet: Callable[[float], np.ndarray] | None = None, div_u0=None):
        super().__init__(layout, bc_dofs, div_u0)
        self._loads = loads
        self._dirichlet = dirichlet

    def loads(self, t):
        return np.asarray(self._loads(t), dtype=float)

    def dirichlet(self, t):
        if self._dirichlet is None:
            return np.zeros(len(self.bc_dofs))
        return np.asarray(self._dirichlet(t), dtype=float)


class ManufacturedProblem(ProblemData):
    """Loads and boundary data derived from a manufactured solution.

    u is prescribed on the sides not in ``exact.traction_parts`` and eta on
    the whole boundary; xi only when ``xi_dirichlet`` is set.  The two most
    recent load vectors are cached.
    """

    def __init__(self, mesh: TriMesh, layout: DofLayout, exact: ManufacturedSolution,
                 elem: ElementData, edge_degree: int = 7, xi_dirichlet: bool = False):
        self.mesh, self.exact, self.elem, self.edge_degree = mesh, exact, elem, edge_degree
        self.xi_dirichlet = xi_dirichlet
        params = exact.params
        self.traction_parts = frozenset(BoundaryTag(p) for p in exact.traction_parts)
        self.u_parts = ALL_SIDES - self.traction_parts
        self._u_bd = compute_boundary_dofs(mesh, layout, self.u_parts)
        self._s_bd = compute_boundary_dofs(mesh, layout, ALL_SIDES)
        xi_bc = self._s_bd["xi"] if xi_dirichlet else np.zeros(0, dtype=np.int64)
        bc = np.concatenate([self._u_bd["u"], xi_bc, self._s_bd["eta"]])
        div0 = p1_load(elem, exact.div_u(elem.x, elem.y, 0.0))
        super().__init__(layout, bc, div0)
        self._cache: dict[float, np.ndarray] = {}
        self._f1 = lambda x, y, t, nrm: traction_data(exact, params, x, y, t, nrm)

    def loads(self, t):
        if t in self._cache:
            return self._cache[t]
        vec = assemble_load(self.mesh, self.layout, self.elem.quad, self.exact.f, self.exact.phi,
                            self._f1, t, params=self.exact.params,
                            traction_parts=self.traction_parts, elem=self.elem,
                            edge_degree=self.edge_degree)
        if len(self._cache) >= 2:
            self._cache.pop(min(self._cache))
        self._cache[t] = vec
        return vec

    def dirichlet(self, t):
        ex, lay = self.exact, self.layout
        xy = lay.p2_coords[self._u_bd["p2"]]
        uv = ex.u(xy[:, 0], xy[:, 1], t)
        vx = self.mesh.vertices[self._s_bd["p1"]]
        parts = [uv[0], uv[1]]
        if self.xi_dirichlet:
            parts.append(ex.xi(vx[:, 0], vx[:, 1], t))
        parts.append(ex.eta(vx[:, 0], vx[:, 1], t))
        return np.concatenate(parts)


# --- step system -----------------------------------------------------------

def build_step_system(forms: FormMatrices, params: PhysicalParams, tau: float,
                      scheme_kind: str = "cn", history_rule: str = "exponential") -> sps.csr_matrix:
    """Block matrix over [u | xi | eta] before boundary conditions.

    CN rows (xi row multiplied by 2, eta row by tau):
        A u - B xi
        B^T u + (2 b1/sigma) M (kappa3 xi - kappa1 eta)
        lambda* kappa1 Kd u + (tau/2) K (kappa1 xi + kappa2 eta) + M eta
    BE uses a1 and tau in place of 2 b1 and tau/2.
    """
    if scheme_kind not in SCHEME_KINDS:
        raise ConfigError(f"unknown scheme kind {scheme_kind!r}")
    sigma = params.sigma
    k1, k2, k3 = params.kappa1, params.kappa2, params.kappa3
    w = history_weights(tau, sigma, history_rule)
    if scheme_kind == "cn":
        c_hist, c_flow = 2.0 * w.b1 / sigma, 0.5 * tau
    else:
        c_hist, c_flow = w.a1 / sigma, tau
    M, K = forms.M, forms.K_stiff
    blocks = [
        [forms.A_eps, -forms.B_div, None],
        [forms.B_divT, (c_hist * k3) * M, (-c_hist * k1) * M],
        [(params.lambda_star * k1) * forms.K_mixed_u, (c_flow * k1) * K, M + (c_flow * k2) * K],
    ]
    mat = sps.bmat(blocks, format="csr")
    mat.sort_indices()
    return mat


@dataclass(eq=False)
class StepSolver:
    """Factorized step matrix with its Dirichlet lifting."""

    matrix: sps.csr_matrix
    lift: DirichletLift
    lu: LinearSolver
    mass_lu: LinearSolver
    weights: HistoryWeights
    config: SchemeConfig

    def solve(self, rhs: np.ndarray, values: np.ndarray) -> np.ndarray:
        return self.lu.solve(self.lift.rhs(rhs, values))

    def project_div(self, w: np.ndarray, forms: FormMatrices) -> np.ndarray:
        """P1 L2 projection of div w."""
        return self.mass_lu.solve(forms.B_divT @ w)


def make_step_solver(forms: FormMatrices, params: PhysicalParams, config: SchemeConfig,
                     bc_dofs: np.ndarray) -> StepSolver:
    mat = build_step_system(forms, params, config.tau, config.scheme_kind, config.history_rule)
    lift = DirichletLift(mat, bc_dofs)
    return StepSolver(mat, lift, factorize(lift.matrix), factorize(forms.M),
                      history_weights(config.tau, params.sigma, config.history_rule), config)


def recover_pressure(xi: np.ndarray, eta: np.ndarray, u_new: np.ndarray, u_old: np.ndarray,
                     params: PhysicalParams, tau: float,
                     project_div: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """p = kappa1 xi + kappa2 eta + lambda* kappa1 Q_h div((u_new - u_old)/tau)."""
    p = params.kappa1 * xi + params.kappa2 * eta
    if params.lambda_star != 0.0:
        p = p + params.lambda_star * params.kappa1 * project_div((u_new - u_old) / tau)
    return p


def _finish(state: StateVec, sol: np.ndarray, solver: StepSolver, forms: FormMatrices,
            params: PhysicalParams) -> StateVec:
    lay_u = len(state.u)
    n_p = len(state.xi)
    if not np.all(np.isfinite(sol)):
        raise DivergenceError(f"non-finite solution at step {state.n + 1} (t={state.t + solver.config.tau:g})")
    u, xi, eta = sol[:lay_u], sol[lay_u:lay_u + n_p], sol[lay_u + n_p:]
    tau = solver.config.tau
    p = recover_pressure(xi, eta, u, state.u, params, tau, lambda w: solver.project_div(w, forms))
    w = solver.weights
    return StateVec(
        u=u, xi=xi, eta=eta, p=p,
        Jxi_scaled=advance_history(state.Jxi_scaled, state.xi, xi, w),
        Jeta_scaled=advance_history(state.Jeta_scaled, state.eta, eta, w),
        t=state.t + tau, n=state.n + 1, decay=state.decay * w.E,
    )


def step(state: StateVec, solver: StepSolver, forms: FormMatrices, params: PhysicalParams,
         config: SchemeConfig, data: ProblemData) -> StateVec:
    """One Crank-Nicolson step from t_n to t_{n+1}."""
    if config.scheme_kind == "be":
        return backward_euler_step(state, solver, forms, params, config, data)
    tau, sigma, w = config.tau, params.sigma, solver.weights
    k1, k2, k3 = params.kappa1, params.kappa2, params.kappa3
    t_new = state.t + tau
    F_new, F_old = data.loads(t_new), data.loads(state.t)
    M, K = forms.M, forms.K_stiff
    lay = data.layout

    r_u = F_new[lay.u_slice] + F_old[lay.u_slice] - forms.A_eps @ state.u + forms.B_div @ state.xi
    v_old = k3 * (M @ state.xi) - k1 * (M @ state.eta)
    J = k3 * (M @ state.Jxi_scaled) - k1 * (M @ state.Jeta_scaled)
    r_xi = (-(forms.B_divT @ state.u) - (2.0 * w.b0 / sigma) * v_old - (2.0 * w.d / sigma) * J
            + 2.0 * state.decay * w.d * data.div_u0)
    r_eta = (M @ state.eta - 0.5 * tau * (K @ (k1 * state.xi + k2 * state.eta))
             + params.lambda_star * k1 * (forms.K_mixed_u @ state.u)
             + 0.5 * tau * (F_new[lay.eta_slice] + F_old[lay.eta_slice]))
    sol = solver.solve(np.concatenate([r_u, r_xi, r_eta]), data.dirichlet(t_new))
    return _finish(state, sol, solver, forms, params)


def backward_euler_step(state: StateVec, solver: StepSolver, forms: FormMatrices,
                        params: PhysicalParams, config: SchemeConfig, data: ProblemData) -> StateVec:
    """One backward Euler step; the history integral is taken up to t_{n+1}."""
    tau, sigma, w = config.tau, params.sigma, solver.weights
    k1, k3 = params.kappa1, params.kappa3
    t_new = state.t + tau
    F_new = data.loads(t_new)
    M = forms.M
    lay = data.layout

    r_u = F_new[lay.u_slice]
    v_old = k3 * (M @ state.xi) - k1 * (M @ state.eta)
    J = k3 * (M @ state.Jxi_scaled) - k1 * (M @ state.Jeta_scaled)
    r_xi = -(w.a0 / sigma) * v_old - (w.E / sigma) * J + state.decay * w.E * data.div_u0
    r_eta = (M @ state.eta + params.lambda_star * k1 * (forms.K_mixed_u @ state.u)
             + tau * F_new[lay.eta_slice])
    sol = solver.solve(np.concatenate([r_u, r_xi, r_eta]), data.dirichlet(t_new))
    return _finish(state, sol, solver, forms, params)


# --- initialization ----------------------------------------------------------

def zero_state(layout: DofLayout) -> StateVec:
    z = np.zeros
    return StateVec(z(layout.n_u), z(layout.n_p1), z(layout.n_p1), z(layout.n_p1),
                    z(layout.n_p1), z(layout.n_p1))


def state_from_fields(layout: DofLayout, forms: FormMatrices, params: PhysicalParams, u: np.ndarray,
                      p: np.ndarray, div_u: np.ndarray, div_u_t: np.ndarray, t: float = 0.0) -> StateVec:
    """Assemble an initial state from u, p and the P1 projections of div u, div u_t."""
    eta = params.c0 * p + params.alpha * div_u
    xi = params.alpha * p - params.lam * div_u - params.lambda_star * div_u_t
    z = np.zeros(layout.n_p1)
    return StateVec(np.asarray(u, float), xi, eta, np.asarray(p, float), z, z.copy(), t=t)


def initialize(mesh: TriMesh, layout: DofLayout, params: PhysicalParams, exact: ManufacturedSolution,
               forms: FormMatrices, elem: ElementData | None = None, t0: float = 0.0) -> StateVec:
    """u_h = R_h u(t0), p_h = Q_h p(t0), xi/eta from the projected divergences.

    R_h is the A_eps-orthogonal projection with u interpolated on the sides
    not carrying traction data.
    """
    elem = elem or ElementData(mesh, layout, make_quadrature(7))
    x, y = elem.x, elem.y
    mass = factorize(forms.M)

    # elastic projection
    gu = exact.grad_u(x, y, t0)  # (2, 2, nt, nq)
    eps = 0.5 * (gu + np.swapaxes(gu, 0, 1))
    loc = params.mu * np.einsum("tq,cltq,tqil->tci", elem.W, eps, elem.grad2).reshape(len(elem.W), 12)
    rhs = np.bincount(layout.u_cells().ravel(), weights=loc.ravel(), minlength=layout.n_u)
    parts = ALL_SIDES - frozenset(BoundaryTag(p) for p in exact.traction_parts)
    bd = compute_boundary_dofs(mesh, layout, parts)
    xy = layout.p2_coords[bd["p2"]]
    ub = exact.u(xy[:, 0], xy[:, 1], t0)
    lift = DirichletLift(forms.A_eps, bd["u"])
    u = factorize(lift.matrix).solve(lift.rhs(rhs, np.concatenate([ub[0], ub[1]])))

    p = mass.solve(p1_load(elem, np.broadcast_to(exact.p(x, y, t0), x.shape)))
    div_u = mass.solve(p1_load(elem, np.broadcast_to(exact.div_u(x, y, t0), x.shape)))
    div_ut = mass.solve(p1_load(elem, np.broadcast_to(exact.div_u_t(x, y, t0), x.shape)))
    return state_from_fields(layout, forms, params, u, p, div_u, div_ut, t=t0)


# --- energy and diagnostics ------------------------------------------------

def discrete_energy(state: StateVec, forms: FormMatrices, params: PhysicalParams) -> float:
    """lambda* kappa3 mu |eps(u)|^2 + kappa1 |xi|^2 + kappa2 |eta|^2 (A_eps carries mu)."""
    return float(params.lambda_star * params.kappa3 * state.u @ (forms.A_eps @ state.u)
                 + params.kappa1 * state.xi @ (forms.M @ state.xi)
                 + params.kappa2 * state.eta @ (forms.M @ state.eta))


DIAGNOSTIC_COLUMNS = ("n", "t", "energy", "u_L2", "xi_L2", "eta_L2", "p_L2")


def diagnostic_row(state: StateVec, forms: FormMatrices, params: PhysicalParams) -> list:
    def nrm(mat, v):
        return math.sqrt(max(float(v @ (mat @ v)), 0.0))

    return [state.n, state.t, discrete_energy(state, forms, params), nrm(forms.M_u, state.u),
            nrm(forms.M, state.xi), nrm(forms.M, state.eta), nrm(forms.M, state.p)]


def time_loop(state: StateVec, solver: StepSolver, forms: FormMatrices, params: PhysicalParams,
              config: SchemeConfig, data: ProblemData,
              callback: Callable[[StateVec], None] | None = None,
              diagnostics: IO[str] | None = None) -> StateVec:
    """Advance ``state`` by ``config.n_steps`` steps.

    ``callback`` sees every state including the initial one.  When
    ``diagnostics`` is given, one CSV row per node is written to it.
    """
    writer = None
    if diagnostics is not None:
        writer = csv.writer(diagnostics)
        writer.writerow(DIAGNOSTIC_COLUMNS)
        writer.writerow(diagnostic_row(state, forms, params))
    if callback is not None:
        callback(state)
    for _ in range(config.n_steps):
        state = step(state, solver, forms, params, config, data)
        if writer is not None:
            writer.writerow(diagnostic_row(state, forms, params))
        if callback is not None:
            callback(state)
    return state
