"""Shared builders for scheme-level tests."""
import numpy as np

from poronl.assembly import compute_boundary_dofs
from poronl.mesh import ALL_SIDES, BoundaryTag
from poronl.scheme import CallableProblem, StateVec


def homogeneous_bc(disc):
    """u fixed on Gamma_2, Gamma_4 and eta on the whole boundary."""
    ub = compute_boundary_dofs(disc.mesh, disc.layout, {BoundaryTag.GAMMA2, BoundaryTag.GAMMA4})["u"]
    eb = compute_boundary_dofs(disc.mesh, disc.layout, ALL_SIDES)["eta"]
    return np.concatenate([ub, eb])


def random_state(layout, rng, scale=1.0, t=0.0, n=0, decay=1.0):
    r = lambda k: scale * rng.uniform(-1, 1, k)
    return StateVec(r(layout.n_u), r(layout.n_p1), r(layout.n_p1), r(layout.n_p1),
                    r(layout.n_p1), r(layout.n_p1), t=t, n=n, decay=decay)


def random_problem(layout, bc, rng):
    loads = {}

    def load(t):
        if t not in loads:
            loads[t] = rng.standard_normal(layout.total)
        return loads[t]

    values = rng.standard_normal(len(bc))
    return CallableProblem(layout, bc, load, lambda t: values, div_u0=rng.standard_normal(layout.n_p1))


def combine(a, x, b, y):
    return StateVec(*(a * getattr(x, k) + b * getattr(y, k)
                      for k in ("u", "xi", "eta", "p", "Jxi_scaled", "Jeta_scaled")),
                    t=x.t, n=x.n, decay=x.decay)


def combine_problem(a, x, b, y, layout, bc):
    return CallableProblem(layout, bc, lambda t: a * x.loads(t) + b * y.loads(t),
                           lambda t: a * x.dirichlet(t) + b * y.dirichlet(t),
                           div_u0=a * x.div_u0 + b * y.div_u0)
