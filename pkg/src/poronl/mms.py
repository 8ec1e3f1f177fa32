"""Physical parameters and closed-form manufactured solutions.

The constitutive law is ``sigma(u) = mu*eps(u) + lam*tr(eps(u))*I`` (shear
modulus enters without the usual factor 2).  Auxiliary fields::

    eta = c0*p + alpha*div(u)
    xi  = alpha*p - lam*div(u) - lam_star*div(u_t)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from .errors import ConfigError, IncompressibleLimitError


@dataclass(frozen=True)
class PhysicalParams:
    E: float
    nu: float
    alpha: float
    c0: float
    lambda_star: float
    K: float | np.ndarray
    mu_f: float
    rho_f_g: tuple[float, float] = (0.0, 0.0)

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def _den(self) -> float:
        return self.alpha**2 + self.lam * self.c0

    @property
    def kappa1(self) -> float:
        return self.alpha / self._den

    @property
    def kappa2(self) -> float:
        return self.lam / self._den

    @property
    def kappa3(self) -> float:
        return self.c0 / self._den

    @property
    def sigma(self) -> float:
        """Relaxation time lambda_star*kappa3 of the memory kernel."""
        return self.lambda_star * self.kappa3

    @property
    def K_tensor(self) -> np.ndarray:
        K = np.asarray(self.K, dtype=float)
        return K * np.eye(2) if K.ndim == 0 else K

    @property
    def K_scalar(self) -> float:
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 0:
            raise ConfigError("a scalar permeability is required here")
        return float(K)

    def with_overrides(self, **kw) -> "PhysicalParams":
        return derive_params({**self.raw(), **kw})

    def raw(self) -> dict:
        return {
            "E": self.E, "nu": self.nu, "alpha": self.alpha, "c0": self.c0,
            "lambda_star": self.lambda_star, "K": self.K, "mu_f": self.mu_f,
            "rho_f_g": self.rho_f_g,
        }


def derive_params(raw: dict) -> PhysicalParams:
    """Validate raw material constants and return the parameter set."""
    raw = dict(raw)
    missing = {"E", "nu", "alpha", "c0", "lambda_star", "K", "mu_f"} - raw.keys()
    if missing:
        raise ConfigError(f"missing parameters: {sorted(missing)}")
    nu = float(raw["nu"])
    if nu >= 0.5:
        raise IncompressibleLimitError(f"nu = {nu} >= 0.5: Lame parameter is undefined")
    if nu <= 0.0:
        raise ConfigError(f"nu = {nu} gives lambda <= 0; lambda must be finite and positive")
    for key in ("E", "alpha", "c0", "lambda_star", "mu_f"):
        if not float(raw[key]) > 0.0:
            raise ConfigError(f"{key} must be strictly positive, got {raw[key]}")
    K = raw["K"]
    K = float(K) if np.ndim(K) == 0 else np.asarray(K, dtype=float)
    Kt = K * np.eye(2) if np.ndim(K) == 0 else K
    if Kt.shape != (2, 2) or not np.allclose(Kt, Kt.T) or np.linalg.eigvalsh(Kt).min() <= 0:
        raise ConfigError("permeability must be positive or a symmetric positive definite 2x2 tensor")
    g = tuple(float(v) for v in raw.get("rho_f_g", (0.0, 0.0)))
    return PhysicalParams(
        E=float(raw["E"]), nu=nu, alpha=float(raw["alpha"]), c0=float(raw["c0"]),
        lambda_star=float(raw["lambda_star"]), K=K, mu_f=float(raw["mu_f"]), rho_f_g=g,
    )


EX41_RAW = dict(E=1e7, nu=0.4, alpha=0.5, c0=0.5, lambda_star=1e-6, K=1e-9, mu_f=1.0)
EX42_RAW = dict(E=1e9, nu=0.4, alpha=0.5, c0=0.5, lambda_star=1e-6, K=1e-9, mu_f=1.0)


def _q(s):
    return s * (s - 1.0)


def _dq(s):
    return 2.0 * s - 1.0


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact fields ``u = T(t) U(x)``, ``p = T(t) P(x)`` and consistent data.

    Subclasses provide the time law, the spatial profiles and the forcing
    ``f``/``phi``; everything else (auxiliary fields, traction, time
    derivatives) is derived here.
    """

    params: PhysicalParams
    name: str = "manufactured"
    traction_parts: frozenset = field(default=frozenset({1, 3}))

    # --- provided by subclasses --------------------------------------
    def time_law(self, t: float) -> float:
        raise NotImplementedError

    def time_law_dot(self, t: float) -> float:
        raise NotImplementedError

    def U(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def gradU(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def P(self, x, y):
        raise NotImplementedError

    def gradP(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def f(self, x, y, t) -> np.ndarray:
        raise NotImplementedError

    def phi(self, x, y, t):
        raise NotImplementedError

    # --- derived ------------------------------------------------------
    def u(self, x, y, t) -> np.ndarray:
        return self.time_law(t) * self.U(x, y)

    def grad_u(self, x, y, t) -> np.ndarray:
        """``grad_u[i, j] = d u_i / d x_j``."""
        return self.time_law(t) * self.gradU(x, y)

    def u_t(self, x, y, t) -> np.ndarray:
        return self.time_law_dot(t) * self.U(x, y)

    def p(self, x, y, t):
        return self.time_law(t) * self.P(x, y)

    def grad_p(self, x, y, t) -> np.ndarray:
        return self.time_law(t) * self.gradP(x, y)

    def div_U(self, x, y):
        g = self.gradU(x, y)
        return g[0, 0] + g[1, 1]

    def div_u(self, x, y, t):
        return self.time_law(t) * self.div_U(x, y)

    def div_u_t(self, x, y, t):
        return self.time_law_dot(t) * self.div_U(x, y)

    def eta(self, x, y, t):
        prm = self.params
        return prm.c0 * self.p(x, y, t) + prm.alpha * self.div_u(x, y, t)

    def xi(self, x, y, t):
        prm = self.params
        return (
            prm.alpha * self.p(x, y, t)
            - prm.lam * self.div_u(x, y, t)
            - prm.lambda_star * self.div_u_t(x, y, t)
        )

    def stress(self, x, y, t) -> np.ndarray:
        """Effective stress ``mu*eps(u) + lam*div(u)*I``, shape (2, 2, ...)."""
        prm = self.params
        g = self.grad_u(x, y, t)
        eps = 0.5 * (g + np.swapaxes(g, 0, 1))
        div = g[0, 0] + g[1, 1]
        eye = np.eye(2).reshape((2, 2) + (1,) * np.ndim(div))
        return prm.mu * eps + prm.lam * div * eye

    def traction(self, x, y, t, normal) -> np.ndarray:
        """``lam_star*(div u)_t n + sigma(u) n - alpha p n``."""
        return traction_data(self, self.params, x, y, t, normal)


def traction_data(ms: ManufacturedSolution, params: PhysicalParams, x, y, t, normal) -> np.ndarray:
    n = np.asarray(normal, dtype=float)
    if n.ndim == 1:
        n = n.reshape((2,) + (1,) * np.ndim(x))
    s = ms.stress(x, y, t)
    sn = s[:, 0] * n[0] + s[:, 1] * n[1]
    scal = params.lambda_star * ms.div_u_t(x, y, t) - params.alpha * ms.p(x, y, t)
    return sn + scal * n


class Example41(ManufacturedSolution):
    """u = t^3 (sin(pi x) sin(pi y), x(x-1) y(y-1)), p = t^3 cos(2 pi x) cos(2 pi y)."""

    def time_law(self, t):
        return t**3

    def time_law_dot(self, t):
        return 3.0 * t**2

    def U(self, x, y):
        return np.stack([np.sin(pi * x) * np.sin(pi * y), _q(x) * _q(y)])

    def gradU(self, x, y):
        sx, cx, sy, cy = np.sin(pi * x), np.cos(pi * x), np.sin(pi * y), np.cos(pi * y)
        return np.array([[pi * cx * sy, pi * sx * cy], [_dq(x) * _q(y), _q(x) * _dq(y)]])

    def P(self, x, y):
        return np.cos(2 * pi * x) * np.cos(2 * pi * y)

    def gradP(self, x, y):
        return np.stack([
            -2 * pi * np.sin(2 * pi * x) * np.cos(2 * pi * y),
            -2 * pi * np.cos(2 * pi * x) * np.sin(2 * pi * y),
        ])

    def f(self, x, y, t):
        prm = self.params
        mu, lam, ls, a = prm.mu, prm.lam, prm.lambda_star, prm.alpha
        ss = np.sin(pi * x) * np.sin(pi * y)
        cc = np.cos(pi * x) * np.cos(pi * y)
        dd = (2 * x - 1) * (2 * y - 1)
        f1 = (
            t**3 * (pi**2 * (1.5 * mu + lam) * ss - 2 * a * pi * np.sin(2 * pi * x) * np.cos(2 * pi * y))
            + t**2 * (3 * pi**2 * ls * ss - 3 * ls * dd)
            - t**3 * (0.5 * mu + lam) * dd
        )
        # The last term carries t^3; the printed formula omits it (the
        # strong-form residual test pins this down).
        f2 = (
            t**3 * (-(pi**2) * (0.5 * mu + lam) * cc - 2 * a * pi * np.cos(2 * pi * x) * np.sin(2 * pi * y))
            + t**2 * (-3 * pi**2 * ls * cc - 6 * ls * _q(x))
            - 2 * t**3 * (mu + lam) * _q(x)
            - t**3 * mu * _q(y)
        )
        return np.stack([f1, f2])

    def phi(self, x, y, t):
        prm = self.params
        cc2 = np.cos(2 * pi * x) * np.cos(2 * pi * y)
        # -div(K grad p)/mu_f = +8 pi^2 K p / mu_f for this p.
        return (
            3 * t**2 * (prm.c0 * cc2 + prm.alpha * pi * np.cos(pi * x) * np.sin(pi * y)
                        + prm.alpha * _q(x) * _dq(y))
            + 8 * pi**2 * prm.K_scalar / prm.mu_f * t**3 * cc2
        )


class Example42(ManufacturedSolution):
    """u = e^t (x(x-1)y(y-1), x(x-1)y(y-1)), p = e^t cos(2 pi x) cos(2 pi y)."""

    def time_law(self, t):
        return np.exp(t)

    def time_law_dot(self, t):
        return np.exp(t)

    def U(self, x, y):
        b = _q(x) * _q(y)
        return np.stack([b, b])

    def gradU(self, x, y):
        bx, by = _dq(x) * _q(y), _q(x) * _dq(y)
        return np.array([[bx, by], [bx, by]])

    def P(self, x, y):
        return np.cos(2 * pi * x) * np.cos(2 * pi * y)

    def gradP(self, x, y):
        return Example41.gradP(self, x, y)

    def f(self, x, y, t):
        prm = self.params
        mu, lam, ls, a = prm.mu, prm.lam, prm.lambda_star, prm.alpha
        qx, qy = _q(x), _q(y)
        dd = (2 * x - 1) * (2 * y - 1)
        et = np.exp(t)
        f1 = et * (
            -mu * (2 * qy + qx + 0.5 * dd)
            - (lam + ls) * (2 * qy + dd)
            - 2 * pi * a * np.sin(2 * pi * x) * np.cos(2 * pi * y)
        )
        f2 = et * (
            -mu * (qy + 2 * qx + 0.5 * dd)
            - (lam + ls) * (dd + 2 * qx)
            - 2 * pi * a * np.cos(2 * pi * x) * np.sin(2 * pi * y)
        )
        return np.stack([f1, f2])

    def phi(self, x, y, t):
        prm = self.params
        cc2 = np.cos(2 * pi * x) * np.cos(2 * pi * y)
        return np.exp(t) * (
            (prm.c0 + 8 * pi**2 * prm.K_scalar / prm.mu_f) * cc2
            + prm.alpha * (_dq(x) * _q(y) + _q(x) * _dq(y))
        )


class ZeroSolution(ManufacturedSolution):
    """Identically zero fields and data (smoke tests, energy runs)."""

    def time_law(self, t):
        return 0.0

    def time_law_dot(self, t):
        return 0.0

    def U(self, x, y):
        return np.zeros((2,) + np.shape(x))

    def gradU(self, x, y):
        return np.zeros((2, 2) + np.shape(x))

    def P(self, x, y):
        return np.zeros(np.shape(x))

    def gradP(self, x, y):
        return np.zeros((2,) + np.shape(x))

    def f(self, x, y, t):
        return np.zeros((2,) + np.shape(x))

    def phi(self, x, y, t):
        return np.zeros(np.shape(x))


def example41(params: PhysicalParams | None = None) -> Example41:
    return Example41(params or derive_params(EX41_RAW), name="ex41")


def example42(params: PhysicalParams | None = None) -> Example42:
    return Example42(params or derive_params(EX42_RAW), name="ex42")


def zero_solution(params: PhysicalParams | None = None) -> ZeroSolution:
    return ZeroSolution(params or derive_params(EX41_RAW), name="zero")


EXAMPLES = {"ex41": (example41, EX41_RAW), "ex42": (example42, EX42_RAW), "zero": (zero_solution, EX41_RAW)}


def make_example(name: str, overrides: dict | None = None) -> ManufacturedSolution:
    try:
        factory, raw = EXAMPLES[name]
    except KeyError:
        raise ConfigError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
    return factory(derive_params({**raw, **(overrides or {})}))


__all__ = [
    "PhysicalParams", "derive_params", "ManufacturedSolution", "Example41", "Example42",
    "ZeroSolution", "example41", "example42", "zero_solution", "make_example",
    "traction_data", "EX41_RAW", "EX42_RAW",
]
