"""Manufactured solutions against an extended-precision derivative oracle."""
import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poronl.errors import ConfigError, IncompressibleLimitError
from poronl.mms import EX41_RAW, derive_params, example41, example42, make_example, zero_solution

mp.mp.dps = 30


def _profiles(name):
    if name == "ex41":
        U = (lambda x, y: mp.sin(mp.pi * x) * mp.sin(mp.pi * y), lambda x, y: x * (x - 1) * y * (y - 1))
        return U, lambda x, y: mp.cos(2 * mp.pi * x) * mp.cos(2 * mp.pi * y), lambda t: t ** 3
    U = (lambda x, y: x * (x - 1) * y * (y - 1),) * 2
    return U, lambda x, y: mp.cos(2 * mp.pi * x) * mp.cos(2 * mp.pi * y), mp.exp


class StrongForm:
    """f and phi recomputed from the exact fields by mpmath differentiation."""

    def __init__(self, ms):
        prm = ms.params
        self.mu, self.lam, self.ls, self.a, self.c0, self.K, self.muf = (
            mp.mpf(v) for v in (prm.mu, prm.lam, prm.lambda_star, prm.alpha, prm.c0, prm.K, prm.mu_f))
        self.U, self.P, self.T = _profiles(ms.name)

    def d(self, fn, x, y, ox, oy):
        return mp.diff(fn, (x, y), (ox, oy))

    def divU(self, x, y):
        return self.d(self.U[0], x, y, 1, 0) + self.d(self.U[1], x, y, 0, 1)

    def sigma_div(self, i, x, y):
        # div(mu eps(U) + lam div U I)_i, spatial part only
        e = [(1, 0), (0, 1)]
        out = 0
        for j in range(2):
            out += self.mu / 2 * (self.d(self.U[i], x, y, e[j][0] * 2, e[j][1] * 2)
                                  + self.d(self.U[j], x, y, e[i][0] + e[j][0], e[i][1] + e[j][1]))
        out += self.lam * self.d(self.divU, x, y, *e[i])
        return out

    def f(self, x, y, t):
        T, Tt = self.T(t), mp.diff(self.T, t)
        e = [(1, 0), (0, 1)]
        return [-self.ls * Tt * self.d(self.divU, x, y, *e[i]) - T * self.sigma_div(i, x, y)
                + self.a * T * self.d(self.P, x, y, *e[i]) for i in range(2)]

    def phi(self, x, y, t):
        Tt = mp.diff(self.T, t)
        lap = self.d(self.P, x, y, 2, 0) + self.d(self.P, x, y, 0, 2)
        return self.c0 * Tt * self.P(x, y) + self.a * Tt * self.divU(x, y) - self.K / self.muf * self.T(t) * lap


@pytest.mark.parametrize("factory", [example41, example42])
def test_forcing_matches_strong_form(factory):
    ms = factory()
    oracle = StrongForm(ms)
    rng = np.random.default_rng(3)
    for x, y, t in rng.uniform([0, 0, 0.2], [1, 1, 1.2], size=(25, 3)):
        fx = oracle.f(mp.mpf(x), mp.mpf(y), mp.mpf(t))
        ph = oracle.phi(mp.mpf(x), mp.mpf(y), mp.mpf(t))
        got = ms.f(x, y, t)
        scale = max(1.0, max(abs(float(v)) for v in fx))
        for i in range(2):
            assert abs(got[i] - float(fx[i])) <= 1e-8 * scale
        assert abs(ms.phi(x, y, t) - float(ph)) <= 1e-8 * max(1.0, abs(float(ph)))


@pytest.mark.parametrize("factory", [example41, example42])
def test_gradients_match_oracle(factory):
    ms = factory()
    U, P, _ = _profiles(ms.name)
    for x, y in [(0.13, 0.71), (0.5, 0.25), (0.9, 0.05)]:
        g = ms.gradU(x, y)
        for i in range(2):
            assert g[i, 0] == pytest.approx(float(mp.diff(U[i], (x, y), (1, 0))), abs=1e-12)
            assert g[i, 1] == pytest.approx(float(mp.diff(U[i], (x, y), (0, 1))), abs=1e-12)
        gp = ms.gradP(x, y)
        assert gp[0] == pytest.approx(float(mp.diff(P, (x, y), (1, 0))), abs=1e-12)
        assert gp[1] == pytest.approx(float(mp.diff(P, (x, y), (0, 1))), abs=1e-12)


def test_lame_and_kappa_values():
    prm = derive_params(EX41_RAW)
    assert prm.lam == pytest.approx(1.4285714285714286e7, rel=1e-15)
    assert prm.mu == pytest.approx(3.5714285714285714e6, rel=1e-15)
    assert prm.kappa1 == pytest.approx(6.9999999755e-8, rel=1e-9)
    assert prm.kappa3 == prm.kappa1
    assert prm.kappa2 == pytest.approx(2.0, rel=1e-7)
    assert prm.sigma == pytest.approx(prm.lambda_star * prm.kappa3)


@given(E=st.floats(1e3, 1e10), nu=st.floats(0.01, 0.49), alpha=st.floats(0.01, 1),
       c0=st.floats(1e-3, 1))
@settings(max_examples=50, deadline=None)
def test_kappa_identities(E, nu, alpha, c0):
    prm = derive_params({**EX41_RAW, "E": E, "nu": nu, "alpha": alpha, "c0": c0})
    assert alpha * prm.kappa1 + prm.lam * prm.kappa3 == pytest.approx(1.0, rel=1e-12)
    assert alpha * prm.kappa1 + c0 * prm.kappa2 == pytest.approx(1.0, rel=1e-12)
    assert prm.kappa1 > 0 and prm.kappa2 > 0 and prm.kappa3 > 0


def test_parameter_validation():
    with pytest.raises(IncompressibleLimitError):
        derive_params({**EX41_RAW, "nu": 0.5})
    with pytest.raises(ConfigError):
        derive_params({**EX41_RAW, "nu": 0.0})
    for key in ("E", "alpha", "c0", "lambda_star", "mu_f"):
        with pytest.raises(ConfigError):
            derive_params({**EX41_RAW, key: 0.0})
    with pytest.raises(ConfigError):
        derive_params({**EX41_RAW, "K": [[1.0, 2.0], [2.0, 1.0]]})
    with pytest.raises(ConfigError):
        derive_params({k: v for k, v in EX41_RAW.items() if k != "E"})
    with pytest.raises(ConfigError):
        make_example("nope")


def test_tensor_permeability():
    prm = derive_params({**EX41_RAW, "K": [[2.0, 0.5], [0.5, 1.0]]})
    assert prm.K_tensor.shape == (2, 2)
    with pytest.raises(ConfigError):
        prm.K_scalar


def test_auxiliary_fields_at_random_samples():
    rng = np.random.default_rng(7)
    for ms in (example41(), example42()):
        prm = ms.params
        x, y, t = rng.uniform(0, 1, size=(3, 200))
        p, div, divt = ms.p(x, y, t), ms.div_u(x, y, t), ms.div_u_t(x, y, t)
        assert np.allclose(ms.eta(x, y, t), prm.c0 * p + prm.alpha * div, rtol=1e-10, atol=0)
        xi = prm.alpha * p - prm.lam * div - prm.lambda_star * divt
        assert np.allclose(ms.xi(x, y, t), xi, rtol=1e-10, atol=1e-10 * np.abs(xi).max())


def test_example_spot_values():
    e41, e42 = example41(), example42()
    assert np.allclose(e41.u(0.3, 0.6, 0.0), 0.0) and e41.p(0.3, 0.6, 0.0) == 0.0
    assert e41.u(0.5, 0.5, 1.0)[0] == pytest.approx(1.0)
    assert np.allclose(e42.u(0.5, 0.5, 0.0), [0.0625, 0.0625])
    assert e42.p(0.0, 0.0, 0.0) == pytest.approx(1.0)


def test_traction_values():
    z = zero_solution()
    assert np.allclose(z.traction(0.5, 1.0, 1.0, [0.0, 1.0]), 0.0)
    e41 = example41()
    assert np.allclose(e41.traction(0.5, 1.0, 0.0, [0.0, 1.0]), 0.0)
    # finite-difference stress on Gamma_3 at (0.5, 1), t = 1
    prm, h = e41.params, 1e-5
    x, y, t = 0.5, 1.0, 1.0

    def du(i, j):
        e = np.eye(2)[j] * h
        return (e41.u(x + e[0], y + e[1], t)[i] - e41.u(x - e[0], y - e[1], t)[i]) / (2 * h)

    g = np.array([[du(i, j) for j in range(2)] for i in range(2)])
    eps = 0.5 * (g + g.T)
    div = np.trace(g)
    divt = 3.0 * div  # d/dt t^3 = 3 at t = 1
    n = np.array([0.0, 1.0])
    expected = (prm.mu * eps + prm.lam * div * np.eye(2)) @ n + (prm.lambda_star * divt - prm.alpha * e41.p(x, y, t)) * n
    got = e41.traction(x, y, t, n)
    assert np.allclose(got, expected, rtol=1e-7, atol=1e-7 * np.abs(expected).max())
