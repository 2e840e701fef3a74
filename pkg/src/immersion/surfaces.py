"""Concrete charts and abstract (rho, p) data sets."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

from .geometry import ChartJet, SurfaceChart, sampled_chart
from .spectral import ParamDomain

_Q1, _Q2 = sp.symbols("q1 q2", real=True)


class AnalyticImmersion:
    """Closed-form immersion x(q1, q2) with symbolic derivatives.

    The expressions are differentiated once with sympy and compiled to
    numpy callables; ``jet(q1, q2)`` evaluates them at arbitrary nodes.
    """

    def __init__(self, exprs):
        self.exprs = [sp.sympify(e) for e in exprs]
        X = sp.Matrix(self.exprs)
        x1, x2 = X.diff(_Q1), X.diff(_Q2)
        rho = (x1.dot(x1) + x2.dot(x2)) / 2
        log_rho = sp.log(rho)
        lap_log_rho = sp.diff(log_rho, _Q1, 2) + sp.diff(log_rho, _Q2, 2)
        args = (_Q1, _Q2)
        self._x = sp.lambdify(args, list(X), "numpy")
        self._parts = {
            "x1": sp.lambdify(args, list(x1), "numpy"),
            "x2": sp.lambdify(args, list(x2), "numpy"),
            "x11": sp.lambdify(args, list(x1.diff(_Q1)), "numpy"),
            "x12": sp.lambdify(args, list(x1.diff(_Q2)), "numpy"),
            "x22": sp.lambdify(args, list(x2.diff(_Q2)), "numpy"),
        }
        self._lap_log_rho = sp.lambdify(args, lap_log_rho, "numpy")
        self._rho = sp.lambdify(args, rho, "numpy")

    @staticmethod
    def _stack(vals, shape):
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals])

    def x(self, q1, q2):
        return self._stack(self._x(q1, q2), np.shape(q1))

    def rho(self, q1, q2):
        return np.broadcast_to(np.asarray(self._rho(q1, q2), dtype=float), np.shape(q1))

    def jet(self, q1, q2) -> ChartJet:
        shape = np.shape(q1)
        parts = {k: self._stack(f(q1, q2), shape) for k, f in self._parts.items()}
        lap = np.broadcast_to(np.asarray(self._lap_log_rho(q1, q2), dtype=float), shape)
        return ChartJet(lap_log_rho=np.array(lap), **parts)


def analytic_chart(name: str, immersion: AnalyticImmersion, domain: ParamDomain, q1, q2,
                   weights, orientation: int = 1, **metadata) -> SurfaceChart:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    return SurfaceChart(name, domain, q1, q2, immersion.x(q1, q2), np.asarray(weights),
                        lambda: immersion.jet(q1, q2), orientation, metadata)


@lru_cache(maxsize=8)
def _sphere_immersion(radius: float, chart_scale: float) -> AnalyticImmersion:
    u, v = _Q1 / chart_scale, _Q2 / chart_scale
    r2 = u ** 2 + v ** 2
    R = sp.nsimplify(radius) if float(radius).is_integer() else sp.Float(radius)
    return AnalyticImmersion([R * 2 * u / (1 + r2), R * 2 * v / (1 + r2),
                              R * (r2 - 1) / (1 + r2)])


def sphere_chart(n_theta: int = 32, n_phi: int = 32, radius: float = 1.0,
                 chart_scale: float = 1.0, orientation: int = 1) -> SurfaceChart:
    """Stereographic chart of a round sphere, z = 0 at the south pole.

    Nodes come from z = chart_scale * tan(theta/2) e^{i phi} with
    Gauss-Legendre in theta and the trapezoid rule in phi; the weights
    carry the Jacobian of that substitution so they integrate d^2q.
    With ``orientation=1`` the normal points inward and H = +1/radius.
    """
    x_gl, w_gl = np.polynomial.legendre.leggauss(n_theta)
    theta = 0.5 * np.pi * (x_gl + 1.0)
    w_theta = 0.5 * np.pi * w_gl
    phi = np.arange(n_phi) * (2 * np.pi / n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    r = chart_scale * np.tan(T / 2)
    dr = chart_scale * 0.5 / np.cos(T / 2) ** 2
    weights = (w_theta[:, None] * (2 * np.pi / n_phi)) * r * dr
    domain = ParamDomain(n_theta, n_phi, L1=np.pi, L2=2 * np.pi, periodic=(False, True))
    imm = _sphere_immersion(float(radius), float(chart_scale))
    return analytic_chart("sphere", imm, domain, r * np.cos(P), r * np.sin(P), weights,
                          orientation, radius=radius, chart_scale=chart_scale)


@lru_cache(maxsize=1)
def _catenoid_immersion() -> AnalyticImmersion:
    return AnalyticImmersion([sp.cosh(_Q2) * sp.cos(_Q1), sp.cosh(_Q2) * sp.sin(_Q1), _Q2])


def catenoid_strip(n_u: int = 32, n_v: int = 16, v_max: float = 1.0,
                   orientation: int = 1) -> SurfaceChart:
    """Band |v| <= v_max of the catenoid; a minimal (H = 0) isothermal chart."""
    x_gl, w_gl = np.polynomial.legendre.leggauss(n_v)
    v = v_max * x_gl
    u = np.arange(n_u) * (2 * np.pi / n_u)
    U, V = np.meshgrid(u, v, indexing="ij")
    weights = (2 * np.pi / n_u) * v_max * np.broadcast_to(w_gl, (n_u, n_v))
    domain = ParamDomain(n_u, n_v, L1=2 * np.pi, L2=2 * v_max, periodic=(True, False))
    return analytic_chart("minimal-strip", _catenoid_immersion(), domain, U, V, weights,
                          orientation, v_max=v_max)


@lru_cache(maxsize=1)
def _plane_immersion() -> AnalyticImmersion:
    return AnalyticImmersion([_Q1, _Q2, sp.Integer(0)])


def plane_chart(n: int = 16, L: float = 2 * np.pi) -> SurfaceChart:
    """Flat square patch x = (q1, q2, 0); analytic, since x itself is not periodic."""
    domain = ParamDomain(n, n, L, L)
    q1, q2 = domain.grid()
    return analytic_chart("plane", _plane_immersion(), domain, q1, q2, domain.weights())


def torus_period(R: float, r: float) -> float:
    """Length of the isothermal coordinate v around the tube."""
    return 2 * np.pi * r / np.sqrt(R * R - r * r)


def torus_v_of_eta(eta, R: float, r: float):
    """v = int_0^eta r / (R + r cos t) dt on [0, 2 pi], in closed form."""
    s = np.sqrt(R * R - r * r)
    c = np.sqrt((R - r) / (R + r))
    half = np.asarray(eta) / 2
    return (2 * r / s) * np.arctan2(c * np.sin(half), np.cos(half))


def torus_eta_of_v(v, R: float, r: float, bisection_steps: int = 60, newton_steps: int = 4):
    """Invert :func:`torus_v_of_eta` by bisection on [0, 2 pi] then Newton polishing."""
    v = np.asarray(v, dtype=float)
    lo = np.zeros_like(v)
    hi = np.full_like(v, 2 * np.pi)
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        below = torus_v_of_eta(mid, R, r) < v
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    eta = 0.5 * (lo + hi)
    for _ in range(newton_steps):
        eta = eta - (torus_v_of_eta(eta, R, r) - v) * (R + r * np.cos(eta)) / r
    return eta


def torus_chart(R: float = np.sqrt(2), r: float = 1.0, n1: int = 32, n2: int = 32,
                orientation: int = 1, name: str | None = None) -> SurfaceChart:
    """Isothermal chart (u, v) of the torus of revolution, sampled for FFT derivatives."""
    if not R > r > 0:
        raise ValueError("torus needs R > r > 0")
    domain = ParamDomain(n1, n2, L1=2 * np.pi, L2=torus_period(R, r))
    U, V = domain.grid()
    eta = torus_eta_of_v(V, R, r)
    ring = R + r * np.cos(eta)
    x = np.stack([ring * np.cos(U), ring * np.sin(U), r * np.sin(eta)])
    if name is None:
        name = "clifford" if np.isclose(R / r, np.sqrt(2)) else "torus"
    return sampled_chart(name, domain, x, orientation, R=R, r=r)


def torus_willmore(R: float, r: float) -> float:
    """Closed form pi^2 a^2 / sqrt(a^2 - 1), a = R / r, of int H^2 dA."""
    a = R / r
    return np.pi ** 2 * a * a / np.sqrt(a * a - 1)


def flat_data(n: int = 8, L: float = 2 * np.pi):
    domain = ParamDomain(n, n, L, L)
    return domain, np.ones(domain.shape), np.zeros(domain.shape)


def bumpy_data(n: int = 24, eps_rho: float = 0.1, p0: float = 0.2, eps_p: float = 0.05,
               L: float = 2 * np.pi):
    """rho = exp(2 eps_rho cos q1 cos q2), p = p0 + eps_p cos q2 on the flat torus."""
    domain = ParamDomain(n, n, L, L)
    q1, q2 = domain.grid()
    k = 2 * np.pi / L
    rho = np.exp(2 * eps_rho * np.cos(k * q1) * np.cos(k * q2))
    p = p0 + eps_p * np.cos(k * q2)
    return domain, rho, p
