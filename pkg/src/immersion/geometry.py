"""Differential geometry of conformally parameterized surfaces in R^3.

Charts are either sampled on a doubly periodic grid (derivatives by FFT)
or analytic (closed-form derivative callbacks, evaluated on the chart's
own quadrature nodes). Every quantity with two independent formulas is
computed both ways and the routes are cross-checked.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import spectral
from .errors import (GeometryInconsistencyError, InvalidChartError, NonConformalChartWarning,
                     SingularImmersionError, UnsupportedChartError)
from .spectral import ParamDomain

CONFORMALITY_TOL = 1e-8
ROUTE_TOL = 1e-6
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ChartJet:
    """Immersion derivatives at the chart nodes, each of shape ``(3, n1, n2)``.

    ``lap_log_rho`` is the flat Laplacian of log(rho); analytic charts
    provide it in closed form, sampled charts leave it ``None`` and it is
    computed spectrally.
    """

    x1: np.ndarray
    x2: np.ndarray
    x11: np.ndarray
    x12: np.ndarray
    x22: np.ndarray
    lap_log_rho: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SurfaceChart:
    name: str
    domain: ParamDomain
    q1: np.ndarray
    q2: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    jet_callback: Optional[Callable[[], ChartJet]] = None
    orientation: int = 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x.shape != (3, *self.domain.shape):
            raise InvalidChartError(f"immersion samples have shape {self.x.shape}, "
                                    f"expected {(3, *self.domain.shape)}")
        for arr in (self.q1, self.q2, self.weights):
            if arr.shape != self.domain.shape:
                raise InvalidChartError("node/weight grids do not match the domain")
        if not np.all(np.isfinite(self.x)):
            raise InvalidChartError("immersion samples contain non-finite values")
        if self.orientation not in (1, -1):
            raise InvalidChartError("orientation must be +1 or -1")
        if self.jet_callback is None and not self.domain.doubly_periodic:
            raise UnsupportedChartError("non-periodic charts need analytic derivative callbacks")

    @property
    def analytic(self) -> bool:
        return self.jet_callback is not None

    def with_orientation(self, orientation: int) -> "SurfaceChart":
        return SurfaceChart(self.name, self.domain, self.q1, self.q2, self.x, self.weights,
                            self.jet_callback, orientation, dict(self.metadata))


def sampled_chart(name: str, domain: ParamDomain, x: np.ndarray, orientation: int = 1,
                  **metadata) -> SurfaceChart:
    q1, q2 = domain.grid()
    return SurfaceChart(name, domain, q1, q2, np.asarray(x, dtype=float), domain.weights(),
                        None, orientation, metadata)


def _dq(f: np.ndarray, domain: ParamDomain, which: int, order: int = 1) -> np.ndarray:
    # grid axes are always the trailing two
    axis = f.ndim - 2 + which
    return spectral.spectral_derivative(f, axis, domain.lengths[which], order=order)


def chart_jet(chart: SurfaceChart) -> ChartJet:
    if chart.jet_callback is not None:
        return chart.jet_callback()
    d = chart.domain
    x1 = _dq(chart.x, d, 0)
    x2 = _dq(chart.x, d, 1)
    return ChartJet(x1, x2, _dq(x1, d, 0), _dq(x1, d, 1), _dq(x2, d, 1))


def moving_frame(chart: SurfaceChart, jet: Optional[ChartJet] = None):
    """Return ``(e_z, e_3)``: the complex tangent d x and the oriented unit normal."""
    jet = jet or chart_jet(chart)
    e_z = 0.5 * (jet.x1 - 1j * jet.x2)
    n = np.cross(jet.x1, jet.x2, axis=0)
    norm = np.linalg.norm(n, axis=0)
    # pointwise test: tangents nearly parallel or vanishing
    scale = np.linalg.norm(jet.x1, axis=0) * np.linalg.norm(jet.x2, axis=0)
    if np.any(~(norm > SINGULAR_TOL * scale)) or np.any(norm == 0):
        raise SingularImmersionError(f"degenerate frame on chart {chart.name!r}")
    return e_z, chart.orientation * n / norm


@dataclass(frozen=True)
class ConformalFactor:
    rho: np.ndarray
    residual: np.ndarray  # <e_z, e_z>, vanishes for isothermal charts

    @property
    def max_relative_residual(self) -> float:
        return float(np.max(np.abs(self.residual) / self.rho))

    @property
    def conformal(self) -> bool:
        return self.max_relative_residual <= CONFORMALITY_TOL


def conformal_factor(chart: SurfaceChart, jet: Optional[ChartJet] = None,
                     tol: float = CONFORMALITY_TOL) -> ConformalFactor:
    """rho = 2 <e_z, e_zbar> so that the induced metric is rho * delta."""
    jet = jet or chart_jet(chart)
    e_z = 0.5 * (jet.x1 - 1j * jet.x2)
    rho = 2.0 * np.einsum("i...,i...->...", e_z, e_z.conj()).real
    residual = np.einsum("i...,i...->...", e_z, e_z)
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise InvalidChartError(f"non-positive conformal factor on chart {chart.name!r}")
    out = ConformalFactor(rho, residual)
    if out.max_relative_residual > tol:
        warnings.warn(f"chart {chart.name!r} is not isothermal: |<e_z,e_z>|/rho = "
                      f"{out.max_relative_residual:.2e}", NonConformalChartWarning, stacklevel=2)
    return out


def p_field(rho: np.ndarray, H: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if np.any(rho <= 0):
        raise InvalidChartError("rho must be positive")
    return 0.5 * np.sqrt(rho) * H


@dataclass(frozen=True)
class GeometryBundle:
    domain: ParamDomain
    weights: np.ndarray
    rho: np.ndarray
    H: np.ndarray
    K: np.ndarray
    p: np.ndarray
    k1: Optional[np.ndarray] = None
    k2: Optional[np.ndarray] = None
    conformality_residual: Optional[np.ndarray] = None
    weingarten: Optional[np.ndarray] = None  # (2, 2, n1, n2): <e^a, d_b e_3>
    second_form: Optional[np.ndarray] = None  # (2, 2, n1, n2): <e_3, d_a d_b x>
    H_routes: dict = field(default_factory=dict)
    K_routes: dict = field(default_factory=dict)
    lap_log_rho: Optional[np.ndarray] = None
    name: str = ""

    @property
    def dilaton(self) -> np.ndarray:
        return 0.5 * np.log(self.rho)

    def route_discrepancies(self) -> dict:
        out = {}
        for label, routes in (("H", self.H_routes), ("K", self.K_routes)):
            names = list(routes)
            for other in names[1:]:
                out[f"{label}:{names[0]}~{other}"] = float(
                    np.max(np.abs(routes[names[0]] - routes[other])))
        return out


def principal_curvatures(weingarten: np.ndarray, H: np.ndarray):
    """Eigenvalues of the shape operator -W; umbilic ties resolve to k1 = k2 = H."""
    S = -np.moveaxis(weingarten, (0, 1), (-2, -1))
    ev = np.linalg.eigvals(S)
    tie = np.abs(ev[..., 0].imag) > 0
    ev = np.sort(ev.real, axis=-1)
    k1 = np.where(tie, H, ev[..., 1])
    k2 = np.where(tie, H, ev[..., 0])
    return k1, k2


def curvatures(chart: SurfaceChart, rho: Optional[np.ndarray] = None, *, tol: float = ROUTE_TOL,
               check: bool = True) -> GeometryBundle:
    """Fill a GeometryBundle, computing H and K by every available route.

    H: ``weingarten`` (-tr/2), ``laplacian`` (2/rho <d dbar x, e3>) and
    ``epsilon`` (triple-product form). K: ``weingarten`` (det) and
    ``egregium`` (-2/rho d dbar log rho). With ``check`` the routes must
    agree to ``tol`` (scaled by the field magnitude), otherwise
    GeometryInconsistencyError names the failing route.
    """
    jet = chart_jet(chart)
    cf = conformal_factor(chart, jet)
    if rho is None:
        rho = cf.rho
    s = chart.orientation
    _, e3 = moving_frame(chart, jet)

    second = {(0, 0): jet.x11, (0, 1): jet.x12, (1, 0): jet.x12, (1, 1): jet.x22}
    h = np.empty((2, 2, *chart.domain.shape))
    for (a, b), xab in second.items():
        h[a, b] = np.einsum("i...,i...->...", e3, xab)

    # derivative of the unit normal straight from the cross product
    n = np.cross(jet.x1, jet.x2, axis=0)
    nn = np.linalg.norm(n, axis=0)
    N = n / nn
    dn = [np.cross(jet.x11, jet.x2, axis=0) + np.cross(jet.x1, jet.x12, axis=0),
          np.cross(jet.x12, jet.x2, axis=0) + np.cross(jet.x1, jet.x22, axis=0)]
    de3 = [s * (d - N * np.einsum("i...,i...->...", N, d)) / nn for d in dn]
    tangents = (jet.x1, jet.x2)
    W = np.empty_like(h)
    for a in range(2):
        for b in range(2):
            W[a, b] = np.einsum("i...,i...->...", tangents[a], de3[b]) / rho

    H_w = -0.5 * (W[0, 0] + W[1, 1])
    K_w = W[0, 0] * W[1, 1] - W[0, 1] * W[1, 0]

    ddbar_x = 0.25 * (jet.x11 + jet.x22)
    H_lap = (2.0 / rho) * np.einsum("i...,i...->...", ddbar_x, e3)
    e_z = 0.5 * (jet.x1 - 1j * jet.x2)
    triple = np.einsum("i...,i...->...", ddbar_x, np.cross(e_z, e_z.conj(), axis=0))
    H_eps = s * (4.0 / (1j * rho ** 2) * triple).real

    if jet.lap_log_rho is not None:
        lap_log_rho = jet.lap_log_rho
    else:
        lap_log_rho = spectral.laplacian(np.log(rho), chart.domain)
    K_eg = -lap_log_rho / (2.0 * rho)

    H_routes = {"weingarten": H_w, "laplacian": H_lap, "epsilon": H_eps}
    K_routes = {"weingarten": K_w, "egregium": K_eg}
    if check:
        _check_routes("H", H_routes, tol)
        _check_routes("K", K_routes, tol)

    k1, k2 = principal_curvatures(W, H_w)
    return GeometryBundle(
        domain=chart.domain, weights=chart.weights, rho=rho, H=H_w, K=K_w,
        p=p_field(rho, H_w), k1=k1, k2=k2, conformality_residual=cf.residual,
        weingarten=W, second_form=h, H_routes=H_routes, K_routes=K_routes,
        lap_log_rho=lap_log_rho, name=chart.name)


def _check_routes(label: str, routes: dict, tol: float) -> None:
    names = list(routes)
    ref = routes[names[0]]
    scale = max(1.0, float(np.max(np.abs(ref))))
    for other in names[1:]:
        err = float(np.max(np.abs(routes[other] - ref)))
        if not err <= tol * scale:
            raise GeometryInconsistencyError(f"{label}:{other}", err, tol * scale)


def bundle_from_data(rho: np.ndarray, p: np.ndarray, domain: ParamDomain,
                     name: str = "") -> GeometryBundle:
    """Geometry implied by abstract (rho, p) data on a periodic domain.

    Only intrinsic quantities are available: K from the egregium formula
    and H = 2 p / sqrt(rho).
    """
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    if rho.shape != domain.shape or p.shape != domain.shape:
        raise InvalidChartError("data grids do not match the domain")
    if np.any(rho <= 0):
        raise InvalidChartError("rho must be positive")
    lap = spectral.laplacian(np.log(rho), domain)
    K = -lap / (2.0 * rho)
    H = 2.0 * p / np.sqrt(rho)
    return GeometryBundle(domain=domain, weights=domain.weights(), rho=rho, H=H, K=K, p=p,
                          K_routes={"egregium": K}, lap_log_rho=lap, name=name)


def quadrature(field: np.ndarray, rho: np.ndarray, weights: np.ndarray) -> float:
    """Approximate the integral of ``rho * field`` over d^2q."""
    field = np.asarray(field)
    if field.shape != weights.shape or np.shape(rho) != weights.shape:
        raise ValueError("quadrature grids do not match")
    return float(np.sum(weights * rho * field).real)


@dataclass(frozen=True)
class Functionals:
    willmore: float
    willmore_p: float
    area: float
    euler: float

    def free_energy(self, B0: float = 1.0, B1: float = 0.0) -> float:
        return B0 * self.willmore + B1 * 2 * np.pi * self.euler

    def as_dict(self) -> dict:
        return {"W": self.willmore, "W_p": self.willmore_p, "A": self.area, "chi": self.euler}


def functionals(bundle: GeometryBundle, rtol: float = 1e-10) -> Functionals:
    """Willmore energy (both as int rho H^2 and 4 int p^2), area and Euler number."""
    w = bundle.weights
    W_h = quadrature(bundle.H ** 2, bundle.rho, w)
    W_p = 4.0 * float(np.sum(w * bundle.p ** 2))
    if abs(W_h - W_p) > rtol * max(abs(W_h), abs(W_p)) + 1e-14:
        raise GeometryInconsistencyError("W:4p^2", abs(W_h - W_p), rtol * abs(W_h))
    A = quadrature(np.ones_like(bundle.rho), bundle.rho, w)
    chi = quadrature(bundle.K, bundle.rho, w) / (2 * np.pi)
    return Functionals(W_h, W_p, A, chi)
