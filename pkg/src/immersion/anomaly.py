"""Heat-kernel e1 coefficient, anomaly density and the integrated identity.

Spin-traced coefficients are used throughout: 4 pi tau tr K(q, q, tau)
approaches e0 + e1(q) tau with e0 = 2 for a two-component spinor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import spectral
from .errors import AnomalyInconsistencyError
from .spectra import EigenSystem, KernelSample, heat_kernel_diag
from .spectral import ParamDomain

# Weight of K in the closed-form e1 used for the anomaly density.
CURVATURE_COEFFICIENT = 5.0 / 6.0
# Weight of K produced by the Seeley-DeWitt expansion of -D^2 + mu^2 with the
# spin connection endomorphism included; the fit converges to this one.
HEAT_KERNEL_CURVATURE_COEFFICIENT = 1.0 / 6.0

FIT_DEGREE = 3
FIT_UV_FACTOR = 30.0  # tau_min * max Re(lambda^2 + mu^2)
FIT_IR_FRACTION = 0.01  # tau_max / L_min^2
FIT_POINTS = 24
E0_TOL = 0.10
FIT_RESIDUAL_TOL = 1e-3


@dataclass(frozen=True)
class E1Analytic:
    curvature_form: np.ndarray  # 2 (4 p^2 / rho - mu^2 - c K)
    dilaton_form: np.ndarray  # 2 (4 c rho^-1 d dbar phi - mu^2 + H^2)
    coefficient: float

    @property
    def field(self) -> np.ndarray:
        return self.curvature_form

    @property
    def form_gap(self) -> float:
        return float(np.max(np.abs(self.curvature_form - self.dilaton_form)))


def e1_analytic(rho, p, K, mu2: float, domain: Optional[ParamDomain] = None, *,
                lap_log_rho=None, coefficient: float = CURVATURE_COEFFICIENT,
                tol: float = 1e-8) -> E1Analytic:
    """Spin-traced e1 in the curvature form and the dilaton form.

    The dilaton form rewrites K = -4 rho^-1 d dbar phi and 4 p^2/rho = H^2.
    ``lap_log_rho`` (flat Laplacian of log rho) is taken from the caller
    when available, otherwise computed spectrally on ``domain``. The two
    forms must agree to ``tol`` relative to the field scale.
    """
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    K = np.asarray(K, dtype=float)
    if lap_log_rho is None:
        if domain is None:
            raise ValueError("need lap_log_rho or a periodic domain")
        lap_log_rho = spectral.laplacian(np.log(rho), domain)
    curv = 2.0 * (4.0 * p ** 2 / rho - mu2 - coefficient * K)
    H = 2.0 * p / np.sqrt(rho)
    ddbar_phi = 0.125 * np.asarray(lap_log_rho)  # d dbar = lap / 4, phi = log(rho) / 2
    dil = 2.0 * (4.0 * coefficient * ddbar_phi / rho - mu2 + H ** 2)
    out = E1Analytic(curv, dil, coefficient)
    scale = max(1.0, float(np.max(np.abs(curv))))
    if out.form_gap > tol * scale:
        raise AnomalyInconsistencyError(
            f"e1 curvature and dilaton forms differ by {out.form_gap:.2e}")
    return out


def anomaly_density(e1) -> np.ndarray:
    return np.asarray(e1) / (4.0 * np.pi)


def identity_rhs(K, H, mu2: float, coefficient: float = CURVATURE_COEFFICIENT) -> np.ndarray:
    """(1/2pi) mu^2 + (c/2pi) K - (1/2pi) H^2, which equals minus the analytic density."""
    return (mu2 + coefficient * np.asarray(K) - np.asarray(H) ** 2) / (2.0 * np.pi)


@dataclass(frozen=True)
class FitWindow:
    tau_min: float
    tau_max: float

    @property
    def valid(self) -> bool:
        return 0 < self.tau_min < self.tau_max

    def taus(self, points: int = FIT_POINTS) -> np.ndarray:
        return np.logspace(np.log10(self.tau_min), np.log10(self.tau_max), points)


def select_fit_window(eigs: EigenSystem, mu2: float, uv_factor: float = FIT_UV_FACTOR,
                      ir_fraction: float = FIT_IR_FRACTION) -> FitWindow:
    """Window between the lattice cutoff and the onset of winding images.

    Below tau_min the largest modes have not decayed (e^-uv_factor), so the
    finite grid is visible; above tau_max = ir_fraction L_min^2 the images
    e^{-L^2/4 tau} and higher e_n terms grow.
    """
    top = float(np.max((eigs.squared + mu2).real))
    return FitWindow(uv_factor / top, ir_fraction * eigs.domain.min_length ** 2)


@dataclass(frozen=True)
class E1Fit:
    e1: np.ndarray
    e0: np.ndarray
    coefficients: np.ndarray  # (degree + 1, n1, n2), constant term first
    residual: np.ndarray  # rms fit residual relative to e0, per point
    window: FitWindow
    max_imag: float
    reliable: bool
    reasons: tuple = ()


def e1_fit(sample: KernelSample, window: Optional[FitWindow] = None, degree: int = FIT_DEGREE,
           e0_tol: float = E0_TOL, residual_tol: float = FIT_RESIDUAL_TOL) -> E1Fit:
    """Least-squares polynomial fit of 4 pi tau tr K(q, q, tau) at every grid point."""
    taus = np.asarray(sample.params).real
    if window is None:
        window = FitWindow(float(taus.min()), float(taus.max()))
    sel = (taus >= window.tau_min * (1 - 1e-12)) & (taus <= window.tau_max * (1 + 1e-12))
    reasons = []
    if not window.valid:
        reasons.append("empty window")
    if sel.sum() < degree + 2:
        reasons.append(f"only {int(sel.sum())} samples in window")
        sel = np.ones_like(taus, dtype=bool)
    t = taus[sel]
    y = 4.0 * np.pi * t[:, None, None] * sample.traced[sel]
    max_imag = float(np.max(np.abs(y.imag)))
    y = y.real
    shape = y.shape[1:]
    V = np.vander(t, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, y.reshape(t.size, -1), rcond=None)
    fitted = V @ coef
    rms = np.sqrt(np.mean((fitted - y.reshape(t.size, -1)) ** 2, axis=0))
    coef = coef.reshape(degree + 1, *shape)
    e0 = coef[0]
    residual = (rms / np.maximum(np.abs(e0.ravel()), 1e-300)).reshape(shape)
    if np.max(np.abs(e0 - 2.0)) > e0_tol * 2.0:
        reasons.append(f"e0 deviates from 2 by {np.max(np.abs(e0 - 2.0)):.3g}")
    if np.max(residual) > residual_tol:
        reasons.append(f"fit residual {np.max(residual):.2e} above {residual_tol:.1e}")
    return E1Fit(coef[1], e0, coef, residual, window, max_imag, not reasons, tuple(reasons))


def fit_heat_kernel(eigs: EigenSystem, mu2: float, window: Optional[FitWindow] = None,
                    degree: int = FIT_DEGREE, points: int = FIT_POINTS) -> E1Fit:
    window = window or select_fit_window(eigs, mu2)
    taus = window.taus(points) if window.valid else np.logspace(-3, 1, points)
    return e1_fit(heat_kernel_diag(eigs, mu2, taus), window, degree)


def relative_l2(a, b, weights) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.sqrt(np.sum(weights * (a - b) ** 2) / np.sum(weights * b ** 2)))


@dataclass(frozen=True)
class IntegratedIdentity:
    predicted_action: float
    integrated_fit: float
    residual: float
    nu: int = 0
    B2: float = 0.0

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / max(abs(self.predicted_action), 1e-300)


def predicted_action(W: float, A: float, chi: float, mu2: float, nu: int = 0, B2: float = 0.0,
                     coefficient: float = CURVATURE_COEFFICIENT) -> float:
    """Expected Dirac action (1/2pi)(mu^2 A - W) + c chi - B2 nu."""
    return (mu2 * A - W) / (2.0 * np.pi) + coefficient * chi - B2 * nu


def integrated_identity(W: float, A: float, chi: float, mu2: float, integrated_fit: float,
                        nu: int = 0, B2: float = 0.0,
                        coefficient: float = CURVATURE_COEFFICIENT) -> IntegratedIdentity:
    pred = predicted_action(W, A, chi, mu2, nu, B2, coefficient)
    return IntegratedIdentity(pred, float(integrated_fit), pred + float(integrated_fit), nu, B2)


@dataclass(frozen=True)
class AnomalyReport:
    e1_fit: Optional[np.ndarray]
    e1_analytic: np.ndarray
    density_fit: Optional[np.ndarray]
    density_analytic: np.ndarray
    rhs: np.ndarray
    W: float
    A: float
    chi: float
    mu2: float
    integrated_analytic: float
    integrated_fit: Optional[float]
    identity: IntegratedIdentity
    fit: Optional[E1Fit] = None
    e1_relative_l2: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {"W": self.W, "A": self.A, "chi": self.chi, "mu2": self.mu2,
               "integrated_analytic": self.integrated_analytic,
               "integrated_fit": self.integrated_fit,
               "predicted_action": self.identity.predicted_action,
               "identity_residual": self.identity.residual,
               "nu": self.identity.nu, "B2": self.identity.B2,
               "e1_relative_l2": self.e1_relative_l2}
        if self.fit is not None:
            out.update(fit_window=[self.fit.window.tau_min, self.fit.window.tau_max],
                       fit_reliable=self.fit.reliable, fit_reasons=list(self.fit.reasons),
                       e0_range=[float(self.fit.e0.min()), float(self.fit.e0.max())],
                       max_fit_residual=float(self.fit.residual.max()))
        out.update(self.extras)
        return out


def anomaly_relation(rho, p, K, weights, mu2: float, W: float, A: float, chi: float, *,
                     fit: Optional[E1Fit] = None, domain: Optional[ParamDomain] = None,
                     lap_log_rho=None, nu: int = 0, B2: float = 0.0,
                     coefficient: float = CURVATURE_COEFFICIENT, form_tol: float = 1e-8,
                     identity_tol: float = 1e-10) -> AnomalyReport:
    """Assemble densities, check the pointwise identity and integrate.

    ``weights`` integrate d^2q; integrals of densities carry the rho factor.
    """
    rho = np.asarray(rho, dtype=float)
    an = e1_analytic(rho, p, K, mu2, domain, lap_log_rho=lap_log_rho,
                     coefficient=coefficient, tol=form_tol)
    dens = anomaly_density(an.field)
    H = 2.0 * np.asarray(p) / np.sqrt(rho)
    rhs = identity_rhs(K, H, mu2, coefficient)
    gap = float(np.max(np.abs(rhs + dens)))
    if gap > identity_tol * max(1.0, float(np.max(np.abs(rhs)))):
        raise AnomalyInconsistencyError(f"identity right-hand side misses -density by {gap:.2e}")
    int_an = float(np.sum(weights * rho * dens))
    dens_fit = int_fit = rel = None
    if fit is not None:
        dens_fit = anomaly_density(fit.e1)
        int_fit = float(np.sum(weights * rho * dens_fit))
        rel = relative_l2(fit.e1, an.field, weights * rho)
    ident = integrated_identity(W, A, chi, mu2, int_fit if int_fit is not None else int_an,
                                nu, B2, coefficient)
    return AnomalyReport(None if fit is None else fit.e1, an.field, dens_fit, dens, rhs, W, A,
                         chi, mu2, int_an, int_fit, ident, fit, rel)
