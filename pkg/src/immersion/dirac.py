"""Dirac operator of the KKWE system on a conformal chart.

The operator acting on a two-component spinor psi is

    D = 2 [[p rho^-1/2,        rho^-1 dbar rho^1/2],
           [rho^-1 d rho^1/2,  -p rho^-1/2        ]]

with d = (d1 - i d2)/2, dbar = (d1 + i d2)/2. Derivative blocks are
Fourier-spectral; the unpaired Nyquist mode of even grids is kept at
wavenumber +n/2 so that d^H = -dbar holds exactly and no spurious zero
modes appear in the spectrum.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import spectral
from .errors import DiracInconsistencyError, InvalidChartError, UnsupportedChartError
from .geometry import SurfaceChart, chart_jet, conformal_factor, curvatures
from .spectral import ParamDomain

NYQUIST = "positive"
ACTION_RTOL = 1e-10


@dataclass(frozen=True)
class SpinorField:
    psi1: np.ndarray
    psi2: np.ndarray

    def __post_init__(self):
        if np.shape(self.psi1) != np.shape(self.psi2):
            raise ValueError("spinor components must share the grid")
        if not (np.all(np.isfinite(self.psi1)) and np.all(np.isfinite(self.psi2))):
            raise ValueError("spinor contains non-finite values")

    @property
    def shape(self):
        return np.shape(self.psi1)

    def vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.psi1), np.ravel(self.psi2)]).astype(complex)

    @classmethod
    def from_vector(cls, v: np.ndarray, shape) -> "SpinorField":
        v = np.asarray(v)
        n = v.size // 2
        return cls(v[:n].reshape(shape), v[n:].reshape(shape))

    def scaled(self, factor) -> "SpinorField":
        return SpinorField(factor * self.psi1, factor * self.psi2)


def _validate(rho, p, domain: ParamDomain):
    if not domain.doubly_periodic:
        raise UnsupportedChartError("the Dirac operator is assembled on doubly periodic domains")
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    if rho.shape != domain.shape or p.shape != domain.shape:
        raise InvalidChartError("rho/p grids do not match the domain")
    if np.any(rho <= 0):
        raise InvalidChartError("rho must be positive")
    return rho, p


@dataclass(frozen=True)
class DiracOperatorMatrix:
    matrix: np.ndarray  # D itself; the eigenproblem is posed for 1j * matrix
    domain: ParamDomain
    rho: np.ndarray
    p: np.ndarray
    bc: tuple[str, str] = ("periodic", "periodic")
    mu2: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weight of the rho d^2q measure, repeated per spin component."""
        w = (self.domain.weights() * self.rho).ravel()
        return np.concatenate([w, w])

    @property
    def i_dirac(self) -> np.ndarray:
        return 1j * self.matrix

    def apply(self, psi: SpinorField) -> SpinorField:
        return SpinorField.from_vector(self.matrix @ psi.vector(), self.domain.shape)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.domain.key(), self.bc, NYQUIST)).encode())
        h.update(np.ascontiguousarray(self.rho, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.p, dtype="<f8").tobytes())
        return h.hexdigest()


def _blocks(domain, bc):
    return spectral.derivative_matrices(domain, bc, NYQUIST)


def assemble_dirac(rho, p, domain: ParamDomain,
                   bc: tuple[str, str] = ("periodic", "periodic")) -> DiracOperatorMatrix:
    rho, p = _validate(rho, p, domain)
    d, dbar = _blocks(domain, bc)
    r = rho.ravel()
    s = np.sqrt(r)
    mass = np.diag(p.ravel() / s)
    upper = (dbar * s[None, :]) / r[:, None]
    lower = (d * s[None, :]) / r[:, None]
    matrix = 2.0 * np.block([[mass, upper], [lower, -mass]])
    return DiracOperatorMatrix(matrix, domain, rho, p, tuple(bc))


def assemble_dirac_squared(rho, p, K, domain: ParamDomain,
                           bc: tuple[str, str] = ("periodic", "periodic"),
                           form: str = "derived") -> np.ndarray:
    """Matrix of -D^2 written as a second-order operator with a curvature term.

    ``form="derived"`` is the expansion that equals the square of
    :func:`assemble_dirac`:

        rho^-1 [[-4 dbar d - 2 rho^-1 (d rho) dbar + (K rho - 4 p^2),  +4 rho^1/2 dbar(p rho^-1/2)],
                [-4 rho^1/2 d(p rho^-1/2),  -4 d dbar - 2 rho^-1 (dbar rho) d + (K rho - 4 p^2)]]

    ``form="printed"`` flips the first-order terms to ``+2`` and the upper
    off-diagonal to ``-4``, the variant found in print; it does not square
    to the assembled operator and is kept for comparison only.
    """
    rho, p = _validate(rho, p, domain)
    K = np.asarray(K, dtype=float).ravel()
    d, dbar = _blocks(domain, bc)
    r = rho.ravel()
    pv = p.ravel()
    g = pv / np.sqrt(r)
    d_rho, dbar_rho = d @ r, dbar @ r
    d_g, dbar_g = d @ g, dbar @ g
    if form == "derived":
        first, upper_sign = -2.0, 4.0
    elif form == "printed":
        first, upper_sign = 2.0, -4.0
    else:
        raise ValueError(f"unknown form {form!r}")
    pot = np.diag(K * r - 4 * pv ** 2)
    a11 = -4 * dbar @ d + first * (d_rho / r)[:, None] * dbar + pot
    a22 = -4 * d @ dbar + first * (dbar_rho / r)[:, None] * d + pot
    a12 = np.diag(upper_sign * np.sqrt(r) * dbar_g)
    a21 = np.diag(-4.0 * np.sqrt(r) * d_g)
    return np.block([[a11, a12], [a21, a22]]) / np.concatenate([r, r])[:, None]


def apply_dirac(psi: SpinorField, rho, p, domain: ParamDomain,
                bc: tuple[str, str] = ("periodic", "periodic")) -> SpinorField:
    """Matrix-free D psi with the same spectral conventions as the assembled matrix."""
    rho, p = _validate(rho, p, domain)
    s = np.sqrt(rho)
    d1, _ = spectral.complex_derivatives(s * psi.psi1, domain, bc, NYQUIST)
    _, db2 = spectral.complex_derivatives(s * psi.psi2, domain, bc, NYQUIST)
    return SpinorField(2 * (p / s * psi.psi1 + db2 / rho),
                       2 * (d1 / rho - p / s * psi.psi2))


@dataclass(frozen=True)
class ActionValue:
    psi_route: complex
    f_route: complex

    @property
    def value(self) -> complex:
        return self.psi_route

    @property
    def relative_gap(self) -> float:
        scale = max(abs(self.psi_route), abs(self.f_route))
        return 0.0 if scale == 0 else abs(self.psi_route - self.f_route) / scale


def dirac_action(psi: SpinorField, rho, p, domain: ParamDomain,
                 bc: tuple[str, str] = ("periodic", "periodic"),
                 rtol: float = ACTION_RTOL) -> ActionValue:
    """S = int rho d^2q psibar (i D psi), psibar = psi^dagger sigma^1 rho^1/2.

    The second route works with f = rho^1/2 psi, where the operator loses
    every rho factor:  S = int d^2z  i fbar [[p, dbar], [d, -p]] f.
    """
    rho, p = _validate(rho, p, domain)
    w = domain.weights()
    Dpsi = apply_dirac(psi, rho, p, domain, bc)
    # sigma^1 swaps components: psibar X = rho^1/2 (psi1* X2 + psi2* X1)
    psi_route = np.sum(w * rho ** 1.5 * 1j * (psi.psi1.conj() * Dpsi.psi2
                                              + psi.psi2.conj() * Dpsi.psi1))
    s = np.sqrt(rho)
    f1, f2 = s * psi.psi1, s * psi.psi2
    d_f1, _ = spectral.complex_derivatives(f1, domain, bc, NYQUIST)
    _, dbar_f2 = spectral.complex_derivatives(f2, domain, bc, NYQUIST)
    m1 = p * f1 + dbar_f2
    m2 = d_f1 - p * f2
    # d^2z = 2 d^2q
    f_route = np.sum(w * 2 * 1j * (f1.conj() * m2 + f2.conj() * m1))
    out = ActionValue(complex(psi_route), complex(f_route))
    if out.relative_gap > rtol:
        raise DiracInconsistencyError(f"action routes disagree: relative gap {out.relative_gap:.2e}")
    return out


def gauge_transform(psi: SpinorField, rho, alpha):
    """Dilaton shift preserving p: rho -> rho e^{2 alpha}, psi -> e^{-alpha} psi."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != np.shape(rho) or not np.all(np.isfinite(alpha)):
        raise ValueError("alpha must be a finite field on the same grid as rho")
    return psi.scaled(np.exp(-alpha)), np.asarray(rho) * np.exp(2 * alpha)


def hermiticity_residual(rho, domain: ParamDomain, p=None,
                         bc: tuple[str, str] = ("periodic", "periodic")) -> float:
    """Relative failure of the kinetic part of iD to be self-adjoint.

    The weight is the quadrature form of rho d^2q times the rho^1/2 carried
    by psibar. With ``p`` supplied the full iD is measured instead; its
    mass term i 2 p rho^-1/2 sigma^3 is anti-self-adjoint under this weight,
    so that residual is O(|p|) rather than round-off.
    """
    rho = np.asarray(rho, dtype=float)
    kin_p = np.zeros_like(rho) if p is None else p
    op = assemble_dirac(rho, kin_p, domain, bc)
    A = op.i_dirac
    wt = np.concatenate([(domain.weights() * rho ** 1.5).ravel()] * 2)
    WA = wt[:, None] * A
    lhs = A.conj().T * wt[None, :]
    return float(np.linalg.norm(lhs - WA) / np.linalg.norm(WA))


# --- Weierstrass data -------------------------------------------------------

BRANCH_TOL = 1e-8


def continuous_sqrt(g: np.ndarray, method: str = "extrapolate") -> np.ndarray:
    """Square root continued along the grid from node (0, 0).

    The first column is continued along axis 0, then every row along
    axis 1. ``"extrapolate"`` picks at each step the sign closest to a
    linear extrapolation of the two previous values, which carries the
    root smoothly through double zeros of ``g``. ``"phase"`` picks the
    sign closest to the previous value; it is robust on coarse,
    non-uniform nodes where ``g`` has no zeros.
    """
    if method not in ("extrapolate", "phase"):
        raise ValueError(f"unknown continuation method {method!r}")
    out = np.sqrt(np.asarray(g, dtype=complex))

    def walk(line):
        for j in range(1, line.shape[0]):
            if method == "phase" or j == 1:
                pred = line[j - 1]
            else:
                pred = 2 * line[j - 1] - line[j - 2]
            if abs(line[j] - pred) > abs(-line[j] - pred):
                line[j] = -line[j]
        return line

    out[:, 0] = walk(out[:, 0].copy())
    for i in range(out.shape[0]):
        out[i] = walk(out[i].copy())
    return out


def _wrap_parity(f: np.ndarray, axis: int) -> str:
    """Detect whether a continued root is periodic or antiperiodic along ``axis``."""
    first = np.take(f, 0, axis=axis)
    last = np.take(f, -1, axis=axis)
    prev = np.take(f, -2, axis=axis)
    pred = 2 * last - prev
    return "periodic" if np.sum(np.abs(first - pred)) <= np.sum(np.abs(first + pred)) \
        else "antiperiodic"


@dataclass(frozen=True)
class WeierstrassData:
    f1: np.ndarray
    f2: np.ndarray
    mask: np.ndarray  # True where a branch could not be fixed
    bc: tuple[str, str]
    d_f1: Optional[np.ndarray] = None  # exact derivatives on analytic charts
    dbar_f2: Optional[np.ndarray] = None


def weierstrass_data(chart: SurfaceChart, branch_tol: float = BRANCH_TOL) -> WeierstrassData:
    """f1 = sqrt(i dbar Zbar / 2), f2 = sqrt(-i d Zbar / 2) with Zbar = x1 - i x2.

    Both roots are continued across the grid; their relative sign is then
    fixed by conj(f1) f2 = -s d x3 / 2 (s the chart orientation), the
    pairing under which the KKWE equations hold with p = sqrt(rho) H / 2.
    """
    jet = chart_jet(chart)
    zb1 = jet.x1[0] - 1j * jet.x1[1]
    zb2 = jet.x2[0] - 1j * jet.x2[1]
    d_zb = 0.5 * (zb1 - 1j * zb2)
    dbar_zb = 0.5 * (zb1 + 1j * zb2)
    g1 = 0.5j * dbar_zb
    g2 = -0.5j * d_zb
    mask = (np.abs(g1) < branch_tol * np.max(np.abs(g1))) | \
           (np.abs(g2) < branch_tol * np.max(np.abs(g2)))
    method = "phase" if chart.analytic else "extrapolate"
    f1 = continuous_sqrt(g1, method)
    f2 = continuous_sqrt(g2, method)
    d_x3 = 0.5 * (jet.x1[2] - 1j * jet.x2[2])
    target = -chart.orientation * d_x3 / 2
    overlap = np.sum(np.conj(f1) * f2 * np.conj(target))
    if overlap.real < 0:
        f2 = -f2

    if chart.analytic:
        zb11 = jet.x11[0] - 1j * jet.x11[1]
        zb22 = jet.x22[0] - 1j * jet.x22[1]
        ddbar_zb = 0.25 * (zb11 + zb22)
        with np.errstate(divide="ignore", invalid="ignore"):
            d_f1 = np.where(mask, 0, 0.5j * ddbar_zb / (2 * f1))
            dbar_f2 = np.where(mask, 0, -0.5j * ddbar_zb / (2 * f2))
        bc = ("periodic", "periodic")
        return WeierstrassData(f1, f2, mask, bc, d_f1, dbar_f2)

    bc = tuple(_wrap_parity(f1, a) for a in (0, 1))
    bc2 = tuple(_wrap_parity(f2, a) for a in (0, 1))
    if bc != bc2:
        raise DiracInconsistencyError(f"f1 and f2 carry different spin structures {bc} vs {bc2}")
    return WeierstrassData(f1, f2, mask, bc)


def kkwe_residual(f1, f2, p, domain: ParamDomain, *, bc=("periodic", "periodic"),
                  d_f1=None, dbar_f2=None):
    """r1 = d f1 - p f2, r2 = dbar f2 + p f1 (exact derivatives used when given)."""
    if d_f1 is None:
        d_f1, _ = spectral.complex_derivatives(f1, domain, bc)
    if dbar_f2 is None:
        _, dbar_f2 = spectral.complex_derivatives(f2, domain, bc)
    return d_f1 - p * f2, dbar_f2 + p * f1


def kkwe_check(chart: SurfaceChart) -> dict:
    """Forward check of the Weierstrass data of ``chart`` against its own p."""
    wd = weierstrass_data(chart)
    bundle = curvatures(chart, check=False)
    r1, r2 = kkwe_residual(wd.f1, wd.f2, bundle.p, chart.domain, bc=wd.bc,
                           d_f1=wd.d_f1, dbar_f2=wd.dbar_f2)
    keep = ~wd.mask
    scale = float(np.max(np.abs(bundle.p)) * np.max(np.abs(wd.f1)) or 1.0)
    return {"max_residual": float(max(np.max(np.abs(r1[keep])), np.max(np.abs(r2[keep])))),
            "scale": scale, "masked": int(wd.mask.sum()), "bc": wd.bc,
            "rho_identity": float(np.max(np.abs(
                (np.abs(wd.f1) ** 2 + np.abs(wd.f2) ** 2) ** 2
                - conformal_factor(chart).rho / 4)))}
