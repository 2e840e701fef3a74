"""Biorthogonal eigensystem of iD and the regulated heat and zeta kernels.

All inner products are the discrete form of int rho d^2q, i.e. the weight
vector ``omega = w * rho`` repeated for both spin components. Left modes
are normalized so that ``chi^H diag(omega) phi = I``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sps
from scipy import integrate, special
from scipy.sparse.csgraph import connected_components

from .dirac import DiracOperatorMatrix, SpinorField
from .errors import (DefectiveClusterError, IllConditionedJacobianError, PrecisionError,
                     RegulatorError)
from .spectral import ParamDomain

CLUSTER_RTOL = 1e-8
DEFECTIVE_COND = 1e10
HERMITIAN_TOL = 1e-10
DEFAULT_TAUS = np.logspace(-3, 1, 48)


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray  # (M,)
    right: np.ndarray  # (2N, M), columns phi_m
    left: np.ndarray  # (2N, M), columns chi_m
    omega: np.ndarray  # (2N,)
    domain: ParamDomain
    operator_hash: str = ""
    clusters: tuple = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def squared(self) -> np.ndarray:
        return self.eigenvalues ** 2

    def gram(self) -> np.ndarray:
        return self.left.conj().T @ (self.omega[:, None] * self.right)

    @property
    def biorthogonality_residual(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.size))))

    @property
    def completeness_residual(self) -> float:
        P = self.right @ (self.left.conj().T * self.omega[None, :])
        return float(np.max(np.abs(P - np.eye(P.shape[0]))))

    def right_mode(self, m: int) -> SpinorField:
        return SpinorField.from_vector(self.right[:, m], self.domain.shape)

    def left_mode(self, m: int) -> SpinorField:
        return SpinorField.from_vector(self.left[:, m], self.domain.shape)

    def arrays(self) -> dict:
        return {"eigenvalues": self.eigenvalues, "right": self.right, "left": self.left,
                "omega": self.omega}


def find_clusters(values: np.ndarray, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
    """Connected components of the relation |l_i - l_j| < rtol * max(1, max |l|)."""
    scale = rtol * max(1.0, float(np.max(np.abs(values))))
    order = np.argsort(values.real)
    v = values[order]
    rows, cols = [], []
    # candidates are near each other in real part; scan a sliding window
    for i in range(v.size):
        j = i + 1
        while j < v.size and v[j].real - v[i].real < scale:
            if abs(v[j] - v[i]) < scale:
                rows.append(i)
                cols.append(j)
            j += 1
    adj = sps.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(v.size, v.size))
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for pos, lab in enumerate(labels):
        groups.setdefault(lab, []).append(order[pos])
    return [np.array(sorted(g)) for g in groups.values()]


def eigensystem(op: DiracOperatorMatrix, cluster_rtol: float = CLUSTER_RTOL,
                defective_cond: float = DEFECTIVE_COND) -> EigenSystem:
    """Dense right/left eigen-solve of iD, biorthonormalized cluster by cluster.

    LAPACK returns left vectors ``u`` with ``u^H A = lambda u^H``; the weighted
    left modes are ``chi = u / omega``. When iD is self-adjoint in its natural
    weight (flat-rho kinetic case) the right modes of each cluster are
    orthonormalized in that weight and the left modes follow from them.
    """
    A = op.i_dirac
    omega = op.weights
    lam, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    clusters = find_clusters(lam, cluster_rtol)

    wt = np.concatenate([(op.domain.weights() * op.rho ** 1.5).ravel()] * 2)
    WA = wt[:, None] * A
    hermitian = np.linalg.norm(A.conj().T * wt[None, :] - WA) <= HERMITIAN_TOL * np.linalg.norm(WA)

    right = vr.copy()
    left = vl / omega[:, None]
    for idx in clusters:
        if hermitian:
            R = right[:, idx]
            G = R.conj().T @ (wt[:, None] * R)
            G = 0.5 * (G + G.conj().T)
            try:
                Lc = np.linalg.cholesky(G)
            except np.linalg.LinAlgError:
                raise DefectiveClusterError(idx, np.inf) from None
            R = scipy.linalg.solve_triangular(Lc, R.conj().T, lower=True).conj().T
            right[:, idx] = R
            left[:, idx] = (wt / omega)[:, None] * R
            continue
        L = left[:, idx]
        R = right[:, idx]
        G = L.conj().T @ (omega[:, None] * R)
        # eigenvalue condition number: 1 / sigma_min of the unit-normalized Gram
        nl = np.sqrt(np.einsum("ik,i,ik->k", L.conj(), omega, L).real)
        nr = np.sqrt(np.einsum("ik,i,ik->k", R.conj(), omega, R).real)
        smin = np.linalg.svd(G / np.outer(nl, nr), compute_uv=False)[-1]
        cond = 1.0 / smin if smin > 0 else np.inf
        if not np.isfinite(cond) or cond > defective_cond:
            raise DefectiveClusterError(idx, cond)
        # chi <- chi G^{-H} gives chi^H omega phi = I on the cluster
        left[:, idx] = np.linalg.solve(G, L.conj().T).conj().T
    return EigenSystem(lam, right, left, omega, op.domain, op.content_hash(),
                       tuple(tuple(int(i) for i in c) for c in clusters if c.size > 1))


def mu_floor(eigs) -> float:
    """-min Re lambda^2; any regulator mu^2 must lie strictly above it."""
    lam = eigs.eigenvalues if isinstance(eigs, EigenSystem) else np.asarray(eigs)
    return float(-np.min((lam ** 2).real))


@dataclass(frozen=True)
class RegulatorConfig:
    mu2: float
    s_values: tuple = (2.0, 3.0)
    taus: np.ndarray = field(default_factory=lambda: DEFAULT_TAUS.copy())

    def __post_init__(self):
        if not self.mu2 > 0:
            raise RegulatorError(f"mu^2 must be positive, got {self.mu2}")
        taus = np.asarray(self.taus, dtype=float)
        if taus.ndim != 1 or np.any(taus <= 0):
            raise RegulatorError("tau grid must be a positive 1-D array")
        object.__setattr__(self, "taus", taus)

    def check(self, eigs) -> None:
        floor = mu_floor(eigs)
        if not self.mu2 > floor:
            raise RegulatorError(f"mu^2 = {self.mu2} is not above the floor {floor:.6g}")


def _shifted(eigs: EigenSystem, mu2: float) -> np.ndarray:
    a = eigs.squared + mu2
    if not np.all(a.real > 0):
        raise RegulatorError(f"mu^2 = {mu2} is not above the floor {mu_floor(eigs):.6g}")
    return a


@dataclass(frozen=True)
class KernelSample:
    """Diagonal kernel values; ``blocks[..., a, b, i, j]`` per parameter value."""

    params: np.ndarray  # tau or s values
    blocks: np.ndarray  # (P, 2, 2, n1, n2)
    trace: np.ndarray  # (P,) eigenvalue sums
    omega: np.ndarray  # (n1, n2) weights of rho d^2q

    @property
    def traced(self) -> np.ndarray:
        return self.blocks[:, 0, 0] + self.blocks[:, 1, 1]

    def integrated_trace(self) -> np.ndarray:
        return np.einsum("pij,ij->p", self.traced, self.omega)

    @property
    def trace_residual(self) -> float:
        t = self.integrated_trace()
        return float(np.max(np.abs(t - self.trace) / np.abs(self.trace)))


def _diag_kernel(eigs: EigenSystem, coeffs: np.ndarray) -> np.ndarray:
    """sum_m c_pm phi_m(q) chi_m(q)^H as (P, 2, 2, n1, n2)."""
    N = eigs.right.shape[0] // 2
    R = (eigs.right[:N], eigs.right[N:])
    L = (eigs.left[:N].conj(), eigs.left[N:].conj())
    out = np.empty((coeffs.shape[0], 2, 2, N), dtype=complex)
    for a in range(2):
        for b in range(2):
            out[:, a, b] = coeffs @ (R[a] * L[b]).T
    return out.reshape(coeffs.shape[0], 2, 2, *eigs.domain.shape)


def heat_trace(eigs: EigenSystem, mu2: float, taus) -> np.ndarray:
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    a = _shifted(eigs, mu2)
    return np.exp(-np.outer(taus, a)).sum(axis=1)


def heat_kernel_diag(eigs: EigenSystem, mu2: float, taus) -> KernelSample:
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus <= 0):
        raise RegulatorError("tau must be positive")
    a = _shifted(eigs, mu2)
    c = np.exp(-np.outer(taus, a))
    omega = eigs.omega[: eigs.omega.size // 2].reshape(eigs.domain.shape)
    return KernelSample(taus, _diag_kernel(eigs, c), c.sum(axis=1), omega)


def zeta_function(eigs: EigenSystem, mu2: float, s) -> np.ndarray:
    """Generalized Hurwitz sum over the spectrum, principal branch."""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    a = _shifted(eigs, mu2)
    return np.power(a[None, :], -s[:, None]).sum(axis=1)


def zeta_kernel(eigs: EigenSystem, mu2: float, s) -> KernelSample:
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    a = _shifted(eigs, mu2)
    c = np.power(a[None, :], -s[:, None])
    omega = eigs.omega[: eigs.omega.size // 2].reshape(eigs.domain.shape)
    return KernelSample(s, _diag_kernel(eigs, c), c.sum(axis=1), omega)


@dataclass(frozen=True)
class MellinResult:
    value: complex
    error: float
    head: complex
    tail: complex


def mellin_taus(tau_min: float = 1e-4, tau_max: float = 1e2, per_decade: int = 100) -> np.ndarray:
    decades = np.log10(tau_max / tau_min)
    return np.logspace(np.log10(tau_min), np.log10(tau_max), int(round(decades * per_decade)) + 1)


def zeta_via_mellin(taus, heat, s: float, rtol: float = 1e-8) -> MellinResult:
    """(1/Gamma(s)) int_0^inf tau^(s-1) Tr K(tau) dtau from log-spaced samples.

    The sampled range is integrated by the trapezoid rule in log(tau).
    Below the first sample the trace is extended linearly (fixed by the
    first two samples); above the last it is extended as a single
    exponential whose rate comes from the last two samples. The error
    estimate is the trapezoid halving difference plus half the tail.
    """
    taus = np.asarray(taus, dtype=float)
    heat = np.asarray(heat)
    t = np.log(taus)
    if taus.size < 5 or not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-6):
        raise PrecisionError("Mellin route needs a log-uniform tau grid of at least 5 points")
    s = float(s)
    f = taus ** s * heat
    h = t[1] - t[0]
    coarse_n = taus.size if taus.size % 2 else taus.size - 1
    fine = h * (f.sum() - 0.5 * (f[0] + f[-1]))
    fc = f[:coarse_n:2]
    coarse = 2 * h * (fc.sum() - 0.5 * (fc[0] + fc[-1]))
    fine_part = h * (f[:coarse_n].sum() - 0.5 * (f[0] + f[coarse_n - 1]))

    t0, t1 = taus[0], taus[1]
    slope = (heat[1] - heat[0]) / (t1 - t0)
    a0 = heat[0] - slope * t0
    head = a0 * t0 ** s / s + slope * t0 ** (s + 1) / (s + 1)

    hN, hM = heat[-1], heat[-2]
    tN = taus[-1]
    if abs(hN) == 0:
        tail = 0.0
    else:
        kappa = np.log(abs(hM) / abs(hN)) / (taus[-1] - taus[-2])
        if not kappa > 0:
            raise PrecisionError("heat trace is not decaying at the end of the tau grid")
        # int_0^inf (tN + u)^(s-1) e^(-kappa u) du, scaled to avoid overflow
        shifted, _ = integrate.quad(lambda u: (1 + u / tN) ** (s - 1) * np.exp(-kappa * u),
                                    0, np.inf, epsabs=0, epsrel=1e-12)
        tail = hN * tN ** (s - 1) * shifted
    total = (fine + head + tail) / special.gamma(s)
    err = (abs(fine_part - coarse) + 0.5 * abs(tail)) / special.gamma(s)
    if err > rtol * abs(total):
        raise PrecisionError(f"Mellin quadrature error {err:.2e} exceeds {rtol:.1e} relative")
    return MellinResult(complex(total), float(err), complex(head), complex(tail))


def mode_expansion(psi: SpinorField, eigs: EigenSystem) -> np.ndarray:
    """a_m = int rho chi_m^H psi."""
    return eigs.left.conj().T @ (eigs.omega * psi.vector())


def reconstruct(coeffs: np.ndarray, eigs: EigenSystem) -> SpinorField:
    return SpinorField.from_vector(eigs.right @ coeffs, eigs.domain.shape)


def low_modes(eigs: EigenSystem, count: int) -> np.ndarray:
    """Indices of about ``count`` modes of smallest |lambda|, never splitting a cluster."""
    mags = np.abs(eigs.eigenvalues)
    order = np.argsort(mags, kind="stable")
    if count >= order.size:
        return order
    cut = mags[order[count - 1]]
    gap = CLUSTER_RTOL * max(1.0, float(mags.max()))
    keep = mags <= cut + gap
    return np.flatnonzero(keep)


@dataclass(frozen=True)
class JacobianValue:
    log_det: complex  # -log det C
    first_order: complex  # sum_m int rho alpha chi_m^H phi_m
    modes: int

    @property
    def remainder(self) -> float:
        return abs(self.log_det - self.first_order)


def fujikawa_jacobian(eigs: EigenSystem, alpha, modes: Optional[Sequence[int]] = None,
                      max_cond: float = 1e12) -> JacobianValue:
    """Jacobian of psi -> e^{-alpha} psi restricted to a set of modes.

    C_mn = int rho chi_m^H e^{-alpha} phi_n. On the full eigenbasis C is
    similar to diag(e^{-alpha}) and -log det C equals the first-order trace
    exactly; on a proper subset the two differ at second order in alpha.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != eigs.domain.shape or not np.all(np.isfinite(alpha)):
        raise ValueError("alpha must be a finite field on the eigensystem grid")
    idx = np.arange(eigs.size) if modes is None else np.asarray(modes)
    a = np.tile(alpha.ravel(), 2)
    R = eigs.right[:, idx]
    Lw = eigs.left[:, idx].conj().T * eigs.omega[None, :]
    C = Lw @ (np.exp(-a)[:, None] * R)
    first = np.einsum("mi,i,im->", Lw, a, R)
    if not np.all(np.isfinite(C)):
        raise IllConditionedJacobianError("jacobian matrix has non-finite entries")
    cond = np.linalg.cond(C)
    if not cond < max_cond:
        raise IllConditionedJacobianError(f"jacobian matrix condition {cond:.2e}")
    sign, logabs = np.linalg.slogdet(C)
    if sign == 0 or not np.isfinite(logabs):
        raise IllConditionedJacobianError("jacobian determinant vanishes")
    log_det = -(logabs + np.log(sign))
    return JacobianValue(complex(log_det), complex(first), int(idx.size))
