"""Parameter grids and Fourier differentiation on doubly periodic domains.

Fields live on an ``(n1, n2)`` grid with ``indexing="ij"``: axis 0 runs
along q1 and axis 1 along q2. Flattened vectors use C order, so the flat
index of node ``(i, j)`` is ``i * n2 + j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UnsupportedChartError

BOUNDARY_CONDITIONS = ("periodic", "antiperiodic")


@dataclass(frozen=True)
class ParamDomain:
    """Index grid over the (q1, q2) parameter plane.

    Periodic axes are sampled uniformly on ``[0, L)``. A non-periodic axis
    only records the node count; the chart that uses it supplies its own
    nodes and quadrature weights.
    """

    n1: int
    n2: int
    L1: float = 2 * np.pi
    L2: float = 2 * np.pi
    periodic: tuple[bool, bool] = (True, True)

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if n < 4 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 4, got {n}")
        if not (self.L1 > 0 and self.L2 > 0):
            raise ValueError("domain lengths must be positive")
        object.__setattr__(self, "periodic", tuple(bool(b) for b in self.periodic))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def lengths(self) -> tuple[float, float]:
        return (self.L1, self.L2)

    @property
    def doubly_periodic(self) -> bool:
        return all(self.periodic)

    @property
    def min_length(self) -> float:
        return min(self.L1, self.L2)

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.doubly_periodic:
            raise UnsupportedChartError("uniform grid only defined on doubly periodic domains")
        q1 = np.arange(self.n1) * (self.L1 / self.n1)
        q2 = np.arange(self.n2) * (self.L2 / self.n2)
        return np.meshgrid(q1, q2, indexing="ij")

    def weights(self) -> np.ndarray:
        """Trapezoid weights for d^2q (spectrally accurate for periodic data)."""
        if not self.doubly_periodic:
            raise UnsupportedChartError("trapezoid weights need a doubly periodic domain")
        return np.full(self.shape, self.L1 * self.L2 / self.size)

    def key(self) -> dict:
        return {"n1": self.n1, "n2": self.n2, "L1": float(self.L1), "L2": float(self.L2),
                "periodic": list(self.periodic)}


def wavenumbers(n: int, L: float, bc: str = "periodic", nyquist: str = "zero") -> np.ndarray:
    """Angular wavenumbers in FFT order.

    ``nyquist`` controls the unpaired mode of an even periodic grid:
    ``"zero"`` drops it (real-valued derivative), ``"positive"`` keeps it at
    ``+n/2``. Antiperiodic grids use half-integer modes and have no
    unpaired mode.
    """
    m = np.fft.fftfreq(n, d=1.0 / n)
    if bc == "antiperiodic":
        return (m + 0.5) * (2 * np.pi / L)
    if bc != "periodic":
        raise ValueError(f"unknown boundary condition {bc!r}")
    k = m * (2 * np.pi / L)
    if n % 2 == 0:
        k[n // 2] = 0.0 if nyquist == "zero" else np.pi * n / L
    return k


def spectral_derivative(f: np.ndarray, axis: int, L: float, bc: str = "periodic",
                        nyquist: str = "zero", order: int = 1) -> np.ndarray:
    f = np.asarray(f)
    n = f.shape[axis]
    shape = [1] * f.ndim
    shape[axis] = n
    k = wavenumbers(n, L, bc, nyquist).reshape(shape)
    if bc == "antiperiodic":
        # f = exp(i pi q / L) g with g periodic; shifted modes absorb the twist.
        phase = np.exp(1j * np.pi * np.arange(n) / n).reshape(shape)
        g = np.fft.fft(f / phase, axis=axis)
        return np.fft.ifft((1j * k) ** order * g, axis=axis) * phase
    out = np.fft.ifft((1j * k) ** order * np.fft.fft(f, axis=axis), axis=axis)
    if np.isrealobj(f) and nyquist == "zero":
        return out.real
    return out


def partial(f: np.ndarray, domain: ParamDomain, axis: int, bc: str = "periodic",
            nyquist: str = "zero", order: int = 1) -> np.ndarray:
    if not domain.periodic[axis]:
        raise UnsupportedChartError(f"axis {axis} is not periodic; supply analytic derivatives")
    return spectral_derivative(f, axis, domain.lengths[axis], bc, nyquist, order)


def complex_derivatives(field: np.ndarray, domain: ParamDomain,
                        bc: tuple[str, str] = ("periodic", "periodic"),
                        nyquist: str = "zero") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(d f, dbar f)`` with d = (d1 - i d2)/2 and dbar = (d1 + i d2)/2."""
    if not domain.doubly_periodic:
        raise UnsupportedChartError("complex derivatives need a doubly periodic domain "
                                    "or analytic callbacks")
    f1 = partial(field, domain, 0, bc[0], nyquist)
    f2 = partial(field, domain, 1, bc[1], nyquist)
    return 0.5 * (f1 - 1j * f2), 0.5 * (f1 + 1j * f2)


def laplacian(f: np.ndarray, domain: ParamDomain) -> np.ndarray:
    return (partial(f, domain, 0, order=2) + partial(f, domain, 1, order=2))


@lru_cache(maxsize=32)
def _derivative_matrix_1d(n: int, L: float, bc: str, nyquist: str) -> np.ndarray:
    eye = np.eye(n, dtype=complex)
    d = spectral_derivative(eye, 0, L, bc, nyquist)
    d.setflags(write=False)
    return d


def derivative_matrices(domain: ParamDomain, bc: tuple[str, str] = ("periodic", "periodic"),
                        nyquist: str = "positive") -> tuple[np.ndarray, np.ndarray]:
    """Dense matrices of d and dbar acting on C-ordered flattened fields.

    Each 1-D factor is ``F^-1 diag(ik) F`` with real ``k``, hence exactly
    anti-hermitian, so ``d^H = -dbar``.
    """
    if not domain.doubly_periodic:
        raise UnsupportedChartError("operator assembly needs a doubly periodic domain")
    d1 = np.kron(_derivative_matrix_1d(domain.n1, float(domain.L1), bc[0], nyquist),
                 np.eye(domain.n2))
    d2 = np.kron(np.eye(domain.n1),
                 _derivative_matrix_1d(domain.n2, float(domain.L2), bc[1], nyquist))
    return 0.5 * (d1 - 1j * d2), 0.5 * (d1 + 1j * d2)


def band_limited_field(domain: ParamDomain, rng: np.random.Generator, fraction: float = 0.5,
                       real: bool = False) -> np.ndarray:
    """Random trigonometric polynomial with |k_i| <= fraction * n_i / 2."""
    shape = domain.shape
    m1 = np.abs(np.fft.fftfreq(shape[0], d=1.0 / shape[0]))[:, None]
    m2 = np.abs(np.fft.fftfreq(shape[1], d=1.0 / shape[1]))[None, :]
    mask = (m1 <= fraction * shape[0] / 2) & (m2 <= fraction * shape[1] / 2)
    coef = np.zeros(shape, dtype=complex)
    coef[mask] = rng.normal(size=mask.sum()) + 1j * rng.normal(size=mask.sum())
    field = np.fft.ifft2(coef) * np.sqrt(domain.size)
    return field.real if real else field
