import warnings

import numpy as np
import pytest

from immersion import dirac, spectra, surfaces
from immersion.errors import NonConformalChartWarning


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("IMMERSION_CACHE_DIR", str(tmp_path / "cache"))


@pytest.fixture(scope="session")
def flat8():
    domain, rho, p = surfaces.flat_data(8)
    op = dirac.assemble_dirac(rho, p, domain)
    return op, spectra.eigensystem(op)


@pytest.fixture(scope="session")
def flat24():
    domain, rho, p = surfaces.flat_data(24)
    op = dirac.assemble_dirac(rho, p, domain)
    return op, spectra.eigensystem(op)


@pytest.fixture(scope="session")
def bumpy16():
    domain, rho, p = surfaces.bumpy_data(16)
    op = dirac.assemble_dirac(rho, p, domain)
    return op, spectra.eigensystem(op)


@pytest.fixture(scope="session")
def bumpy24():
    domain, rho, p = surfaces.bumpy_data(24)
    op = dirac.assemble_dirac(rho, p, domain)
    return op, spectra.eigensystem(op)


def torus_quiet(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConformalChartWarning)
        return surfaces.torus_chart(*args, **kwargs)


def plane_wave_spectrum(n, L=2 * np.pi):
    """+-|k| for the represented modes, the unpaired Nyquist mode at +n/2."""
    k = np.fft.fftfreq(n, d=1.0 / n) * (2 * np.pi / L)
    k[n // 2] = np.pi * n / L
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    a = np.hypot(k1, k2).ravel()
    return np.sort(np.concatenate([a, -a]))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(label: str, ok: bool, detail: str, informational: bool = False):
        mark = "info" if informational else ("PASS" if ok else "FAIL")
        _ACCEPTANCE_LINES.append(f"{mark}  {label:<5} {detail}")
        if not informational:
            assert ok, f"criterion {label}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
