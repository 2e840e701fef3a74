import numpy as np
import pytest

from immersion import anomaly, catalog, dirac, spectra, surfaces
from immersion.errors import AnomalyInconsistencyError
from immersion.geometry import bundle_from_data, curvatures, functionals

from conftest import torus_quiet


def bumpy_fit(n, mu2=None, coefficient=anomaly.HEAT_KERNEL_CURVATURE_COEFFICIENT):
    domain, rho, p = surfaces.bumpy_data(n)
    eigs = spectra.eigensystem(dirac.assemble_dirac(rho, p, domain))
    mu2 = spectra.mu_floor(eigs) + 1 if mu2 is None else mu2
    b = bundle_from_data(rho, p, domain)
    fit = anomaly.fit_heat_kernel(eigs, mu2)
    an = anomaly.e1_analytic(rho, p, b.K, mu2, lap_log_rho=b.lap_log_rho, coefficient=coefficient)
    return fit, an, domain.weights() * rho


def test_flat_closed_form_e1():
    domain, rho, p = surfaces.flat_data(8)
    an = anomaly.e1_analytic(rho, p, np.zeros(domain.shape), 1.0, domain)
    assert np.allclose(an.field, -2.0) and an.form_gap < 1e-14
    assert np.allclose(anomaly.anomaly_density(an.field), -1 / (2 * np.pi))


def test_flat_fit_recovers_free_coefficients():
    domain, rho, p = surfaces.flat_data(16)
    eigs = spectra.eigensystem(dirac.assemble_dirac(rho, p, domain))
    fit = anomaly.fit_heat_kernel(eigs, 1.0)
    assert fit.reliable, fit.reasons
    assert np.max(np.abs(fit.e0 - 2)) <= 0.02 and np.max(np.abs(fit.e1 + 2)) <= 0.02
    assert fit.max_imag < 1e-10


def test_sphere_closed_form_density():
    b = curvatures(surfaces.sphere_chart(32, 32))
    an = anomaly.e1_analytic(b.rho, b.p, b.K, 0.0, lap_log_rho=b.lap_log_rho)
    assert np.allclose(an.field, 1 / 3, atol=1e-8)
    assert np.allclose(anomaly.anomaly_density(an.field), 1 / (12 * np.pi), atol=1e-9)


def test_forms_agree_on_bumpy_data():
    domain, rho, p = surfaces.bumpy_data(24)
    b = bundle_from_data(rho, p, domain)
    for c in (anomaly.CURVATURE_COEFFICIENT, anomaly.HEAT_KERNEL_CURVATURE_COEFFICIENT):
        an = anomaly.e1_analytic(rho, p, b.K, 1.3, domain, coefficient=c)
        assert an.form_gap < 1e-10


def test_inconsistent_curvature_is_rejected():
    domain, rho, p = surfaces.bumpy_data(16)
    b = bundle_from_data(rho, p, domain)
    with pytest.raises(AnomalyInconsistencyError):
        anomaly.e1_analytic(rho, p, b.K + 0.1, 1.0, domain)
    with pytest.raises(ValueError):
        anomaly.e1_analytic(rho, p, b.K, 1.0)


def test_identity_rhs_is_minus_density():
    domain, rho, p = surfaces.bumpy_data(16)
    b = bundle_from_data(rho, p, domain)
    an = anomaly.e1_analytic(rho, p, b.K, 0.7, domain)
    rhs = anomaly.identity_rhs(b.K, b.H, 0.7)
    assert np.allclose(rhs, -anomaly.anomaly_density(an.field), atol=1e-13)


@pytest.mark.parametrize("W, A, chi, mu2, expected", [
    (4 * np.pi, 4 * np.pi, 2, 0.0, -1 / 3),
    (2 * np.pi ** 2, 4 * np.pi ** 2 * np.sqrt(2), 0, 0.0, -np.pi),
    (0.0, 4 * np.pi ** 2, 0, 1.0, 2 * np.pi),
])
def test_predicted_action(W, A, chi, mu2, expected):
    assert np.isclose(anomaly.predicted_action(W, A, chi, mu2), expected, rtol=1e-14)


def test_predicted_action_topological_sector():
    base = anomaly.predicted_action(1.0, 2.0, 0, 0.5)
    assert np.isclose(anomaly.predicted_action(1.0, 2.0, 0, 0.5, nu=2, B2=0.3), base - 0.6)


@pytest.mark.parametrize("name", ["sphere", "clifford"])
def test_integrated_closed_form_cancels_prediction(name):
    entry = catalog.get_entry(name)
    b, _ = catalog.geometry(entry)
    fn = functionals(b)
    rep = anomaly.anomaly_relation(b.rho, b.p, b.K, b.weights, 0.0, fn.willmore, fn.area,
                                   fn.euler, lap_log_rho=b.lap_log_rho, form_tol=1e-6)
    assert abs(rep.identity.residual) <= 1e-6


def test_integrated_closed_form_on_bumpy_data():
    domain, rho, p = surfaces.bumpy_data(24)
    b = bundle_from_data(rho, p, domain)
    fn = functionals(b)
    rep = anomaly.anomaly_relation(rho, p, b.K, b.weights, 1.2, fn.willmore, fn.area, fn.euler,
                                   domain=domain)
    assert abs(rep.identity.residual) <= 1e-10 * abs(rep.identity.predicted_action)
    assert rep.summary()["predicted_action"] == rep.identity.predicted_action


def test_bumpy_fit_is_reliable_and_integrates(bumpy24):
    op, eigs = bumpy24
    mu2 = spectra.mu_floor(eigs) + 1
    fit = anomaly.fit_heat_kernel(eigs, mu2)
    assert fit.reliable, fit.reasons
    assert np.all((fit.e0 > 1.8) & (fit.e0 < 2.2))
    b = bundle_from_data(op.rho, op.p, op.domain)
    fn = functionals(b)
    rep = anomaly.anomaly_relation(op.rho, op.p, b.K, b.weights, mu2, fn.willmore, fn.area,
                                   fn.euler, fit=fit, domain=op.domain)
    denom = max(abs(rep.identity.predicted_action), mu2 * fn.area / (2 * np.pi))
    assert abs(rep.identity.residual) <= 0.05 * denom


def test_fit_tracks_heat_kernel_curvature_weight():
    fit, an_hk, w = bumpy_fit(24)
    _, an_cf, _ = bumpy_fit(24, coefficient=anomaly.CURVATURE_COEFFICIENT)
    err_hk = anomaly.relative_l2(fit.e1, an_hk.field, w)
    err_cf = anomaly.relative_l2(fit.e1, an_cf.field, w)
    assert err_hk < 0.005
    assert err_cf > 10 * err_hk


@pytest.mark.slow
def test_fit_converges_under_refinement():
    errs = []
    for n in (16, 24, 32):
        fit, an, w = bumpy_fit(n)
        errs.append(anomaly.relative_l2(fit.e1, an.field, w))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 0.002


def test_e1_slope_in_mu_squared(bumpy24):
    _, eigs = bumpy24
    m0 = spectra.mu_floor(eigs) + 1
    mus = np.array([m0, m0 + 0.5, m0 + 1.0])
    window = anomaly.select_fit_window(eigs, mus[-1])
    e = np.array([anomaly.fit_heat_kernel(eigs, m, window).e1 for m in mus])
    slope = np.polyfit(mus, e.reshape(3, -1), 1)[0]
    assert np.max(np.abs(slope + 2)) <= 0.05 * 2


def test_single_mode_toy_is_flagged():
    taus = np.logspace(-3, 0, 24)
    omega = np.full((4, 4), 4 * np.pi ** 2 / 16)
    traced = np.exp(-1.5 * taus)[:, None, None] * np.ones((4, 4)) / (4 * np.pi ** 2)
    blocks = np.zeros((taus.size, 2, 2, 4, 4), complex)
    blocks[:, 0, 0] = traced
    sample = spectra.KernelSample(taus, blocks, np.exp(-1.5 * taus), omega)
    fit = anomaly.e1_fit(sample)
    assert not fit.reliable and any("e0" in r for r in fit.reasons)


def test_window_and_failure_flags(flat8):
    _, eigs = flat8
    window = anomaly.select_fit_window(eigs, 1.0)
    assert not window.valid
    fit = anomaly.fit_heat_kernel(eigs, 1.0)
    assert not fit.reliable and "empty window" in fit.reasons
    # a window at large tau is dominated by the regulator tail
    bad = anomaly.fit_heat_kernel(eigs, 1.0, anomaly.FitWindow(1.0, 50.0))
    assert not bad.reliable


def test_relative_l2():
    w = np.ones(4)
    assert anomaly.relative_l2(np.ones(4), np.ones(4), w) == 0
    assert np.isclose(anomaly.relative_l2(1.1 * np.ones(4), np.ones(4), w), 0.1)


def test_clifford_density_integrates_to_pi():
    b = curvatures(torus_quiet(np.sqrt(2), 1.0, 64, 64))
    an = anomaly.e1_analytic(b.rho, b.p, b.K, 0.0, lap_log_rho=b.lap_log_rho, tol=1e-6)
    total = float(np.sum(b.weights * b.rho * anomaly.anomaly_density(an.field)))
    assert abs(total - np.pi) <= 1e-6

