import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from immersion import dirac, spectral, surfaces
from immersion.dirac import SpinorField
from immersion.errors import (DiracInconsistencyError, NonConformalChartWarning, InvalidChartError,
                              UnsupportedChartError)
from immersion.geometry import bundle_from_data
from immersion.spectral import ParamDomain

from conftest import plane_wave_spectrum, torus_quiet


def random_spinor(domain, rng, fraction=0.5):
    return SpinorField(spectral.band_limited_field(domain, rng, fraction),
                       spectral.band_limited_field(domain, rng, fraction))


@pytest.fixture(scope="module")
def bumpy32():
    domain, rho, p = surfaces.bumpy_data(32)
    return domain, rho, p, bundle_from_data(rho, p, domain)


def test_flat_spectrum_is_plus_minus_abs_k():
    domain, rho, p = surfaces.flat_data(8)
    ev = np.linalg.eigvals(dirac.assemble_dirac(rho, p, domain).i_dirac)
    assert np.max(np.abs(ev.imag)) < 1e-12
    assert np.allclose(np.sort(ev.real), plane_wave_spectrum(8), atol=1e-12)


def test_constant_spinor_is_annihilated_without_mass():
    domain, rho, p = surfaces.flat_data(8)
    psi = SpinorField(np.ones(domain.shape, complex), np.zeros(domain.shape, complex))
    out = dirac.apply_dirac(psi, rho, p, domain)
    assert np.max(np.abs(out.vector())) < 1e-14


@pytest.mark.parametrize("c", [0.3, -1.1])
def test_constant_mass_acts_as_sigma3_at_zero_momentum(c):
    domain, rho, _ = surfaces.flat_data(8)
    p = np.full(domain.shape, c)
    op = dirac.assemble_dirac(rho, p, domain)
    one, zero = np.ones(domain.shape, complex), np.zeros(domain.shape, complex)
    up = op.apply(SpinorField(one, zero))
    down = op.apply(SpinorField(zero, one))
    assert np.allclose(up.psi1, 2 * c) and np.allclose(up.psi2, 0, atol=1e-14)
    assert np.allclose(down.psi2, -2 * c) and np.allclose(down.psi1, 0, atol=1e-14)
    # i D restricted to k = 0 is 2ic sigma3: eigenvalues +-2ic
    ev = np.linalg.eigvals(op.i_dirac)
    assert np.min(np.abs(ev - 2j * abs(c))) < 1e-10 and np.min(np.abs(ev + 2j * abs(c))) < 1e-10


def test_flat_square_has_spectrum_k_squared():
    domain, rho, p = surfaces.flat_data(8)
    sq = dirac.assemble_dirac_squared(rho, p, np.zeros(domain.shape), domain)
    ev = np.sort(np.linalg.eigvals(sq).real)
    assert np.allclose(ev, np.sort(plane_wave_spectrum(8) ** 2), atol=1e-10)


def test_constant_mass_shifts_square_by_minus_four_p_squared():
    domain, rho, _ = surfaces.flat_data(8)
    c = 0.4
    p = np.full(domain.shape, c)
    K = np.zeros(domain.shape)
    shift = (dirac.assemble_dirac_squared(rho, p, K, domain)
             - dirac.assemble_dirac_squared(rho, 0 * p, K, domain))
    assert np.allclose(shift, -4 * c * c * np.eye(shift.shape[0]), atol=1e-13)


def test_square_identity_on_bumpy_data(bumpy32):
    domain, rho, p, b = bumpy32
    D = dirac.assemble_dirac(rho, p, domain).matrix
    sq = dirac.assemble_dirac_squared(rho, p, b.K, domain)
    rng = np.random.default_rng(7)
    for _ in range(5):
        v = random_spinor(domain, rng).vector()
        lhs = -(D @ (D @ v))
        assert np.linalg.norm(lhs - sq @ v) <= 1e-8 * np.linalg.norm(lhs)


def test_printed_square_variant_does_not_compose(bumpy32):
    domain, rho, p, b = bumpy32
    D = dirac.assemble_dirac(rho, p, domain).matrix
    printed = dirac.assemble_dirac_squared(rho, p, b.K, domain, form="printed")
    v = random_spinor(domain, np.random.default_rng(8)).vector()
    lhs = -(D @ (D @ v))
    assert np.linalg.norm(lhs - printed @ v) > 1e-3 * np.linalg.norm(lhs)


def test_matrix_free_application_matches_matrix():
    domain, rho, p = surfaces.bumpy_data(12)
    op = dirac.assemble_dirac(rho, p, domain)
    psi = random_spinor(domain, np.random.default_rng(1), 1.0)
    assert np.allclose(dirac.apply_dirac(psi, rho, p, domain).vector(), op.matrix @ psi.vector(),
                       atol=1e-12)


def test_operator_metadata():
    domain, rho, p = surfaces.bumpy_data(8)
    op = dirac.assemble_dirac(rho, p, domain)
    assert op.dim == 2 * domain.size
    assert np.allclose(op.weights[:domain.size], (domain.weights() * rho).ravel())
    assert op.content_hash() == dirac.assemble_dirac(rho, p, domain).content_hash()
    assert op.content_hash() != dirac.assemble_dirac(rho, 2 * p, domain).content_hash()


def test_assembly_validation():
    domain, rho, p = surfaces.flat_data(8)
    with pytest.raises(InvalidChartError):
        dirac.assemble_dirac(-rho, p, domain)
    with pytest.raises(UnsupportedChartError):
        dirac.assemble_dirac(rho, p, ParamDomain(8, 8, periodic=(False, True)))


def test_action_of_zero_and_constant_spinor():
    domain, rho, p = surfaces.flat_data(8)
    zero = np.zeros(domain.shape, complex)
    assert dirac.dirac_action(SpinorField(zero, zero), rho, p, domain).value == 0
    const = SpinorField(zero + 1, zero)
    assert abs(dirac.dirac_action(const, rho, p, domain).value) < 1e-13


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), amp=st.floats(0.0, 0.3))
def test_action_routes_agree(seed, amp):
    domain, rho, p = surfaces.bumpy_data(16, eps_rho=amp)
    psi = random_spinor(domain, np.random.default_rng(seed))
    val = dirac.dirac_action(psi, rho, p, domain)
    assert val.relative_gap <= 1e-10


def test_gauge_identity_and_constant_shift():
    domain, rho, p = surfaces.bumpy_data(8)
    psi = random_spinor(domain, np.random.default_rng(0))
    same, rho0 = dirac.gauge_transform(psi, rho, np.zeros(domain.shape))
    assert np.array_equal(rho0, rho) and np.allclose(same.vector(), psi.vector())
    c = 0.7
    moved, rho1 = dirac.gauge_transform(psi, rho, np.full(domain.shape, c))
    assert np.allclose(rho1, np.exp(2 * c) * rho)
    assert np.allclose(moved.vector(), np.exp(-c) * psi.vector())
    b0, b1 = bundle_from_data(rho, p, domain), bundle_from_data(rho1, p, domain)
    assert np.allclose(b1.dilaton, b0.dilaton + c)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), scale=st.floats(0.01, 1.0))
def test_action_is_gauge_invariant(seed, scale):
    domain, rho, p = surfaces.bumpy_data(16)
    rng = np.random.default_rng(seed)
    psi = random_spinor(domain, rng)
    alpha = scale * spectral.band_limited_field(domain, rng, 0.25, real=True) / 4
    psi2, rho2 = dirac.gauge_transform(psi, rho, alpha)
    s1 = dirac.dirac_action(psi, rho, p, domain).value
    s2 = dirac.dirac_action(psi2, rho2, p, domain).value
    assert abs(s2 - s1) <= 1e-10 * abs(s1)


def test_gauge_transform_rejects_bad_alpha():
    domain, rho, _ = surfaces.flat_data(8)
    psi = random_spinor(domain, np.random.default_rng(0))
    with pytest.raises(ValueError):
        dirac.gauge_transform(psi, rho, np.full((4, 4), 0.1))


def test_kinetic_hermiticity():
    domain, rho, p = surfaces.flat_data(8)
    assert dirac.hermiticity_residual(rho, domain) <= 1e-12
    domain, rho, p = surfaces.bumpy_data(16)
    assert dirac.hermiticity_residual(rho, domain) <= 1e-10


def test_mass_term_breaks_weighted_hermiticity():
    domain, rho, p = surfaces.bumpy_data(16)
    # 2i p rho^-1/2 sigma3 is anti-self-adjoint in the same weight
    assert dirac.hermiticity_residual(rho, domain, p) > 1e-3


def test_spinor_validation():
    with pytest.raises(ValueError):
        SpinorField(np.zeros((4, 4)), np.zeros((4, 6)))
    with pytest.raises(ValueError):
        SpinorField(np.full((4, 4), np.nan), np.zeros((4, 4)))


def test_sphere_weierstrass_data():
    ch = surfaces.sphere_chart(32, 32)
    wd = dirac.weierstrass_data(ch)
    z2 = ch.q1 ** 2 + ch.q2 ** 2
    s = np.abs(wd.f1) ** 2 + np.abs(wd.f2) ** 2
    keep = ~wd.mask
    assert np.allclose(s[keep], 1 / (1 + z2[keep]), rtol=1e-12)
    rho = 4 / (1 + z2) ** 2
    assert np.allclose(s[keep] ** 2, rho[keep] / 4, rtol=1e-12)
    # nodes nearest z = 0: |f1|^2 -> 1, |f2|^2 -> 0
    assert abs(abs(wd.f1[0, 0]) ** 2 - 1) < 1e-4 and abs(wd.f2[0, 0]) ** 2 < 1e-4


def test_sphere_weierstrass_values_at_origin():
    # d/dzbar of Zbar = 2 zbar / (1 + |z|^2) is 2 at z = 0, d/dz is 0
    imm = surfaces._sphere_immersion(1.0, 1.0)
    jet = imm.jet(np.array([[0.0]]), np.array([[0.0]]))
    zb1 = jet.x1[0] - 1j * jet.x1[1]
    zb2 = jet.x2[0] - 1j * jet.x2[1]
    assert np.isclose(0.5 * (zb1 + 1j * zb2)[0, 0], 2.0)
    assert abs(0.5 * (zb1 - 1j * zb2)[0, 0]) < 1e-15


@pytest.mark.parametrize("n", [16, 32, 64])
def test_sphere_kkwe_residual(n):
    assert dirac.kkwe_check(surfaces.sphere_chart(n, n))["max_residual"] <= 1e-6


def test_minimal_strip_f1_is_antiholomorphic():
    wd = dirac.weierstrass_data(surfaces.catenoid_strip())
    assert np.max(np.abs(wd.d_f1)) < 1e-14
    assert dirac.kkwe_check(surfaces.catenoid_strip())["max_residual"] < 1e-14


def test_kkwe_residual_of_zero_data():
    domain = ParamDomain(8, 8)
    z = np.zeros(domain.shape, complex)
    r1, r2 = dirac.kkwe_residual(z, z, np.ones(domain.shape), domain)
    assert np.max(np.abs(r1)) == 0 and np.max(np.abs(r2)) == 0


def test_torus_weierstrass_data_is_antiperiodic_and_converges():
    res = []
    for n in (16, 32, 48):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConformalChartWarning)
            kk = dirac.kkwe_check(torus_quiet(n1=n, n2=n))
        assert kk["bc"] == ("antiperiodic", "antiperiodic")
        res.append(kk["max_residual"])
    assert res[0] > res[1] > res[2]
    # faster than any fixed power: the log-log slope steepens
    s1 = np.log(res[0] / res[1]) / np.log(2)
    s2 = np.log(res[1] / res[2]) / np.log(1.5)
    assert s2 > s1 > 2


def test_continuous_sqrt_follows_sign_change_through_double_zero():
    q = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    f = np.sin(q)[None, :] * np.ones((4, 1))
    root = dirac.continuous_sqrt(f ** 2)
    assert np.allclose(root * np.sign(root[0, 1].real), f)


def test_inconsistent_spin_structures_raise(monkeypatch):
    ch = torus_quiet(n1=16, n2=16)
    calls = iter(["periodic", "periodic", "antiperiodic", "periodic"])
    monkeypatch.setattr(dirac, "_wrap_parity", lambda f, a: next(calls))
    with pytest.raises(DiracInconsistencyError):
        dirac.weierstrass_data(ch)
