import math

import mpmath
import numpy as np
import pytest
import scipy.integrate
import scipy.special
from hypothesis import example, given, settings
from hypothesis import strategies as st

from lowrank_gw import _core
from lowrank_gw.contour import (
    ContourSpec,
    cauchy_error_bound,
    contour_height,
    coupled_coefficients_contour,
    coupled_coefficients_direct,
    coupled_coefficients_fixed,
    elliptic_k,
    elliptic_params,
    fitted_decay_slope,
    jacobi_complex,
    jacobi_sn_cn_dn,
    quadrature_sweep,
)
from lowrank_gw.errors import ContourDegeneracyError, ConvergenceError, PreconditionError, ValidationError
from lowrank_gw.isdf import decompose
from lowrank_gw.linalg import sym_eig
from lowrank_gw.model import omega_diagonal, pair_products


def _energies(q, Q, n_v=2, n_c=2):
    return np.concatenate([np.linspace(-1.0, 0.0, n_v), np.linspace(q, Q, n_c)])


def test_r_exact():
    spec = elliptic_params(_energies(1.0, 4.0), 2, 2)
    assert spec.r == 1.0 / 3.0
    assert not spec.bypass and spec.L > 0 and spec.R > 0


def test_bypass_when_flat():
    spec = elliptic_params(np.array([-1.0, 0.0, 1.0, 1.0]), 2, 2)
    assert spec.r == 0.0 and spec.bypass


def test_nonpositive_gap():
    with pytest.raises(PreconditionError):
        elliptic_params(np.array([-1.0, 0.0, 0.0, 1.0]), 2, 2)


def test_R_dual_oracle():
    r = 1.0 / 3.0
    R = elliptic_params(_energies(1.0, 4.0), 2, 2).R
    # the (1 - t)^(-1/2) endpoint singularity goes into the algebraic weight
    integrand = lambda t: 1 / math.sqrt((1 + t) * (1 - r * r * t * t))  # noqa: E731
    quad = scipy.integrate.quad(integrand, 0, 1, weight="alg", wvar=(0, -0.5), epsabs=1e-14, epsrel=1e-14)[0]
    assert abs(R - quad) <= 1e-10
    assert abs(R - scipy.special.ellipk(r * r)) <= 1e-14


@given(st.floats(0.0, 0.999))
def test_elliptic_k_vs_scipy(r):
    assert elliptic_k(r) == pytest.approx(scipy.special.ellipk(r * r), rel=1e-13)


@pytest.mark.parametrize("r", [0.05, 1 / 3, 0.52, 0.9])
def test_contour_height_vs_quad(r):
    quad = scipy.integrate.quad(lambda t: 1 / math.sqrt((1 + t * t) * (1 + r * r * t * t)), 0, 1 / r, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert contour_height(r) == pytest.approx(0.5 * quad, rel=1e-11)


def test_contour_stays_inside_rectangle():
    for ratio in (1.5, 10.0, 100.0):
        spec = elliptic_params(_energies(1.0, ratio), 2, 2)
        assert 0 < spec.L < elliptic_k(math.sqrt(1 - spec.r**2))


@pytest.mark.parametrize("backend", sorted(_core.BACKENDS))
def test_sncndn_special_values(backend):
    sn, cn, dn = _core.get_backend(backend).sncndn(np.array([0.0]), 0.4)
    assert (sn[0], cn[0], dn[0]) == (0.0, 1.0, 1.0)


def test_jacobi_zero_modulus():
    u = np.linspace(-4, 4, 17)
    sn, cn, dn = jacobi_sn_cn_dn(u, 0.0)
    np.testing.assert_allclose(sn, np.sin(u), atol=1e-15)
    np.testing.assert_allclose(cn, np.cos(u), atol=1e-15)
    np.testing.assert_allclose(dn, 1.0, atol=1e-15)


def test_jacobi_quarter_period():
    r = 1 / 3
    sn, _, _ = jacobi_sn_cn_dn(elliptic_k(r), r)
    assert abs(sn - 1.0) <= 1e-10


@pytest.mark.parametrize("backend", sorted(_core.BACKENDS))
@given(st.floats(-10, 10), st.floats(0.0, 0.999))
@example(1.0, 0.984375)  # near-unit modulus once stalled the AGM stop test
@settings(max_examples=50, deadline=None)
def test_jacobi_vs_scipy_and_identities(backend, u, r):
    sn, cn, dn = (a[0] for a in _core.get_backend(backend).sncndn(np.array([u]), r))
    ref = scipy.special.ellipj(u, r * r)
    np.testing.assert_allclose([sn, cn, dn], ref[:3], atol=1e-12)
    assert abs(sn * sn + cn * cn - 1) <= 1e-12
    assert abs(dn * dn + r * r * sn * sn - 1) <= 1e-12


def test_jacobi_modulus_range():
    with pytest.raises(ValidationError):
        jacobi_sn_cn_dn(0.3, 1.0)


def test_jacobi_complex_real_axis():
    u = np.linspace(-2, 2, 9)
    r = 0.4
    for a, b in zip(jacobi_complex(u + 0j, r), jacobi_sn_cn_dn(u, r)):
        np.testing.assert_array_equal(a.real, b)
        assert np.all(a.imag == 0)


def test_jacobi_complex_imaginary_axis():
    sn, _, _ = jacobi_complex(np.array([0.7j]), 0.4)
    assert sn[0].real == 0.0 and sn[0].imag != 0.0


def test_jacobi_complex_vs_mpmath_on_contour():
    spec = elliptic_params(_energies(0.2, 2.0), 2, 2)
    rng = np.random.default_rng(0)
    u = rng.uniform(-spec.R, spec.R, 100) + 1j * spec.L
    sn, cn, dn = jacobi_complex(u, spec.r)
    assert np.max(np.abs(sn**2 + cn**2 - 1)) <= 1e-10
    assert np.max(np.abs(dn**2 + spec.r**2 * sn**2 - 1)) <= 1e-10
    m = spec.r**2
    for k in range(0, 100, 10):
        for name, val in (("sn", sn[k]), ("cn", cn[k]), ("dn", dn[k])):
            ref = complex(mpmath.ellipfun(name, complex(u[k]), m=m))
            assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref))


def test_jacobi_complex_pole_and_range():
    r = 0.4
    Kp = elliptic_k(math.sqrt(1 - r * r))
    with pytest.raises(ContourDegeneracyError):
        jacobi_complex(np.array([1j * Kp * (1 - 1e-10)]), r)
    with pytest.raises(ValidationError):
        jacobi_complex(np.array([1j * Kp * 1.01]), r)


def _pair_oracle(pv, pc, e):
    """T = C Omega^{-1} C^T with C the explicit point-restricted pair matrix."""
    C = pair_products(pv, pc)
    om = omega_diagonal(e, pv.shape[1], pc.shape[1])
    return (C / om) @ C.T


def test_direct_toy():
    cc = coupled_coefficients_direct(np.ones((1, 1)), np.ones((1, 1)), np.array([0.0, 2.0]))
    np.testing.assert_array_equal(cc.T, [[-0.5]])


@pytest.mark.parametrize("backend", sorted(_core.BACKENDS))
def test_direct_vs_pair_oracle(backend):
    rng = np.random.default_rng(1)
    pv, pc = rng.standard_normal((12, 5)), rng.standard_normal((12, 7))
    e = np.concatenate([np.sort(rng.uniform(-2, 0, 5)), np.sort(rng.uniform(0.3, 2, 7))])
    T = coupled_coefficients_direct(pv, pc, e, backend=backend).T
    np.testing.assert_allclose(T, _pair_oracle(pv, pc, e), atol=1e-12 * np.abs(T).max())
    assert np.linalg.norm(T - T.T) <= 1e-12 * np.linalg.norm(T)


def test_direct_negative_definite():
    rng = np.random.default_rng(2)
    pv, pc = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
    T = coupled_coefficients_direct(pv, pc, _energies(0.5, 3.0, 4, 4)).T
    assert sym_eig(T, vectors=False)[-1] < 0


def test_direct_shape_errors():
    with pytest.raises(ValidationError):
        coupled_coefficients_direct(np.ones((3, 2)), np.ones((4, 2)), np.zeros(4))
    with pytest.raises(ValidationError):
        coupled_coefficients_direct(np.ones((3, 2)), np.ones((3, 2)), np.zeros(5))


@pytest.fixture(scope="module")
def si8_points(si8_es):
    dec = decompose(si8_es, "vc", 8.0)
    return si8_es.psi_v[dec.point_indices], si8_es.psi_c[dec.point_indices], si8_es.energies


def test_contour_matches_direct_si8(si8_points):
    pv, pc, e = si8_points
    spec = elliptic_params(e, 16, 16, 1e-7, 1025)
    cc = coupled_coefficients_contour(pv, pc, e, spec)
    direct = coupled_coefficients_direct(pv, pc, e)
    assert np.linalg.norm(cc.T - direct.T) <= 1e-7 * np.linalg.norm(direct.T)
    assert cc.est_rel_error <= 1e-7 and cc.nodes_used <= 1025
    assert (cc.nodes_used - 1) & (cc.nodes_used - 2) == 0  # 2**m + 1
    assert np.linalg.norm(cc.T - cc.T.T) <= 1e-10 * np.linalg.norm(cc.T)
    assert sym_eig(cc.T, vectors=False)[-1] < 0


def test_contour_weight_is_linear(si8_points):
    pv, pc, e = si8_points
    spec = elliptic_params(e, 16, 16)
    a = coupled_coefficients_contour(pv, pc, e, spec)
    b = coupled_coefficients_contour(pv, pc, e, spec, weight=0.25)
    np.testing.assert_allclose(b.T, 0.25 * a.T, rtol=1e-15)


def test_contour_geometric_decay(si8_points):
    pv, pc, e = si8_points
    spec = elliptic_params(e, 16, 16)
    counts = [5, 9, 13, 17, 21, 25]
    sweep = quadrature_sweep(pv, pc, e, spec, counts)
    errs = [s.est_rel_error for s in sweep]
    slope = fitted_decay_slope(counts, errs)
    bound_slope = -(math.pi**2) / (2 * math.log(spec.Q / spec.q) + 6)
    assert slope < 0 and abs(slope) >= abs(bound_slope)
    for prev, cur in zip(errs, errs[1:]):
        assert cur <= 1.1 * prev


def test_contour_refinement_monotone(si8_points):
    pv, pc, e = si8_points
    spec = elliptic_params(e, 16, 16, 1e-12)
    cc = coupled_coefficients_contour(pv, pc, e, spec)
    est = [h[1] for h in cc.history]
    for prev, cur in zip(est, est[1:]):
        assert cur <= 1.1 * prev or cur < 1e-13


def test_fixed_rule_converges_to_direct(si8_points):
    pv, pc, e = si8_points
    spec = elliptic_params(e, 16, 16)
    fixed = coupled_coefficients_fixed(pv, pc, e, spec, 129)
    direct = coupled_coefficients_direct(pv, pc, e)
    assert np.linalg.norm(fixed.T - direct.T) <= 1e-12 * np.linalg.norm(direct.T)


@given(st.integers(0, 2**31 - 1), st.floats(1.2, 100.0), st.integers(1, 4), st.integers(1, 4))
@settings(max_examples=20, deadline=None)
def test_contour_direct_equivalence_property(seed, ratio, n_v, n_c):
    rng = np.random.default_rng(seed)
    pv, pc = rng.standard_normal((6, n_v)), rng.standard_normal((6, n_c))
    q = 0.3
    ev = np.append(np.sort(rng.uniform(-1.0, 0.0, n_v - 1)), 0.0)
    ec = np.concatenate(([q], np.sort(rng.uniform(q, q * ratio, max(n_c - 2, 0))), [q * ratio]))[:n_c]
    e = np.concatenate([ev, ec])
    spec = elliptic_params(e, n_v, n_c)
    direct = coupled_coefficients_direct(pv, pc, e)
    if spec.bypass:
        with pytest.raises(ContourDegeneracyError):
            coupled_coefficients_contour(pv, pc, e, spec)
        return
    cc = coupled_coefficients_contour(pv, pc, e, spec)
    assert np.linalg.norm(cc.T - direct.T) <= max(1e-7, 1e-9) * np.linalg.norm(direct.T)


def test_contour_not_converged_carries_best(si8_points):
    pv, pc, e = si8_points
    spec = elliptic_params(e, 16, 16, delta_rel=1e-15, max_nodes=33)
    with pytest.raises(ConvergenceError) as info:
        coupled_coefficients_contour(pv, pc, e, spec)
    assert info.value.best is not None and info.value.best.nodes_used == 33


def test_contour_rejects_bypass():
    spec = ContourSpec(1.0, 1.0, 0.0, math.pi / 2, math.inf, bypass=True)
    with pytest.raises(ContourDegeneracyError):
        coupled_coefficients_contour(np.ones((1, 1)), np.ones((1, 1)), np.array([0.0, 1.0]), spec)


def test_cauchy_bound_values():
    spec = ContourSpec(1.0, math.e**2, 0.0, 1.0, 1.0)
    assert cauchy_error_bound(spec, 10) == pytest.approx(math.exp(-math.pi**2), rel=1e-14)
    assert cauchy_error_bound(spec, 10) == pytest.approx(5.17e-5, rel=1e-3)
    assert cauchy_error_bound(spec, 20) == pytest.approx(cauchy_error_bound(spec, 10) ** 2, rel=1e-12)
    wider = ContourSpec(1.0, 100.0, 0.0, 1.0, 1.0)
    assert cauchy_error_bound(wider, 10) > cauchy_error_bound(spec, 10)
    with pytest.raises(ValidationError):
        cauchy_error_bound(spec, 0)


def test_fitted_slope_exact_exponential():
    n = np.arange(5, 40, 4)
    assert fitted_decay_slope(n, np.exp(-0.7 * n)) == pytest.approx(-0.7, rel=1e-10)
    with pytest.raises(ValidationError):
        fitted_decay_slope([1, 2], [1e-20, 1e-20])
