import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st
from scipy import special

from higgsproca import proca_continuum as pc
from higgsproca.errors import InvalidParameterError


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def test_kernel_examples():
    assert pc.k_lambda(1.0, 1.0, 3) == pytest.approx(math.exp(-1) / (4 * math.pi), rel=1e-12)
    assert pc.k_lambda(1.0, 1.0, 3) == pytest.approx(0.02927491, abs=1e-8)
    assert pc.k_lambda(1.0, 1.0, 2) == pytest.approx(special.k0(1.0) / (2 * math.pi), rel=1e-12)
    with pytest.raises(InvalidParameterError):
        pc.k_lambda(0.0, 1.0, 2)
    with pytest.raises(InvalidParameterError):
        pc.k_lambda(1.0, -1.0, 2)


def test_kernel_yukawa_cross_checked_by_plain_quad():
    # independent quadrature of the defining heat-kernel integral
    from scipy import integrate
    r, lam = 0.7, 1.3
    val = integrate.quad(lambda t: (4 * math.pi * t) ** -1.5 * math.exp(-r * r / (4 * t) - lam * t),
                         0, np.inf, epsrel=1e-12, limit=400)[0]
    assert math.exp(-math.sqrt(lam) * r) / (4 * math.pi * r) == pytest.approx(val, rel=1e-9)


@given(st.floats(0.1, 5.0), st.floats(0.05, 10.0), st.sampled_from([2, 3, 4]))
def test_kernel_scaling(lam, r, d):
    assert pc.k_lambda(r, lam, d) == pytest.approx(
        lam ** ((d - 2) / 2) * pc.k_lambda(math.sqrt(lam) * r, 1.0, d), rel=1e-9)


def test_asymptotic_examples():
    r = np.linspace(0.1, 20, 50)
    assert np.allclose(pc.k_lambda_asymptotic(r, 1.0, 3), np.exp(-r) / (4 * np.pi * r), rtol=1e-14)
    assert pc.k_lambda_asymptotic(1.0, 1.0, 2) == pytest.approx(math.exp(-1) / (2 * math.sqrt(2 * math.pi)))
    assert pc.k_lambda_asymptotic(1.0, 1.0, 2) == pytest.approx(0.0733813, abs=1e-7)
    assert abs(pc.k_lambda(20.0, 1.0, 2) / pc.k_lambda_asymptotic(20.0, 1.0, 2) - 1) <= 0.01


@pytest.mark.parametrize("d", [2, 3])
def test_kernel_positive_decreasing_and_bounded(d):
    r = np.linspace(0.1, 40, 120)
    k = pc.k_lambda(r, 1.0, d)
    assert np.all(k > 0) and np.all(np.diff(k) < 0)
    # bound direction: K <= C exp(-r sqrt(lam/2)) r^-(d-2) (log factor in d=2)
    ref = np.exp(-r * math.sqrt(0.5)) * (r ** -(d - 2) if d > 2 else (1 + np.abs(np.log(r))))
    ratio = k / ref
    C = ratio[:10].max()
    assert np.all(ratio <= C * (1 + 1e-12))


# ---------------------------------------------------------------------------
# test forms and the operator
# ---------------------------------------------------------------------------

FORMS = [
    pc.TestForm(2, "gaussian", center=[0.3, -0.2], scale=0.8, coeffs=[1.0, -0.5]),
    pc.TestForm(2, "bump", center=[0.0, 0.1], scale=1.2, coeffs=[0.3, 1.0]),
    pc.TestForm(2, "gaussian", scale=0.6, curl=True),
    pc.TestForm(3, "gaussian", center=[0.1, 0.0, -0.3], scale=0.9, coeffs=[1.0, 0.2, -0.4]),
]


def _pts(f, n=100, seed=0):
    r = np.random.default_rng(seed).uniform(-0.7, 0.7, size=(n, f.d))
    return f.center + r * (f.scale if hasattr(f, "scale") else 1.0)


@pytest.mark.parametrize("f", FORMS)
def test_derivatives_match_finite_differences(f):
    x = _pts(f)
    h = 1e-5
    for j in range(f.d):
        e = np.zeros(f.d)
        e[j] = h
        fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
        assert np.allclose(f.grad(x)[:, :, j], fd, rtol=1e-6, atol=1e-8)
        fd2 = (f.grad(x + e) - f.grad(x - e)) / (2 * h)
        assert np.allclose(f.hess(x)[:, :, :, j], fd2, rtol=1e-6, atol=1e-7)
    assert np.allclose(f.div(x), np.trace(f.grad(x), axis1=1, axis2=2))


def test_apply_Q_symbolic_oracle():
    X, Y = sp.symbols("x y", real=True)
    lam = 0.7
    h = sp.exp(-(X**2 + Y**2) / 2)
    comps = [h, sp.Integer(0)]
    div = sp.diff(comps[0], X) + sp.diff(comps[1], Y)
    q = [-(sp.diff(c, X, 2) + sp.diff(c, Y, 2)) + lam * c + sp.diff(div, v) for c, v in zip(comps, (X, Y))]
    qf = [sp.lambdify((X, Y), e, "numpy") for e in q]
    f = pc.TestForm(2, "gaussian", coeffs=[1.0, 0.0])
    x = np.random.default_rng(1).normal(size=(100, 2))
    got = pc.apply_Q(f, lam).value(x)
    want = np.stack([np.broadcast_to(g(x[:, 0], x[:, 1]), (100,)) for g in qf], axis=1)
    assert np.allclose(got, want, rtol=1e-10, atol=1e-12)


def test_apply_Q_divergence_free_is_helmholtz():
    f = FORMS[2]
    x = _pts(f)
    lam = 1.5
    lap = np.trace(f.hess(x), axis1=2, axis2=3)
    assert np.allclose(pc.apply_Q(f, lam).value(x), -lap + lam * f.value(x), atol=1e-12)


@pytest.mark.parametrize("a,b", [(0.5, [0.3, -1.0]), (2.0, [1.0, 1.0])])
def test_apply_Q_commutes_with_scaling(a, b):
    f = FORMS[0]
    lam = 0.8
    tf = pc.translate_scale_form(f, a, np.array(b))
    x = np.random.default_rng(2).normal(size=(50, 2)) + np.array(b)
    lhs = pc.apply_Q(tf, lam).value(x)
    rhs = a**-2 * pc.apply_Q(f, a * a * lam).value((x - np.array(b)) / a)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_translate_scale_examples():
    f = FORMS[0]
    x = _pts(f)
    same = pc.translate_scale_form(f, 1.0, np.zeros(2))
    assert np.allclose(same.value(x), f.value(x))
    t = pc.translate_scale_form(f, 2.0, np.array([1.0, 0.0]))
    assert np.allclose(t.value(np.array([[3.0, 0.0]])), f.value(np.array([[1.0, 0.0]])))
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (t.value(x + e) - t.value(x - e)) / (2 * h)
        assert np.allclose(t.grad(x)[:, :, j], fd, rtol=1e-6, atol=1e-9)
    with pytest.raises(InvalidParameterError):
        pc.translate_scale_form(f, 0.0)


def test_form_validation():
    with pytest.raises(InvalidParameterError):
        pc.TestForm(2, "square")
    with pytest.raises(InvalidParameterError):
        pc.TestForm(3, curl=True)
    with pytest.raises(InvalidParameterError):
        pc.TestForm(2, scale=-1.0)


# ---------------------------------------------------------------------------
# variances and covariances
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("f", [FORMS[0], FORMS[2], pc.TestForm(2, "gaussian", scale=0.5, coeffs=[1, 0.3])])
def test_direct_and_fourier_routes_agree(f):
    lam = 1.0
    d = pc.proca_variance(f, lam, "direct")
    fo = pc.proca_variance(f, lam, "fourier")
    assert d > 0 and fo > 0
    assert abs(d / fo - 1) <= 1e-6


def test_covariance_functional_at_zero_and_symmetry():
    f = pc.TestForm(2, "gaussian", scale=0.5, coeffs=[1.0, 0.3])
    g = pc.TestForm(2, "gaussian", center=[0.4, 0.0], scale=0.7, coeffs=[-0.2, 1.0])
    assert pc.covariance_functional(f, f, np.zeros(2), 1.0) == pytest.approx(
        pc.proca_variance(f, 1.0, "fourier"), rel=1e-6)
    assert pc.covariance_functional(f, g, np.zeros(2), 1.0) == pytest.approx(
        pc.covariance_functional(g, f, np.zeros(2), 1.0), rel=1e-6)


def test_inverse_operator_round_trip():
    # (Q g, R Q g) = (Q g, g) since R inverts Q
    g = pc.TestForm(2, "gaussian", scale=0.7, coeffs=[1.0, 0.5])
    lam = 1.2
    qg = pc.apply_Q(g, lam)
    lhs = pc.proca_variance_fourier(qg, lam)
    rhs = pc.inner_product(qg, g)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_scaling_identity_two_routes():
    f = pc.TestForm(2, "gaussian", scale=0.5, coeffs=[1.0, 0.5])
    for a, b, lam in ((0.5, [1.0, 1.0], 1.0), (2.0, [0.0, 0.0], 0.5)):
        lhs = pc.proca_variance(pc.translate_scale_form(f, a, np.array(b)), lam, "direct")
        rhs = a**4 * pc.proca_variance(f, a * a * lam, "fourier")
        assert lhs == pytest.approx(rhs, rel=1e-6)


def test_far_gaussian_warns():
    f = pc.TestForm(2, "gaussian", scale=0.5)
    with pytest.warns(RuntimeWarning):
        pc.covariance_functional(f, f, np.array([25.0, 0.0]), 1.0)


# ---------------------------------------------------------------------------
# long-distance prefactor
# ---------------------------------------------------------------------------

def test_psi_even_forms_symmetric_in_u():
    f = pc.TestForm(2, "bump", scale=0.5, coeffs=[0.3, 1.0])
    a = pc.psi_prefactor(f, f, np.array([1.0, 0.0]), 1.0)
    b = pc.psi_prefactor(f, f, np.array([-1.0, 0.0]), 1.0)
    assert np.allclose(a["psi"], b["psi"], rtol=1e-12)
    assert a["bracket"] == pytest.approx(b["bracket"], rel=1e-12)


def test_psi_divergence_free_has_no_div_term():
    f = pc.TestForm(2, "bump", scale=0.5, curl=True)
    g = pc.TestForm(2, "bump", center=[0.2, 0.0], scale=0.4, curl=True)
    assert abs(pc.psi_prefactor(f, g, np.array([0.0, 1.0]), 1.0)["psi_div"]) <= 1e-15


def test_psi_monte_carlo_oracle():
    from scipy.stats import qmc
    f = pc.TestForm(2, "bump", scale=0.5, coeffs=[0.0, 1.0])
    g = pc.TestForm(2, "bump", center=[0.1, 0.0], scale=0.6, coeffs=[0.5, 1.0])
    u = np.array([0.6, 0.8])
    lam = 1.0
    comp = pc.psi_prefactor(f, g, u, lam)["psi"]
    # quasi-Monte Carlo double integral over y in supp f and z in supp g
    s = math.sqrt(lam)
    box = (2 * f.scale) ** 2 * (2 * g.scale) ** 2
    est = []
    for seed in range(4):
        pts = qmc.Sobol(4, scramble=True, seed=seed).random_base2(21)
        y = f.center + (2 * pts[:, :2] - 1) * f.scale
        z = g.center + (2 * pts[:, 2:] - 1) * g.scale
        w = np.exp(-s * (y - z) @ u)[:, None] * f.value(y) * g.value(z) * box
        est.append(w.mean(0))
    mc = np.mean(est, axis=0)
    assert np.allclose(mc, comp, rtol=1e-3, atol=1e-6)


def test_psi_rejects_non_unit_direction():
    f = pc.TestForm(2, "bump", scale=0.5)
    with pytest.raises(InvalidParameterError):
        pc.psi_prefactor(f, f, np.array([1.0, 1.0]), 1.0)
    with pytest.warns(RuntimeWarning):
        pc.psi_prefactor(pc.TestForm(2, "gaussian"), f, np.array([1.0, 0.0]), 1.0)
