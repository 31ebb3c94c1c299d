import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from higgsproca import group_geometry as gg
from higgsproca.errors import InvalidParameterError, PoleError
from higgsproca.lattice import build_lattice
from higgsproca.stats import cap_measure_test

seeds = st.integers(0, 2**32 - 1)


def test_identity_and_basis_products():
    u = gg.haar_random(np.random.default_rng(0), 1)[0]
    assert np.allclose(gg.su2_mul(gg.IDENTITY, u), u)
    i, j, k = np.eye(4)[1], np.eye(4)[2], np.eye(4)[3]
    # oracle: 2x2 complex matrix multiplication
    m = gg.to_matrix(i) @ gg.to_matrix(j)
    assert np.allclose(gg.su2_mul(i, j), gg.from_matrix(m))
    assert np.allclose(gg.su2_mul(i, j), k)


@given(seeds)
def test_quaternion_product_matches_matrix_product(seed):
    a, b = gg.haar_random(np.random.default_rng(seed), 2)
    assert np.allclose(gg.to_matrix(gg.su2_mul(a, b)), gg.to_matrix(a) @ gg.to_matrix(b), atol=1e-12)
    assert np.allclose(gg.su2_mul(a, gg.su2_inv(a)), gg.IDENTITY, atol=1e-12)
    m = gg.to_matrix(a)
    assert np.isclose(np.linalg.det(m), 1.0)
    assert np.allclose(m @ m.conj().T, np.eye(2), atol=1e-12)


def test_value_types():
    a = gg.SU2Element(0.0, 1.0, 0.0, 0.0)
    assert np.allclose((a * a.inverse()).as_array(), gg.IDENTITY)
    with pytest.raises(InvalidParameterError):
        gg.SU2Element(1.0, 1.0, 0.0, 0.0)
    z = gg.U1Element.from_complex(1j)
    assert complex(z * z) == pytest.approx(-1)
    with pytest.raises(InvalidParameterError):
        gg.HiggsSite((1.0, 1.0))
    h = gg.HiggsSite((np.exp(0.3j) / np.sqrt(2), 1 / np.sqrt(2)))
    assert np.isclose(np.linalg.norm(h.as_quaternion()), 1.0)


def test_stereo_examples():
    assert np.allclose(gg.stereo_maps(0.0, 1, inverse=True), [1, 0])
    assert np.allclose(gg.stereo_maps(2.0, 1, inverse=True), [0, 1])
    assert np.allclose(gg.stereo_maps([0.0, 1.0], 1), [2.0])
    x = np.random.default_rng(1).normal(scale=3, size=(1000, 3))
    assert np.max(np.abs(gg.stereo_maps(gg.stereo_maps(x, 3, inverse=True), 3) - x)) <= 1e-12
    with pytest.raises(InvalidParameterError):
        gg.stereo_maps([1.0, 0.0], 2)


def test_pole_error():
    with pytest.raises(PoleError) as exc:
        gg.stereo_project(np.array([[-1.0, 0, 0, 0], [1.0, 0, 0, 0]]))
    assert exc.value.count == 1


def test_logweight_ratio():
    x = np.array([2.0, 0.0, 0.0])
    assert np.exp(gg.stereo_logweight(x, 3) - gg.stereo_logweight(np.zeros(3), 3)) == pytest.approx(1 / 8)


def _rejection_sample(rng, m, n):
    """Oracle sampler: propose from a Cauchy-type law and accept against (4+|x|^2)^-n."""
    out = []
    while sum(len(o) for o in out) < m:
        # proposal: isotropic, radial density proportional to r^(n-1) (4 + r^2)^(-(n+1)/2) * const
        z = rng.standard_normal((4 * m, n))
        chi = np.sqrt(rng.chisquare(1, 4 * m))
        x = 2 * z / chi[:, None]  # multivariate t with 1 dof, scale 2: density ~ (4+|x|^2)^-((n+1)/2)
        ratio = (4 + np.sum(x * x, axis=1)) ** (-(n - 1) / 2) / 4 ** (-(n - 1) / 2)
        out.append(x[rng.random(4 * m) < ratio])
    return np.concatenate(out)[:m]


@pytest.mark.parametrize("n", [1, 3])
def test_t_sampler_matches_rejection_oracle(n):
    rng = np.random.default_rng(5)
    a = gg.sample_stereo_density(rng, 100_000, n)
    b = _rejection_sample(rng, 100_000, n)
    ra, rb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    assert stats.ks_2samp(ra, rb).pvalue > 1e-3


@pytest.mark.parametrize("n", [1, 3])
def test_rejection_oracle_lifts_to_uniform(n):
    rng = np.random.default_rng(11)
    pts = gg.stereo_lift(_rejection_sample(rng, 200_000, n))
    assert cap_measure_test(pts, n)["ks"] <= 0.006


def test_n1_first_coordinate_is_arcsine():
    rng = np.random.default_rng(2)
    u = gg.stereo_lift(gg.sample_stereo_density(rng, 200_000, 1))[:, 0]
    assert stats.kstest(u, stats.arcsine(loc=-1, scale=2).cdf).statistic < 0.006


def test_norm_defect_examples():
    assert gg.norm_defect(gg.IDENTITY) == 0
    assert gg.norm_defect(-gg.IDENTITY, "su2") == pytest.approx(8)
    assert gg.norm_defect(np.array(-1 + 0j), "u1") == pytest.approx(4)


@given(seeds)
def test_norm_defect_is_frobenius(seed):
    q = gg.haar_random(np.random.default_rng(seed), 1)[0]
    assert gg.norm_defect(q) == pytest.approx(np.linalg.norm(np.eye(2) - gg.to_matrix(q)) ** 2)


def test_gauge_fix_examples():
    lat = build_lattice(2, 1, "torus")
    rng = np.random.default_rng(3)
    U = gg.haar_random(rng, lat.n_edges)
    assert np.allclose(gg.gauge_fix(U, np.tile(gg.IDENTITY, (lat.n_vertices, 1)), lat), U)
    # U(1): phi_tail = i, phi_head = 1, U = 1 -> V = -i
    phi = np.ones(lat.n_vertices, dtype=complex)
    e = 0
    phi[lat.edge_tail[e]] = 1j
    V = gg.gauge_fix(np.ones(lat.n_edges, dtype=complex), phi, lat, "u1")
    assert np.allclose(gg.quat_to_u1(V[e]), -1j)


@given(seeds)
def test_gauge_fix_sends_higgs_to_e1(seed):
    lat = build_lattice(2, 1, "torus")
    rng = np.random.default_rng(seed)
    phi = gg.haar_random(rng, lat.n_vertices)
    theta = gg.qconj(phi)
    psi = gg.transform_higgs(theta, phi)
    assert np.allclose(gg.quat_to_higgs(psi), [1, 0], atol=1e-12)


def test_a_field_examples():
    assert np.allclose(gg.a_field(np.tile(gg.IDENTITY, (3, 1)), 0.1), 0)
    th = np.array([0.3, 1e-3])
    A = gg.a_field(np.exp(1j * th), 0.5, "u1")
    assert np.allclose(A, 2 * np.tan(th / 2) / 0.5, rtol=1e-13)
    assert A[1] == pytest.approx(th[1] / 0.5, rel=1e-6)
    r, n = 1e-4, np.array([1.0, 2.0, -2.0]) / 3
    V = np.concatenate([[np.cos(r)], np.sin(r) * n])
    assert np.allclose(gg.a_field(V, 0.2), np.sqrt(2) / 0.2 * r * n, rtol=1e-4)


@given(seeds, st.sampled_from(["su2", "u1"]))
def test_a_field_lift_round_trip(seed, group):
    rng = np.random.default_rng(seed)
    V = gg.haar_random(rng, 50, group)
    V = V[V[:, 0] > -0.99]
    back = gg.lift_a_field(gg.a_field(V, 0.7, group), 0.7, group)
    assert np.allclose(back, V, atol=1e-12)


def test_haar_law_invariant_under_multiplication():
    rng = np.random.default_rng(4)
    a = gg.haar_random(rng, 50_000)
    b = gg.su2_mul(gg.haar_random(rng, 1)[0], gg.haar_random(rng, 50_000))
    assert stats.ks_2samp(a[:, 0], b[:, 0]).pvalue > 1e-3
