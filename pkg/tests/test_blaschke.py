import numpy as np
import pytest
from hypothesis import given, strategies as st

from caffine import blaschke as B
from caffine import jets as J
from caffine.errors import ChartError, DegenerateError, IndefiniteMetricError, SupportZeroError
from caffine.families import FamilySurface, make_seed, resolve_params
from caffine.surfaces import LinearImage, Paraboloid, Plane, Surface, UnitSphere

from conftest import random_unimodular


class Saddle(Surface):
    name = "saddle"
    dim = 2

    def evaluate(self, coords):
        u, v = coords
        return [u, v, (u * u - v * v) * 0.5]


def family_a(n=2, r=-3.0):
    p = resolve_params(n, r)
    return FamilySurface(p, make_seed({2: "circle", 3: "sphere"}.get(n, "ellipsoid"), n))


def test_paraboloid_at_origin_and_everywhere():
    d = B.extract(Paraboloid(2), np.array([[0.0, 0.0], [0.4, -0.7], [1.0, 0.0]]), order=5)
    np.testing.assert_allclose(d.h, np.broadcast_to(np.eye(2), (3, 2, 2)), atol=1e-12)
    np.testing.assert_allclose(d.xi, np.broadcast_to([0, 0, 1], (3, 3)), atol=1e-12)
    assert np.max(np.abs(d.S)) < 1e-9
    assert np.max(np.abs(d.gamma)) < 1e-12 and np.max(np.abs(d.gamma_hat)) < 1e-12
    assert np.max(np.abs(d.K)) < 1e-12
    np.testing.assert_allclose(d.rho[2], -0.5, atol=1e-12)
    np.testing.assert_allclose(d.Z[2], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(d.centre[2], [1.0, 0.0, 1.0], atol=1e-12)
    with pytest.raises(SupportZeroError):
        d.Zstar


def test_unit_sphere_oracles():
    pts = np.array([[0.0, 0.0], [0.3, -0.2], [-0.5, 0.4]])
    d = B.extract(UnitSphere(2), pts, order=5)
    np.testing.assert_allclose(d.h[0], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(d.xi, -d.position, atol=1e-12)
    np.testing.assert_allclose(d.S, np.broadcast_to(np.eye(2), d.S.shape), atol=1e-9)
    np.testing.assert_allclose(d.rho, -1.0, atol=1e-9)
    np.testing.assert_allclose(d.Z, 0.0, atol=1e-9)
    np.testing.assert_allclose(d.centre, 0.0, atol=1e-9)
    assert np.max(np.abs(d.K)) < 1e-8
    assert np.max(np.abs(d.dS)) < 1e-7


def test_sphere_metric_at_pole_matches_closed_form():
    # on the graph chart h = (I + u u^T / (1 - |u|^2)) / sqrt(1 - |u|^2) up to the conformal factor;
    # at a general point it equals the round metric because the sphere is an affine hypersphere
    u = np.array([0.3, -0.2])
    d = B.extract(UnitSphere(2), u[None], order=4)
    w = 1 - u @ u
    round_metric = np.eye(2) + np.outer(u, u) / w
    np.testing.assert_allclose(d.h[0], round_metric, rtol=1e-12)


def test_plane_is_degenerate():
    with pytest.raises(DegenerateError):
        B.extract(Plane(2), np.array([[0.1, 0.2]]))


def test_saddle_is_indefinite():
    with pytest.raises(IndefiniteMetricError):
        B.extract(Saddle(), np.array([[0.1, 0.2]]))


def test_chart_error_reports_point():
    with pytest.raises(ChartError) as info:
        B.extract(UnitSphere(2), np.array([[0.0, 0.0], [0.99, 0.1]]))
    np.testing.assert_allclose(info.value.point, [0.99, 0.1])


@pytest.mark.parametrize("surface, pts", [
    (Paraboloid(3), np.array([[0.3, 0.5, -0.2], [0.7, -0.1, 0.4]])),
    (UnitSphere(3), np.array([[0.1, 0.2, 0.3]])),
    (family_a(2), np.array([[0.7, 0.4], [1.6, 2.5]])),
    (family_a(3), np.array([[1.1, 0.8, 0.5]])),
])
def test_structure_invariants(surface, pts):
    d = B.extract(surface, pts, order=5)
    n = d.n
    # volume normalization against an independent determinant
    dets = np.linalg.det(d.frame)
    np.testing.assert_allclose(dets ** 2, np.linalg.det(d.h), rtol=1e-9)
    # apolarity
    assert np.max(np.abs(np.einsum("pkik->pi", d.K))) < 1e-7
    # h-self-adjointness of S
    hS = np.einsum("pik,pkj->pij", d.h, d.S)
    assert np.max(np.abs(hS - np.swapaxes(hS, -1, -2))) < 1e-7
    # closure: normal coefficient of f_ij is h_ij
    assert np.max(np.abs(d.closure)) < 1e-8
    # decomposition of f_ij in the frame reproduces the Gauss formula
    coeffs = np.linalg.solve(d.frame, d.second.reshape(len(pts), n + 1, n * n)).reshape(len(pts), n + 1, n, n)
    np.testing.assert_allclose(coeffs[:, :n], d.gamma, atol=1e-9)
    np.testing.assert_allclose(coeffs[:, n], d.h, atol=1e-9)
    # Weingarten: D xi has no transversal part
    assert np.max(np.abs(d.xi_residual)) < 1e-7
    # total symmetry of nabla h
    C = d.cubic_form
    for perm in [(0, 2, 1), (1, 0, 2), (2, 1, 0)]:
        assert np.max(np.abs(C - np.transpose(C, (0,) + tuple(p + 1 for p in perm)))) < 1e-5


def test_affine_normal_is_scaled_laplacian():
    surf = family_a(2)
    pts = np.array([[1.2, 0.7]])
    d = B.extract(surf, pts, order=4)
    # (1/n) Delta_h f = (1/n) h^{ij} (f_ij - Gamma_hat^k_ij f_k)
    lap = np.einsum("pij,paij->pa", d.h_inv, d.second) - np.einsum("pij,pkij,pak->pa", d.h_inv, d.gamma_hat, d.tangent)
    np.testing.assert_allclose(d.xi, lap / 2, atol=1e-10)


def test_family_shape_ratio():
    surf = family_a(2)
    d = B.extract(surf, np.array([[1.0, 0.0], [1.0, 1.3]]), order=4)
    split = B.eigen_split(d)
    assert np.all(split.valid)
    np.testing.assert_allclose(split.lam0 / split.lam1, -3.0, atol=1e-6)


def test_family_difference_tensor_block():
    p = resolve_params(2, -3.0)
    surf = family_a(2)
    d = B.extract(surf, np.array([[1.0, 0.4], [1.5, 2.0]]), order=4)
    split = B.eigen_split(d)
    E = split.frame
    KX0 = np.einsum("pkij,pi->pkj", d.K, split.X0)
    Kf = np.linalg.solve(E, np.einsum("pkj,pjm->pkm", KX0, E))
    c = split.a0 * (p.K0 + p.K1)
    np.testing.assert_allclose(Kf[:, 0, 0], -(2 - 1) / 2 * c, atol=1e-6)
    np.testing.assert_allclose(Kf[:, 1, 1], c / 2, atol=1e-6)
    assert np.max(np.abs(Kf[:, 0, 1])) < 1e-6 and np.max(np.abs(Kf[:, 1, 0])) < 1e-6
    # unit calibration leaves t unnormalized: a0 = -2 / (arc length parameter)
    np.testing.assert_allclose(split.a0 * d.points[:, 0] * np.sqrt(d.h[:, 0, 0]), -2.0, rtol=1e-9)


def test_equivariance_under_unimodular_map(rng):
    surf = family_a(2)
    pts = np.array([[0.8, 0.3], [1.7, 4.0]])
    M = random_unimodular(rng, 3)
    b = rng.standard_normal(3)
    img = LinearImage(surf, M, b)
    d0 = B.extract(surf, pts, order=4)
    # a translation moves the support decomposition; compare against the
    # linear image for rho and centre and against the affine image for the rest
    d1 = B.extract(img, pts, order=4)
    d2 = B.extract(LinearImage(surf, M), pts, order=4)
    np.testing.assert_allclose(d1.h, d0.h, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(d1.S).real), np.sort(np.linalg.eigvals(d0.S).real), rtol=1e-7)
    np.testing.assert_allclose(d1.xi, d0.xi @ M.T, atol=1e-7)
    np.testing.assert_allclose(d2.rho, d0.rho, rtol=1e-7)
    np.testing.assert_allclose(d2.centre, d0.centre @ M.T, atol=1e-7)


@given(st.floats(0.6, 1.9), st.floats(-3.0, 3.0))
def test_dS_jets_match_field_differences(t, u):
    surf = family_a(2)
    pts = np.array([[t, u]])
    d = B.extract(surf, pts, order=5)
    fd = B.field_derivatives(surf, pts, data=d)
    scale = np.max(np.abs(d.S))
    assert np.max(np.abs(d.dS - fd.dS)) <= 1e-5 * scale


def test_jet_field_derivatives_match_stencils():
    surf = family_a(3)
    pts = np.array([[0.9, 0.8, 0.5], [1.4, 1.2, 2.0]])
    d = B.extract(surf, pts, order=5)
    split = B.eigen_split(d)
    jd = B.jet_field_derivatives(d, split)
    fd = B.field_derivatives(surf, pts, data=d)
    for name in ("dS", "drho", "dZstar", "da0", "dX0", "dxi", "dg1", "dphi", "nabla_h_zstar"):
        a, b = getattr(jd, name), getattr(fd, name)
        assert np.max(np.abs(a - b)) <= 1e-6 * max(1.0, np.max(np.abs(a))), name


def test_cluster_sizes():
    assert B.cluster_sizes(np.array([1.0, 1.0 + 1e-9, -3.0])) == [1, 2]
    assert B.cluster_sizes(np.array([1.0, 1.0, 1.0])) == [3]


def test_sphere_split_is_invalid():
    d = B.extract(UnitSphere(3), np.array([[0.1, 0.1, 0.1]]))
    assert not np.any(B.eigen_split(d).valid)


def test_fallback_matches_analytic():
    surf = family_a(2)
    pts = np.array([[0.9, 0.5], [1.6, 2.2]])
    a = B.extract(surf, pts, order=4)
    f = B.extract(surf, pts, mode="fallback")
    for name in ("h", "xi", "S", "gamma", "K", "rho", "Z", "centre"):
        x, y = getattr(a, name), getattr(f, name)
        assert np.max(np.abs(x - y)) <= 1e-4 * max(1.0, np.max(np.abs(x))), name


def test_single_stage_helpers_agree_with_extract():
    surf = family_a(2)
    pts = np.array([[1.1, 0.2]])
    jp = J.evaluate_jet(surf, pts, 4)
    d = B.blaschke_data(jp)
    h, _ = B.affine_metric(jp)
    np.testing.assert_allclose(B.affine_normal(jp), d.xi)
    np.testing.assert_allclose(B.shape_operator(jp), d.S)
    np.testing.assert_allclose(h, d.h)
