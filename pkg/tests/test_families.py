import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caffine import blaschke as B
from caffine.errors import CalibrationError, CaseMismatch, DeterminantError, DomainError, InvalidInput, InvalidRatio
from caffine.families import (
    FamilyParams,
    FamilySurface,
    SeedSurface,
    calibrate_constants,
    construct_case_a,
    construct_case_b,
    make_seed,
    perturb_constraint,
    ratio_for_case_b,
    resolve_params,
    seed_monge_ampere_graph,
    seed_proper_hypersphere,
)
from caffine.surfaces import Paraboloid


def test_resolve_case_a_n2_r_minus3():
    p = resolve_params(2, -3.0)
    assert p.case == "A"
    np.testing.assert_allclose([p.l1, p.l0, p.K0, p.K1, p.N, p.zeta0, p.rho0],
                               [0.5, -1.5, 0.75, -0.25, 3.0, 1.25, -2 / 3], rtol=1e-14)
    assert (p.n1, p.n2, p.e0, p.phi0, p.B) == (1.0, 1.0, 1.0, 1.0, 0.0)
    assert 2 * 2 * (p.l0 + p.l1) == pytest.approx(-(p.l0 - p.l1) ** 2)


def test_resolve_case_b_n2():
    p = resolve_params(2, -0.5)
    assert p.case == "B"
    np.testing.assert_allclose([p.l1, p.l0, p.K0, p.K1], [-8 / 9, 4 / 9, 1 / 3, -2 / 3], rtol=1e-14)
    assert abs(4 * p.K0 + 2 * p.K1) < 1e-15


@pytest.mark.parametrize("r", [1.0, -1.0])
def test_invalid_ratio(r):
    with pytest.raises(InvalidRatio):
        resolve_params(3, r)


def test_invalid_dimension_and_calibration():
    with pytest.raises(InvalidInput):
        resolve_params(1, -3.0)
    with pytest.raises(InvalidInput):
        resolve_params(2, -3.0, calibration="bogus")


def test_case_b_ratio():
    for n in (2, 3, 4):
        r = ratio_for_case_b(n)
        assert (n + 2) * r + n == pytest.approx(0.0, abs=1e-15)
        assert resolve_params(n, r).case == "B"


ratios = st.floats(-20.0, 20.0, allow_nan=False).filter(lambda r: abs(r - 1) > 1e-3 and abs(r + 1) > 1e-3)


@given(st.integers(2, 6), ratios)
def test_resolved_identities(n, r):
    try:
        p = resolve_params(n, r)
    except InvalidInput:
        return
    assert p.K0 - p.K1 == 1.0
    assert p.K0 == pytest.approx(p.l0 / (p.l0 - p.l1), rel=1e-14, abs=1e-15)
    assert abs(p.constraint_offset) <= 1e-9 * max(1.0, p.l0 ** 2 + p.l1 ** 2)
    assert p.l0 / p.l1 == pytest.approx(r, rel=1e-12)
    if p.case == "B":
        assert abs((n + 2) * p.K0 + n * p.K1) < 1e-9


@given(st.integers(2, 5), ratios)
def test_sum_of_eigenvalues_negative(n, r):
    try:
        p = resolve_params(n, r)
    except InvalidInput:
        return
    assert p.l0 + p.l1 < 0


def test_degenerate_support_rejected():
    # n = 2, r = 0 makes 1/rho0 vanish
    with pytest.raises(InvalidInput):
        resolve_params(2, 0.0)


def test_circle_seed_is_unit_curve():
    s = seed_proper_hypersphere(1)
    pts = np.linspace(0, 2 * np.pi, 7)[:, None]
    np.testing.assert_allclose(s(pts), np.c_[np.cos(pts[:, 0]), np.sin(pts[:, 0])], atol=1e-15)
    d = B.extract(s, pts, order=4)
    np.testing.assert_allclose(d.S[:, 0, 0], 1.0, rtol=1e-10)


def test_sphere_seed_normal():
    s = seed_proper_hypersphere(2)
    pts = np.array([[0.5, 0.3], [1.2, 4.0]])
    d = B.extract(s, pts, order=4)
    np.testing.assert_allclose(d.xi, -s(pts), atol=1e-10)


def test_ellipsoid_seed_is_umbilic():
    s = seed_proper_hypersphere(2, Q=np.diag([4.0, 1.0, 1.0]))
    pts = np.array([[th, ph] for th in (0.3, 1.0, 2.5) for ph in (0.0, 1.3, 4.0)])
    d = B.extract(s, pts, order=4)
    lam = d.S[:, 0, 0]
    np.testing.assert_allclose(d.S, lam[:, None, None] * np.eye(2), atol=1e-9)
    assert np.ptp(lam) < 1e-6
    # the ellipsoid is the unit sphere under Q^{-1/2}, of determinant 1/2; S picks up det^{-2/(n+2)} = sqrt(2)
    np.testing.assert_allclose(lam, math.sqrt(2.0), rtol=1e-9)


def test_monge_ampere_seeds():
    s = seed_monge_ampere_graph(1, [[1.0]])
    u = np.array([[0.0], [0.7]])
    np.testing.assert_allclose(s(u)[:, 1], u[:, 0] ** 2 / 2)
    s2 = seed_monge_ampere_graph(2, np.diag([2.0, 0.5]))
    assert np.linalg.det(s2.Q) == pytest.approx(1.0)
    d = B.extract(s2, np.array([[0.2, -0.4]]), order=4)
    assert np.max(np.abs(d.S)) < 1e-9
    with pytest.raises(DeterminantError):
        seed_monge_ampere_graph(2, np.diag([2.0, 1.0]))


def test_seed_kind_and_shape_validation():
    with pytest.raises(InvalidInput):
        SeedSurface("torus", 1)
    with pytest.raises(InvalidInput):
        SeedSurface("ellipsoid", 2, Q=np.eye(2))
    with pytest.raises(InvalidInput):
        SeedSurface("ellipsoid", 1, Q=-np.eye(2))


def test_construct_case_a_at_unit_time():
    p = resolve_params(2, -3.0)
    assert p.c1 == pytest.approx(-0.8) and p.c2 == pytest.approx(0.8)
    f = construct_case_a(p, make_seed("circle", 2), np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(f[0], [-0.8, 0.0, 4 / 15], rtol=1e-14)


@given(st.floats(0.0, 2 * math.pi))
def test_case_a_unit_time_is_scaled_seed(s):
    p = resolve_params(2, -3.0)
    seed = make_seed("circle", 2)
    f = construct_case_a(p, seed, np.array([[1.0, s]]))
    np.testing.assert_allclose(f[0, :2], p.c1 * seed(np.array([[s]]))[0], atol=1e-15)


def test_construct_case_b_examples():
    p = resolve_params(2, -0.5)
    seed = make_seed("parabola", 2)
    f = construct_case_b(p, seed, np.array([[1.0, 0.0], [1.0, 2.0], [math.e, 0.0]]))
    e43 = math.exp(4 / 3)
    np.testing.assert_allclose(f, [[1, 0, 0], [1, 2, 2], [e43, 0, 0.75 * e43]], rtol=1e-13, atol=1e-15)


def test_case_mismatch():
    with pytest.raises(CaseMismatch):
        construct_case_a(resolve_params(2, -0.5), make_seed("parabola", 2), np.array([[1.0, 0.0]]))
    with pytest.raises(CaseMismatch):
        construct_case_b(resolve_params(2, -3.0), make_seed("circle", 2), np.array([[1.0, 0.0]]))
    with pytest.raises(CaseMismatch):
        FamilySurface(resolve_params(2, -0.5), make_seed("circle", 2))


def test_nonpositive_time_rejected():
    f = FamilySurface(resolve_params(2, -3.0))
    with pytest.raises(DomainError):
        f(np.array([[0.0, 0.1]]))


def test_calibration_normalizes_time():
    p = resolve_params(2, -3.0)
    seed = make_seed("circle", 2)
    cal = calibrate_constants(p, seed)
    d = B.extract(FamilySurface(cal, seed), np.array([[t, 0.7] for t in (0.5, 1.0, 2.0)]), order=4)
    np.testing.assert_allclose(d.h[:, 0, 0], 1.0, atol=1e-8)
    split = B.eigen_split(d)
    np.testing.assert_allclose(split.a0 * d.points[:, 0], -2.0, rtol=1e-8)
    np.testing.assert_allclose(split.lam1 * d.points[:, 0] ** 2, cal.l1, rtol=1e-8)
    np.testing.assert_allclose(d.rho / d.points[:, 0] ** 2, cal.rho0, rtol=1e-8)


@pytest.mark.parametrize("n, r", [(2, -3.0), (3, -2.0), (2, -0.5), (3, -0.6)])
def test_calibration_is_idempotent(n, r):
    cal = resolve_params(n, r, calibration="paper_exact")
    again = calibrate_constants(cal)
    for name in ("n1", "n2", "e0", "phi0"):
        assert getattr(again, name) == pytest.approx(getattr(cal, name), rel=1e-10, abs=1e-10)


def test_paraboloid_seed_rejected():
    with pytest.raises(CalibrationError):
        calibrate_constants(resolve_params(2, -3.0), Paraboloid(1))


def test_params_json_round_trip():
    p = resolve_params(3, -2.0, calibration="paper_exact")
    text = p.dumps()
    assert FamilyParams.from_json(json.loads(text)) == p
    doc = json.loads(text)
    assert list(doc) == ["n", "r", "l0", "l1", "K0", "K1", "N", "zeta0", "rho0", "n1", "n2", "e0", "phi0", "B", "case"]
    with pytest.raises(InvalidInput):
        FamilyParams.from_json({**doc, "extra": 1})
    doc.pop("zeta0")
    with pytest.raises(InvalidInput):
        FamilyParams.from_json(doc)


@given(st.floats(0.5, 3.0), st.floats(0.6, 1.8), st.floats(0.0, 6.0))
def test_scaling_coherence_case_a(sigma, t, s):
    p = resolve_params(2, -3.0)
    f = FamilySurface(p)
    D = np.diag([sigma ** (-2 * p.K1)] * 2 + [sigma ** p.N])
    np.testing.assert_allclose(f(np.array([[sigma * t, s]]))[0], D @ f(np.array([[t, s]]))[0], rtol=1e-9, atol=1e-12)


@given(st.floats(0.5, 3.0), st.floats(0.6, 1.8), st.floats(-1.0, 1.0))
def test_scaling_coherence_case_b(sigma, t, u):
    p = resolve_params(2, -0.5)
    f = FamilySurface(p)
    M = np.eye(3)
    M[2, 0] = -p.phi0 * math.log(sigma) / (2 * p.K1)
    M *= sigma ** (-2 * p.K1)
    np.testing.assert_allclose(f(np.array([[sigma * t, u]]))[0], M @ f(np.array([[t, u]]))[0], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("n, r", [(2, -5.0), (3, -3.0), (4, -2.0)])
def test_paper_exact_spectrum_scaling(n, r):
    p = resolve_params(n, r, calibration="paper_exact")
    f = FamilySurface(p)
    pts = f.default_grid().points()[::37]
    split = B.eigen_split(B.extract(f, pts, order=4))
    assert np.all(split.valid)
    t2 = pts[:, 0] ** 2
    np.testing.assert_allclose(split.lam0 * t2, p.l0, rtol=1e-5)
    np.testing.assert_allclose(split.lam1 * t2, p.l1, rtol=1e-5)
    assert [len(c) if not isinstance(c, int) else c for c in split.clusters[0]] in ([1, n - 1], [n - 1, 1])


@pytest.mark.parametrize("n", [2, 3])
def test_case_b_locus(n):
    p = resolve_params(n, ratio_for_case_b(n))
    f = FamilySurface(p)
    pts = f.default_grid().points()[::29]
    split = B.eigen_split(B.extract(f, pts, order=4))
    resid = (n + 2) * split.lam0 + n * split.lam1
    assert np.max(np.abs(resid) / np.abs(split.lam1)) < 1e-5


def test_perturbation_offsets_constraint():
    p = resolve_params(2, -3.0)
    q = perturb_constraint(p, 0.1)
    assert q.constraint_offset == pytest.approx(0.1, rel=1e-12)
    assert q.l0 / q.l1 == pytest.approx(p.r)
    assert q.K0 - q.K1 == pytest.approx(1.0)
