"""Symbolic oracles for surfaces in R^3, independent of the jet machinery."""

import numpy as np
import pytest
import sympy as sp

from caffine import blaschke as B
from caffine.families import FamilySurface, resolve_params
from caffine.surfaces import Paraboloid, UnitSphere

u, v = sp.symbols("u v", real=True)
COORDS = (u, v)


def blaschke_symbolic(f: sp.Matrix, point):
    """Affine metric, normal, shape operator, support function and centre of ``f(u, v)`` at ``point``.

    Everything up to the affine normal field is symbolic; the final frame
    solves happen after substituting the point, in 30-digit arithmetic.
    """
    at = {u: sp.nsimplify(point[0]), v: sp.nsimplify(point[1])}
    f1, f2 = f.diff(u), f.diff(v)
    second = [[f.diff(a).diff(b) for b in COORDS] for a in COORDS]
    G = sp.Matrix(2, 2, lambda i, j: sp.Matrix.hstack(f1, f2, second[i][j]).det())
    sign = 1 if sp.N(G[0, 0].subs(at)) > 0 else -1
    detG = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    h = sign * G * (sign**2 * detG) ** sp.Rational(-1, 4)
    hinv = sp.Matrix([[h[1, 1], -h[0, 1]], [-h[1, 0], h[0, 0]]]) / (h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0])
    gam = [[[sum(hinv[k, l] * (h[l, i].diff(COORDS[j]) + h[l, j].diff(COORDS[i]) - h[i, j].diff(COORDS[l]))
                 for l in range(2)) / 2 for j in range(2)] for i in range(2)] for k in range(2)]
    T = sp.Matrix.hstack(f1, f2)
    lap = sp.zeros(3, 1)
    for i in range(2):
        for j in range(2):
            lap += hinv[i, j] * (second[i][j] - T * sp.Matrix([gam[0][i][j], gam[1][i][j]]))
    xi = lap / 2

    def ev(e):
        return sp.Matrix(e).subs(at).evalf(30)

    frame = ev(sp.Matrix.hstack(f1, f2, xi))
    S = -(frame.LUsolve(ev(sp.Matrix.hstack(xi.diff(u), xi.diff(v)))))[:2, :]
    sup = frame.LUsolve(ev(f))
    rho = sup[2]
    out = {"h": ev(h), "xi": ev(xi), "S": S, "Z": sup[:2, :], "centre": ev(f) - rho * ev(xi)}
    res = {k: np.array(val.tolist(), dtype=float) for k, val in out.items()}
    res["rho"] = np.array(float(rho))
    return res


@pytest.mark.parametrize("surface, f, point", [
    (Paraboloid(2), sp.Matrix([u, v, (u**2 + v**2) / 2]), (1.0, 0.0)),
    (Paraboloid(2), sp.Matrix([u, v, (u**2 + v**2) / 2]), (0.3, -0.7)),
    (UnitSphere(2), sp.Matrix([u, v, sp.sqrt(1 - u**2 - v**2)]), (0.2, 0.4)),
])
def test_extraction_matches_symbolic(surface, f, point):
    sym = blaschke_symbolic(f, point)
    d = B.extract(surface, np.array([point]), order=4)
    for name in ("h", "xi", "S", "rho", "Z", "centre"):
        np.testing.assert_allclose(np.ravel(getattr(d, name)[0]), sym[name].ravel(), atol=1e-10, err_msg=name)


def test_case_a_family_matches_symbolic():
    p = resolve_params(2, -3.0)
    t, s = u, v
    K1, N = sp.Rational(-1, 4), sp.Integer(3)
    c1, c2 = sp.Rational(-4, 5), sp.Rational(4, 5)
    f = sp.Matrix([c1 * t ** (-2 * K1) * sp.cos(s), c1 * t ** (-2 * K1) * sp.sin(s), c2 / N * t**N])
    point = (1.3, 0.6)
    sym = blaschke_symbolic(f, point)
    d = B.extract(FamilySurface(p), np.array([point]), order=4)
    for name in ("h", "xi", "S", "rho", "centre"):
        np.testing.assert_allclose(np.ravel(getattr(d, name)[0]), sym[name].ravel(), rtol=1e-10, atol=1e-12, err_msg=name)


@pytest.mark.parametrize("point", [(1.0, 0.0), (0.4, 0.9), (-1.5, 0.2)])
def test_paraboloid_centre_is_linear_image(point):
    sym = blaschke_symbolic(sp.Matrix([u, v, (u**2 + v**2) / 2]), point)
    x, y = point
    f = np.array([x, y, (x * x + y * y) / 2])
    np.testing.assert_allclose(sym["rho"], -(x * x + y * y) / 2, rtol=1e-15)
    np.testing.assert_allclose(sym["centre"].ravel(), np.diag([1.0, 1.0, 2.0]) @ f, rtol=1e-15)


def test_paraboloid_cubic_form_equation_at_unit_point():
    # S = 0, h = id and nabla h = 0, so the identity reduces to -2/rho - h(Z*, Z*) = 0
    sym = blaschke_symbolic(sp.Matrix([u, v, (u**2 + v**2) / 2]), (1.0, 0.0))
    np.testing.assert_allclose(sym["S"], 0.0, atol=1e-25)
    np.testing.assert_allclose(sym["h"], np.eye(2), atol=1e-25)
    zstar = sym["Z"].ravel() / sym["rho"]
    assert abs(-2 / sym["rho"] - zstar @ sym["h"] @ zstar) < 1e-14
