"""Quasi-umbilical hypersurfaces congruent to their centre map.

Two explicit families, both power laws in a parameter ``t > 0`` along the
simple-eigenvalue direction:

case A, ``(n+2) l0 + n l1 != 0``::

    f(t, u) = ( -t^(-2 K1) g2(u) / (n2 zeta0),  n1 t^N / (zeta0 N) )

with ``g2`` a proper affine hypersphere (a centred ellipsoid) in ``R^n``;

case B, ``(n+2) l0 + n l1 == 0``::

    f(t, u) = ( t^(-2 K1), t^(-2 K1) u, phi0 t^(-2 K1) (F(u) - (log t + B) / (2 K1)) )

with ``F`` a solution of ``det Hess F = 1``.

The eigenvalues of the shape operator are ``l_i / t^2`` for the gauge in
which ``t`` is the h-arclength along the simple eigendirection.  Given the
dimension and the ratio ``r = l0 / l1`` the constants are forced by
``2 n (l0 + l1) = -(l0 - l1)^2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, fields, replace

import numpy as np

from . import jets as J
from .errors import (
    CalibrationError,
    CaseMismatch,
    ChartError,
    DeterminantError,
    DomainError,
    InvalidInput,
    InvalidRatio,
    NotQuasiUmbilical,
)
from .grid import Axis, GridSpec
from .surfaces import CHART_MARGIN, Surface, _first_bad

CASE_TOL = 1e-12
T_RANGE = (0.5, 2.0, 16)
U_COUNT = 32
# default grids keep t_count * u_count**(n-1) near this many points
DEFAULT_GRID_BUDGET = 4096


@dataclass(frozen=True)
class FamilyParams:
    """Resolved constants of one constructed hypersurface.

    Field names double as the JSON schema.
    """

    n: int
    r: float
    l0: float
    l1: float
    K0: float
    K1: float
    N: float
    zeta0: float
    rho0: float
    n1: float = 1.0
    n2: float = 1.0
    e0: float = 1.0
    phi0: float = 1.0
    B: float = 0.0
    case: str = "A"

    @property
    def constraint_offset(self) -> float:
        """``2 n (l0 + l1) + (l0 - l1)^2``; zero on the family."""
        return 2 * self.n * (self.l0 + self.l1) + (self.l0 - self.l1) ** 2

    @property
    def c1(self) -> float:
        return -1.0 / (self.n2 * self.zeta0)

    @property
    def c2(self) -> float:
        return self.n1 / self.zeta0

    def validate(self) -> "FamilyParams":
        if self.n < 2:
            raise InvalidInput(f"dimension n must be >= 2, got {self.n}")
        if self.r == 1:
            raise InvalidRatio("ratio r = 1 gives a single eigenvalue (not quasi-umbilical)")
        if self.l1 == 0:
            raise InvalidRatio("the multiple eigenvalue l1 must be nonzero")
        if not self.l0 + self.l1 < 0:
            raise NotQuasiUmbilical(f"need l0 + l1 < 0, got {self.l0 + self.l1}")
        if self.case not in ("A", "B"):
            raise InvalidInput(f"case must be 'A' or 'B', got {self.case!r}")
        if self.case == "A":
            if self.N == 0:
                raise NotQuasiUmbilical("exponent N = (n-2) K1 + (n+2) K0 vanishes")
            if self.zeta0 == 0:
                raise CaseMismatch("zeta0 = 0 belongs to case B")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=False)

    @classmethod
    def from_json(cls, data: dict) -> "FamilyParams":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise InvalidInput(f"unknown FamilyParams fields: {', '.join(unknown)}")
        missing = sorted(f.name for f in fields(cls) if f.name not in data and f.default is MISSING)
        if missing:
            raise InvalidInput(f"missing FamilyParams fields: {', '.join(missing)}")
        kw = dict(data)
        kw["n"] = int(kw["n"])
        for key in kw:
            if key not in ("n", "case"):
                kw[key] = float(kw[key])
        return cls(**kw)



def _exponents(r: float) -> tuple[float, float]:
    """``K0 = r/(r-1)`` and ``K1 = 1/(r-1)``, snapped so that ``K0 - K1 == 1`` in floating point."""
    K1 = 1.0 / (r - 1.0)
    K0 = K1 + 1.0
    if K0 - K1 != 1.0:
        # one round trip lands on a pair whose difference is exactly representable
        K1 = K0 - 1.0
        K0 = K1 + 1.0
    return K0, K1


def resolve_params(n: int, r: float, calibration: str = "unit", seed=None) -> FamilyParams:
    """Constants of the family with dimension ``n`` and eigenvalue ratio ``r``.

    Under ``calibration="paper_exact"`` the integration constants are then
    adjusted by :func:`calibrate_constants` against ``seed`` (default seed
    for the case when omitted).
    """
    n = int(n)
    r = float(r)
    if n < 2:
        raise InvalidInput(f"dimension n must be >= 2, got {n}")
    if r == 1.0:
        raise InvalidRatio("ratio r = 1 gives a single eigenvalue (not quasi-umbilical)")
    if r == -1.0:
        raise InvalidRatio("ratio r = -1 forces l1 = 0")
    if calibration not in ("unit", "paper_exact"):
        raise InvalidInput(f"unknown calibration {calibration!r}")
    l1 = -2.0 * n * (r + 1.0) / (r - 1.0) ** 2
    l0 = r * l1
    K0, K1 = _exponents(r)
    N = (n - 2) * K1 + (n + 2) * K0
    zeta0 = (l1 / n) * ((n + 2) * l0 + n * l1) / (l0 + l1)
    # 1/rho = -(1/n) tr S - a0^2 / 2 with tr S = (l0 + (n-1) l1)/t^2, a0^2 = 4/t^2
    inv_rho0 = -(l0 + (n - 1) * l1) / n - 2.0
    if inv_rho0 == 0.0:
        raise NotQuasiUmbilical("support function is unbounded (1/rho0 = 0)")
    rho0 = 1.0 / inv_rho0
    case = "B" if abs(zeta0) <= CASE_TOL * max(1.0, abs(l1)) else "A"
    if case == "B":
        zeta0 = 0.0
    else:
        if N == 0:
            raise NotQuasiUmbilical("exponent N = (n-2) K1 + (n+2) K0 vanishes")
        if abs((n - 1) * K1 + (n + 1) * K0 + 1.0) <= CASE_TOL:
            raise NotQuasiUmbilical("(n-1) K1 + (n+1) K0 = -1 is excluded")
    params = FamilyParams(n=n, r=r, l0=l0, l1=l1, K0=K0, K1=K1, N=N, zeta0=zeta0, rho0=rho0, case=case)
    if calibration == "paper_exact":
        params = calibrate_constants(params, seed if seed is not None else default_seed(params))
    return params


def ratio_for_case_b(n: int) -> float:
    """The unique ratio with ``(n + 2) r + n = 0``."""
    return -n / (n + 2.0)


def perturb_constraint(params: FamilyParams, delta: float) -> FamilyParams:
    """Rescale ``(l0, l1)`` so that ``2n(l0+l1) + (l0-l1)^2 = delta``.

    The ratio and hence ``K0, K1`` are kept.  The vertical exponent is
    recomputed as ``N = 2 - (l0 - l1)/2``, the form it takes before the
    constraint is used to simplify it; on the family both expressions agree,
    off it the surface is a near miss that is still rotationally quasi-umbilical.
    """
    a = (params.l0 - params.l1) ** 2
    b = 2 * params.n * (params.l0 + params.l1)
    disc = b * b + 4 * a * delta
    if disc < 0:
        raise InvalidInput(f"no rescaling reaches constraint offset {delta}")
    roots = [(-b + s * math.sqrt(disc)) / (2 * a) for s in (1.0, -1.0)]
    scale = min(roots, key=lambda x: abs(x - 1.0))
    l0, l1 = params.l0 * scale, params.l1 * scale
    return replace(params, l0=l0, l1=l1, N=2.0 - (l0 - l1) / 2.0)


# -- seeds ----------------------------------------------------------------


def _inv_sqrt_spd(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(Q)
    return (V / np.sqrt(w)) @ V.T


def _check_spd(Q: np.ndarray, name: str) -> None:
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise InvalidInput(f"{name} must be a square matrix")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise InvalidInput(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(Q)) <= 0:
        raise InvalidInput(f"{name} must be positive definite")


class SeedSurface(Surface):
    """An ``(n-1)``-dimensional affine hypersphere used to build a family.

    Kinds
    -----
    ``ellipsoid``
        ``{x : x^T Q x = scale^2}`` in ``R^(dim+1)``: a proper hypersphere
        centred at the origin.  Charts are trigonometric for dim 1,
        spherical angles for dim 2 and hemisphere graphs above.
    ``hyperboloid_branch``
        ``scale * Q^(-1/2)`` applied to the upper sheet ``y_last =
        sqrt(1 + |y'|^2)``.  Experimental.
    ``ma_quadratic_graph``
        Graph of ``F(u) = u^T Q u / 2`` with ``det Q = 1``: an improper
        hypersphere in ``R^(dim+1)``.
    """

    KINDS = ("ellipsoid", "hyperboloid_branch", "ma_quadratic_graph")

    def __init__(self, kind: str, dim: int, Q=None, scale: float = 1.0):
        if kind not in self.KINDS:
            raise InvalidInput(f"unknown seed kind {kind!r}; expected one of {self.KINDS}")
        if dim < 1:
            raise InvalidInput("seed dimension must be >= 1")
        size = dim if kind == "ma_quadratic_graph" else dim + 1
        Q = np.eye(size) if Q is None else np.asarray(Q, dtype=float)
        if Q.shape != (size, size):
            raise InvalidInput(f"seed {kind} of dim {dim} needs a {size}x{size} shape matrix, got {Q.shape}")
        _check_spd(Q, "seed shape matrix")
        if scale <= 0:
            raise InvalidInput("seed scale must be positive")
        if kind == "ma_quadratic_graph" and abs(np.linalg.det(Q) - 1.0) > 1e-12:
            raise DeterminantError(f"Monge-Ampere seed needs det Q = 1, got {np.linalg.det(Q)!r}")
        self.kind = kind
        self.dim = dim
        self.Q = Q
        self.scale = float(scale)
        self.name = kind
        self._L = None if kind == "ma_quadratic_graph" else self.scale * _inv_sqrt_spd(Q)

    # chart on the unit model ------------------------------------------------
    def _model(self, coords):
        k = self.dim
        if self.kind == "ellipsoid":
            if k == 1:
                (s,) = coords
                return [J.cos(s), J.sin(s)]
            if k == 2:
                th, ph = coords
                st = J.sin(th)
                return [st * J.cos(ph), st * J.sin(ph), J.cos(th)]
            sq = sum(c * c for c in coords)
            return list(coords) + [J.sqrt(1.0 - sq)]
        if k == 1:
            (s,) = coords
            return [J.sinh(s), J.cosh(s)]
        sq = sum(c * c for c in coords)
        return list(coords) + [J.sqrt(1.0 + sq)]

    def potential(self, coords):
        """``F(u) = u^T Q u / 2`` (Monge-Ampere seeds only)."""
        k = self.dim
        out = 0.0
        for i in range(k):
            for j in range(k):
                if self.Q[i, j] != 0.0:
                    out = out + coords[i] * coords[j] * (0.5 * self.Q[i, j])
        return out

    def evaluate(self, coords):
        if self.kind == "ma_quadratic_graph":
            return list(coords) + [self.potential(coords)]
        y = self._model(coords)
        out = []
        for i in range(self.dim + 1):
            acc = 0.0
            for j in range(self.dim + 1):
                if self._L[i, j] != 0.0:
                    acc = y[j] * self._L[i, j] + acc
            out.append(acc)
        return out

    def check_domain(self, points):
        points = np.asarray(points, dtype=float)
        if self.kind == "ellipsoid":
            if self.dim == 2:
                th = points[..., 0]
                # grids sit at the full margin; half of it is left for stencils
                bad = (th < CHART_MARGIN / 2) | (th > np.pi - CHART_MARGIN / 2)
                if np.any(bad):
                    raise ChartError("polar angle too close to a pole", _first_bad(points, bad))
            elif self.dim >= 3:
                radius = np.sqrt(np.sum(points**2, axis=-1))
                bad = radius >= np.cos(CHART_MARGIN)
                if np.any(bad):
                    raise ChartError("outside the hemisphere chart", _first_bad(points, bad))

    def default_axes(self, count: int = U_COUNT) -> tuple:
        k = self.dim
        if self.kind == "ellipsoid":
            if k == 1:
                return (Axis(0.0, 2 * np.pi, count, periodic=True),)
            if k == 2:
                return (Axis(CHART_MARGIN, np.pi - CHART_MARGIN, count), Axis(0.0, 2 * np.pi, count, periodic=True))
            return tuple(Axis(-0.5, 0.5, count) for _ in range(k))
        if self.kind == "hyperboloid_branch":
            return tuple(Axis(-1.0, 1.0, count) for _ in range(k))
        return tuple(Axis(-1.0, 1.0, count) for _ in range(k))

    def default_grid(self) -> GridSpec:
        return GridSpec(None, self.default_axes(default_u_count(self.dim)))

    def describe(self) -> dict:
        return {"surface": "seed", "kind": self.kind, "dim": self.dim, "Q": self.Q.tolist(), "scale": self.scale}


def default_u_count(k: int) -> int:
    """Points per chart axis: 32, reduced for ``k >= 2`` to respect the grid budget."""
    if k <= 1:
        return U_COUNT
    per_axis = int(math.floor((DEFAULT_GRID_BUDGET / T_RANGE[2]) ** (1.0 / k) + 1e-9))
    return max(2, min(U_COUNT, per_axis))


def seed_proper_hypersphere(dim: int, Q=None, scale: float = 1.0) -> SeedSurface:
    return SeedSurface("ellipsoid", dim, Q, scale)


def seed_monge_ampere_graph(dim: int, Q=None) -> SeedSurface:
    return SeedSurface("ma_quadratic_graph", dim, Q)


def default_seed(params: FamilyParams) -> SeedSurface:
    if params.case == "A":
        return seed_proper_hypersphere(params.n - 1)
    return seed_monge_ampere_graph(params.n - 1)


SEED_ALIASES = {
    "circle": ("ellipsoid", 1),
    "ellipse": ("ellipsoid", 1),
    "sphere": ("ellipsoid", 2),
    "ellipsoid": ("ellipsoid", None),
    "hyperbola": ("hyperboloid_branch", 1),
    "hyperboloid_branch": ("hyperboloid_branch", None),
    "ma_quadratic_graph": ("ma_quadratic_graph", None),
    "parabola": ("ma_quadratic_graph", 1),
}


def make_seed(name: str, n: int, Q=None, scale: float = 1.0) -> SeedSurface:
    """Seed for an ``n``-dimensional family from a catalog name."""
    if name not in SEED_ALIASES:
        raise InvalidInput(f"unknown seed {name!r}; expected one of {sorted(SEED_ALIASES)}")
    kind, dim = SEED_ALIASES[name]
    if dim is not None and dim != n - 1:
        raise InvalidInput(f"seed {name!r} has dimension {dim}, family needs {n - 1}")
    return SeedSurface(kind, n - 1, Q, scale)


# -- constructed hypersurfaces --------------------------------------------


class FamilySurface(Surface):
    """The hypersurface ``f(t, u)`` of one family member; coordinates ``(t, u_1..u_{n-1})``."""

    def __init__(self, params: FamilyParams, seed: SeedSurface | None = None):
        seed = default_seed(params) if seed is None else seed
        if seed.dim != params.n - 1:
            raise InvalidInput(f"seed dimension {seed.dim} does not match n - 1 = {params.n - 1}")
        if params.case == "B" and getattr(seed, "kind", None) != "ma_quadratic_graph":
            raise CaseMismatch("case B needs a Monge-Ampere seed")
        if params.case == "A" and params.zeta0 == 0:
            raise CaseMismatch("case A needs zeta0 != 0")
        self.params = params
        self.seed = seed
        self.dim = params.n
        self.name = f"family_{params.case.lower()}"

    def check_domain(self, points):
        points = np.asarray(points, dtype=float)
        t = points[..., 0]
        bad = ~(t > 0)
        if np.any(bad):
            raise DomainError("t must be positive", _first_bad(points, bad))
        self.seed.check_domain(points[..., 1:])

    def evaluate(self, coords):
        p = self.params
        t, u = coords[0], list(coords[1:])
        if p.case == "A":
            radial = J.power(t, -2.0 * p.K1) * p.c1
            g2 = self.seed.evaluate(u)
            return [g * radial for g in g2] + [J.power(t, p.N) * (p.c2 / p.N)]
        gamma = J.power(t, -2.0 * p.K1)
        height = self.seed.potential(u) - (J.log(t) + p.B) * (1.0 / (2.0 * p.K1))
        return [gamma] + [gamma * ui for ui in u] + [gamma * height * p.phi0]

    def default_grid(self) -> GridSpec:
        k = self.seed.dim
        return GridSpec(T_RANGE, self.seed.default_axes(default_u_count(k)))

    def describe(self) -> dict:
        return {"surface": self.name, "params": self.params.to_json(), "seed": self.seed.describe()}


def construct_case_a(params: FamilyParams, seed: SeedSurface, points) -> np.ndarray:
    if params.case != "A":
        raise CaseMismatch("construct_case_a needs case-A parameters")
    return FamilySurface(params, seed)(points)


def construct_case_b(params: FamilyParams, seed: SeedSurface, points) -> np.ndarray:
    if params.case != "B":
        raise CaseMismatch("construct_case_b needs case-B parameters")
    return FamilySurface(params, seed)(points)


def evaluate_family_jet(params: FamilyParams, seed: SeedSurface, points, order: int = 5) -> J.JetPoint:
    """Jets of the constructed immersion at ``points`` (shape ``(..., n)``)."""
    return J.evaluate_jet(FamilySurface(params, seed), points, order)


# -- calibration ------------------------------------------------------------


def _reference_point(seed, t_ref: float) -> np.ndarray:
    axes = seed.default_grid().u_spec
    u = [0.5 * (a.lo + a.hi) if not a.periodic else 0.3 for a in axes]
    return np.array([[t_ref] + u])


def _normalization(surface: FamilySurface, point: np.ndarray):
    from .blaschke import eigen_split, extract

    data = extract(surface, point, order=4)
    split = eigen_split(data)
    if not split.valid[0]:
        raise CalibrationError("constructed surface is not quasi-umbilical at the reference point")
    t = point[0, 0]
    return data, split, float(data.h[0, 0, 0]), float(split.lam1[0] * t * t)


def seed_shape_eigenvalue(seed: SeedSurface) -> float:
    """Common eigenvalue of the seed's own shape operator (checked to be umbilic)."""
    from .blaschke import extract

    u = _reference_point(seed, 1.0)[:, 1:]
    data = extract(seed, u, order=4)
    S = data.S[0]
    lam = float(np.trace(S) / seed.dim)
    if np.max(np.abs(S - lam * np.eye(seed.dim))) > 1e-6 * max(1.0, abs(lam)):
        raise CalibrationError("seed is not umbilic; not an affine hypersphere")
    return lam


def calibrate_constants(params: FamilyParams, seed: SeedSurface | None = None, t_ref: float = 1.0) -> FamilyParams:
    """Adjust integration constants so that ``h(d_t, d_t) = 1`` and ``lambda_1 t^2 = l1``.

    Both targets are power laws in the linear scalings of the construction
    (``n1, n2`` in case A, ``phi0`` in case B), so the correction is a
    least-squares solve in log space; the minimum-norm solution keeps an
    already calibrated record fixed.  The warp constant ``e0`` with
    ``h(d_u, d_u) = e0^2 t^2 h_seed(d_u, d_u)`` is recorded for case A.
    """
    seed = default_seed(params) if seed is None else seed
    n = params.n
    k = 2.0 / (n + 2)
    if params.case == "A":
        lam_seed = seed_shape_eigenvalue(seed)
        if abs(lam_seed) < 1e-8:
            raise CalibrationError("seed shape operator vanishes: the seed is not a proper affine hypersphere")
        # unimodular-volume factor of the construction: prod of block scales = n1 * n2^-n
        design = np.array([[k * 1.0, -k * n], [-k * 1.0, k * n]])
    else:
        design = np.array([[k], [-k]])
    surface = FamilySurface(params, seed)
    point = _reference_point(seed, t_ref)
    _, _, h_tt, lam1t2 = _normalization(surface, point)
    if lam1t2 * params.l1 <= 0:
        raise CalibrationError("multiple eigenvalue has the wrong sign for these constants")
    rhs = np.array([-math.log(h_tt), math.log(params.l1 / lam1t2)])
    y, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    if params.case == "A":
        new = replace(params, n1=params.n1 * math.exp(y[0]), n2=params.n2 * math.exp(y[1]))
    else:
        new = replace(params, phi0=params.phi0 * math.exp(y[0]))
    surface = FamilySurface(new, seed)
    data, split, h_tt, lam1t2 = _normalization(surface, point)
    if abs(h_tt - 1.0) > 1e-8 or abs(lam1t2 / new.l1 - 1.0) > 1e-8:
        raise CalibrationError(
            f"calibration did not converge: h(d_t, d_t) = {h_tt!r}, lambda_1 t^2 / l1 = {lam1t2 / new.l1!r}"
        )
    if new.case == "A":
        from .blaschke import extract

        h_seed = extract(seed, point[:, 1:], order=4).h[0, 0, 0]
        e0 = math.sqrt(data.h[0, 1, 1] / (t_ref**2 * h_seed))
        new = replace(new, e0=e0)
    return new
