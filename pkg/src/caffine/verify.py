"""Numeric verification of the congruence theory on sample grids.

Each check turns one identity into a pointwise residual, normalized by the
magnitude of the terms taking part, and reports the maximum over the grid
together with the grid point where it occurs (first in enumeration order on
ties).  Checks never raise on a failed identity; extraction errors propagate.

Residual scales use an intrinsic curvature size
``kappa = max(|1/rho|, |S|, h(Z*, Z*))`` as a floor, so that terms which
vanish identically (the unit sphere has ``Z* = 0``) do not turn rounding
noise into O(1) residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .blaschke import (
    FALLBACK_FIELD_STEP,
    BlaschkeData,
    EigenSplit,
    FieldDerivatives,
    aux_fields,
    eigen_split,
    extract,
    field_derivatives,
    jet_field_derivatives,
)
from .errors import InvalidInput, RankError
from .families import FamilyParams, FamilySurface
from .grid import GridSpec

# margin-type checks report threshold / margin against a tolerance of 1
CENTROAFFINE_MARGIN = 1e-6
INVERTIBILITY_MARGIN = 1e-8
ANALYTIC_ORDER = 5


@dataclass(frozen=True)
class Tolerances:
    analytic: float = 1e-6
    fallback: float = 1e-4
    fit_residual: float = 1e-6
    entries: float = 1e-5

    def __post_init__(self):
        for name in ("analytic", "fallback", "fit_residual", "entries"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidInput(f"tolerance {name} must be positive, got {value!r}")

    def for_mode(self, mode: str) -> float:
        return self.fallback if mode == "fallback" else self.analytic

    def to_json(self) -> dict:
        return {"analytic": self.analytic, "fallback": self.fallback, "fit_residual": self.fit_residual, "entries": self.entries}


@dataclass
class CheckItem:
    """One verified identity.

    ``status`` is ``"pass"``, ``"fail"`` or ``"not_applicable"``; the last
    carries no residual and never passes.
    """

    name: str
    paper_anchor: str
    max_residual: float | None
    tolerance: float
    passed: bool
    worst_point: tuple | None
    status: str

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "paper_anchor": self.paper_anchor,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "worst_point": None if self.worst_point is None else list(self.worst_point),
            "status": self.status,
        }


@dataclass
class CheckReport:
    params: FamilyParams | dict | None
    grid: GridSpec
    items: list[CheckItem] = field(default_factory=list)

    @property
    def overall_pass(self) -> bool:
        return bool(self.items) and all(item.passed for item in self.items)

    def item(self, name: str) -> CheckItem:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    def to_json(self) -> dict:
        params = self.params.to_json() if isinstance(self.params, FamilyParams) else self.params
        return {
            "params": params,
            "grid": self.grid.to_json(),
            "items": [it.to_json() for it in self.items],
            "overall_pass": self.overall_pass,
        }

    def dumps(self) -> str:
        return dumps(self.to_json())


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and stable key order."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(inner) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        inner = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(inner) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- shared evaluation ------------------------------------------------------


class Evaluation:
    """Blaschke data, spectral split and field derivatives on one grid.

    Checks accept an :class:`Evaluation` in place of a surface so that the
    suite extracts everything once.  In analytic mode field derivatives come
    from order-5 jets by default; ``derivatives="differences"`` instead
    differences the extracted fields on stencils.  Fallback mode always
    differences.
    """

    def __init__(self, surface, grid: GridSpec | None = None, mode: str = "analytic", points=None, workers=None,
                 derivatives: str = "jets"):
        if mode not in ("analytic", "fallback"):
            raise InvalidInput(f"unknown differentiation mode {mode!r}")
        if derivatives not in ("jets", "differences"):
            raise InvalidInput(f"unknown field-derivative method {derivatives!r}")
        self.derivatives = derivatives
        self.surface = surface
        self.grid = surface.default_grid() if grid is None and points is None else grid
        self.mode = mode
        self.workers = workers
        if points is None:
            self.points = self.grid.points().reshape(-1, surface.dim)
        else:
            self.points = np.atleast_2d(np.asarray(points, dtype=float))

    @property
    def n(self) -> int:
        return self.surface.dim

    @property
    def params(self) -> FamilyParams | None:
        return getattr(self.surface, "params", None)

    @property
    def on_product_grid(self) -> bool:
        """True when the points enumerate a grid with a leading ``t`` axis."""
        return self.grid is not None and self.grid.t_range is not None and len(self.points) == self.grid.size

    @cached_property
    def data(self) -> BlaschkeData:
        if self.mode == "analytic":
            return extract(self.surface, self.points, order=ANALYTIC_ORDER, workers=self.workers)
        return extract(self.surface, self.points, mode="fallback", workers=self.workers)

    @cached_property
    def split(self) -> EigenSplit:
        return eigen_split(self.data)

    @cached_property
    def derivs(self) -> FieldDerivatives:
        if self.mode == "analytic":
            if self.derivatives == "jets":
                return jet_field_derivatives(self.data, self.split)
            return field_derivatives(self.surface, self.points, data=self.data, workers=self.workers)
        return field_derivatives(self.surface, self.points, data=self.data, step=FALLBACK_FIELD_STEP,
                                 mode="fallback", workers=self.workers)

    @cached_property
    def zstar(self) -> np.ndarray:
        return self.data.Zstar

    @cached_property
    def kappa(self) -> np.ndarray:
        d = self.data
        spec = np.max(np.abs(self.split.eigenvalues), axis=-1)
        zz = np.einsum("pi,pij,pj->p", self.zstar, d.h, self.zstar)
        return np.maximum.reduce([np.abs(1.0 / d.rho), spec, np.abs(zz)])

    @cached_property
    def aux(self) -> dict:
        return aux_fields(self.data, self.split)

    @property
    def spectrum_valid(self) -> bool:
        return bool(np.all(self.split.valid))

    def grid_view(self, arr: np.ndarray) -> np.ndarray:
        """Reshape a point-indexed array onto the grid axes."""
        return arr.reshape(self.grid.shape + arr.shape[1:])


def _evaluation(target, grid=None, mode="analytic") -> Evaluation:
    if isinstance(target, Evaluation):
        return target
    if isinstance(target, FamilyParams):
        target = FamilySurface(target)
    return Evaluation(target, grid, mode)


def _tol(tol: Tolerances | None) -> Tolerances:
    return Tolerances() if tol is None else tol


def _item(name: str, anchor: str, residual: np.ndarray, tol: float, ev: Evaluation) -> CheckItem:
    residual = np.asarray(residual, dtype=float)
    residual = np.where(np.isnan(residual), np.inf, residual)
    k = int(np.argmax(residual))
    worst = float(residual[k])
    point = tuple(float(x) for x in ev.points[k])
    passed = bool(worst <= tol)
    return CheckItem(name, anchor, worst, tol, passed, point, "pass" if passed else "fail")


def _not_applicable(name: str, anchor: str, tol: float) -> CheckItem:
    return CheckItem(name, anchor, None, tol, False, None, "not_applicable")


def _rel(diff, *terms, floor=None):
    """``|diff| / max(|terms|..., floor)`` with norms taken over trailing axes already."""
    parts = [np.abs(t) for t in terms] + ([] if floor is None else [np.broadcast_to(floor, np.shape(diff))])
    denom = np.maximum.reduce(parts)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(diff) / denom
    return np.where(np.abs(diff) == 0, 0.0, out)


def _hnorm(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    """h-length of coordinate vectors ``v[..., a, ...]`` with ``a`` on axis 1."""
    return np.sqrt(np.abs(np.einsum("pa...,pab,pb...->p...", v, h, v)))


# -- checks ------------------------------------------------------------------


def check_blaschke_invariants(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """Apolarity, volume normalization, self-adjointness of ``S`` and structure closure."""
    ev = _evaluation(target, grid, mode)
    t = _tol(tol).for_mode(ev.mode)
    d = ev.data
    n = ev.n
    hii = np.einsum("pii->pi", d.h)
    root_k = np.sqrt(ev.kappa)

    traces = np.einsum("pikj->pk", d.K[:, :, :, :] * np.eye(n)[None, :, None, :])
    largest = np.max(np.abs(np.einsum("pikj->pkj", d.K * np.eye(n)[None, :, None, :])), axis=-1)
    apol = np.max(_rel(traces, largest, floor=root_k[:, None] * np.sqrt(hii)), axis=-1)

    vol = np.abs(np.linalg.det(d.frame) ** 2 / np.linalg.det(d.h) - 1.0)

    B = d.h @ d.S
    asym = np.max(np.abs(B - np.swapaxes(B, -1, -2)), axis=(-2, -1))
    selfadj = _rel(asym, np.max(np.abs(B), axis=(-2, -1)), floor=ev.kappa * np.max(np.abs(d.h), axis=(-2, -1)))

    closure = np.max(np.abs(d.closure), axis=(-2, -1)) / np.max(np.abs(d.h), axis=(-2, -1))
    normal = np.max(_rel(d.xi_residual, floor=root_k[:, None] * np.sqrt(hii)), axis=-1)

    return [
        _item("apolarity", "tr K_X = 0", apol, t, ev),
        _item("volume_normalization", "det(f_*, xi)^2 = det h", vol, t, ev),
        _item("shape_operator_self_adjoint", "h(SX, Y) = h(X, SY)", selfadj, t, ev),
        _item("structure_closure", "D_X f_*Y = f_* nabla_X Y + h(X,Y) xi, D_X xi = -f_* SX", np.maximum(closure, normal), t, ev),
    ]


def check_fv_system(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """The four equations characterizing congruence with the centre map."""
    ev = _evaluation(target, grid, mode)
    t = _tol(tol).for_mode(ev.mode)
    d, D = ev.data, ev.derivs
    n, h, S, G = ev.n, d.h, d.S, d.gamma
    rho, zs, kappa = d.rho, ev.zstar, ev.kappa
    hii = np.einsum("pii->pi", h)
    hz = np.einsum("pij,pj->pi", h, zs)  # h(d_i, Z*)
    scale_ij = np.sqrt(hii[:, :, None] * hii[:, None, :])

    # X(rho) = -rho h(X, Z*)
    lhs1 = D.drho
    rhs1 = -rho[:, None] * hz
    r1 = np.max(_rel(lhs1 - rhs1, lhs1, rhs1, floor=np.abs(rho)[:, None] * np.sqrt(kappa[:, None] * hii)), axis=-1)

    # (nabla_X S)Y = h(X,Z*) SY + h(Y,Z*) SX - h(X,Y) SZ*, as [p, a, i, b]
    dS = np.moveaxis(D.dS, -1, 2)  # [p, a, k, b] = d_k S^a_b
    nablaS = dS + np.einsum("paic,pcb->paib", G, S) - np.einsum("pac,pcib->paib", S, G)
    t2 = hz[:, None, :, None] * S[:, :, None, :]
    t3 = hz[:, None, None, :] * S[:, :, :, None]
    SZ = np.einsum("pab,pb->pa", S, zs)
    t4 = h[:, None, :, :] * SZ[:, :, None, None]
    diff2 = nablaS - t2 - t3 + t4
    norms2 = [_hnorm(x, h) for x in (diff2, nablaS, t2, t3, t4)]
    r2 = np.max(_rel(norms2[0], *norms2[1:], floor=kappa[:, None, None] ** 1.5 * scale_ij), axis=(-2, -1))

    # (nabla h)(X, Y, Z*) = -2 h(X,Y)/rho - 2 h(X, SY) - h(X,Y) h(Z*, Z*)
    lhs3 = D.nabla_h_zstar
    a3 = -2.0 * h / rho[:, None, None]
    b3 = -2.0 * h @ S
    zz = np.einsum("pi,pi->p", hz, zs)
    c3 = -h * zz[:, None, None]
    r3 = np.max(_rel(lhs3 - a3 - b3 - c3, lhs3, a3, b3, c3, floor=kappa[:, None, None] * scale_ij), axis=(-2, -1))

    # nabla_X Z* = h(X,Z*) Z* + X/rho + SX, as [p, a, i]
    nablaZ = D.dZstar + np.einsum("paib,pb->pai", G, zs)
    u4 = hz[:, None, :] * zs[:, :, None]
    v4 = np.eye(n)[None] / rho[:, None, None]
    w4 = S
    diff4 = nablaZ - u4 - v4 - w4
    norms4 = [_hnorm(x, h) for x in (diff4, nablaZ, u4, v4, w4)]
    r4 = np.max(_rel(norms4[0], *norms4[1:], floor=kappa[:, None] * np.sqrt(hii)), axis=-1)

    return [
        _item("fv_support_gradient", "X(rho) = -rho h(X,Z*)", r1, t, ev),
        _item("fv_shape_codazzi", "(nabla_X S)Y = h(X,Z*)SY + h(Y,Z*)SX - h(X,Y)SZ*", r2, t, ev),
        _item("fv_cubic_form", "(nabla h)(X,Y,Z*) = -2 rho^-1 h(X,Y) - 2h(X,SY) - h(X,Y)h(Z*,Z*)", r3, t, ev),
        _item("fv_zstar_derivative", "nabla_X Z* = h(X,Z*)Z* + rho^-1 X + SX", r4, t, ev),
    ]


def check_spectrum(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """Quasi-umbilical split with constant eigenvalue ratio.

    Structural failures (wrong multiplicities, ``lambda_1 = 0``,
    ``lambda_0 + lambda_1 >= 0``) count as residual 1.
    """
    ev = _evaluation(target, grid, mode)
    t = _tol(tol).for_mode(ev.mode)
    sp = ev.split
    lam0, lam1 = sp.lam0, sp.lam1
    radius = np.max(np.abs(sp.eigenvalues), axis=-1)
    structural = ~sp.valid | (np.abs(lam1) <= 1e-4 * radius) | ~(lam0 + lam1 < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = lam0 / lam1
    ok = ~structural
    if np.any(ok):
        ref = np.median(ratio[ok])
        res = np.where(ok, np.abs(ratio - ref) / abs(ref), 1.0)
    else:
        res = np.ones(len(lam0))
    items = [_item("spectrum_quasi_umbilical", "two eigenvalues, multiplicities {1, n-1}, lambda_0 + lambda_1 < 0, lambda_0/lambda_1 constant", res, t, ev)]
    params = ev.params
    if params is not None and params.case == "B":
        n = ev.n
        locus = _rel((n + 2) * lam0 + n * lam1, (n + 2) * lam0, n * lam1)
        items.append(_item("spectrum_case_b_locus", "(n+2) lambda_0 + n lambda_1 = 0", np.where(ok, locus, 1.0), t, ev))
    return items


def check_eigen_relations(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """Identities among ``rho``, ``lambda_j`` and ``a_0`` along the simple eigendirection."""
    ev = _evaluation(target, grid, mode)
    t = _tol(tol).for_mode(ev.mode)
    anchors = [
        ("rho_lambda_constant", "rho lambda_j = nu_j"),
        ("zstar_along_x0", "Z* = a_0 X_0"),
        ("x0_of_a0", "X_0(a_0) = a_0^2 / 2"),
        ("rho_lambda1", "rho^-1 + lambda_1 = a_0^2 K_1"),
        ("a0_constraint", "a_0^2 (lambda_0 + lambda_1) = -(2/n)(lambda_0 - lambda_1)^2"),
    ]
    if not ev.spectrum_valid:
        return [_not_applicable(name, anchor, t) for name, anchor in anchors]
    d, sp, D = ev.data, ev.split, ev.derivs
    n = ev.n
    lam0, lam1, a0, rho = sp.lam0, sp.lam1, sp.a0, d.rho

    nu = np.stack([rho * lam0, rho * lam1], axis=-1)
    ref = np.median(nu, axis=0)
    r_nu = np.max(np.abs(nu - ref) / np.abs(ref), axis=-1)

    hz = np.einsum("pij,pj->pi", d.h, ev.zstar)
    side = np.einsum("pi,pij->pj", hz, sp.frame[:, :, 1:])
    znorm = np.sqrt(np.abs(np.einsum("pi,pi->p", hz, ev.zstar)))
    r_z = np.max(_rel(side, floor=np.maximum(znorm, np.sqrt(ev.kappa))[:, None]), axis=-1)

    x0a0 = np.einsum("pk,pk->p", D.da0, sp.X0)
    r_x0 = _rel(x0a0 - a0**2 / 2, x0a0, a0**2 / 2)

    inv_rho = 1.0 / rho
    target1 = a0**2 * sp.K1
    r_rl = _rel(inv_rho + lam1 - target1, inv_rho, lam1, target1)

    lhs = a0**2 * (lam0 + lam1)
    rhs = -(2.0 / n) * (lam0 - lam1) ** 2
    r_c = _rel(lhs - rhs, lhs, rhs)

    items = [
        _item(anchors[0][0], anchors[0][1], r_nu, t, ev),
        _item(anchors[1][0], anchors[1][1], r_z, t, ev),
        _item(anchors[2][0], anchors[2][1], r_x0, t, ev),
        _item(anchors[3][0], anchors[3][1], r_rl, t, ev),
        _item(anchors[4][0], anchors[4][1], r_c, t, ev),
    ]
    params = ev.params
    if params is not None:
        # t is h-arclength up to the constant factor sqrt(h_tt)
        tt = ev.points[:, 0]
        htt = d.h[:, 0, 0]
        gauge = np.abs(a0 * tt * np.sqrt(htt) + 2.0) / 2.0
        scaled = np.stack([lam0, lam1], axis=-1) * (tt**2 * htt)[:, None]
        ls = np.array([params.l0, params.l1])
        lam_gauge = np.max(np.abs(scaled - ls) / np.abs(ls), axis=-1)
        items.append(_item("a0_gauge", "a_0 = -2/t with t the h-arclength of X_0", gauge, t, ev))
        items.append(_item("eigenvalue_gauge", "lambda_i = l_i / t^2 in the same gauge", lam_gauge, t, ev))
    return items


def _column_normalized_smin(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        Mn = np.where(norms > 0, M / norms, 0.0)
    return np.linalg.svd(Mn, compute_uv=False)[..., -1]


def check_centroaffine(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """``f`` and its centre map are both centroaffine immersions.

    The residual is ``CENTROAFFINE_MARGIN / margin`` where the margin is the
    smallest of: the normalized volume of ``(f_*, f)``, ``|1 + rho lambda_1|``
    (quasi-umbilical points only) and the smallest singular value of the
    column-normalized system ``(f_*Z*, c_* d_k)``.
    """
    ev = _evaluation(target, grid, mode)
    d = ev.data
    n = ev.n
    T, f, xi, rho = d.tangent, d.position, d.xi, d.rho

    tf = np.concatenate([T, f[:, :, None]], axis=-1)
    m1 = np.abs(np.linalg.det(tf)) / (np.prod(np.linalg.norm(T, axis=-2), axis=-1) * np.linalg.norm(f, axis=-1))

    m2 = np.where(ev.split.valid, np.abs(1.0 + rho * ev.split.lam1), np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        zstar = d.Z / rho[:, None]
        drho = ev.derivs.drho
    cstar = np.einsum("pai,pik->pak", T, np.eye(n)[None] + rho[:, None, None] * d.S) - xi[:, :, None] * drho[:, None, :]
    system = np.concatenate([np.einsum("pai,pi->pa", T, zstar)[:, :, None], cstar], axis=-1)
    m3 = _column_normalized_smin(system)

    margin = np.minimum.reduce([m1, m2, m3])
    with np.errstate(divide="ignore"):
        res = CENTROAFFINE_MARGIN / margin
    return [_item("centroaffine", "rho != 0, 1 + rho lambda_1 != 0, dim <f_*Z*, c_*X> = n+1", res, 1.0, ev)]


def check_warped_structure(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """Metric ``h = h_tt dt^2 + t^2 h_N`` in the ``(t, u)`` chart of a family."""
    ev = _evaluation(target, grid, mode)
    t = _tol(tol).for_mode(ev.mode)
    names = [
        ("warped_h_tt", "h(d_t, d_t) constant on each slice t = const"),
        ("warped_cross_terms", "h(d_t, d_u) = 0"),
        ("warped_ratio", "h_uu(t1, u) / h_uu(t2, u) = (t1 / t2)^2"),
    ]
    if not (ev.on_product_grid and ev.spectrum_valid):
        return [_not_applicable(name, anchor, t) for name, anchor in names]
    h = ev.grid_view(ev.data.h)
    shape = ev.grid.shape
    nt = shape[0]
    flat = h.reshape((nt, -1) + h.shape[-2:])

    htt = flat[:, :, 0, 0]
    mean = np.mean(htt, axis=1, keepdims=True)
    r_tt = np.abs(htt - mean) / np.abs(mean)

    cross = np.abs(flat[:, :, 0, 1:]) / np.sqrt(np.abs(flat[:, :, :1, 0] * np.einsum("sqii->sqi", flat[:, :, 1:, 1:])))
    r_cross = np.max(cross, axis=-1)

    tvals = ev.grid.axes[0].values()
    Hu = flat[:, :, 1:, 1:]
    scale = (tvals / tvals[0]) ** 2
    diff = Hu - scale[:, None, None, None] * Hu[:1]
    r_ratio = np.linalg.norm(diff, axis=(-2, -1)) / np.linalg.norm(Hu, axis=(-2, -1))

    return [
        _item(names[0][0], names[0][1], r_tt.reshape(-1), t, ev),
        _item(names[1][0], names[1][1], r_cross.reshape(-1), t, ev),
        _item(names[2][0], names[2][1], r_ratio.reshape(-1), t, ev),
    ]


def check_difference_tensor_block(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """``K_{X_0}`` in the eigenframe and geodesy of ``X_0`` for the Levi-Civita connection."""
    ev = _evaluation(target, grid, mode)
    t = _tol(tol).for_mode(ev.mode)
    names = [
        ("difference_tensor_block", "K_{X_0} = a_0 (K_0 + K_1) diag(-(n-1)/2, 1/2, ..., 1/2)"),
        ("x0_levi_civita_geodesic", "hat nabla_{X_0} X_0 = 0"),
    ]
    if not ev.spectrum_valid:
        return [_not_applicable(name, anchor, t) for name, anchor in names]
    d, sp = ev.data, ev.split
    n = ev.n
    E, X0 = sp.frame, sp.X0
    KX0 = np.einsum("paib,pi->pab", d.K, X0)
    M = np.swapaxes(E, -1, -2) @ d.h @ KX0 @ E
    c = sp.a0 * (sp.K0 + sp.K1)
    diag = np.full((len(c), n), 0.5)
    diag[:, 0] = -(n - 1) / 2.0
    expected = diag[:, :, None] * np.eye(n)[None] * c[:, None, None]
    r_block = np.max(np.abs(M - expected), axis=(-2, -1)) / np.abs(c)

    term1 = np.einsum("pak,pk->pa", ev.derivs.dX0, X0)
    term2 = np.einsum("pakb,pk,pb->pa", d.gamma_hat, X0, X0)
    norms = [_hnorm(x, d.h) for x in (term1 + term2, term1, term2)]
    r_geo = _rel(norms[0], norms[1], norms[2], floor=np.abs(sp.a0))

    return [
        _item(names[0][0], names[0][1], r_block, t, ev),
        _item(names[1][0], names[1][1], r_geo, t, ev),
    ]


def check_aux_maps(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic") -> list[CheckItem]:
    """Auxiliary ambient maps: ``g_1`` in case A, the decay of ``phi`` in case B."""
    ev = _evaluation(target, grid, mode)
    t = _tol(tol).for_mode(ev.mode)
    params = ev.params
    names_a = [
        ("g1_transverse", "D_{X_i} g_1 = 0 for the multiple eigendirections"),
        ("g1_along_x0", "D_{X_0} g_1 = -(a_0/2)((n+1)K_1 + (n-1)K_0) g_1"),
    ]
    names_b = [("phi_decay", "phi t^(2 K_0) constant, phi = a_0 K_0 X_0 + xi")]
    if params is None or not ev.spectrum_valid:
        return [_not_applicable(name, anchor, t) for name, anchor in names_a + names_b]
    sp = ev.split
    n = ev.n
    if params.case == "A":
        g1 = ev.aux["g1"]
        dg1 = ev.derivs.dg1
        gnorm = np.linalg.norm(g1, axis=-1)
        floor = np.abs(sp.a0) * gnorm
        along_i = np.einsum("pak,pki->pai", dg1, sp.frame[:, :, 1:])
        r_trans = np.max(_rel(np.linalg.norm(along_i, axis=1), floor=floor[:, None]), axis=-1)
        along0 = np.einsum("pak,pk->pa", dg1, sp.X0)
        coef = -(sp.a0 / 2) * ((n + 1) * sp.K1 + (n - 1) * sp.K0)
        expect = coef[:, None] * g1
        r_along = _rel(np.linalg.norm(along0 - expect, axis=-1), np.linalg.norm(along0, axis=-1),
                       np.linalg.norm(expect, axis=-1), floor=floor)
        return [
            _item(names_a[0][0], names_a[0][1], r_trans, t, ev),
            _item(names_a[1][0], names_a[1][1], r_along, t, ev),
        ]
    tt = ev.points[:, 0]
    v = ev.aux["phi"] * (tt ** (2.0 * params.K0))[:, None]
    mean = np.mean(v, axis=0)
    r_phi = np.linalg.norm(v - mean, axis=-1) / np.linalg.norm(mean)
    return [_item(names_b[0][0], names_b[0][1], r_phi, t, ev)]


def predicted_congruence(params: FamilyParams) -> np.ndarray:
    """Closed-form matrix ``A`` with ``c = A f`` for the constructed families."""
    n = params.n
    diag = 4.0 * params.rho0 * params.K1
    if params.case == "A":
        A = np.diag([diag] * n + [-2.0 * params.rho0 * params.N])
    else:
        A = diag * np.eye(n + 1)
        A[n, 0] = params.rho0 * params.phi0 / params.K1
    return A


def fit_congruence(target, grid=None, tol: Tolerances | None = None, mode: str = "analytic",
                   calibration: str = "unit") -> tuple[np.ndarray, list[CheckItem]]:
    """Least-squares ``A`` with ``c(p) = A f(p)`` over the grid.

    Under ``calibration="paper_exact"`` the fitted entries and the support
    law ``rho = rho_0 t^2`` are also compared with their closed forms.
    """
    ev = _evaluation(target, grid, mode)
    tols = _tol(tol)
    d = ev.data
    F, C = d.position, d.centre
    if np.linalg.matrix_rank(F) < ev.n + 1:
        raise RankError("sample positions do not span the ambient space", ev.points[0])
    At, *_ = np.linalg.lstsq(F, C, rcond=None)
    A = At.T
    fitted = F @ At
    resid = _rel(np.linalg.norm(C - fitted, axis=-1), np.linalg.norm(C, axis=-1), np.linalg.norm(fitted, axis=-1))
    sv = np.linalg.svd(A, compute_uv=False)
    inv_margin = sv[-1] / sv[0] if sv[0] > 0 else 0.0
    with np.errstate(divide="ignore"):
        inv_res = np.full(len(F), INVERTIBILITY_MARGIN / inv_margin)
    items = [
        _item("congruence_fit", "c = A f", resid, tols.fit_residual, ev),
        _item("congruence_invertible", "A invertible", inv_res, 1.0, ev),
    ]
    params = ev.params
    if calibration == "paper_exact" and params is not None:
        pred = predicted_congruence(params)
        entry = np.full(len(F), np.max(np.abs(A - pred)))
        items.append(_item("congruence_closed_form", "A = closed form in rho_0, K_1, N, phi_0", entry, tols.entries, ev))
        rho_law = np.abs(d.rho / ev.points[:, 0] ** 2 - params.rho0) / abs(params.rho0)
        items.append(_item("support_closed_form", "rho = rho_0 t^2", rho_law, tols.for_mode(ev.mode), ev))
    return A, items


CHECKS = (
    ("blaschke_invariants", check_blaschke_invariants),
    ("spectrum", check_spectrum),
    ("fv_system", check_fv_system),
    ("eigen_relations", check_eigen_relations),
    ("centroaffine", check_centroaffine),
    ("warped_structure", check_warped_structure),
    ("difference_tensor_block", check_difference_tensor_block),
    ("aux_maps", check_aux_maps),
)
CHECK_GROUPS = tuple(name for name, _ in CHECKS) + ("congruence",)


def run_checks(ev: Evaluation, tolerances: Tolerances | None = None, calibration: str = "unit") -> list[tuple[str, list[CheckItem]]]:
    """Every check on a prepared evaluation, grouped by check name."""
    tol = _tol(tolerances)
    groups = [(name, check(ev, tol=tol)) for name, check in CHECKS]
    _, fit_items = fit_congruence(ev, tol=tol, calibration=calibration)
    groups.append(("congruence", fit_items))
    return groups


def run_suite(target, grid: GridSpec | None = None, tolerances: Tolerances | None = None, mode: str = "analytic",
              calibration: str = "unit", workers: int | None = None, derivatives: str = "jets") -> CheckReport:
    """All checks in a fixed order on one grid."""
    surface = FamilySurface(target) if isinstance(target, FamilyParams) else target
    ev = Evaluation(surface, grid, mode, workers=workers, derivatives=derivatives)
    items = [item for _, group in run_checks(ev, tolerances, calibration) for item in group]
    params = ev.params if ev.params is not None else surface.describe()
    return CheckReport(params, ev.grid, items)
