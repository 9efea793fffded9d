"""Pointwise Blaschke structure of a hypersurface from its jets.

The pipeline follows the classical equiaffine recipe:

* ``G_ij = det(f_1, ..., f_n, f_ij)`` and ``h = |det G|^(-1/(n+2)) G``,
  oriented so that ``h`` is positive definite;
* affine normal ``xi = (1/n) Laplacian_h f``;
* ``D_i f_j = f_k Gamma^k_ij + h_ij xi`` gives the induced connection,
  ``D_i xi = -f_k S^k_i`` the shape operator;
* ``f = f_k Z^k + rho xi`` gives the support function and the centre map
  ``c = f - rho xi``.

Every step is carried out in jet arithmetic, so derivatives of ``h`` (for the
Levi-Civita connection) and of ``xi`` (for ``S``) are exact to rounding.
With order-5 input jets the shape operator comes out as an order-1 jet and
its first derivatives are available for cross-validation.

All arrays carry a leading batch axis; index conventions are documented on
:class:`BlaschkeData`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import jets as J
from .errors import (
    DegenerateError,
    FrameSolveError,
    IndefiniteMetricError,
    StencilError,
    SupportZeroError,
)

FRAME_COND_MAX = 1e10
DEGENERACY_RTOL = 1e-12
SUPPORT_RTOL = 1e-10
CLUSTER_GAP = 1e-4
DEFAULT_ORDER = 5
FIELD_STEP = 1e-4
FALLBACK_FIELD_STEP = 1e-2
# points per batch; keeps jet products cache-resident
CHUNK = 128


@dataclass
class BlaschkeData:
    """Blaschke apparatus at a batch of points.

    Shapes use ``P`` for the batch and ``n`` for the hypersurface dimension.
    Coordinate tensors follow ``T[..., upper, lower...]``.

    Attributes
    ----------
    points : (P, n)
    position : (P, n+1)
        ``f`` itself.
    tangent : (P, n+1, n)
        Columns ``f_* d_i``.
    h, h_inv : (P, n, n)
    dh : (P, n, n, n)
        ``dh[..., i, j, k] = d_k h_ij``.
    xi : (P, n+1)
    S : (P, n, n)
        ``S d_i = S[..., k, i] d_k``.
    gamma, gamma_hat, K : (P, n, n, n)
        ``gamma[..., k, i, j]`` is the coefficient of ``d_k`` in ``nabla_{d_i} d_j``.
    rho : (P,)
    Z : (P, n)
    centre : (P, n+1)
    conformal : (P,)
        ``|det G|^(-1/(n+2))``.
    xi_residual : (P, n)
        Normal component of ``D_i xi``; zero for an exact affine normal.
    closure : (P, n, n)
        Normal coefficient of ``f_ij`` minus ``h_ij``.
    second : (P, n+1, n, n)
        ``second[..., a, i, j] = d_i d_j f^a``.
    dS : (P, n, n, n) or None
        ``dS[..., a, b, k] = d_k S^a_b`` when the input jets had order >= 5.
    dxi : (P, n+1, n) or None
        ``dxi[..., a, k] = d_k xi^a``.
    drho, dZ : (P, n), (P, n, n) or None
        ``d_k rho`` and ``dZ[..., a, k] = d_k Z^a``.
    """

    points: np.ndarray
    position: np.ndarray
    tangent: np.ndarray
    h: np.ndarray
    h_inv: np.ndarray
    dh: np.ndarray
    xi: np.ndarray
    S: np.ndarray
    gamma: np.ndarray
    gamma_hat: np.ndarray
    K: np.ndarray
    rho: np.ndarray
    Z: np.ndarray
    centre: np.ndarray
    conformal: np.ndarray
    xi_residual: np.ndarray
    closure: np.ndarray
    second: np.ndarray
    dS: np.ndarray | None = None
    dxi: np.ndarray | None = None
    drho: np.ndarray | None = None
    dZ: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.h.shape[-1]

    @property
    def frame(self) -> np.ndarray:
        return np.concatenate([self.tangent, self.xi[..., None]], axis=-1)

    @property
    def Zstar(self) -> np.ndarray:
        """``Z / rho``; raises :class:`SupportZeroError` where ``rho`` vanishes."""
        scale = np.max(np.abs(self.position), axis=-1)
        small = np.abs(self.rho) <= SUPPORT_RTOL * np.maximum(scale, 1e-300)
        if np.any(small):
            k = int(np.argmax(small))
            raise SupportZeroError("support function vanishes", self.points[k])
        return self.Z / self.rho[..., None]

    @property
    def cubic_form(self) -> np.ndarray:
        """``(nabla h)(d_k, d_i, d_j)`` as ``C[..., k, i, j]``."""
        dh = np.moveaxis(self.dh, -1, -3)  # [k, i, j] = d_k h_ij
        t1 = np.einsum("...lki,...lj->...kij", self.gamma, self.h)
        t2 = np.einsum("...lkj,...il->...kij", self.gamma, self.h)
        return dh - t1 - t2

    def take(self, index) -> "BlaschkeData":
        """Sub-batch selection."""
        kw = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            kw[name] = None if v is None else v[index]
        return BlaschkeData(**kw)

    @staticmethod
    def concatenate(parts: list["BlaschkeData"]) -> "BlaschkeData":
        kw = {}
        for name in BlaschkeData.__dataclass_fields__:
            vals = [getattr(p, name) for p in parts]
            kw[name] = None if any(v is None for v in vals) else np.concatenate(vals, axis=0)
        return BlaschkeData(**kw)


def _point_of(points, mask):
    flat = np.asarray(points).reshape(-1, np.shape(points)[-1])
    return flat[int(np.argmax(np.asarray(mask).ravel()))]


class _Pipeline:
    """Lazy jet-level stages of the extraction for one :class:`JetPoint`."""

    def __init__(self, jp: J.JetPoint, dxi: np.ndarray | None = None):
        self.jp = jp
        self.f = jp.f
        self.n = jp.dim_param
        self.m = jp.order
        self.points = jp.points
        self._dxi = dxi
        if self.n != self.f.shape[-1] - 1:
            raise ValueError("jet must describe a hypersurface (ambient dimension n + 1)")

    @cached_property
    def tangent(self) -> J.Jet:
        return J.stack([self.f.partial(i) for i in range(self.n)], axis=-1)

    @cached_property
    def second(self) -> J.Jet:
        T = self.tangent
        rows = [J.stack([T[..., i].partial(j) for j in range(self.n)], axis=-1) for i in range(self.n)]
        return J.stack(rows, axis=-2)

    @cached_property
    def cofactors(self) -> J.Jet:
        # det(f_1..f_n, v) = sum_k v_k C_k, expanding along the last column
        n = self.n
        table = J.minors(self.tangent.truncate(self.m - 2))
        full = (1 << (n + 1)) - 1
        comps = [table[full & ~(1 << k)] * (-1.0) ** (k + n) for k in range(n + 1)]
        return J.stack(comps, axis=-1)

    @cached_property
    def G(self) -> J.Jet:
        return J.einsum("...kij,...k->...ij", self.second, self.cofactors)

    @cached_property
    def metric(self):
        n = self.n
        G = self.G
        detG = J.det(G)
        g0 = G.value
        sym = 0.5 * (g0 + np.swapaxes(g0, -1, -2))
        eig = np.linalg.eigvalsh(sym)
        mags = np.abs(eig)
        degenerate = mags.min(axis=-1) <= DEGENERACY_RTOL * mags.max(axis=-1)
        if np.any(degenerate):
            raise DegenerateError("affine metric is degenerate", _point_of(self.points, degenerate))
        pos = np.all(eig > 0, axis=-1)
        neg = np.all(eig < 0, axis=-1)
        if not np.all(pos | neg):
            raise IndefiniteMetricError("affine metric is indefinite", _point_of(self.points, ~(pos | neg)))
        sign = np.where(pos, 1.0, -1.0)
        absdet = detG * sign**n
        conformal = J.power(absdet, -1.0 / (n + 2))
        h = G * (conformal * sign)[..., None, None]
        return h, conformal

    @property
    def h(self) -> J.Jet:
        return self.metric[0]

    @cached_property
    def h_inv(self) -> J.Jet:
        return J.inv(self.h)

    @cached_property
    def dh(self) -> J.Jet:
        return J.stack([self.h.partial(k) for k in range(self.n)], axis=-1)

    @cached_property
    def gamma_hat(self) -> J.Jet:
        dh = self.dh  # [i, j, k] = d_k h_ij
        d_i_lj = dh.swapaxes(-1, -2)  # [l, i, j] = d_i h_lj
        d_l_ij = dh.swapaxes(-1, -2).swapaxes(-3, -2)  # [l, i, j] = d_l h_ij
        combo = d_i_lj + dh - d_l_ij
        return J.einsum("...kl,...lij->...kij", self.h_inv, combo) * 0.5

    @cached_property
    def xi(self) -> J.Jet:
        T = self.tangent
        hess = self.second - J.einsum("...ak,...kij->...aij", T, self.gamma_hat)
        return J.einsum("...ij,...aij->...a", self.h_inv, hess) * (1.0 / self.n)

    @cached_property
    def frame(self) -> J.Jet:
        T = self.tangent
        F = J.stack([T[..., i] for i in range(self.n)] + [self.xi], axis=-1)
        f0 = F.value
        norms = np.linalg.norm(f0, axis=-2, keepdims=True)
        cond = np.linalg.cond(f0 / np.maximum(norms, 1e-300))
        bad = ~np.isfinite(cond) | (cond > FRAME_COND_MAX)
        if np.any(bad):
            raise FrameSolveError("frame {f_*d_i, xi} is ill-conditioned", _point_of(self.points, bad))
        return F

    @cached_property
    def shape_solution(self) -> J.Jet:
        if self._dxi is not None:
            dxi = self._dxi
            F = self.frame.truncate(0)
            return J.solve(F, J.Jet.constant(dxi, F.d, 0))
        if self.m < 4:
            raise ValueError("shape operator from jets needs order >= 4")
        dxi = J.stack([self.xi.partial(i) for i in range(self.n)], axis=-1)
        return J.solve(self.frame, dxi)

    @cached_property
    def connection_solution(self) -> J.Jet:
        n = self.n
        rhs = self.second.reshape(self.second.shape[:-2] + (n * n,))
        return J.solve(self.frame, rhs)

    @cached_property
    def support_solution(self) -> J.Jet:
        return J.solve(self.frame, self.f)

    def data(self) -> BlaschkeData:
        n = self.n
        h, conformal = self.metric
        shape = self.shape_solution
        S = -shape.value[..., :n, :]
        conn = self.connection_solution.value
        lead = conn.shape[:-2]
        gamma = conn[..., :n, :].reshape(lead + (n, n, n))
        closure = conn[..., n, :].reshape(lead + (n, n)) - h.value
        gamma_hat = self.gamma_hat.value
        sup = self.support_solution.value
        rho = sup[..., n]
        xi = self.xi.value
        pos = self.f.value
        dS = drho = dZ = None
        if self._dxi is None:
            dxi = np.stack([self.xi.partial(k).value for k in range(n)], axis=-1)
            if shape.m >= 1:
                dS = -np.stack([shape.partial(k).value[..., :n, :] for k in range(n)], axis=-1)
        else:
            dxi = self._dxi
        if self.support_solution.m >= 1:
            dsup = np.stack([self.support_solution.partial(k).value for k in range(n)], axis=-1)
            drho, dZ = dsup[..., n, :], dsup[..., :n, :]
        return BlaschkeData(
            points=np.asarray(self.points, float),
            position=pos,
            tangent=self.tangent.value,
            h=h.value,
            h_inv=self.h_inv.value,
            dh=self.dh.value,
            xi=xi,
            S=S,
            gamma=gamma,
            gamma_hat=gamma_hat,
            K=gamma - gamma_hat,
            rho=rho,
            Z=sup[..., :n],
            centre=pos - rho[..., None] * xi,
            conformal=conformal.value,
            xi_residual=shape.value[..., n, :],
            closure=closure,
            second=self.second.value,
            dS=dS,
            dxi=dxi,
            drho=drho,
            dZ=dZ,
        )


# -- public pointwise operations ------------------------------------------


def affine_metric(jp: J.JetPoint):
    """Blaschke metric ``h`` and conformal factor ``|det G|^(-1/(n+2))``."""
    if jp.order < 2:
        raise ValueError("affine metric needs jets of order >= 2")
    h, conformal = _Pipeline(jp).metric
    return h.value, conformal.value


def affine_normal(jp: J.JetPoint) -> np.ndarray:
    if jp.order < 3:
        raise ValueError("affine normal needs jets of order >= 3")
    return _Pipeline(jp).xi.value


def shape_operator(jp: J.JetPoint) -> np.ndarray:
    """Shape operator ``S`` with ``D_i xi = -f_* S d_i``."""
    pipe = _Pipeline(jp)
    return -pipe.shape_solution.value[..., : pipe.n, :]


def connections_and_difference(jp: J.JetPoint):
    """``(gamma, gamma_hat, K)``; see :class:`BlaschkeData` for index order."""
    if jp.order < 3:
        raise ValueError("connections need jets of order >= 3")
    pipe = _Pipeline(jp)
    n = pipe.n
    conn = pipe.connection_solution.value
    gamma = conn[..., :n, :].reshape(conn.shape[:-2] + (n, n, n))
    gamma_hat = pipe.gamma_hat.value
    return gamma, gamma_hat, gamma - gamma_hat


def support_and_centre(jp: J.JetPoint):
    """``(rho, Z, centre)``; raises :class:`SupportZeroError` if ``rho`` vanishes."""
    if jp.order < 3:
        raise ValueError("support function needs jets of order >= 3")
    pipe = _Pipeline(jp)
    n = pipe.n
    sup = pipe.support_solution.value
    rho = sup[..., n]
    pos = pipe.f.value
    scale = np.max(np.abs(pos), axis=-1)
    small = np.abs(rho) <= SUPPORT_RTOL * np.maximum(scale, 1e-300)
    if np.any(small):
        raise SupportZeroError("support function vanishes", _point_of(pipe.points, small))
    return rho, sup[..., :n], pos - rho[..., None] * pipe.xi.value


def blaschke_data(jp: J.JetPoint) -> BlaschkeData:
    """Full pointwise structure from jets of order >= 4."""
    return _Pipeline(jp).data()


# -- batched extraction on surfaces ---------------------------------------


def _chunks(n_points: int, chunk: int):
    for start in range(0, n_points, chunk):
        yield slice(start, min(start + chunk, n_points))


def _richardson(values: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Central derivative from stacked samples ``[+h, -h, +h/2, -h/2]``.

    ``values`` has shape ``(4, ...)``; ``steps`` broadcasts against ``values[0]``.
    """
    d_full = (values[0] - values[1]) / (2.0 * steps)
    d_half = (values[2] - values[3]) / steps
    return (4.0 * d_half - d_full) / 3.0


def _stencil(points: np.ndarray, step: float):
    """Offset points ``p +/- h e_k, p +/- h/2 e_k``: shape ``(d, 4, P, d)`` plus steps ``(d, P)``."""
    P, d = points.shape
    h = step * np.maximum(1.0, np.abs(points))  # (P, d)
    out = np.empty((d, 4, P, d))
    for k in range(d):
        for s, mult in enumerate((1.0, -1.0, 0.5, -0.5)):
            q = points.copy()
            q[:, k] += mult * h[:, k]
            out[k, s] = q
    return out, h.T


def _extract_chunk(surface, pts: np.ndarray, order: int, mode: str) -> BlaschkeData:
    if mode == "analytic":
        return blaschke_data(J.evaluate_jet(surface, pts, order))
    if mode != "fallback":
        raise ValueError(f"unknown differentiation mode {mode!r}")
    surface.check_domain(pts)
    P, d = pts.shape
    stencil, steps = _stencil(pts, FALLBACK_FIELD_STEP)
    flat = stencil.reshape(-1, d)
    xi_st = _Pipeline(J.finite_difference_jet(surface.evaluate, flat, 3)).xi.value
    xi_st = xi_st.reshape(d, 4, P, -1)
    dxi = np.stack([_richardson(xi_st[k], steps[k][:, None]) for k in range(d)], axis=-1)
    return _Pipeline(J.finite_difference_jet(surface.evaluate, pts, 3), dxi=dxi).data()


def extract(surface, points, order: int = 4, mode: str = "analytic", chunk: int = CHUNK, workers: int | None = None) -> BlaschkeData:
    """Blaschke data of ``surface`` at ``points`` (shape ``(P, n)``).

    ``mode="analytic"`` differentiates the evaluator with jets of ``order``;
    ``mode="fallback"`` uses third-order finite-difference jets and obtains
    the shape operator by differencing the affine-normal field.
    """
    from .parallel import map_ordered

    points = np.atleast_2d(np.asarray(points, dtype=float))
    parts = map_ordered(lambda sl: _extract_chunk(surface, points[sl], order, mode), list(_chunks(len(points), chunk)), workers)
    return BlaschkeData.concatenate(parts)


# -- spectral analysis ----------------------------------------------------


@dataclass
class EigenSplit:
    """h-orthonormal eigen-decomposition of ``S`` with a quasi-umbilical reading.

    ``frame[..., :, 0]`` is ``X_0`` (the simple eigenvalue's direction, signed
    so that ``a0 = h(Z*, X_0) < 0``); the remaining columns span the
    eigenspace of the multiple eigenvalue.  ``valid`` marks points where the
    spectrum splits into clusters of sizes ``{1, n - 1}``.
    """

    eigenvalues: np.ndarray
    clusters: list
    frame: np.ndarray
    lam0: np.ndarray
    lam1: np.ndarray
    a0: np.ndarray
    valid: np.ndarray
    gap: np.ndarray

    @property
    def X0(self) -> np.ndarray:
        return self.frame[..., :, 0]

    @property
    def K0(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.lam0 / (self.lam0 - self.lam1)

    @property
    def K1(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.lam1 / (self.lam0 - self.lam1)


def cluster_sizes(values: np.ndarray, gap: float = CLUSTER_GAP) -> list[int]:
    """Sizes of eigenvalue clusters (ascending) separated by gaps above ``gap * radius``."""
    vals = np.sort(values)
    radius = max(np.max(np.abs(vals)), 1e-300)
    sizes = [1]
    for a, b in zip(vals[:-1], vals[1:]):
        if b - a > gap * radius:
            sizes.append(1)
        else:
            sizes[-1] += 1
    return sizes


def eigen_split(data: BlaschkeData, gap: float = CLUSTER_GAP) -> EigenSplit:
    """Diagonalize ``h^(1/2) S h^(-1/2)`` and identify ``lambda_0``, ``lambda_1``, ``X_0``."""
    n = data.n
    L = np.linalg.cholesky(data.h)
    Linv = np.linalg.inv(L)
    M = np.swapaxes(L, -1, -2) @ data.S @ np.swapaxes(Linv, -1, -2)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    w, V = np.linalg.eigh(M)
    E = np.swapaxes(Linv, -1, -2) @ V  # h-orthonormal eigenvectors of S
    P = w.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        try:
            zstar = data.Zstar
        except SupportZeroError:
            zstar = np.zeros_like(data.Z)
    # h-components of Z* along each eigenvector
    comp = np.einsum("pi,pij,pjk->pk", zstar, data.h, E)

    frame = np.empty_like(E)
    lam0 = np.empty(P)
    lam1 = np.empty(P)
    a0 = np.empty(P)
    valid = np.zeros(P, dtype=bool)
    gaps = np.empty(P)
    clusters = []
    for p in range(P):
        sizes = cluster_sizes(w[p], gap)
        clusters.append(sizes)
        radius = max(np.max(np.abs(w[p])), 1e-300)
        gaps[p] = (np.max(np.diff(w[p])) / radius) if n > 1 else 0.0
        two = len(sizes) == 2 and sorted(sizes) == sorted([1, n - 1])
        if n == 2:
            # both eigenvalues are simple; X_0 is the one carrying Z*
            j0 = int(np.argmax(np.abs(comp[p])))
        elif two:
            j0 = 0 if sizes[0] == 1 else n - 1
        else:
            j0 = int(np.argmax(np.abs(comp[p])))
        rest = [j for j in range(n) if j != j0]
        sgn = -1.0 if comp[p, j0] > 0 else 1.0
        frame[p, :, 0] = sgn * E[p, :, j0]
        frame[p, :, 1:] = E[p][:, rest]
        lam0[p] = w[p, j0]
        lam1[p] = np.mean(w[p, rest])
        a0[p] = sgn * comp[p, j0]
        valid[p] = two
    return EigenSplit(w, clusters, frame, lam0, lam1, a0, valid, gaps)


# -- field derivatives ----------------------------------------------------


@dataclass
class FieldDerivatives:
    """Coordinate derivatives of derived fields, derivative index last.

    ``dS[..., a, b, k] = d_k S^a_b``; ``dZstar[..., a, k]``; ``drho[..., k]``;
    ``da0[..., k]``; ``dX0[..., a, k]``; ``dxi[..., A, k]`` (ambient
    ``A``); ``dg1`` and ``dphi`` likewise for the ambient fields
    ``g1 = a0 K1 xi + lambda_1 f_* X0`` and ``phi = a0 K0 f_* X0 + xi``.
    ``nabla_h`` is the cubic form ``(nabla h)(d_k, d_i, d_j)`` and
    ``nabla_h_zstar`` its contraction ``(nabla h)(d_k, d_i, Z*)``.
    """

    dS: np.ndarray
    drho: np.ndarray
    dZstar: np.ndarray
    da0: np.ndarray
    dX0: np.ndarray
    dxi: np.ndarray
    dg1: np.ndarray
    dphi: np.ndarray
    nabla_h: np.ndarray
    nabla_h_zstar: np.ndarray
    steps: np.ndarray = field(repr=False, default=None)


def aux_fields(data: BlaschkeData, split: EigenSplit) -> dict:
    """Ambient vector fields ``f_* X0``, ``g1`` and ``phi`` built from the split."""
    X0_amb = np.einsum("pai,pi->pa", data.tangent, split.X0)
    K0, K1 = split.K0, split.K1
    g1 = (split.a0 * K1)[:, None] * data.xi + split.lam1[:, None] * X0_amb
    phi = (split.a0 * K0)[:, None] * X0_amb + data.xi
    return {"X0_ambient": X0_amb, "g1": g1, "phi": phi}


def _field_values(data: BlaschkeData, split: EigenSplit) -> dict:
    with np.errstate(divide="ignore", invalid="ignore"):
        zstar = data.Z / data.rho[..., None]
    aux = aux_fields(data, split)
    return {
        "S": data.S,
        "rho": data.rho,
        "Zstar": zstar,
        "a0": split.a0,
        "X0": split.X0,
        "xi": data.xi,
        "g1": aux["g1"],
        "phi": aux["phi"],
    }


def field_derivatives(surface, points, data: BlaschkeData | None = None, step: float = FIELD_STEP,
                      order: int = 4, mode: str = "analytic", chunk: int = CHUNK, workers: int | None = None) -> FieldDerivatives:
    """Richardson central differences of the derived fields around ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P, d = points.shape
    if data is None:
        data = extract(surface, points, order=order, mode=mode, chunk=chunk, workers=workers)
    stencil, steps = _stencil(points, step)
    try:
        st = extract(surface, stencil.reshape(-1, d), order=order, mode=mode, chunk=chunk, workers=workers)
    except Exception as exc:  # extraction failed on a stencil point
        if isinstance(exc, StencilError):
            raise
        bad = getattr(exc, "point", None)
        reason = getattr(exc, "reason", str(exc))
        raise StencilError(f"field stencil failed: {reason}", bad if bad is not None else points[0]) from exc
    fields = _field_values(st, eigen_split(st))
    derivs = {}
    for name, arr in fields.items():
        arr = arr.reshape((d, 4, P) + arr.shape[1:])
        cols = []
        for k in range(d):
            hk = steps[k].reshape((P,) + (1,) * (arr.ndim - 3))
            cols.append(_richardson(arr[k], hk))
        derivs[name] = np.stack(cols, axis=-1)
    C = data.cubic_form
    with np.errstate(divide="ignore", invalid="ignore"):
        zstar = data.Z / data.rho[..., None]
    return FieldDerivatives(
        dS=derivs["S"],
        drho=derivs["rho"],
        dZstar=derivs["Zstar"],
        da0=derivs["a0"],
        dX0=derivs["X0"],
        dxi=derivs["xi"],
        dg1=derivs["g1"],
        dphi=derivs["phi"],
        nabla_h=C,
        nabla_h_zstar=np.einsum("pkij,pj->pki", C, zstar),
        steps=steps.T,
    )


def jet_field_derivatives(data: BlaschkeData, split: EigenSplit) -> FieldDerivatives:
    """Field derivatives from order-5 jets, without stencils.

    The simple eigenpair is differentiated by first-order perturbation of
    the symmetric pencil ``(h S, h)``; everything else is read off the jets.
    """
    if data.dS is None or data.drho is None:
        raise ValueError("jet field derivatives need extraction with order >= 5")
    with np.errstate(divide="ignore", invalid="ignore"):
        return _jet_field_derivatives(data, split)


def _jet_field_derivatives(data: BlaschkeData, split: EigenSplit) -> FieldDerivatives:
    n = data.n
    h, dh, S, dS = data.h, np.moveaxis(data.dh, -1, 1), data.S, np.moveaxis(data.dS, -1, 1)
    # dh[p, k] = d_k h, dS[p, k] = d_k S
    dB = dh @ S[:, None] + h[:, None] @ dS
    E = split.frame
    X0 = E[:, :, 0]
    lam0 = split.lam0
    lam_all = np.concatenate([lam0[:, None], _frame_eigenvalues(split)], axis=1)
    pert = dB - lam0[:, None, None, None] * dh  # (P, k, n, n)
    # coefficients X_j^T pert_k X0 (P, k, j)
    coef = np.einsum("pij,pkil,pl->pkj", E, pert, X0)
    dlam0 = coef[:, :, 0]
    denom = lam0[:, None] - lam_all[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        mix = coef[:, :, 1:] / denom[:, None, :]
    norm_fix = np.einsum("pi,pkij,pj->pk", X0, dh, X0)
    dX0 = np.einsum("paj,pkj->pak", E[:, :, 1:], mix) - 0.5 * X0[:, :, None] * norm_fix[:, None, :]

    rho = data.rho
    zstar = data.Z / rho[:, None]
    dZstar = data.dZ / rho[:, None, None] - data.Z[:, :, None] * (data.drho / rho[:, None] ** 2)[:, None, :]
    da0 = (
        np.einsum("pik,pij,pj->pk", dZstar, h, X0)
        + np.einsum("pi,pkij,pj->pk", zstar, dh, X0)
        + np.einsum("pi,pij,pjk->pk", zstar, h, dX0)
    )

    trace_dS = np.einsum("paak->pk", data.dS)
    lam1 = split.lam1
    dlam1 = (trace_dS - dlam0) / (n - 1)
    gap2 = (lam0 - lam1) ** 2
    dK = (lam0[:, None] * dlam1 - lam1[:, None] * dlam0) / gap2[:, None]  # same for K0 and K1
    K0, K1, a0 = split.K0, split.K1, split.a0
    X0_amb = np.einsum("pai,pi->pa", data.tangent, X0)
    dX0_amb = np.einsum("paij,pi->paj", data.second, X0) + np.einsum("pai,pik->pak", data.tangent, dX0)
    dxi = data.dxi
    xi = data.xi
    dg1 = (
        ((da0 * K1[:, None] + a0[:, None] * dK)[:, None, :]) * xi[:, :, None]
        + (a0 * K1)[:, None, None] * dxi
        + dlam1[:, None, :] * X0_amb[:, :, None]
        + lam1[:, None, None] * dX0_amb
    )
    dphi = (
        ((da0 * K0[:, None] + a0[:, None] * dK)[:, None, :]) * X0_amb[:, :, None]
        + (a0 * K0)[:, None, None] * dX0_amb
        + dxi
    )
    C = data.cubic_form
    return FieldDerivatives(
        dS=data.dS,
        drho=data.drho,
        dZstar=dZstar,
        da0=da0,
        dX0=dX0,
        dxi=dxi,
        dg1=dg1,
        dphi=dphi,
        nabla_h=C,
        nabla_h_zstar=np.einsum("pkij,pj->pki", C, zstar),
    )


def _frame_eigenvalues(split: EigenSplit) -> np.ndarray:
    """Eigenvalues matching ``frame[..., 1:]``."""
    out = []
    for p, w in enumerate(split.eigenvalues):
        j0 = int(np.argmin(np.abs(w - split.lam0[p])))
        out.append(np.delete(w, j0))
    return np.array(out)
