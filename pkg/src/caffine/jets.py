"""Truncated multivariate Taylor jets.

A :class:`Jet` stores the normalized Taylor coefficients ``c[alpha] =
d^alpha f / alpha!`` of a (tensor valued) function of ``d`` parameters,
truncated at total order ``m``.  The coefficient axis comes first; any
trailing axes are batch or tensor axes and broadcast like ordinary numpy
arrays.  Multi-indices are ordered by total degree, then lexicographically
descending, so truncating to a lower order is a prefix slice.

The elementary functions in this module (:func:`exp`, :func:`log`, ...) accept
plain floats or arrays as well as jets, so an immersion written against them
can be evaluated pointwise or differentiated without change.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, OrderUnsupported, StencilError

__all__ = [
    "Jet",
    "JetPoint",
    "multi_indices",
    "exp",
    "log",
    "sin",
    "cos",
    "sinh",
    "cosh",
    "sqrt",
    "power",
    "stack",
    "einsum",
    "matmul",
    "solve",
    "det",
    "inv",
    "jet_arith",
    "evaluate_jet",
    "finite_difference_jet",
]


@lru_cache(maxsize=None)
def multi_indices(d: int, m: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of length ``d`` and total order at most ``m``."""
    out = []
    for deg in range(m + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            alpha = [0] * d
            for k in combo:
                alpha[k] += 1
            out.append(tuple(alpha))
    # combinations_with_replacement yields ascending index tuples, which is
    # lexicographically descending in the exponent vector within a degree.
    return tuple(out)


@lru_cache(maxsize=None)
def _positions(d: int, m: int) -> dict:
    return {a: k for k, a in enumerate(multi_indices(d, m))}


@lru_cache(maxsize=None)
def _product_table(d: int, m: int):
    idx = multi_indices(d, m)
    pos = _positions(d, m)
    left, right = [], []
    starts = []
    for gamma in idx:
        starts.append(len(left))
        for alpha in itertools.product(*(range(g + 1) for g in gamma)):
            beta = tuple(g - a for g, a in zip(gamma, alpha))
            left.append(pos[alpha])
            right.append(pos[beta])
    return np.array(left), np.array(right), np.array(starts)


@lru_cache(maxsize=None)
def _partial_table(d: int, m: int, i: int):
    lower = multi_indices(d, m - 1)
    pos = _positions(d, m)
    src, fac = [], []
    for gamma in lower:
        up = list(gamma)
        up[i] += 1
        src.append(pos[tuple(up)])
        fac.append(gamma[i] + 1)
    return np.array(src), np.array(fac, dtype=float)


@lru_cache(maxsize=None)
def _factorials(d: int, m: int) -> np.ndarray:
    return np.array([math.prod(math.factorial(a) for a in alpha) for alpha in multi_indices(d, m)], float)


def _ncoef(d: int, m: int) -> int:
    return math.comb(d + m, m)


class Jet:
    """Truncated Taylor expansion of a function of ``d`` variables.

    Parameters
    ----------
    coeffs : array_like
        Normalized Taylor coefficients, shape ``(ncoef, *shape)``.
    d : int
        Number of parameters.
    m : int
        Truncation order.
    """

    __array_ufunc__ = None  # make ndarray <op> Jet defer to the reflected Jet methods

    def __init__(self, coeffs, d: int, m: int):
        c = np.asarray(coeffs, dtype=float)
        if c.shape[0] != _ncoef(d, m):
            raise ValueError(f"expected {_ncoef(d, m)} coefficients for d={d}, m={m}, got {c.shape[0]}")
        self.c = c
        self.d = d
        self.m = m

    # -- construction ---------------------------------------------------
    @classmethod
    def constant(cls, value, d: int, m: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((_ncoef(d, m),) + value.shape)
        c[0] = value
        return cls(c, d, m)

    @classmethod
    def variable(cls, value, i: int, d: int, m: int) -> "Jet":
        """The coordinate function ``x_i`` expanded around ``value``."""
        jet = cls.constant(value, d, m)
        if m >= 1:
            e = [0] * d
            e[i] = 1
            jet.c[_positions(d, m)[tuple(e)]] = 1.0
        return jet

    # -- inspection -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.c.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def coeff(self, alpha) -> np.ndarray:
        return self.c[_positions(self.d, self.m)[tuple(alpha)]]

    def derivative(self, alpha) -> np.ndarray:
        """Partial derivative ``d^alpha f`` at the expansion point."""
        alpha = tuple(alpha)
        return self.coeff(alpha) * math.prod(math.factorial(a) for a in alpha)

    def derivatives(self) -> np.ndarray:
        """All partial derivatives, in :func:`multi_indices` order."""
        fac = _factorials(self.d, self.m)
        return self.c * fac.reshape((-1,) + (1,) * len(self.shape))

    def to_dict(self) -> dict:
        """Map multi-index -> Taylor coefficient (scalar, unbatched jets)."""
        return {a: float(v) for a, v in zip(multi_indices(self.d, self.m), self.c)}

    def truncate(self, m: int) -> "Jet":
        if m > self.m:
            raise ValueError(f"cannot raise truncation order {self.m} to {m}")
        if m == self.m:
            return self
        return Jet(self.c[: _ncoef(self.d, m)], self.d, m)

    def partial(self, i: int) -> "Jet":
        """The jet of ``d f / d x_i``, one order lower."""
        if self.m == 0:
            raise OrderUnsupported("cannot differentiate an order-0 jet")
        src, fac = _partial_table(self.d, self.m, i)
        c = self.c[src] * fac.reshape((-1,) + (1,) * len(self.shape))
        return Jet(c, self.d, self.m - 1)

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.c[(slice(None),) + key], self.d, self.m)

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(len(self.shape)))
        axis = np.atleast_1d(axis)
        axis = tuple(int(a) + 1 if a >= 0 else int(a) for a in axis)
        return Jet(self.c.sum(axis=axis), self.d, self.m)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.c.reshape((self.c.shape[0],) + tuple(shape)), self.d, self.m)

    def swapaxes(self, a: int, b: int) -> "Jet":
        """Swap two trailing axes (negative indices count from the end)."""
        a = a + 1 if a >= 0 else a
        b = b + 1 if b >= 0 else b
        return Jet(np.swapaxes(self.c, a, b), self.d, self.m)

    def __repr__(self) -> str:
        return f"Jet(d={self.d}, m={self.m}, shape={self.shape})"

    # -- arithmetic -----------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.d != self.d:
                raise ValueError("jets over different parameter spaces")
            m = min(self.m, other.m)
            return self.truncate(m), other.truncate(m)
        return self, None

    def __add__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            return Jet(a.c + b.c, a.d, a.m)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(a.shape, other.shape)
        c = np.broadcast_to(a.c, a.c.shape[:1] + shape).copy()
        c[0] += other
        return Jet(c, a.d, a.m)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.d, self.m)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if b is None:
            return Jet(a.c * np.asarray(other, dtype=float), a.d, a.m)
        left, right, starts = _product_table(a.d, a.m)
        prod = a.c[left] * b.c[right]
        return Jet(np.add.reduceat(prod, starts, axis=0), a.d, a.m)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * power(other, -1)
        return Jet(self.c / np.asarray(other, dtype=float), self.d, self.m)

    def __rtruediv__(self, other):
        return power(self, -1) * other

    def __pow__(self, p):
        return power(self, p)


def _compose(a: Jet, taylor: Sequence[np.ndarray]) -> Jet:
    """Evaluate ``sum_k taylor[k] * (a - a(0))**k`` by Horner's rule."""
    delta = Jet(a.c.copy(), a.d, a.m)
    delta.c[0] = 0.0
    out = Jet.constant(np.broadcast_to(taylor[a.m], a.shape), a.d, a.m)
    for k in range(a.m - 1, -1, -1):
        out = out * delta + taylor[k]
    return out


def _is_int(p) -> bool:
    return float(p) == int(p)


def power(a, p):
    """``a ** p`` for a real exponent ``p``."""
    if not isinstance(a, Jet):
        return np.power(np.asarray(a, dtype=float), p)
    p = float(p)
    if _is_int(p) and p >= 0:
        out = Jet.constant(np.ones(a.shape), a.d, a.m)
        base, k = a, int(p)
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out
    a0 = a.value
    if np.any(a0 == 0):
        raise DomainError(f"power {p} of a jet with zero value")
    if not _is_int(p) and np.any(a0 < 0):
        raise DomainError(f"non-integer power {p} of a jet with negative value")
    taylor = []
    binom = 1.0
    for k in range(a.m + 1):
        taylor.append(binom * np.power(a0, p - k))
        binom *= (p - k) / (k + 1)
    return _compose(a, taylor)


def sqrt(a):
    if not isinstance(a, Jet):
        return np.sqrt(np.asarray(a, dtype=float))
    if np.any(a.value <= 0):
        raise DomainError("sqrt of a jet with non-positive value")
    return power(a, 0.5)


def exp(a):
    if not isinstance(a, Jet):
        return np.exp(np.asarray(a, dtype=float))
    e0 = np.exp(a.value)
    return _compose(a, [e0 / math.factorial(k) for k in range(a.m + 1)])


def log(a):
    if not isinstance(a, Jet):
        a = np.asarray(a, dtype=float)
        if np.any(a <= 0):
            raise DomainError("log of non-positive value")
        return np.log(a)
    a0 = a.value
    if np.any(a0 <= 0):
        raise DomainError("log of a jet with non-positive value")
    taylor = [np.log(a0)] + [(-1.0) ** (k + 1) / (k * a0**k) for k in range(1, a.m + 1)]
    return _compose(a, taylor)


def _trig(a, funcs):
    a0 = a.value
    vals = [f(a0) for f in funcs]
    return _compose(a, [vals[k % 4] / math.factorial(k) for k in range(a.m + 1)])


def sin(a):
    if not isinstance(a, Jet):
        return np.sin(np.asarray(a, dtype=float))
    return _trig(a, (np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)))


def cos(a):
    if not isinstance(a, Jet):
        return np.cos(np.asarray(a, dtype=float))
    return _trig(a, (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin))


def sinh(a):
    if not isinstance(a, Jet):
        return np.sinh(np.asarray(a, dtype=float))
    return _trig(a, (np.sinh, np.cosh, np.sinh, np.cosh))


def cosh(a):
    if not isinstance(a, Jet):
        return np.cosh(np.asarray(a, dtype=float))
    return _trig(a, (np.cosh, np.sinh, np.cosh, np.sinh))


_UNARY = {"exp": exp, "log": log, "sin": sin, "cos": cos, "sinh": sinh, "cosh": cosh}


def jet_arith(op: str, a: Jet, b=None) -> Jet:
    """Apply a named operation; ``b`` is the second operand of binary ops."""
    if op in _UNARY:
        return _UNARY[op](a)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if not isinstance(b, Jet) and np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b
    if op == "pow":
        return power(a, b)
    raise ValueError(f"unknown jet operation {op!r}")


# -- tensor helpers -------------------------------------------------------


def _common(jets: Sequence[Jet]):
    d = jets[0].d
    m = min(j.m for j in jets)
    return d, m


def stack(items: Sequence, axis: int = -1) -> Jet:
    """Stack jets (or constants) along a new trailing axis."""
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        raise ValueError("stack needs at least one jet")
    d, m = _common(jets)
    shape = np.broadcast_shapes(*(x.shape if isinstance(x, Jet) else np.shape(x) for x in items))
    cs = []
    for x in items:
        j = x.truncate(m) if isinstance(x, Jet) else Jet.constant(x, d, m)
        cs.append(np.broadcast_to(j.c, j.c.shape[:1] + shape))
    ax = axis + 1 if axis >= 0 else axis
    return Jet(np.stack(cs, axis=ax), d, m)


def einsum(subscripts: str, a, b) -> Jet:
    """Two-operand ``numpy.einsum`` over the trailing axes of jets.

    Either operand may be a plain array, in which case it is treated as a
    constant.  The letter ``z`` is reserved.
    """
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    if isinstance(a, Jet) and isinstance(b, Jet):
        a, b = a._coerce(b)
        left, right, starts = _product_table(a.d, a.m)
        prod = np.einsum(f"z{sa},z{sb}->z{out}", a.c[left], b.c[right])
        return Jet(np.add.reduceat(prod, starts, axis=0), a.d, a.m)
    if isinstance(a, Jet):
        return Jet(np.einsum(f"z{sa},{sb}->z{out}", a.c, np.asarray(b, float)), a.d, a.m)
    return Jet(np.einsum(f"{sa},z{sb}->z{out}", np.asarray(a, float), b.c), b.d, b.m)


def matmul(a, b) -> Jet:
    return einsum("...ij,...jk->...ik", a, b)


def solve(a: Jet, b: Jet) -> Jet:
    """Jet of the solution of ``a x = b`` for square ``a``.

    ``b`` has trailing shape ``(..., p)`` or ``(..., p, q)``.  The Taylor
    coefficients are obtained degree by degree from
    ``a_0 x_g = b_g - sum_{0 < alpha <= g} a_alpha x_{g - alpha}``.
    """
    a, b = a._coerce(b)
    vector = b.c.ndim == a.c.ndim - 1
    bc = b.c[..., None] if vector else b.c
    left, right, starts = _product_table(a.d, a.m)
    x = np.zeros(np.broadcast_shapes(a.c.shape[:-1] + (1,), bc.shape))
    a0 = a.c[0]
    bounds = list(starts[1:]) + [len(left)]
    for g in range(x.shape[0]):
        rhs = bc[g].copy()
        # the alpha = 0 pair is the first in each group; skip it
        for k in range(starts[g] + 1, bounds[g]):
            rhs = rhs - a.c[left[k]] @ x[right[k]]
        x[g] = np.linalg.solve(a0, rhs)
    if vector:
        x = x[..., 0]
    return Jet(x, a.d, a.m)


def inv(a: Jet) -> Jet:
    p = a.shape[-1]
    eye = Jet.constant(np.broadcast_to(np.eye(p), a.shape), a.d, a.m)
    return solve(a, eye)


def minors(a: Jet) -> dict[int, Jet]:
    """All maximal minors of a ``(..., p, q)`` jet matrix with ``p >= q``.

    Keys are bit masks of the chosen rows (in increasing order).  A dynamic
    program over columns shares partial products between minors; each
    column step is a single batched multiplication.
    """
    p, q = a.shape[-2], a.shape[-1]
    if p < q:
        raise ValueError("minors need at least as many rows as columns")
    table = {0: Jet.constant(np.ones(a.shape[:-2]), a.d, a.m)}
    for col in range(q):
        pairs = []
        for mask in table:
            for row in range(p):
                if not mask & (1 << row):
                    # each previously chosen row below this one is an inversion
                    pairs.append((mask, row, -1.0 if bin(mask >> (row + 1)).count("1") % 2 else 1.0))
        vals = stack([table[mask] for mask, _, _ in pairs], axis=-1)
        entries = stack([a[..., row, col] for _, row, _ in pairs], axis=-1)
        terms = vals * entries * np.array([sign for _, _, sign in pairs])
        nxt: dict[int, Jet] = {}
        for k, (mask, row, _) in enumerate(pairs):
            new = mask | (1 << row)
            nxt[new] = terms[..., k] if new not in nxt else nxt[new] + terms[..., k]
        table = nxt
    return table


def det(a: Jet) -> Jet:
    """Determinant over the last two axes."""
    p = a.shape[-1]
    return minors(a)[(1 << p) - 1]


# -- immersion jets -------------------------------------------------------


@dataclass
class JetPoint:
    """Jet of an immersion ``f: R^d -> R^(n+1)`` at a batch of points.

    ``f`` has trailing shape ``(*batch, n + 1)``.
    """

    f: Jet
    points: np.ndarray

    @property
    def dim_ambient(self) -> int:
        return self.f.shape[-1]

    @property
    def dim_param(self) -> int:
        return self.f.d

    @property
    def order(self) -> int:
        return self.f.m

    @property
    def components(self) -> list[Jet]:
        return [self.f[..., k] for k in range(self.dim_ambient)]

    def truncate(self, m: int) -> "JetPoint":
        return JetPoint(self.f.truncate(m), self.points)


def evaluate_jet(surface, points, order: int) -> JetPoint:
    """Jets of ``surface`` at ``points`` (shape ``(..., d)``) up to ``order``."""
    points = np.asarray(points, dtype=float)
    d = points.shape[-1]
    surface.check_domain(points)
    coords = [Jet.variable(points[..., i], i, d, order) for i in range(d)]
    comps = surface.evaluate(coords)
    return JetPoint(stack(comps, axis=-1), points)


# central difference stencils: derivative order -> {offset: weight}, divided by h**k
_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
}

_EPS = np.finfo(float).eps
_RICHARDSON_FACTORS = (1.0, 0.5, 0.25)


def finite_difference_jet(func: Callable, points, order: int, step: float | None = None) -> JetPoint:
    """Jet estimate from central differences with two Richardson steps.

    Parameters
    ----------
    func : callable
        ``func(coords) -> list of components``, evaluated on arrays.
    points : array_like
        Shape ``(..., d)``.
    order : int
        At most 3.
    step : float, optional
        Base step, scaled by ``max(1, |x_i|)`` per coordinate.  By default a
        per-order step ``eps ** (1 / (k + 6))`` balances the O(h^6) truncation
        error left after extrapolation against rounding.
    """
    if order > 3:
        raise OrderUnsupported(f"finite-difference jets support order <= 3, got {order}")
    points = np.asarray(points, dtype=float)
    d = points.shape[-1]
    batch = points.shape[:-1]
    scale = np.maximum(1.0, np.abs(points))
    idx = multi_indices(d, order)

    def h_for(k):
        base = step if step is not None else _EPS ** (1.0 / (k + 6))
        return base * scale

    # collect every stencil point, then evaluate in one call
    plans = []
    offsets_all = []
    for alpha in idx:
        k = sum(alpha)
        for factor in _RICHARDSON_FACTORS:
            hh = h_for(k) * factor
            stencils = [_STENCILS[a] for a in alpha]
            terms = []
            for combo in itertools.product(*(s.items() for s in stencils)):
                off = np.array([o for o, _ in combo], dtype=float)
                w = math.prod(wt for _, wt in combo)
                terms.append((len(offsets_all), w))
                offsets_all.append(points + off * hh)
            denom = np.prod(hh ** np.array(alpha, dtype=float), axis=-1)
            plans.append((alpha, factor, terms, denom))
    stencil = np.stack(offsets_all, axis=0)
    try:
        values = func([stencil[..., i] for i in range(d)])
        values = np.stack([np.broadcast_to(np.asarray(v, float), stencil.shape[:-1]) for v in values], axis=-1)
    except Exception as exc:  # evaluation failed somewhere in the stencil
        point = points.reshape(-1, d)[0]
        raise StencilError(f"stencil evaluation failed: {exc}", point) from exc
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        point = stencil[tuple(bad[:-1])]
        raise StencilError("non-finite value inside stencil", point)

    ncomp = values.shape[-1]
    est = {}
    for alpha, factor, terms, denom in plans:
        acc = np.zeros(batch + (ncomp,))
        for j, w in terms:
            acc = acc + w * values[j]
        est[(alpha, factor)] = acc / denom[..., None]
    coeffs = np.zeros((len(idx),) + batch + (ncomp,))
    for k, alpha in enumerate(idx):
        if sum(alpha) == 0:
            value = est[(alpha, 1.0)]
        else:
            # stencil errors are even in h: eliminate h^2 then h^4
            e1, e2, e4 = (est[(alpha, f)] for f in _RICHARDSON_FACTORS)
            first = (4.0 * e2 - e1) / 3.0
            second = (4.0 * e4 - e2) / 3.0
            value = (16.0 * second - first) / 15.0
        coeffs[k] = value / math.prod(math.factorial(a) for a in alpha)
    return JetPoint(Jet(coeffs, d, order), points)
