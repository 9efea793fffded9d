"""Parametrized hypersurfaces.

A surface maps a list of parameter coordinates to a list of ambient
components.  Evaluators are written with the elementary functions of
:mod:`caffine.jets`, so the same code runs on floats, arrays and jets.
"""

from __future__ import annotations

import numpy as np

from . import jets as J
from .errors import ChartError
from .grid import Axis, GridSpec

# distance kept from chart singularities (radians for angular charts)
CHART_MARGIN = 0.1


class Surface:
    """Base class for an immersion ``R^dim -> R^(dim + 1)``."""

    name = "surface"
    dim: int

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    def evaluate(self, coords: list) -> list:
        raise NotImplementedError

    def check_domain(self, points: np.ndarray) -> None:
        """Raise :class:`ChartError` for the first point outside the chart."""

    def default_grid(self) -> GridSpec:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"surface": self.name, "dim": self.dim}

    def __call__(self, points) -> np.ndarray:
        """Ambient positions of ``points`` with shape ``(..., dim)``."""
        points = np.asarray(points, dtype=float)
        self.check_domain(points)
        comps = self.evaluate([points[..., i] for i in range(self.dim)])
        shape = points.shape[:-1]
        return np.stack([np.broadcast_to(np.asarray(c, float), shape) for c in comps], axis=-1)


def _first_bad(points: np.ndarray, bad: np.ndarray):
    flat = points.reshape(-1, points.shape[-1])
    return flat[int(np.argmax(bad.ravel()))]


class Paraboloid(Surface):
    """Graph of ``|u|^2 / 2``: an improper affine hypersphere with affine normal ``e_n``."""

    name = "paraboloid"

    def __init__(self, n: int = 2):
        self.dim = n

    def evaluate(self, coords):
        sq = sum(c * c for c in coords)
        return list(coords) + [sq * 0.5]

    def default_grid(self) -> GridSpec:
        # stays clear of u = 0, where the position vector is tangent
        return GridSpec(None, tuple(Axis(0.25, 1.0, 8) for _ in range(self.dim)))


class UnitSphere(Surface):
    """Upper unit hemisphere as the graph of ``sqrt(1 - |u|^2)``."""

    name = "unit_sphere"

    def __init__(self, n: int = 2):
        self.dim = n

    def check_domain(self, points):
        radius = np.sqrt(np.sum(points**2, axis=-1))
        bad = radius >= np.cos(CHART_MARGIN)
        if np.any(bad):
            raise ChartError("outside the hemisphere chart", _first_bad(points, bad))

    def evaluate(self, coords):
        sq = sum(c * c for c in coords)
        return list(coords) + [J.sqrt(1.0 - sq)]

    def default_grid(self) -> GridSpec:
        return GridSpec(None, tuple(Axis(-0.5, 0.5, 8) for _ in range(self.dim)))


class Plane(Surface):
    """Coordinate hyperplane; degenerate, used as a negative control."""

    name = "plane"

    def __init__(self, n: int = 2):
        self.dim = n

    def evaluate(self, coords):
        return list(coords) + [coords[0] * 0.0]

    def default_grid(self) -> GridSpec:
        return GridSpec(None, tuple(Axis(-1.0, 1.0, 4) for _ in range(self.dim)))


class LinearImage(Surface):
    """``x -> M x + b`` applied to another surface."""

    def __init__(self, base: Surface, matrix, offset=None):
        self.base = base
        self.dim = base.dim
        self.matrix = np.asarray(matrix, dtype=float)
        self.offset = None if offset is None else np.asarray(offset, dtype=float)
        self.name = f"linear_image({base.name})"

    @property
    def params(self):
        """Construction constants of the underlying family, if any."""
        return getattr(self.base, "params", None)

    def check_domain(self, points):
        self.base.check_domain(points)

    def evaluate(self, coords):
        comps = self.base.evaluate(coords)
        out = []
        for i in range(self.ambient_dim):
            acc = 0.0
            for j, c in enumerate(comps):
                if self.matrix[i, j] != 0.0:
                    acc = c * self.matrix[i, j] + acc
            if self.offset is not None:
                acc = acc + self.offset[i]
            out.append(acc)
        return out

    def default_grid(self) -> GridSpec:
        return self.base.default_grid()

    def describe(self) -> dict:
        return {**self.base.describe(), "linear_map": self.matrix.tolist()}


CLASSICAL = {
    "paraboloid": Paraboloid,
    "unit_sphere": UnitSphere,
}
