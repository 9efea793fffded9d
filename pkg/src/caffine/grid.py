"""Rectangular parameter grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

MAX_POINTS = 100_000


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    count: int
    periodic: bool = False

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count, endpoint=not self.periodic)

    def to_json(self) -> list:
        return [self.lo, self.hi, self.count, self.periodic]

    @classmethod
    def from_json(cls, data) -> "Axis":
        lo, hi, count, *rest = data
        return cls(float(lo), float(hi), int(count), bool(rest[0]) if rest else False)


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over an optional ``t`` axis followed by chart axes ``u``.

    Points are enumerated in C order (last axis fastest), which fixes the
    tie-break order of every worst-point reduction.
    """

    t_range: tuple | None
    u_spec: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.t_range is not None:
            t_min, t_max, count = self.t_range
            if t_min <= 0:
                raise InvalidInput(f"grid t_min must be positive, got {t_min}")
            if count < 2:
                raise InvalidInput("grid counts must be at least 2")
        for ax in self.u_spec:
            if ax.count < 2:
                raise InvalidInput("grid counts must be at least 2")
        if self.size > MAX_POINTS:
            raise InvalidInput(f"grid has {self.size} points, limit is {MAX_POINTS}")

    @property
    def axes(self) -> list[Axis]:
        out = []
        if self.t_range is not None:
            t_min, t_max, count = self.t_range
            out.append(Axis(float(t_min), float(t_max), int(count)))
        return out + list(self.u_spec)

    @property
    def shape(self) -> tuple:
        return tuple(ax.count for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.axes else 0

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*(ax.values() for ax in self.axes), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def with_counts(self, t_count: int | None = None, u_count: int | None = None) -> "GridSpec":
        t_range = self.t_range
        if t_range is not None and t_count is not None:
            t_range = (t_range[0], t_range[1], t_count)
        u_spec = self.u_spec
        if u_count is not None:
            u_spec = tuple(Axis(a.lo, a.hi, u_count, a.periodic) for a in u_spec)
        return GridSpec(t_range, u_spec)

    def to_json(self) -> dict:
        return {
            "t_range": None if self.t_range is None else [float(self.t_range[0]), float(self.t_range[1]), int(self.t_range[2])],
            "u_spec": [ax.to_json() for ax in self.u_spec],
        }

    @classmethod
    def from_json(cls, data: dict) -> "GridSpec":
        t = data.get("t_range")
        t_range = None if t is None else (float(t[0]), float(t[1]), int(t[2]))
        return cls(t_range, tuple(Axis.from_json(a) for a in data.get("u_spec", [])))
