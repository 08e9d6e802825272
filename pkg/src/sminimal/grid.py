"""Uniform cell grids, shapes, and cell sets.

A :class:`GridSpec` is a square (or 1D) lattice of cells over a bounding box.
Sets are represented cell-wise by :class:`CellSet`, a boolean mask over the
box together with a symbolic :class:`FarField` describing the set outside the
box. The far field is never rasterized; kernel sums close it analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

TWO_PI = 2.0 * math.pi


def sphere_measure(dim: int) -> float:
    """Surface measure of the unit sphere in ``dim`` dimensions (1D: two points)."""
    if dim == 1:
        return 2.0
    if dim == 2:
        return TWO_PI
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell lattice ``origin + [0, extent]^dim`` with ``cells`` per axis."""

    dim: int
    origin: tuple[float, ...]
    extent: float
    cells: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        origin = tuple(float(x) for x in np.atleast_1d(self.origin))
        if len(origin) != self.dim:
            raise ValueError(f"origin needs {self.dim} coordinates, got {len(origin)}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", float(self.extent))
        if self.cells < 2:
            raise ValueError("cells per axis must be >= 2")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    @property
    def h(self) -> float:
        return self.extent / self.cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.dim

    @property
    def size(self) -> int:
        return self.cells**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis_centers(self, axis: int, margin: int = 0) -> np.ndarray:
        k = np.arange(-margin, self.cells + margin)
        return self.origin[axis] + (k + 0.5) * self.h

    def centers(self, margin: int = 0) -> np.ndarray:
        """Cell centers as an array of shape ``shape + (dim,)`` (optionally padded)."""
        axes = [self.axis_centers(a, margin) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def center(self, index: Sequence[int]) -> np.ndarray:
        idx = np.asarray(index, dtype=float)
        return np.asarray(self.origin) + (idx + 0.5) * self.h

    def contains_index(self, index: Sequence[int]) -> bool:
        return len(index) == self.dim and all(0 <= k < self.cells for k in index)

    def refine(self, cells: int) -> "GridSpec":
        return GridSpec(self.dim, self.origin, self.extent, cells)

    def key(self) -> str:
        origin = ",".join(f"{x:.17g}" for x in self.origin)
        return f"d{self.dim}_o{origin}_e{self.extent:.17g}_n{self.cells}"


# ---------------------------------------------------------------------------
# far field


def _normalize_sectors(intervals) -> tuple[tuple[float, float], ...]:
    """Wrap intervals into [0, 2pi), split at 2pi and merge overlaps."""
    pieces = []
    for a, b in intervals:
        a, b = float(a), float(b)
        if b - a >= TWO_PI - 1e-12:
            return ((0.0, TWO_PI),)
        if b <= a:
            continue
        a0 = a % TWO_PI
        b0 = a0 + (b - a)
        if b0 > TWO_PI:
            pieces.append((a0, TWO_PI))
            pieces.append((0.0, b0 - TWO_PI))
        else:
            pieces.append((a0, b0))
    pieces.sort()
    merged: list[list[float]] = []
    for a, b in pieces:
        if merged and a <= merged[-1][1] + 1e-12:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return tuple((a, b) for a, b in merged)


@dataclass(frozen=True)
class FarField:
    """Directions (as angle sectors about the coordinate origin) covered far away.

    In 1D the two directions are encoded as the angles 0 (towards +inf) and pi.
    """

    sectors: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sectors", _normalize_sectors(self.sectors))

    @classmethod
    def empty(cls) -> "FarField":
        return cls(())

    @classmethod
    def full(cls) -> "FarField":
        return cls(((0.0, TWO_PI),))

    @classmethod
    def cone(cls, *sectors: tuple[float, float]) -> "FarField":
        return cls(tuple(sectors))

    @property
    def kind(self) -> str:
        if not self.sectors:
            return "empty"
        if self.sectors == ((0.0, TWO_PI),):
            return "full"
        return "cone"

    @property
    def is_empty(self) -> bool:
        return not self.sectors

    def _contains_angle(self, theta: np.ndarray) -> np.ndarray:
        theta = np.mod(theta, TWO_PI)
        out = np.zeros(np.shape(theta), dtype=bool)
        for a, b in self.sectors:
            out |= (theta >= a) & (theta < b)
        return out

    def measure(self, dim: int) -> float:
        """Angular measure of the covered directions."""
        if dim == 1:
            return float(np.count_nonzero(self._contains_angle(np.array([0.0, math.pi]))))
        return float(sum(b - a for a, b in self.sectors))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership of points (shape ``(..., dim)``) judged by their direction only."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] == 1:
            theta = np.where(points[..., 0] >= 0, 0.0, math.pi)
        else:
            theta = np.arctan2(points[..., 1], points[..., 0])
        return self._contains_angle(theta)

    def complement(self) -> "FarField":
        edges = [0.0]
        for a, b in self.sectors:
            edges.extend([a, b])
        edges.append(TWO_PI)
        gaps = [(edges[k], edges[k + 1]) for k in range(0, len(edges), 2)]
        return FarField(tuple((a, b) for a, b in gaps if b > a + 1e-15))

    def union(self, other: "FarField") -> "FarField":
        return FarField(self.sectors + other.sectors)

    def intersection(self, other: "FarField") -> "FarField":
        return self.complement().union(other.complement()).complement()


# ---------------------------------------------------------------------------
# cell sets


@dataclass(frozen=True, eq=False)
class CellSet:
    """A set as a boolean cell mask over the grid box plus its far-field description."""

    grid: GridSpec
    mask: np.ndarray
    far_field: FarField = field(default_factory=FarField.empty)

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != self.grid.shape:
            raise ValueError(f"mask shape {mask.shape} does not match grid {self.grid.shape}")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def empty(cls, grid: GridSpec) -> "CellSet":
        return cls(grid, np.zeros(grid.shape, bool))

    @classmethod
    def full(cls, grid: GridSpec) -> "CellSet":
        return cls(grid, np.ones(grid.shape, bool), FarField.full())

    @classmethod
    def box(cls, grid: GridSpec) -> "CellSet":
        """All cells of the box, nothing outside."""
        return cls(grid, np.ones(grid.shape, bool))

    @classmethod
    def from_indices(cls, grid: GridSpec, indices, far_field: FarField | None = None) -> "CellSet":
        mask = np.zeros(grid.shape, bool)
        idx = np.asarray(indices, dtype=int).reshape(-1, grid.dim)
        if len(idx):
            mask[tuple(idx.T)] = True
        return cls(grid, mask, far_field or FarField.empty())

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def volume(self) -> float:
        return self.count * self.grid.cell_volume

    @property
    def bounded(self) -> bool:
        return self.far_field.is_empty

    def is_empty(self) -> bool:
        return self.count == 0 and self.far_field.is_empty

    def indices(self) -> np.ndarray:
        return np.argwhere(self.mask)

    def _check(self, other: "CellSet"):
        if other.grid != self.grid:
            raise ValueError("cell sets live on different grids")

    def __or__(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask | other.mask, self.far_field.union(other.far_field))

    def __and__(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask & other.mask, self.far_field.intersection(other.far_field))

    def __sub__(self, other: "CellSet") -> "CellSet":
        return self & ~other

    def __invert__(self) -> "CellSet":
        return CellSet(self.grid, ~self.mask, self.far_field.complement())

    def same_as(self, other: "CellSet") -> bool:
        return (
            self.grid == other.grid
            and bool(np.array_equal(self.mask, other.mask))
            and self.far_field == other.far_field
        )

    def issubset(self, other: "CellSet") -> bool:
        self._check(other)
        return bool(np.all(~self.mask | other.mask))

    def padded(self, margin: int) -> np.ndarray:
        """Mask over the box padded by ``margin`` cells filled from the far field."""
        if margin == 0:
            return self.mask.copy()
        if self.far_field.kind == "empty":
            out = np.zeros(tuple(n + 2 * margin for n in self.grid.shape), bool)
        elif self.far_field.kind == "full":
            out = np.ones(tuple(n + 2 * margin for n in self.grid.shape), bool)
        else:
            out = self.far_field.contains(self.grid.centers(margin))
        inner = tuple(slice(margin, margin + n) for n in self.grid.shape)
        out[inner] = self.mask
        return out

    def to_text(self) -> str:
        """Text raster, one row per grid line (top row = largest second coordinate)."""
        if self.grid.dim == 1:
            rows = [self.mask[None, :]]
        else:
            rows = [self.mask.T[::-1]]
        return "\n".join("".join("1" if v else "0" for v in row) for row in rows[0]) + "\n"

    def to_csv(self) -> str:
        header = ",".join(f"i{a}" for a in range(self.grid.dim))
        lines = [header] + [",".join(str(int(k)) for k in idx) for idx in self.indices()]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# shapes


_BOUNDED_TAGS = {"ball", "box", "dumbbell_K", "dumbbell_Omega"}
SHAPE_TAGS = _BOUNDED_TAGS | {"halfplane", "union", "intersection", "complement", "level"}


@dataclass(frozen=True, eq=False)
class ShapeDesc:
    """Analytic shape: a tag plus its parameters. Build with the helper functions below."""

    tag: str
    params: dict = field(default_factory=dict)
    children: tuple["ShapeDesc", ...] = ()

    def __post_init__(self):
        if self.tag not in SHAPE_TAGS:
            raise ValueError(f"unknown shape tag {self.tag!r}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        x = p[..., 0]
        tag, par = self.tag, self.params
        if tag == "ball":
            c = np.asarray(par["center"], float)
            return np.sum((p - c) ** 2, axis=-1) < par["radius"] ** 2
        if tag == "box":
            lo, hi = np.asarray(par["lo"], float), np.asarray(par["hi"], float)
            return np.all((p >= lo) & (p <= hi), axis=-1)
        if tag == "halfplane":
            n = np.asarray(par["normal"], float)
            return p @ n < par["offset"]
        if tag == "dumbbell_K":
            y = p[..., 1]
            return (x**2 + y**2 <= 1.0) & (y <= 5.0 * np.abs(x))
        if tag == "dumbbell_Omega":
            outer = np.sum(p**2, axis=-1) < 4.0
            return outer & ~dumbbell_K().contains(p)
        if tag == "union":
            return np.logical_or.reduce([c.contains(p) for c in self.children])
        if tag == "intersection":
            return np.logical_and.reduce([c.contains(p) for c in self.children])
        if tag == "complement":
            return ~self.children[0].contains(p)
        if tag == "level":
            return np.asarray(par["field"](p)) >= par["t"]
        raise ValueError(f"unknown shape tag {tag!r}")

    def far_field(self, dim: int = 2) -> FarField:
        tag = self.tag
        if tag in _BOUNDED_TAGS:
            return FarField.empty()
        if tag == "halfplane":
            n = np.asarray(self.params["normal"], float)
            if dim == 1:
                return FarField.cone((math.pi - 0.5, math.pi + 0.5)) if n[0] > 0 else FarField.cone((-0.5, 0.5))
            tn = math.atan2(n[1], n[0])
            return FarField.cone((tn + math.pi / 2, tn + 3 * math.pi / 2))
        if tag == "union":
            out = FarField.empty()
            for c in self.children:
                out = out.union(c.far_field(dim))
            return out
        if tag == "intersection":
            out = FarField.full()
            for c in self.children:
                out = out.intersection(c.far_field(dim))
            return out
        if tag == "complement":
            return self.children[0].far_field(dim).complement()
        if tag == "level":
            return self.params.get("far_field", FarField.empty())
        raise ValueError(f"unknown shape tag {tag!r}")


def ball(center, radius: float) -> ShapeDesc:
    return ShapeDesc("ball", {"center": tuple(np.atleast_1d(center)), "radius": float(radius)})


def box(lo, hi) -> ShapeDesc:
    return ShapeDesc("box", {"lo": tuple(np.atleast_1d(lo)), "hi": tuple(np.atleast_1d(hi))})


def halfplane(normal, offset: float = 0.0) -> ShapeDesc:
    """The open half-space ``{x : x . normal < offset}``."""
    return ShapeDesc("halfplane", {"normal": tuple(np.atleast_1d(normal)), "offset": float(offset)})


def dumbbell_K() -> ShapeDesc:
    return ShapeDesc("dumbbell_K")


def dumbbell_Omega() -> ShapeDesc:
    return ShapeDesc("dumbbell_Omega")


def union(*shapes: ShapeDesc) -> ShapeDesc:
    return ShapeDesc("union", children=tuple(shapes))


def intersection(*shapes: ShapeDesc) -> ShapeDesc:
    return ShapeDesc("intersection", children=tuple(shapes))


def complement(shape: ShapeDesc) -> ShapeDesc:
    return ShapeDesc("complement", children=(shape,))


def difference(a: ShapeDesc, b: ShapeDesc) -> ShapeDesc:
    return intersection(a, complement(b))


def level_set(fn: Callable[[np.ndarray], np.ndarray], t: float, far_field: FarField | None = None) -> ShapeDesc:
    """Superlevel set ``{fn >= t}``; ``far_field`` describes it outside the box."""
    return ShapeDesc("level", {"field": fn, "t": float(t), "far_field": far_field or FarField.empty()})


def rasterize(shape: ShapeDesc, grid: GridSpec) -> CellSet:
    """Center-in rasterization: a cell belongs to the set iff its center does."""
    if not isinstance(shape, ShapeDesc):
        raise TypeError(f"expected ShapeDesc, got {type(shape).__name__}")
    mask = shape.contains(grid.centers())
    return CellSet(grid, mask, shape.far_field(grid.dim))


def dilate(E: CellSet, r: float) -> CellSet:
    """Cells whose center lies closer than ``r + h/2`` to some cell center of ``E``."""
    if r < 0:
        raise ValueError("dilation radius must be non-negative")
    if E.count == 0:
        return E
    grid = E.grid
    margin = int(math.ceil(r / grid.h)) + 1
    padded = np.pad(E.mask, margin)
    dist = ndimage.distance_transform_edt(~padded) * grid.h
    inner = tuple(slice(margin, margin + n) for n in grid.shape)
    return CellSet(grid, dist[inner] < r + grid.h / 2, E.far_field)


def diameter(E: CellSet) -> float:
    """Largest center-to-center distance plus one cell width."""
    if not E.bounded:
        raise ValueError("diameter of an unbounded set")
    if E.count == 0:
        raise ValueError("diameter of an empty set")
    pts = E.grid.centers()[E.mask]
    if len(pts) > 3 and E.grid.dim == 2:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    if E.grid.dim == 1:
        span = float(pts.max() - pts.min())
    else:
        d = pts[:, None, :] - pts[None, :, :]
        span = float(np.sqrt(np.max(np.sum(d * d, axis=-1))))
    return span + E.grid.h
