"""Pair weights of the kernel ``|x - y|^{-(n+s)}`` on a uniform cell grid.

On a uniform grid the cell-pair weight ``w_ij`` only depends on the offset
between the two cells, so a :class:`KernelTable` stores a translation
invariant *stencil* ``w(offset)`` for every offset within the truncation
radius. Beyond the radius the kernel mass is closed analytically
(``far_mass``). Pair sums over the table are evaluated in :mod:`._loops`.
"""

from __future__ import annotations

import functools
import hashlib
import math
import os
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .grid import CellSet, GridSpec, diameter, sphere_measure

NEAR_RULES = ("tent", "exact_1d", "midpoint")
_SUBDIV = re.compile(r"^subdivided\((\d+)\)$")
CACHE_ENV = "SMINIMAL_KERNEL_CACHE"


# ---------------------------------------------------------------------------
# exact near-field weights
#
# For unit cells C_0, C_o the double integral of |x-y|^{-a} equals the single
# integral of |z|^{-a} against the tent Lambda(z - o) (autocorrelation of the
# unit cell). Lambda is piecewise multilinear, so in polar coordinates the
# radial integral is closed form and only the angle is integrated numerically.


def _ray_box(theta: float, x0: float, x1: float, y0: float, y1: float):
    c, s = math.cos(theta), math.sin(theta)
    tmin, tmax = 0.0, math.inf
    for d, lo, hi in ((c, x0, x1), (s, y0, y1)):
        if abs(d) < 1e-300:
            if lo > 0 or hi < 0:
                return None
            continue
        t1, t2 = lo / d, hi / d
        if t1 > t2:
            t1, t2 = t2, t1
        tmin, tmax = max(tmin, t1), min(tmax, t2)
    if tmax <= tmin:
        return None
    return tmin, tmax


def _bilinear_piece(alpha: float, rect, a1, b1, a2, b2) -> float:
    """Integral of |z|^-alpha (a1 + b1 z1)(a2 + b2 z2) over an axis-aligned rectangle."""
    x0, x1, y0, y1 = rect

    def radial(theta):
        hit = _ray_box(theta, x0, x1, y0, y1)
        if hit is None:
            return 0.0
        r_in, r_out = hit
        c, s = math.cos(theta), math.sin(theta)
        coef = (a1 * a2, a1 * b2 * s + b1 * a2 * c, b1 * b2 * c * s)
        total = 0.0
        for k, ck in enumerate(coef):
            e = 2.0 - alpha + k
            if r_in == 0.0:
                if e <= 0.0:
                    # the tent vanishes at the origin, so these terms carry zero weight
                    continue
                total += ck * r_out**e / e
            else:
                total += ck * (r_out**e - r_in**e) / e
        return total

    corners = sorted({math.atan2(y, x) % (2 * math.pi) for x in (x0, x1) for y in (y0, y1)})
    edges = [0.0, *corners, 2 * math.pi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a > 1e-15:
            total += quad(radial, a, b, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    return total


@functools.lru_cache(maxsize=None)
def tent_weight_2d(o1: int, o2: int, s: float) -> float:
    """Exact unit-cell pair integral for the offset ``(o1, o2) != 0`` in 2D."""
    if o1 == 0 and o2 == 0:
        raise ValueError("self pair has no finite weight")
    alpha = 2.0 + s
    total = 0.0
    for lo1, hi1, a1, b1 in ((o1 - 1, o1, 1.0 - o1, 1.0), (o1, o1 + 1, 1.0 + o1, -1.0)):
        for lo2, hi2, a2, b2 in ((o2 - 1, o2, 1.0 - o2, 1.0), (o2, o2 + 1, 1.0 + o2, -1.0)):
            total += _bilinear_piece(alpha, (lo1, hi1, lo2, hi2), a1, b1, a2, b2)
    return total


def tent_weight_1d(o: int, s: float) -> float:
    """Closed form of the unit-cell pair integral in 1D for ``|o| >= 1``."""
    o = abs(int(o))
    if o == 0:
        raise ValueError("self pair has no finite weight")
    p = 1.0 - s
    return (2.0 * o**p - (o + 1) ** p - (o - 1) ** p) / (s * p)


def subdivided_weight(offset, s: float, k: int) -> float:
    """Midpoint rule on the ``k^dim`` x ``k^dim`` sub-cell pairs of two unit cells."""
    dim = len(offset)
    g = (np.arange(k) + 0.5) / k
    pts = np.stack(np.meshgrid(*([g] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    other = pts + np.asarray(offset, float)
    total = 0.0
    for chunk in np.array_split(np.arange(len(pts)), max(1, len(pts) // 256)):
        d = np.linalg.norm(pts[chunk, None, :] - other[None, :, :], axis=-1)
        total += float(np.sum(d ** (-(dim + s))))
    return total / float(k) ** (2 * dim)


def _near_weight(offset: tuple[int, ...], s: float, rule: str) -> float:
    dim = len(offset)
    if rule == "midpoint":
        return float(np.sum(np.square(offset))) ** (-(dim + s) / 2)
    m = _SUBDIV.match(rule)
    if m:
        return subdivided_weight(offset, s, int(m.group(1)))
    if rule == "exact_1d":
        if dim != 1:
            raise ValueError("exact_1d near rule is only available in 1D")
        return tent_weight_1d(offset[0], s)
    if rule == "tent":
        if dim == 1:
            return tent_weight_1d(offset[0], s)
        a, b = sorted((abs(offset[0]), abs(offset[1])), reverse=True)
        return tent_weight_2d(a, b, s)
    raise ValueError(f"unknown near rule {rule!r}")


def check_near_rule(rule: str) -> str:
    if rule not in NEAR_RULES and not _SUBDIV.match(rule):
        raise ValueError(f"unknown near rule {rule!r}")
    return rule


def unit_stencil(dim: int, s: float, radius: float, near_rule: str = "tent") -> np.ndarray:
    """Weights for unit cells at all integer offsets with ``|o| <= radius``.

    Offsets closer than two cells use ``near_rule``; all others the midpoint rule.
    """
    K = int(math.floor(radius + 1e-12))
    ax = np.arange(-K, K + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    r2 = sum(g.astype(float) ** 2 for g in grids)
    with np.errstate(divide="ignore"):
        st = np.where(r2 > 0, r2 ** (-(dim + s) / 2), 0.0)
    st[r2 > radius**2 + 1e-9] = 0.0
    near = np.argwhere((r2 > 0) & (r2 < 4))
    for idx in near:
        off = tuple(int(v) - K for v in idx)
        st[tuple(idx)] = _near_weight(off, s, near_rule)
    return st


# ---------------------------------------------------------------------------
# table


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Translation-invariant pair weights for one grid, order ``s`` and domain ``omega``.

    ``stencil[K + o]`` is the weight of two cells at offset ``o`` (zero for the
    self pair and beyond ``r_trunc``); ``far_mass`` is the analytic kernel mass
    of ``{|y - x| > r_trunc}`` seen from any cell center.
    """

    grid: GridSpec
    s: float
    omega: CellSet
    r_trunc: float
    near_rule: str
    stencil: np.ndarray
    far_mass: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def radius_cells(self) -> int:
        return (self.stencil.shape[0] - 1) // 2

    def weight(self, i, j) -> float:
        """Weight of the cell pair ``(i, j)`` given as index tuples."""
        off = np.asarray(j, int) - np.asarray(i, int)
        K = self.radius_cells
        if np.any(np.abs(off) > K):
            return 0.0
        return float(self.stencil[tuple(off + K)])

    def nonzero(self) -> tuple[np.ndarray, np.ndarray]:
        """Offsets (``m x dim`` ints) and weights of the nonzero stencil entries."""
        if "nz" not in self._cache:
            K = self.radius_cells
            idx = np.argwhere(self.stencil > 0)
            self._cache["nz"] = (idx - K, self.stencil[tuple(idx.T)].copy())
        return self._cache["nz"]

    @property
    def far_mass_cells(self) -> np.ndarray:
        """Far mass for every omega cell (constant on a uniform grid)."""
        return np.full(self.omega.count, self.far_mass)

    @property
    def ring(self) -> CellSet:
        """Box cells outside omega that interact with omega inside the truncation radius."""
        if "ring" not in self._cache:
            from scipy import ndimage

            dist = ndimage.distance_transform_edt(~self.omega.mask)
            near = dist * dist <= (self.r_trunc / self.grid.h) ** 2 + 1e-9
            self._cache["ring"] = CellSet(self.grid, near & ~self.omega.mask)
        return self._cache["ring"]

    def total_mass(self) -> float:
        """Sum of all stencil weights plus ``h^n`` times the far mass."""
        return float(np.sum(self.stencil)) + self.grid.cell_volume * self.far_mass

    def dense(self, cells: CellSet | np.ndarray | None = None) -> np.ndarray:
        """Dense symmetric weight matrix among ``cells`` (default: omega), row-major order."""
        from ._loops import dense_pairs

        mask = self.omega.mask if cells is None else getattr(cells, "mask", cells)
        return dense_pairs(np.argwhere(mask), self.stencil, self.radius_cells)

    def compatible(self, grid: GridSpec) -> bool:
        return grid == self.grid


def far_mass(dim: int, s: float, r_trunc: float) -> float:
    """Kernel mass outside a ball: ``|S^{n-1}| r^{-s} / s``."""
    return sphere_measure(dim) * r_trunc ** (-s) / s


def build_kernel(
    grid: GridSpec,
    omega: CellSet,
    r_trunc: float,
    s: float,
    near_rule: str = "tent",
) -> KernelTable:
    """Weight table for ``omega`` on ``grid``.

    Well-separated pairs (center distance >= 2h) get ``h^{2n} |x_i - x_j|^{-n-s}``;
    adjacent and diagonal pairs use ``near_rule``. Every omega-omega pair must lie
    inside the truncation radius, hence ``r_trunc >= diameter(omega)``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {s}")
    check_near_rule(near_rule)
    if omega.grid != grid:
        raise ValueError("omega lives on a different grid")
    if omega.count == 0:
        raise ValueError("omega is empty")
    if not omega.bounded:
        raise ValueError("omega must be bounded")
    diam = diameter(omega)
    if r_trunc < diam - 1e-12:
        raise ValueError(f"r_trunc={r_trunc} is smaller than diameter(omega)={diam:.6g}")
    st = _cached_stencil(grid, s, r_trunc, near_rule)
    return KernelTable(grid, float(s), omega, float(r_trunc), near_rule, st, far_mass(grid.dim, s, r_trunc))


def with_omega(kt: KernelTable, omega: CellSet) -> KernelTable:
    """Same weights on a different domain (the truncation radius must still cover it)."""
    return build_kernel(kt.grid, omega, kt.r_trunc, kt.s, kt.near_rule)


def _stencil(grid: GridSpec, s: float, r_trunc: float, near_rule: str) -> np.ndarray:
    st = unit_stencil(grid.dim, s, r_trunc / grid.h, near_rule)
    st *= grid.h ** (grid.dim - s)
    st.setflags(write=False)
    return st


_MEMO: dict = {}


def _cached_stencil(grid: GridSpec, s: float, r_trunc: float, near_rule: str) -> np.ndarray:
    key = (grid.dim, grid.h, float(s), float(r_trunc), near_rule)
    if key in _MEMO:
        return _MEMO[key]
    cache_dir = os.environ.get(CACHE_ENV)
    path = None
    if cache_dir:
        path = Path(cache_dir) / f"kernel_{cache_key(grid, s, r_trunc, near_rule)}.bin"
        if path.exists():
            try:
                st = load_stencil(path, grid, s, r_trunc, near_rule)
                _MEMO[key] = st
                return st
            except ValueError:
                pass
    st = _stencil(grid, s, r_trunc, near_rule)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_stencil(path, st, grid, s, r_trunc, near_rule)
    _MEMO[key] = st
    return st


# ---------------------------------------------------------------------------
# binary cache: header + row-major little-endian float64 blocks

_MAGIC = b"SMKT"
_VERSION = 1


def cache_key(grid: GridSpec, s: float, r_trunc: float, near_rule: str) -> str:
    text = f"{grid.key()}|{s:.17g}|{r_trunc:.17g}|{near_rule}"
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def save_stencil(path, stencil: np.ndarray, grid: GridSpec, s: float, r_trunc: float, near_rule: str):
    rule = near_rule.encode()
    K = (stencil.shape[0] - 1) // 2
    header = struct.pack("<4sIIIIddd", _MAGIC, _VERSION, grid.dim, grid.cells, K, s, r_trunc, grid.h)
    header += struct.pack("<I", len(rule)) + rule
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stencil, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_stencil(path, grid: GridSpec, s: float, r_trunc: float, near_rule: str) -> np.ndarray:
    data = Path(path).read_bytes()
    fixed = struct.calcsize("<4sIIIIddd")
    magic, version, dim, cells, K, s0, r0, h0 = struct.unpack_from("<4sIIIIddd", data, 0)
    (nrule,) = struct.unpack_from("<I", data, fixed)
    rule = data[fixed + 4 : fixed + 4 + nrule].decode()
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not a kernel cache file")
    if (dim, cells, s0, r0, rule) != (grid.dim, grid.cells, s, r_trunc, near_rule) or h0 != grid.h:
        raise ValueError("kernel cache parameters do not match")
    body = np.frombuffer(data, dtype="<f8", offset=fixed + 4 + nrule)
    st = body.reshape((2 * K + 1,) * dim).astype(float)
    st.setflags(write=False)
    return st


def save_kernel(kt: KernelTable, path) -> None:
    save_stencil(path, kt.stencil, kt.grid, kt.s, kt.r_trunc, kt.near_rule)


def load_kernel(path, grid: GridSpec, omega: CellSet, s: float, r_trunc: float, near_rule: str = "tent") -> KernelTable:
    st = load_stencil(path, grid, s, r_trunc, near_rule)
    return KernelTable(grid, float(s), omega, float(r_trunc), near_rule, st, far_mass(grid.dim, s, r_trunc))


# ---------------------------------------------------------------------------


def tail_norm(phi, kt: KernelTable, D: float) -> float:
    """Sum over omega cells of ``|phi_j| w_ij`` for exterior cells ``j`` within distance ``D``.

    ``phi`` is a :class:`~sminimal.solver.ScalarField`; cells outside the box
    carry its far value.
    """
    from ._loops import interaction_sum, layout

    if D <= 0:
        raise ValueError("tail neighbourhood radius must be positive")
    lay = layout(kt)
    m = lay.margin
    grid = kt.grid
    near = np.pad(kt.omega.mask, m)
    from scipy import ndimage

    dist = ndimage.distance_transform_edt(~near) * grid.h
    band = (dist < D + grid.h / 2) & ~near
    vals = np.abs(phi.padded_values(m))
    weights = np.where(band, vals, 0.0)
    return interaction_sum(lay.flat_index(kt.omega.indices()), weights.ravel(), lay.offsets, lay.weights)
