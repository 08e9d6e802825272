"""Fractional mean curvature of cell sets.

Curvature is evaluated at the midpoint ``p`` between a boundary cell ``x``
and a neighbouring cell ``y`` of opposite membership. Reflection about ``p``
maps cell centers to cell centers, so cells are summed in antipodal pairs
``(c, 2p - c)``: both carry the same kernel value and a pair cancels exactly
when its two cells have opposite membership. Pairs inside ``B_rho(p)`` form
the principal-value core; those that do not cancel are reported as
``pv_pairing_error`` instead of entering the value.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .grid import CellSet, sphere_measure
from .kernel import KernelTable


@dataclass(frozen=True)
class CurvatureSample:
    point: tuple[int, ...]
    rho: float
    value: float
    tail_part: float
    pv_pairing_error: float
    directions: int = 1


@functools.lru_cache(maxsize=64)
def _pair_offsets(direction: tuple[int, ...], radius_cells: float, s: float):
    """Half of the antipodal pairs about ``e/2``: offsets ``k`` and partners ``e - k``,
    with unit-grid distances ``|k - e/2|``."""
    dim = len(direction)
    e = np.asarray(direction)
    K = int(math.ceil(radius_cells)) + 1
    ax = np.arange(-K, K + 2)
    k = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    d = k - e / 2.0
    r = np.sqrt(np.sum(d * d, axis=1))
    keep = r <= radius_cells + 1e-9
    k, r = k[keep], r[keep]
    partner = e - k
    # one representative per pair: lexicographically larger than its partner
    rep = np.zeros(len(k), bool)
    for a in range(dim - 1, -1, -1):
        rep = np.where(k[:, a] != partner[:, a], k[:, a] > partner[:, a], rep)
    k, partner, r = k[rep], partner[rep], r[rep]
    order = np.lexsort((k[:, -1], r)) if dim > 1 else np.argsort(r, kind="stable")
    out = (k[order], partner[order], r[order])
    for a in out:
        a.setflags(write=False)
    return out


def _directions(dim: int):
    return [e for e in itertools.product((-1, 0, 1), repeat=dim) if any(e)]


def _eval(padded: np.ndarray, margin: int, x, e, rho: float, kt: KernelTable, E: CellSet):
    g = kt.grid
    h = g.h
    k, partner, r = _pair_offsets(tuple(int(v) for v in e), kt.r_trunc / h, kt.s)
    base = np.asarray(x) + margin
    a = padded[tuple((base + k).T)]
    b = padded[tuple((base + partner).T)]
    # chi_{CE} - chi_E is +1 outside, -1 inside
    sig = (1.0 - 2.0 * a) + (1.0 - 2.0 * b)
    kern = g.cell_volume * (r * h) ** (-g.dim - kt.s)
    inner = r * h < rho
    pairs = sig * kern
    outer_val = float(np.sum(pairs[~inner]))
    pv_err = float(np.sum(np.abs(pairs[inner])))
    mE = E.far_field.measure(g.dim)
    tail = (sphere_measure(g.dim) - 2.0 * mE) * kt.r_trunc ** (-kt.s) / kt.s
    return outer_val + tail, tail, pv_err


def _padded(E: CellSet, kt: KernelTable):
    margin = int(math.ceil(kt.r_trunc / kt.grid.h)) + 2
    return E.padded(margin).astype(np.int8), margin


def is_boundary_cell(E: CellSet, x) -> bool:
    from .diagnostics import measure_boundary

    return bool(measure_boundary(E)[2].mask[tuple(x)])


def mean_curvature(
    E: CellSet,
    x,
    rho: float,
    kt: KernelTable,
    direction=None,
    _pad=None,
) -> CurvatureSample:
    """``H_s^rho[E]`` at the boundary cell ``x``.

    Without ``direction`` the value is averaged over all midpoints between
    ``x`` and its ``3^n`` neighbours of opposite membership; with it, only the
    midpoint ``x + direction h / 2`` is used.
    """
    if E.grid != kt.grid:
        raise ValueError("set and kernel table live on different grids")
    x = tuple(int(v) for v in np.atleast_1d(x))
    if not kt.grid.contains_index(x):
        raise ValueError("point outside the grid")
    if rho < kt.grid.h * (1 - 1e-12):
        raise ValueError("rho must be at least one cell width")
    if rho >= kt.r_trunc:
        raise ValueError("rho must be smaller than the truncation radius")
    padded, margin = _pad if _pad is not None else _padded(E, kt)
    base = np.asarray(x) + margin
    here = padded[tuple(base)]
    if direction is not None:
        dirs = [tuple(int(v) for v in direction)]
        if len(dirs[0]) != kt.dim or not any(dirs[0]):
            raise ValueError("direction must be a nonzero offset in {-1,0,1}^n")
    else:
        dirs = [e for e in _directions(kt.dim) if padded[tuple(base + np.asarray(e))] != here]
        if not dirs:
            raise ValueError(f"cell {x} is not on the boundary of the set")
    vals, tails, errs = zip(*(_eval(padded, margin, x, e, rho, kt, E) for e in dirs))
    return CurvatureSample(x, float(rho), float(np.mean(vals)), float(np.mean(tails)), float(np.mean(errs)), len(dirs))


@dataclass(frozen=True)
class CurvatureProfile:
    samples: tuple[CurvatureSample, ...]

    @property
    def residual(self) -> float:
        """Largest ``|H|`` over the samples (0 for an empty profile)."""
        return max((abs(c.value) for c in self.samples), default=0.0)

    def to_csv(self) -> str:
        lines = ["cell_x,cell_y,value,pv_error"]
        for c in self.samples:
            p = list(c.point) + [0] * (2 - len(c.point))
            lines.append(f"{p[0]},{p[1]},{c.value:.12g},{c.pv_pairing_error:.12g}")
        return "\n".join(lines) + "\n"


def curvature_profile(
    E: CellSet,
    omega: CellSet,
    rho: float | None,
    kt: KernelTable,
    margin: float = 0.0,
) -> CurvatureProfile:
    """Curvature at every boundary cell of ``E`` in ``omega``.

    Only midpoints between two omega cells are used, so every sample point
    lies inside omega; cells closer than ``margin`` to the complement of
    omega are skipped.
    """
    from scipy import ndimage

    from .diagnostics import measure_boundary

    g = kt.grid
    rho = 2 * g.h if rho is None else rho
    _, _, bnd = measure_boundary(E)
    cand = bnd.mask & omega.mask
    if margin > 0:
        dist = ndimage.distance_transform_edt(np.pad(omega.mask, 1))[tuple(slice(1, -1) for _ in range(g.dim))]
        cand &= dist * g.h > margin
    pad = _padded(E, kt)
    padded, m = pad
    om_pad = np.pad(omega.mask, m)
    out = []
    for x in np.argwhere(cand):
        base = x + m
        here = padded[tuple(base)]
        dirs = [
            e
            for e in _directions(g.dim)
            if padded[tuple(base + np.asarray(e))] != here and om_pad[tuple(base + np.asarray(e))]
        ]
        if not dirs:
            continue
        vals, tails, errs = zip(*(_eval(padded, m, x, e, rho, kt, E) for e in dirs))
        out.append(
            CurvatureSample(
                tuple(int(v) for v in x), float(rho), float(np.mean(vals)), float(np.mean(tails)), float(np.mean(errs)), len(dirs)
            )
        )
    return CurvatureProfile(tuple(out))
