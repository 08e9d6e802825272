"""Fractional perimeters, set interactions and small-s / large-s asymptotics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _loops
from .grid import CellSet, sphere_measure
from .kernel import KernelTable


@dataclass(frozen=True)
class PerimeterBreakdown:
    """``Per_s(E, omega)`` split into its three interaction terms."""

    total: float
    term_in_out: float
    term_in_extout: float
    term_out_inext: float
    s: float
    omega: CellSet

    def as_record(self) -> dict:
        return {
            "s": self.s,
            "grid_h": self.omega.grid.h,
            "total": self.total,
            "terms": {
                "in_out": self.term_in_out,
                "in_extout": self.term_in_extout,
                "out_inext": self.term_out_inext,
            },
        }


def _far_unit(kt: KernelTable) -> float:
    """Cell volume times ``r^{-s} / s``: far mass per unit of angular measure."""
    return kt.grid.cell_volume * kt.r_trunc ** (-kt.s) / kt.s


def _rows_against(kt: KernelTable, A: np.ndarray, B: CellSet) -> float:
    """Sum of ``w_ij`` for cells ``i`` in the mask ``A`` and ``j`` in ``B`` within the stencil."""
    lay = _loops.layout(kt)
    cells = lay.flat_index(np.argwhere(A))
    field = B.padded(lay.margin).astype(float).ravel()
    return _loops.interaction_sum(cells, field, lay.offsets, lay.weights)


def interaction(A: CellSet, B: CellSet, kt: KernelTable) -> float:
    """``L_s(A, B)``: kernel mass between two disjoint sets.

    Pairs within the truncation radius come from the table; beyond it, the
    unbounded set is represented by its far field. At least one set must be
    bounded.
    """
    for X in (A, B):
        if X.grid != kt.grid:
            raise ValueError("set and kernel table live on different grids")
    if np.any(A.mask & B.mask):
        raise ValueError("interaction needs disjoint sets")
    if not A.bounded and not B.bounded:
        raise ValueError("interaction between two unbounded sets is not supported")
    if not A.bounded:
        A, B = B, A
    if A.count == 0:
        return 0.0
    near = _rows_against(kt, A.mask, B)
    far = A.count * _far_unit(kt) * B.far_field.measure(kt.dim)
    return near + far


def _indicator_energy(E: CellSet, omega: CellSet, kt: KernelTable) -> float:
    """Energy of ``chi_E`` over the pair domain of ``omega`` (one routine for E and its complement)."""
    lay = _loops.layout(kt)
    vals = E.padded(lay.margin).astype(float).ravel()
    rows = _loops.energy_rows(lay.omega_flat, vals, lay.omega_padded, lay.offsets, lay.weights)
    inside = vals[lay.omega_flat]
    kind = E.far_field.kind
    if kind == "cone":
        mE = E.far_field.measure(kt.dim)
        far_row = _far_unit(kt) * np.where(inside > 0, sphere_measure(kt.dim) - mE, mE)
    else:
        # same rounding as the energy routine
        far_row = kt.grid.cell_volume * kt.far_mass * np.abs(inside - (1.0 if kind == "full" else 0.0))
    return float(np.sum(rows) + np.sum(far_row))


def perimeter_in(E: CellSet, omega: CellSet, kt: KernelTable) -> PerimeterBreakdown:
    """``Per_s(E, omega)`` on the table built for ``omega``."""
    if E.grid != kt.grid or omega.grid != kt.grid:
        raise ValueError("set and kernel table live on different grids")
    if not np.array_equal(omega.mask, kt.omega.mask):
        raise ValueError("kernel table was built for a different omega")
    om = CellSet(kt.grid, omega.mask)
    inside = E.mask & om.mask
    outside = om.mask & ~E.mask
    t1 = _rows_against(kt, inside, CellSet(kt.grid, outside)) if inside.any() else 0.0
    ext_out = (~E) - om
    ext_in = E - om
    t2 = interaction(CellSet(kt.grid, inside), ext_out, kt)
    t3 = interaction(CellSet(kt.grid, outside), ext_in, kt)
    total = _indicator_energy(E, om, kt)
    return PerimeterBreakdown(total, t1, t2, t3, kt.s, om)


def perimeter_whole(E: CellSet, kt: KernelTable) -> float:
    """``Per_s(E, R^n)`` for a bounded ``E`` inside the table's omega.

    Pairs with both ends outside omega lie in the complement of ``E`` and do
    not contribute, so the perimeter in omega is the full perimeter.
    """
    if not E.bounded:
        raise ValueError("perimeter_whole needs a bounded set (use the complement)")
    if np.any(E.mask & ~kt.omega.mask):
        raise ValueError("set is not contained in the table's omega")
    return perimeter_in(E, kt.omega, kt).total


def classical_perimeter(E: CellSet) -> float:
    """Grid perimeter: ``h^{n-1}`` times the number of faces between ``E`` and its complement."""
    if not E.bounded:
        raise ValueError("classical perimeter of an unbounded set")
    m = np.pad(E.mask, 1)
    faces = 0
    for ax in range(m.ndim):
        faces += int(np.count_nonzero(np.diff(m.astype(np.int8), axis=ax)))
    return faces * E.grid.h ** (E.grid.dim - 1)


def asymptotic_ratio(
    E: CellSet,
    F: CellSet,
    s_list: Sequence[float],
    kernel_factory: Callable[[float], KernelTable],
) -> dict:
    """``Per_s(E) / Per_s(F)`` for each ``s`` and its trend towards the classical ratio.

    ``kernel_factory(s)`` must return a table whose omega contains ``E`` and ``F``.
    """
    for X in (E, F):
        if not X.bounded or X.count == 0:
            raise ValueError("asymptotic_ratio needs bounded, nonempty sets")
    pF = classical_perimeter(F)
    if pF <= 0:
        raise ValueError("reference set has zero perimeter")
    target = classical_perimeter(E) / pF
    rows = []
    for s in s_list:
        kt = kernel_factory(float(s))
        a, b = perimeter_whole(E, kt), perimeter_whole(F, kt)
        rows.append({"s": float(s), "per_E": a, "per_F": b, "ratio": a / b})
    by_s = sorted(rows, key=lambda r: r["s"])
    gaps = [abs(r["ratio"] - target) for r in by_s]
    trending = all(g1 <= g0 for g0, g1 in zip(gaps[:-1], gaps[1:]))
    return {"rows": rows, "classical_ratio": target, "trends_to_classical": bool(trending)}


def crossover_s(rows: Sequence[dict], level: float = 1.0) -> float | None:
    """Smallest tabulated ``s`` from which the ratio stays above ``level`` (None if never)."""
    out = None
    for r in sorted(rows, key=lambda r: r["s"], reverse=True):
        if r["ratio"] > level:
            out = r["s"]
        else:
            break
    return out


# ---------------------------------------------------------------------------
# small s


@dataclass(frozen=True)
class AlphaEstimate:
    value: float  # at the smallest s
    extrapolated: float
    sequence: tuple[tuple[float, float], ...]
    monotone: bool


def alpha_s(E0: CellSet, s: float, radius: float | None = None) -> float:
    """``s * integral over |x| > 1 of chi_E0 |x|^{-n-s}``.

    Cells with ``1 < |x| <= radius`` are summed with the midpoint rule; the
    region beyond ``radius`` is the far-field cone, integrated exactly. The
    radius defaults to the largest disc about the origin inside the box.
    """
    g = E0.grid
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    if radius is None:
        o = np.asarray(g.origin)
        radius = float(min(np.min(-o), np.min(o + g.extent)))
    if radius <= 1.0:
        raise ValueError("the box must contain a disc of radius > 1 about the origin")
    c = g.centers()
    r = np.sqrt(np.sum(c * c, axis=-1))
    sel = E0.mask & (r > 1.0) & (r <= radius)
    ring = s * g.cell_volume * float(np.sum(r[sel] ** (-g.dim - s)))
    tail = E0.far_field.measure(g.dim) * radius ** (-s)
    return ring + tail


def alpha_bar(E0: CellSet, s_list: Sequence[float], radius: float | None = None) -> AlphaEstimate:
    """Small-s limit of :func:`alpha_s`.

    Reports the value at the smallest ``s`` and a linear (first-order
    Richardson) extrapolation to ``s = 0`` from the two smallest orders.
    """
    if len(s_list) == 0:
        raise ValueError("s_list is empty")
    ss = sorted({float(s) for s in s_list}, reverse=True)
    seq = tuple((s, alpha_s(E0, s, radius)) for s in ss)
    vals = [v for _, v in seq]
    if len(seq) >= 2:
        (s1, a1), (s2, a2) = seq[-2], seq[-1]
        extra = (s1 * a2 - s2 * a1) / (s1 - s2)
    else:
        extra = seq[-1][1]
    mono = all(b >= a for a, b in zip(vals[:-1], vals[1:])) or all(b <= a for a, b in zip(vals[:-1], vals[1:]))
    return AlphaEstimate(seq[-1][1], float(extra), seq, bool(mono))


def small_s_ball_radius(beta: float, s0: float, dim: int = 2) -> float:
    """``delta = exp(-(1/s0) log((w + 2 beta) / (w + beta)))`` with ``w`` the sphere measure."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not 0.0 < s0 < 0.5:
        raise ValueError("s0 must lie in (0, 1/2)")
    w = sphere_measure(dim)
    return math.exp(-math.log((w + 2 * beta) / (w + beta)) / s0)
