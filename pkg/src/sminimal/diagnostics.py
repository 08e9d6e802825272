"""Grid analogues of measure-theoretic boundaries, level-set separation and
continuity / comparison checks for computed solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .grid import CellSet, FarField
from .solver import LevelSolution, ScalarField


def _neighbourhood_counts(E: CellSet) -> tuple[np.ndarray, int]:
    """Number of cells of ``E`` in each cell's 3^n neighbourhood (far field padded)."""
    padded = E.padded(1).astype(np.int32)
    size = 3**E.grid.dim
    counts = ndimage.convolve(padded, np.ones((3,) * E.grid.dim, np.int32), mode="constant")
    inner = tuple(slice(1, -1) for _ in range(E.grid.dim))
    return counts[inner], size


def measure_boundary(E: CellSet) -> tuple[CellSet, CellSet, CellSet]:
    """Split the box into interior, exterior and boundary cells of ``E``.

    A cell is interior if its whole ``3^n`` neighbourhood lies in ``E``,
    exterior if none of it does, and boundary otherwise.
    """
    counts, size = _neighbourhood_counts(E)
    interior = counts == size
    exterior = counts == 0
    boundary = ~(interior | exterior)
    g = E.grid
    return (
        CellSet(g, interior, E.far_field),
        CellSet(g, exterior, E.far_field.complement()),
        CellSet(g, boundary),
    )


def superlevel(u: ScalarField, t: float) -> CellSet:
    """``{u >= t}`` over the box, with a full far field when the far value is at least ``t``."""
    far = FarField.full() if u.far_value >= t else FarField.empty()
    return CellSet(u.grid, u.values >= t, far)


@dataclass(frozen=True)
class Collision:
    t: float
    tau: float
    cell: tuple[int, ...]


def levelset_separation(u: ScalarField, thresholds: Sequence[float]) -> list[Collision]:
    """Cells of omega on the boundary of two distinct superlevel sets."""
    ts = sorted({float(t) for t in thresholds})
    if len(ts) < 2:
        raise ValueError("need at least two thresholds")
    bnd = {t: measure_boundary(superlevel(u, t))[2].mask & u.omega.mask for t in ts}
    out = []
    for a in range(len(ts)):
        for b in range(a + 1, len(ts)):
            both = bnd[ts[a]] & bnd[ts[b]]
            out.extend(Collision(ts[a], ts[b], tuple(int(v) for v in c)) for c in np.argwhere(both))
    return out


def collisions_csv(cols: Sequence[Collision]) -> str:
    lines = ["t,tau,cell"]
    lines += [f"{c.t:.12g},{c.tau:.12g},{' '.join(map(str, c.cell))}" for c in cols]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# continuity


def interior_oscillation(u: ScalarField) -> float:
    """Largest ``|u_i - u_j|`` over face-adjacent pairs of omega cells."""
    om = u.omega.mask
    v = u.values
    best = 0.0
    for ax in range(u.grid.dim):
        sl_a = [slice(None)] * u.grid.dim
        sl_b = [slice(None)] * u.grid.dim
        sl_a[ax] = slice(None, -1)
        sl_b[ax] = slice(1, None)
        both = om[tuple(sl_a)] & om[tuple(sl_b)]
        if both.any():
            d = np.abs(v[tuple(sl_a)] - v[tuple(sl_b)])[both]
            best = max(best, float(d.max()))
    return best


def boundary_trace(u: ScalarField) -> np.ndarray:
    """Per omega cell on the edge of omega: largest ``|u_i - phi_j|`` over exterior cells ``j``
    in its ``3^n`` neighbourhood (cells off the edge get 0)."""
    g = u.grid
    om = u.omega.mask
    vals = np.pad(u.values, 1, constant_values=u.far_value)
    ext = np.pad(~om, 1, constant_values=True)
    out = np.zeros(g.shape)
    inner = tuple(slice(1, -1) for _ in range(g.dim))
    for e in np.ndindex(*(3,) * g.dim):
        if all(k == 1 for k in e):
            continue
        sl = tuple(slice(k, k + n) for k, n in zip(e, g.shape))
        nb_ext = ext[sl]
        d = np.where(om & nb_ext, np.abs(vals[inner] - vals[sl]), 0.0)
        out = np.maximum(out, d)
    return out


def boundary_jump(u: ScalarField) -> float:
    return float(boundary_trace(u).max(initial=0.0))


@dataclass
class ContinuityReport:
    refinement_levels: list
    interior_osc: list
    boundary_jump: list
    levelset_collisions: list = field(default_factory=list)
    verdict_interior: str = "inconclusive"
    verdict_boundary: str = "inconclusive"
    data_range: float = 0.0

    def as_dict(self) -> dict:
        return {
            "refinement_levels": list(self.refinement_levels),
            "interior_osc": list(self.interior_osc),
            "boundary_jump": list(self.boundary_jump),
            "levelset_collisions": [[c.t, c.tau, list(c.cell)] for c in self.levelset_collisions],
            "verdict_interior": self.verdict_interior,
            "verdict_boundary": self.verdict_boundary,
            "data_range": self.data_range,
        }


def _trend(values: Sequence[float], scale: float, stagnation: float) -> str:
    v = np.asarray(values, float)
    if scale <= 0 or np.all(v == 0):
        return "continuous_trend"
    if np.all(v >= stagnation * scale):
        return "discontinuity_detected"
    if np.all(np.diff(v) < 0):
        return "continuous_trend"
    return "inconclusive"


def continuity_report(
    solutions: Sequence[ScalarField | LevelSolution],
    phis: Sequence[ScalarField] | None = None,
    thresholds: Sequence[float] | None = None,
    stagnation: float = 0.9,
) -> ContinuityReport:
    """Trend of interior oscillation and boundary jump over a refinement ladder.

    A quantity that stays above ``stagnation`` times the datum range on every
    level is a detected discontinuity; strictly decreasing values are a
    continuous trend; anything else is inconclusive. Level-set collisions
    are collected on the finest level for ``thresholds`` (if given).
    """
    fields = [s.u_max if isinstance(s, LevelSolution) else s for s in solutions]
    if len(fields) < 3:
        raise ValueError("a continuity verdict needs at least three refinement levels")
    g0 = fields[0].grid
    for f in fields[1:]:
        if f.grid.dim != g0.dim or f.grid.origin != g0.origin or f.grid.extent != g0.extent:
            raise ValueError("refinement levels describe different scenarios")
    cells = [f.grid.cells for f in fields]
    if any(b <= a for a, b in zip(cells[:-1], cells[1:])):
        raise ValueError("refinement levels must be strictly increasing")
    ranges = []
    for k, f in enumerate(fields):
        ref = phis[k] if phis is not None else f
        lo, hi = ref.exterior_range()
        ranges.append(hi - lo)
    scale = max(ranges)
    osc = [interior_oscillation(f) for f in fields]
    jump = [boundary_jump(f) for f in fields]
    cols = levelset_separation(fields[-1], thresholds) if thresholds is not None and len(thresholds) >= 2 else []
    return ContinuityReport(
        refinement_levels=[f.grid.h for f in fields],
        interior_osc=osc,
        boundary_jump=jump,
        levelset_collisions=cols,
        verdict_interior=_trend(osc, scale, stagnation),
        verdict_boundary=_trend(jump, scale, stagnation),
        data_range=scale,
    )


# ---------------------------------------------------------------------------
# structural checks


def bounds_check(sol: LevelSolution, ring: CellSet | None = None) -> dict:
    lo, hi = sol.u_max.exterior_range(ring)
    vals = np.concatenate([sol.u_max.omega_values, sol.u_min.omega_values])
    low = float(vals.min(initial=lo))
    high = float(vals.max(initial=hi))
    return {"ok": bool(low >= lo and high <= hi), "datum_min": lo, "datum_max": hi, "u_min": low, "u_max": high}


def nestedness_check(sol: LevelSolution) -> bool:
    for fam in (sol.max_sets, sol.min_sets):
        for a, b in zip(fam[:-1], fam[1:]):
            if not b.issubset(a):
                return False
    return True


def comparison_check(sol1: LevelSolution, sol2: LevelSolution) -> dict:
    """Check ``u1 >= u2`` cellwise for both extreme solutions, given ``phi1 >= phi2``.

    The data are read from the exterior values of the solutions.
    """
    a, b = sol1.u_max, sol2.u_max
    if a.grid != b.grid or not np.array_equal(a.omega.mask, b.omega.mask):
        raise ValueError("solutions live on different domains")
    ext = ~a.omega.mask
    if np.any(a.values[ext] < b.values[ext]) or a.far_value < b.far_value:
        raise ValueError("data are not ordered (phi1 >= phi2 fails)")
    d_max = sol1.u_max.omega_values - sol2.u_max.omega_values
    d_min = sol1.u_min.omega_values - sol2.u_min.omega_values
    worst = float(min(d_max.min(initial=0.0), d_min.min(initial=0.0)))
    equal = bool(np.all(d_max == 0) and np.all(d_min == 0))
    return {
        "verdict": "equal" if equal else ("ordered" if worst >= 0 else "violated"),
        "worst_violation": -worst if worst < 0 else 0.0,
    }


def ring_components(ring: CellSet) -> int:
    """Number of face-connected components of the ring cells."""
    _, n = ndimage.label(ring.mask)
    return int(n)


def distinct_levels_check(phi: ScalarField, ring: CellSet, t1: float, t2: float) -> dict:
    """Whether ``{phi >= t1}`` and ``{phi >= t2}`` differ on the ring.

    On a connected ring with continuous data they always do; on a
    disconnected ring they may coincide.
    """
    vals = phi.values[ring.mask]
    comps = ring_components(ring)
    lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 0.0)
    if lo == hi:
        return {"verdict": "pass", "vacuous": True, "symmetric_difference": 0, "components": comps}
    for t in (t1, t2):
        if not lo < t < hi:
            raise ValueError(f"threshold {t} outside ({lo}, {hi})")
    if t1 == t2:
        raise ValueError("thresholds must differ")
    diff = int(np.count_nonzero((vals >= t1) != (vals >= t2)))
    return {"verdict": "pass" if diff > 0 else "fail", "vacuous": False, "symmetric_difference": diff, "components": comps}
