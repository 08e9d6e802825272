"""s-minimal functions on a grid.

The exact solver works level by level: for every threshold ``t`` the set
``{u >= t}`` minimizes a discrete fractional perimeter with the exterior set
``{phi >= t}`` fixed, which is a minimum cut in the (dense) kernel graph.
Maximal and minimal minimum cuts give the largest and smallest solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _loops
from .grid import CellSet, FarField, GridSpec
from .kernel import KernelTable
from .maxflow import min_cut

THRESHOLD_RULES = ("data_levels", "midpoint")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values on every box cell plus a constant value outside the box.

    Values on ``omega`` are the unknowns (or a solution); all other box cells
    hold the exterior datum.
    """

    grid: GridSpec
    omega: CellSet
    values: np.ndarray
    far_value: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)) or not math.isfinite(self.far_value):
            raise ValueError("field values must be finite")
        if self.omega.grid != self.grid:
            raise ValueError("omega lives on a different grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "far_value", float(self.far_value))

    @classmethod
    def from_function(
        cls,
        grid: GridSpec,
        omega: CellSet,
        fn: Callable[[np.ndarray], np.ndarray],
        far_value: float = 0.0,
    ) -> "ScalarField":
        """Evaluate ``fn`` at all cell centers (``fn`` maps ``(..., dim)`` points to values)."""
        vals = np.broadcast_to(np.asarray(fn(grid.centers()), dtype=float), grid.shape)
        return cls(grid, omega, vals, far_value)

    @classmethod
    def constant(cls, grid: GridSpec, omega: CellSet, c: float) -> "ScalarField":
        return cls(grid, omega, np.full(grid.shape, float(c)), c)

    @property
    def omega_values(self) -> np.ndarray:
        return self.values[self.omega.mask]

    def with_omega_values(self, vals) -> "ScalarField":
        v = self.values.copy()
        v[self.omega.mask] = vals
        return ScalarField(self.grid, self.omega, v, self.far_value)

    def shifted(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.omega, self.values + c, self.far_value + c)

    def padded_values(self, margin: int) -> np.ndarray:
        if margin == 0:
            return self.values.copy()
        return np.pad(self.values, margin, constant_values=self.far_value)

    def exterior_range(self, ring: CellSet | None = None) -> tuple[float, float]:
        """Smallest and largest datum value on ``ring`` (default: all exterior box cells) and far away."""
        mask = ~self.omega.mask if ring is None else ring.mask
        vals = np.append(self.values[mask], self.far_value)
        return float(vals.min()), float(vals.max())


def _check(u: ScalarField, kt: KernelTable):
    if u.grid != kt.grid or not np.array_equal(u.omega.mask, kt.omega.mask):
        raise ValueError("field and kernel table describe different domains")


def _far_weight(kt: KernelTable) -> float:
    return kt.grid.cell_volume * kt.far_mass


def energy(u: ScalarField, kt: KernelTable) -> float:
    """Discrete energy: every pair with an end in omega counted once, plus the far-field term."""
    _check(u, kt)
    lay = _loops.layout(kt)
    vals = u.padded_values(lay.margin).ravel()
    rows = _loops.energy_rows(lay.omega_flat, vals, lay.omega_padded, lay.offsets, lay.weights)
    far = _far_weight(kt) * np.abs(vals[lay.omega_flat] - u.far_value)
    return float(np.sum(rows) + np.sum(far))


# ---------------------------------------------------------------------------
# single threshold


class _CutProblem:
    """Threshold cut problems for one datum, with optional fixed omega cells."""

    def __init__(self, phi: ScalarField, kt: KernelTable):
        _check(phi, kt)
        self.phi = phi
        self.kt = kt
        self.lay = _loops.layout(kt)
        self.phi_pad = phi.padded_values(self.lay.margin).ravel()
        self.n = len(self.lay.omega_flat)
        self.coords = kt.omega.indices()
        self._memo: dict = {}

    def solve(self, t: float, fixed_in: np.ndarray, fixed_out: np.ndarray):
        """Minimal and maximal minimizers at ``t`` as masks over omega cells."""
        key = (t, fixed_in.tobytes(), fixed_out.tobytes())
        if key in self._memo:
            return self._memo[key]
        lay = self.lay
        free = ~(fixed_in | fixed_out)
        state = np.where(self.phi_pad >= t, 1, 2).astype(np.int8)
        om = lay.omega_flat
        state[om] = 0
        state[om[fixed_in]] = 1
        state[om[fixed_out]] = 2
        lo = fixed_in.copy()
        hi = fixed_in.copy()
        if free.any():
            cells = om[free]
            src, snk = _loops.terminal_rows(cells, state, lay.offsets, lay.weights)
            farw = _far_weight(self.kt)
            if self.phi.far_value >= t:
                src = src + farw
            else:
                snk = snk + farw
            cap = _loops.dense_pairs(self.coords[free], self.kt.stencil, self.kt.radius_cells)
            res = min_cut(cap, src, snk)
            del cap
            lo[free] = res.min_side
            hi[free] = res.max_side
        self._memo[key] = (lo, hi)
        return lo, hi

    def family(self, ts: np.ndarray, largest: bool) -> list[np.ndarray]:
        """Nested minimizers for increasing thresholds ``ts`` by divide and conquer.

        Once the set at a middle threshold is known, higher thresholds only
        search inside it and lower thresholds contain it.
        """
        out: list = [None] * len(ts)
        none = np.zeros(self.n, bool)

        def rec(a, b, fin, fout):
            if a > b:
                return
            mid = (a + b) // 2
            lo, hi = self.solve(float(ts[mid]), fin, fout)
            E = hi if largest else lo
            out[mid] = E
            rec(mid + 1, b, fin, fout | ~E)
            rec(a, mid - 1, fin | E, fout)

        rec(0, len(ts) - 1, none, none)
        return out

    def cut_values(self, ts: np.ndarray, sets: list[np.ndarray]) -> np.ndarray:
        """Perimeter of each set against its threshold's exterior data.

        Each distinct set is scattered once; its dependence on ``t`` is
        through exterior cells only, handled with cumulative sums over the
        exterior cells sorted by datum value.
        """
        lay = self.lay
        ext = ~lay.omega_padded
        phi = self.phi_pad
        order = np.argsort(phi[ext], kind="stable")
        phi_sorted = phi[ext][order]
        farw = _far_weight(self.kt)
        out = np.empty(len(ts))
        cache: dict = {}
        for k, (t, E) in enumerate(zip(ts, sets)):
            key = E.tobytes()
            if key not in cache:
                in_set = np.zeros(lay.size, bool)
                in_set[lay.omega_flat[E]] = True
                rows, a, b = _loops.set_cut_scatter(
                    lay.omega_flat, in_set, lay.omega_padded, ext, lay.offsets, lay.weights, lay.size
                )
                a_s = a[ext][order]
                b_s = b[ext][order]
                below = np.concatenate([[0.0], np.cumsum(a_s)])
                above = np.concatenate([np.cumsum(b_s[::-1])[::-1], [0.0]])
                cache[key] = (float(np.sum(rows)), below, above, int(E.sum()))
            inner, below, above, m = cache[key]
            # exterior cells below t are outside the set, those at or above t inside
            start = int(np.searchsorted(phi_sorted, t, side="left"))
            far = farw * ((self.n - m) if self.phi.far_value >= t else m)
            out[k] = inner + below[start] + above[start] + far
        return out

    def to_cellset(self, E: np.ndarray, t: float) -> CellSet:
        mask = (self.phi.values >= t) & ~self.kt.omega.mask
        mask[self.kt.omega.mask] = E
        far = FarField.full() if self.phi.far_value >= t else FarField.empty()
        return CellSet(self.kt.grid, mask, far)


def indicator_field(E: CellSet, omega: CellSet) -> ScalarField:
    """``chi_E`` as a field; the far value is 1 when the far field of ``E`` is full."""
    kind = E.far_field.kind
    if kind == "cone":
        raise ValueError("indicator of a cone-shaped set has no constant far value")
    return ScalarField(E.grid, omega, E.mask.astype(float), 1.0 if kind == "full" else 0.0)


def solve_level(t: float, phi: ScalarField, kt: KernelTable) -> tuple[CellSet, CellSet, float]:
    """Largest and smallest minimizers of the discrete perimeter at threshold ``t``.

    Returns ``(E_max, E_min, cut_value)``; the sets include the exterior part
    ``{phi >= t}``. ``cut_value`` is the perimeter of either set over the pair
    domain (pairs with both ends outside omega are excluded).
    """
    if not math.isfinite(t):
        raise ValueError("threshold must be finite")
    prob = _CutProblem(phi, kt)
    none = np.zeros(prob.n, bool)
    lo, hi = prob.solve(float(t), none, none)
    cut = prob.cut_values(np.array([t]), [hi])[0]
    return prob.to_cellset(hi, t), prob.to_cellset(lo, t), float(cut)


# ---------------------------------------------------------------------------
# full solution


@dataclass(eq=False)
class LevelSolution:
    """Nested level families and the largest/smallest s-minimal functions they define."""

    thresholds: np.ndarray
    max_sets: list
    min_sets: list
    u_max: ScalarField
    u_min: ScalarField
    energy_max: float
    energy_min: float
    per_level_cut_values: np.ndarray
    per_level_cut_values_min: np.ndarray
    verification: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        """Largest cellwise difference between the two extreme solutions."""
        return float(np.max(self.u_max.omega_values - self.u_min.omega_values, initial=0.0))

    def coarea_sum(self, family: str = "max") -> float:
        """Sum of threshold increments times cut values (equals the energy)."""
        cuts = self.per_level_cut_values if family == "max" else self.per_level_cut_values_min
        return float(np.sum(np.diff(self.thresholds) * cuts[1:]))


def thresholds_for(phi: ScalarField, kt: KernelTable, rule: str = "data_levels") -> np.ndarray:
    if rule not in THRESHOLD_RULES:
        raise ValueError(f"unknown threshold rule {rule!r}")
    vals = np.unique(np.append(phi.values[kt.ring.mask], phi.far_value))
    if rule == "midpoint" and len(vals) > 1:
        vals = np.unique(np.concatenate([vals, 0.5 * (vals[1:] + vals[:-1])]))
    return vals


def _assemble(phi: ScalarField, ts: np.ndarray, sets: list[np.ndarray]) -> ScalarField:
    count = np.sum(np.stack(sets), axis=0)
    # u(i) = largest threshold whose set contains i; every cell lies in the first set
    return phi.with_omega_values(ts[np.maximum(count, 1) - 1])


def solve_sminimal(
    phi: ScalarField,
    kt: KernelTable,
    threshold_rule: str = "data_levels",
    verify: bool = True,
    trials: int = 16,
    seed: int = 0,
) -> LevelSolution:
    """Maximal and minimal s-minimal functions with exterior datum ``phi``."""
    if not np.all(np.isfinite(phi.values)):
        raise ValueError("datum must be bounded")
    ts = thresholds_for(phi, kt, threshold_rule)
    prob = _CutProblem(phi, kt)
    hi_sets = prob.family(ts, largest=True)
    lo_sets = prob.family(ts, largest=False)
    for fam in (hi_sets, lo_sets):
        for a, b in zip(fam[:-1], fam[1:]):
            if np.any(b & ~a):
                raise RuntimeError("level family is not nested")
    u_max = _assemble(phi, ts, hi_sets)
    u_min = _assemble(phi, ts, lo_sets)
    sol = LevelSolution(
        thresholds=ts,
        max_sets=[prob.to_cellset(E, t) for E, t in zip(hi_sets, ts)],
        min_sets=[prob.to_cellset(E, t) for E, t in zip(lo_sets, ts)],
        u_max=u_max,
        u_min=u_min,
        energy_max=energy(u_max, kt),
        energy_min=energy(u_min, kt),
        per_level_cut_values=prob.cut_values(ts, hi_sets),
        per_level_cut_values_min=prob.cut_values(ts, lo_sets),
    )
    lo_b, hi_b = phi.exterior_range(kt.ring)
    for u in (u_max, u_min):
        if u.omega_values.min(initial=lo_b) < lo_b or u.omega_values.max(initial=hi_b) > hi_b:
            raise RuntimeError("solution violates the maximum principle")
    if verify:
        sol.verification = verify_minimality(u_max, kt, trials=trials, seed=seed, partner=u_min)
        if sol.verification["verdict"] != "minimal":
            raise RuntimeError(f"solution failed the minimality check: {sol.verification['worst_margin']}")
    return sol


# ---------------------------------------------------------------------------
# verification


def verify_minimality(
    u: ScalarField,
    kt: KernelTable,
    trials: int = 32,
    seed: int = 0,
    partner: ScalarField | None = None,
    rtol: float = 1e-9,
) -> dict:
    """Compare ``energy(u)`` against random competitors agreeing with ``u`` outside omega.

    Competitors: single-cell resets to a neighbouring level, smooth random
    bumps, and level-set swaps with ``partner``. A competitor with energy
    below ``energy(u)`` by more than ``rtol`` times the energy scale makes the
    verdict ``not_minimal``; the witness is returned.
    """
    _check(u, kt)
    rng = np.random.default_rng(seed)
    lay = _loops.layout(kt)
    base = energy(u, kt)
    vals = u.padded_values(lay.margin).ravel().copy()
    om = lay.omega_flat
    farw = _far_weight(kt)
    lo_b, hi_b = u.exterior_range(kt.ring)
    levels = np.unique(np.concatenate([u.omega_values, u.values[kt.ring.mask], [u.far_value]]))
    scale = max(base, farw * max(hi_b - lo_b, 1.0) * len(om))
    tol = rtol * scale
    worst = math.inf
    witness = None
    kinds: dict = {}

    def record(kind, margin, make):
        nonlocal worst, witness
        kinds[kind] = min(kinds.get(kind, math.inf), margin)
        if margin < worst:
            worst = margin
            if margin < -tol:
                witness = make()

    # (a) single-cell resets, energy change evaluated locally
    n_local = max(trials, 1) * 4
    for _ in range(n_local if len(om) else 0):
        r = int(rng.integers(len(om)))
        i = om[r]
        k = int(np.searchsorted(levels, vals[i]))
        cand = [levels[j] for j in (k - 1, k + 1) if 0 <= j < len(levels)]
        if not cand:
            continue
        new = float(cand[int(rng.integers(len(cand)))])
        d = _loops.local_delta(i, new, vals, lay.omega_padded, lay.offsets, lay.weights)
        d += farw * (abs(new - u.far_value) - abs(vals[i] - u.far_value))

        def make(r=r, new=new):
            v = u.omega_values.copy()
            v[r] = new
            return u.with_omega_values(v)

        record("cell_reset", d, make)

    # (b) smooth bumps
    centers = kt.grid.centers()[kt.omega.mask]
    span = max(hi_b - lo_b, 1.0)
    for _ in range(trials):
        c = centers[int(rng.integers(len(centers)))] if len(centers) else None
        if c is None:
            break
        rad = kt.grid.h * float(rng.uniform(1.0, 6.0))
        amp = span * float(rng.uniform(-0.5, 0.5))
        bump = amp * np.clip(1.0 - np.linalg.norm(centers - c, axis=-1) / rad, 0.0, None)
        v = u.with_omega_values(u.omega_values + bump)
        record("bump", energy(v, kt) - base, lambda v=v: v)

    # (c) swaps with the partner solution on one level set
    if partner is not None:
        pv = partner.omega_values
        uv = u.omega_values
        for t in np.unique(uv)[: max(trials, 1)]:
            m = uv >= t
            v = u.with_omega_values(np.where(m, pv, uv))
            record("level_swap", energy(v, kt) - base, lambda v=v: v)

    worst = 0.0 if worst == math.inf else float(worst)
    return {
        "verdict": "minimal" if worst >= -tol else "not_minimal",
        "worst_margin": worst,
        "tolerance": tol,
        "energy": base,
        "margins_by_kind": {k: float(v) for k, v in kinds.items()},
        "witness": witness,
    }


# ---------------------------------------------------------------------------
# smoothed solver


@dataclass(eq=False)
class SmoothedSolution:
    field: ScalarField
    converged: bool
    iterations: int
    grad_norm: float
    eps: float
    objective: float


def _smoothed_setup(phi: ScalarField, kt: KernelTable):
    lay = _loops.layout(kt)
    W = kt.dense()
    ext_pad = ~lay.omega_padded
    vals = phi.padded_values(lay.margin).ravel()
    uniq, inv = np.unique(vals[ext_pad], return_inverse=True)
    klass = np.full(lay.size, -1, np.int64)
    klass[ext_pad] = inv
    ext_W = _loops.class_rows(lay.omega_flat, klass, len(uniq), lay.offsets, lay.weights)
    far_w = np.full(len(lay.omega_flat), _far_weight(kt))
    return W, uniq.astype(float), ext_W, far_w


def solve_smoothed(
    phi: ScalarField,
    kt: KernelTable,
    eps: float = 1e-3,
    tol: float = 1e-6,
    max_iter: int = 20000,
    eps_start: float = 0.1,
    u0: np.ndarray | None = None,
) -> SmoothedSolution:
    """Minimize the energy with ``|d|`` replaced by ``sqrt(d^2 + eps^2)``.

    Accelerated projected gradient (FISTA with gradient restart) on the box
    ``[min phi, max phi]``, which contains the minimizer. The step is ``1/L``
    with ``L = 2 max_i(row sum_i) / eps``. ``eps`` is reached by halving from
    ``eps_start``. Convergence means the projected gradient (sup norm)
    is below ``tol`` times the largest row sum.
    """
    _check(phi, kt)
    if eps <= 0 or tol <= 0:
        raise ValueError("eps and tol must be positive")
    W, ext_vals, ext_W, far_w = _smoothed_setup(phi, kt)
    rowsum = W.sum(axis=1) + ext_W.sum(axis=1) + far_w
    rmax = float(rowsum.max()) if len(rowsum) else 1.0
    lo_b, hi_b = phi.exterior_range(kt.ring)
    x = np.clip(np.full(len(far_w), 0.5 * (lo_b + hi_b)) if u0 is None else np.asarray(u0, float), lo_b, hi_b)
    schedule = []
    e = max(eps_start, eps)
    while e > eps * (1 + 1e-12):
        schedule.append(e)
        e *= 0.5
    schedule.append(eps)
    it = 0
    gnorm = math.inf
    f = math.nan
    converged = False
    for k, e in enumerate(schedule):
        last = k == len(schedule) - 1
        L = 2.0 * rmax / e
        y = x.copy()
        theta = 1.0
        stage_tol = tol * rmax if last else max(tol, 1e-3) * rmax
        while it < max_iter:
            it += 1
            f, g = _loops.smoothed_value_grad(y, W, ext_vals, ext_W, far_w, phi.far_value, e)
            x_new = np.clip(y - g / L, lo_b, hi_b)
            gnorm = float(np.max(np.abs(x_new - y))) * L if len(x_new) else 0.0
            if gnorm <= stage_tol:
                x = x_new
                if last:
                    converged = True
                break
            theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
            if np.dot(y - x_new, x_new - x) > 0:
                # gradient restart
                theta_new = 1.0
                y = x_new.copy()
            else:
                y = x_new + ((theta - 1) / theta_new) * (x_new - x)
            x = x_new
            theta = theta_new
        if it >= max_iter:
            break
    return SmoothedSolution(phi.with_omega_values(x), converged, it, gnorm, schedule[-1], float(f))
