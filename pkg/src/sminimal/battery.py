"""Randomized scenario batteries: brute-force cut oracle, maximum principle
and comparison runs on small grids."""

from __future__ import annotations

import itertools

import numpy as np

from .grid import CellSet, GridSpec
from .kernel import KernelTable, build_kernel
from .solver import ScalarField, solve_level

_ENUM_LIMIT = 16


def brute_force_level(t: float, phi: ScalarField, kt: KernelTable, rtol: float = 1e-12) -> dict:
    """Enumerate every indicator configuration on omega and minimize the cut energy.

    Weights are read pairwise from the table (no stencil loops, no flow).
    Configurations within ``rtol`` of the optimum count as ties; their union
    and intersection are the largest and smallest minimizers.
    """
    om = kt.omega.indices()
    n = len(om)
    if n > _ENUM_LIMIT:
        raise ValueError(f"{n} cells is too many to enumerate")
    g = kt.grid
    K = kt.radius_cells
    W = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if a != b:
                W[a, b] = kt.weight(om[a], om[b])
    # unary couplings to exterior cells (box and padding) and to the far field
    to_src = np.zeros(n)
    to_snk = np.zeros(n)
    inside = {tuple(p) for p in om}
    for a in range(n):
        for off in itertools.product(range(-K, K + 1), repeat=g.dim):
            j = tuple(int(v) for v in om[a] + np.array(off))
            if j in inside:
                continue
            w = kt.weight(om[a], j)
            if w == 0.0:
                continue
            val = phi.values[j] if g.contains_index(j) else phi.far_value
            if val >= t:
                to_src[a] += w
            else:
                to_snk[a] += w
        far = g.cell_volume * kt.far_mass
        if phi.far_value >= t:
            to_src[a] += far
        else:
            to_snk[a] += far
    X = np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)
    pair = 0.5 * np.einsum("ka,ab,kb->k", X, W, 1 - X) + 0.5 * np.einsum("ka,ab,kb->k", 1 - X, W, X)
    vals = pair + X @ to_snk + (1 - X) @ to_src
    best = float(vals.min())
    ties = X[vals <= best + rtol * max(abs(best), 1.0)].astype(bool)
    return {
        "value": best,
        "scale": float(np.sum(to_src + to_snk) + np.sum(W) / 2),
        "max_set": np.any(ties, axis=0),
        "min_set": np.all(ties, axis=0),
        "n_minimizers": int(len(ties)),
    }


def oracle_instance(seed: int, s: float) -> tuple[ScalarField, KernelTable, float]:
    """3 x 3 omega in a 7 x 7 box with random exterior data and a random threshold."""
    rng = np.random.default_rng(seed)
    g = GridSpec(2, (0.0, 0.0), 7.0, 7)
    mask = np.zeros(g.shape, bool)
    mask[2:5, 2:5] = True
    om = CellSet(g, mask)
    vals = rng.random(g.shape)
    far = float(rng.random())
    phi = ScalarField(g, om, vals, far)
    kt = build_kernel(g, om, 4.0, s)
    ring = np.append(vals[kt.ring.mask], far)
    t = float(rng.choice(ring)) if rng.random() < 0.5 else float(rng.uniform(0.1, 0.9))
    return phi, kt, t


def oracle_battery(seeds: int, s_list, seed0: int = 0) -> dict:
    """Compare :func:`solve_level` with exhaustive enumeration."""
    fails = []
    worst = 0.0
    count = 0
    for s in s_list:
        for k in range(seeds):
            phi, kt, t = oracle_instance(seed0 + k, s)
            E_max, E_min, cut = solve_level(t, phi, kt)
            bf = brute_force_level(t, phi, kt)
            om = kt.omega.mask
            same_max = np.array_equal(E_max.mask[om], bf["max_set"])
            same_min = np.array_equal(E_min.mask[om], bf["min_set"])
            rel = abs(cut - bf["value"]) / max(abs(bf["value"]), bf["scale"])
            worst = max(worst, rel)
            count += 1
            if not (same_max and same_min and rel <= 1e-12):
                fails.append({"s": s, "seed": seed0 + k, "t": t, "rel": rel, "max": same_max, "min": same_min})
    return {"instances": count, "failures": fails, "worst_rel_value": worst}


def random_instance(seed: int, s: float, cells: int = 12, inner: int = 6):
    """Random datum on a ``cells`` x ``cells`` box with a centred square omega.

    Even seeds use integer levels (many ties), odd seeds continuous values.
    Returns ``(phi1, phi2, kt)`` with ``phi1 >= phi2`` everywhere.
    """
    rng = np.random.default_rng(seed)
    g = GridSpec(2, (0.0, 0.0), float(cells), cells)
    lo = (cells - inner) // 2
    mask = np.zeros(g.shape, bool)
    mask[lo : lo + inner, lo : lo + inner] = True
    om = CellSet(g, mask)
    if seed % 2 == 0:
        v1 = rng.integers(-2, 3, g.shape).astype(float)
        f1 = float(rng.integers(-2, 3))
        dv = rng.integers(0, 2, g.shape).astype(float)
        df = float(rng.integers(0, 2))
    else:
        v1 = np.round(rng.normal(size=g.shape), 3)
        f1 = float(np.round(rng.normal(), 3))
        dv = np.round(rng.random(g.shape), 3)
        df = float(np.round(rng.random(), 3))
    phi1 = ScalarField(g, om, v1, f1)
    phi2 = ScalarField(g, om, v1 - dv, f1 - df)
    r = float(np.ceil(np.sqrt(2) * inner + 1))
    kt = build_kernel(g, om, r, s)
    return phi1, phi2, kt
