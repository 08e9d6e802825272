import math

import pytest

from sminimal.grid import CellSet, GridSpec, ball, dumbbell_K, dumbbell_Omega, halfplane, intersection, rasterize
from sminimal.kernel import build_kernel
from sminimal.perimeter import (
    alpha_bar,
    alpha_s,
    asymptotic_ratio,
    classical_perimeter,
    crossover_s,
    interaction,
    perimeter_in,
    perimeter_whole,
    small_s_ball_radius,
)


def dumbbell_setup(n=32, s=0.9):
    g = GridSpec(2, (-2.2, -2.2), 4.4, n)
    om = rasterize(dumbbell_Omega(), g)
    return g, om, build_kernel(g, om, 4.4, s)


def test_interaction_trivial():
    g = GridSpec(2, (0.0, 0.0), 20.0, 20)
    om = CellSet.from_indices(g, [(2, 2), (12, 2)])
    kt = build_kernel(g, om, 20.0, 0.5)
    A = CellSet.from_indices(g, [(2, 2)])
    B = CellSet.from_indices(g, [(12, 2)])
    assert interaction(CellSet.empty(g), B, kt) == 0.0
    assert interaction(A, B, kt) == kt.weight((2, 2), (12, 2))
    assert interaction(A, B, kt) == pytest.approx(g.h**4 * (10 * g.h) ** -2.5, rel=1e-13)
    with pytest.raises(ValueError):
        interaction(A, A, kt)


def test_interaction_matches_double_loop():
    g, om, kt = dumbbell_setup(24)
    B1 = rasterize(ball((0, 0), 1), g)
    A = B1 & om
    C = ~B1
    K = kt.radius_cells
    total = 0.0
    for i in A.indices():
        for dx in range(-K, K + 1):
            for dy in range(-K, K + 1):
                j = (i[0] + dx, i[1] + dy)
                inside = 0 <= j[0] < g.cells and 0 <= j[1] < g.cells
                if (not inside) or C.mask[j]:
                    total += kt.weight(tuple(i), j)
        total += g.cell_volume * 2 * math.pi * kt.r_trunc ** (-kt.s) / kt.s
    assert interaction(A, C, kt) == pytest.approx(total, rel=1e-12)


def test_perimeter_in_trivial_sets():
    g, om, kt = dumbbell_setup(16)
    assert perimeter_in(CellSet.empty(g), om, kt).total == 0.0
    assert perimeter_in(CellSet.full(g), om, kt).total == 0.0


def test_breakdown_sums_to_total():
    g, om, kt = dumbbell_setup(32)
    E = rasterize(ball((0.3, 0.2), 1.2), g)
    p = perimeter_in(E, om, kt)
    assert p.total == pytest.approx(p.term_in_out + p.term_in_extout + p.term_out_inext, rel=1e-12)
    assert min(p.term_in_out, p.term_in_extout, p.term_out_inext) >= 0
    rec = p.as_record()
    assert rec["total"] == p.total


def test_complement_symmetry_exact():
    g, om, kt = dumbbell_setup(32)
    E = rasterize(ball((0.3, 0.2), 1.2), g)
    assert perimeter_in(E, om, kt).total == perimeter_in(~E, om, kt).total


def test_perimeter_in_rejects_wrong_table():
    g, om, kt = dumbbell_setup(16)
    with pytest.raises(ValueError):
        perimeter_in(CellSet.empty(g), rasterize(ball((0, 0), 1), g), kt)


def test_ratio_b2_b1_at_half():
    errs = []
    for n in (96, 128, 160):
        g = GridSpec(2, (-2.2, -2.2), 4.4, n)
        B1, B2 = rasterize(ball((0, 0), 1), g), rasterize(ball((0, 0), 2), g)
        kt = build_kernel(g, B2, 4.4, 0.5)
        errs.append(abs(perimeter_whole(B2, kt) / perimeter_whole(B1, kt) / 2**1.5 - 1))
    assert max(errs) <= 0.03


def test_scaling_law_two_box_scales():
    s = 0.4
    for lam in (2.0, 3.0):
        g1 = GridSpec(2, (-1.5, -1.5), 3.0, 30)
        g2 = GridSpec(2, (-1.5 * lam, -1.5 * lam), 3.0 * lam, 30)
        E1, E2 = rasterize(ball((0, 0), 1), g1), rasterize(ball((0, 0), lam), g2)
        p1 = perimeter_whole(E1, build_kernel(g1, E1, 3.0, s))
        p2 = perimeter_whole(E2, build_kernel(g2, E2, 3.0 * lam, s))
        assert p2 == pytest.approx(lam ** (2 - s) * p1, rel=0.03)


def test_classical_perimeter():
    g = GridSpec(2, (0.0, 0.0), 5.0, 10)
    assert classical_perimeter(CellSet.from_indices(g, [(3, 3)])) == 4 * g.h
    sq = CellSet.from_indices(g, [(i, j) for i in range(2, 5) for j in range(2, 5)])
    assert classical_perimeter(sq) == pytest.approx(12 * g.h)
    gf = GridSpec(2, (-1.2, -1.2), 2.4, 256)
    p = classical_perimeter(rasterize(ball((0, 0), 1), gf))
    assert abs(p - 2 * math.pi) <= 0.3 * 2 * math.pi
    # l1 perimeter 2 (width + height); each span exceeds 2r by at most one cell
    assert p == pytest.approx(8.0, abs=4 * gf.h)
    with pytest.raises(ValueError):
        classical_perimeter(~sq)


def test_asymptotic_ratio():
    g = GridSpec(2, (-2.2, -2.2), 4.4, 64)
    B1, B2 = rasterize(ball((0, 0), 1), g), rasterize(ball((0, 0), 2), g)
    fac = lambda s: build_kernel(g, B2, 4.4, s)
    same = asymptotic_ratio(B1, B1, [0.3, 0.6], fac)
    assert all(r["ratio"] == 1.0 for r in same["rows"])
    out = asymptotic_ratio(B2, B1, [0.3, 0.6, 0.9], fac)
    ratios = [r["ratio"] for r in out["rows"]]
    assert ratios[0] > ratios[1] > ratios[2] > 2.0
    assert out["trends_to_classical"]


def test_dumbbell_K_beats_ball_at_large_s():
    g = GridSpec(2, (-2.2, -2.2), 4.4, 64)
    K, B1 = rasterize(dumbbell_K(), g), rasterize(ball((0, 0), 1), g)
    out = asymptotic_ratio(K, B1, [0.9, 0.95], lambda s: build_kernel(g, B1 | K, 4.4, s))
    assert all(r["ratio"] > 1 for r in out["rows"])
    assert crossover_s(out["rows"]) == 0.9


def test_alpha():
    g = GridSpec(2, (-8.0, -8.0), 16.0, 256)
    assert alpha_s(CellSet.empty(g), 0.1) == 0.0
    H = rasterize(halfplane((0, 1)), g)
    Q = rasterize(intersection(halfplane((-1, 0)), halfplane((0, -1))), g)
    assert alpha_bar(H, [0.2, 0.1, 0.05]).value == pytest.approx(math.pi, rel=0.02)
    assert alpha_bar(Q, [0.2, 0.1, 0.05]).value == pytest.approx(math.pi / 2, rel=0.02)
    with pytest.raises(ValueError):
        alpha_bar(H, [])


def test_small_s_ball_radius():
    w = 2 * math.pi
    assert small_s_ball_radius(1e-12, 0.25) == pytest.approx(1.0, abs=1e-9)
    assert small_s_ball_radius(w, 0.25) == pytest.approx((2 / 3) ** 4, rel=1e-12)
    vals = [small_s_ball_radius(1.0, s0) for s0 in (0.05, 0.1, 0.2, 0.4)]
    assert all(a < b for a, b in zip(vals[:-1], vals[1:]))
    with pytest.raises(ValueError):
        small_s_ball_radius(0.0, 0.25)
