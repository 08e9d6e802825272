import pytest

from sminimal.curvature import curvature_profile, is_boundary_cell, mean_curvature
from sminimal.grid import CellSet, GridSpec, ball, box, complement, halfplane, rasterize
from sminimal.kernel import build_kernel


def setup(n=32, s=0.5, omega=box((-1, -1), (1, 1)), r=3.0):
    g = GridSpec(2, (-2.0, -2.0), 4.0, n)
    om = rasterize(omega, g)
    return g, om, build_kernel(g, om, r, s)


def test_halfplane_zero_within_pairing_error():
    g, om, kt = setup()
    H = rasterize(halfplane((0, 1)), g)
    x = (g.cells // 2, g.cells // 2 - 1)
    c = mean_curvature(H, x, 2 * g.h, kt)
    assert abs(c.value) <= c.pv_pairing_error
    assert c.rho == 2 * g.h


@pytest.mark.parametrize("s", [0.2, 0.5, 0.9])
def test_ball_positive(s):
    g, om, kt = setup(s=s)
    B = rasterize(ball((0, 0), 1), g)
    bnd = [tuple(i) for i in B.indices() if is_boundary_cell(B, tuple(i))]
    vals = [mean_curvature(B, x, 2 * g.h, kt).value for x in bnd[:12]]
    assert all(v > 0 for v in vals)


def test_complement_antisymmetry_exact():
    g, om, kt = setup(s=0.7)
    B = rasterize(ball((0.1, -0.05), 1), g)
    C = rasterize(complement(ball((0.1, -0.05), 1)), g)
    for i in B.indices():
        x = tuple(i)
        if is_boundary_cell(B, x):
            assert mean_curvature(C, x, 2 * g.h, kt).value == -mean_curvature(B, x, 2 * g.h, kt).value


def test_monotone_inclusion_exact():
    g, om, kt = setup(s=0.6)
    E = rasterize(ball((0, 0), 0.8), g)
    F = rasterize(ball((0.3, 0), 1.1), g)
    assert E.issubset(F)
    hits = 0
    for i in E.indices():
        x = tuple(i)
        for e in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]:
            y = (x[0] + e[0], x[1] + e[1])
            if not (0 <= y[0] < g.cells and 0 <= y[1] < g.cells):
                continue
            if not E.mask[y] and not F.mask[y]:
                hE = mean_curvature(E, x, 2 * g.h, kt, direction=e).value
                hF = mean_curvature(F, x, 2 * g.h, kt, direction=e).value
                assert hE >= hF
                hits += 1
    assert hits > 0


def test_rho_stability_for_symmetric_set():
    g, om, kt = setup()
    H = rasterize(halfplane((0, 1)), g)
    x = (g.cells // 2, g.cells // 2 - 1)
    vals = {mean_curvature(H, x, k * g.h, kt).value for k in (1, 2, 3, 5)}
    assert vals == {0.0}


def test_rejections():
    g, om, kt = setup()
    B = rasterize(ball((0, 0), 1), g)
    with pytest.raises(ValueError):
        mean_curvature(B, (g.cells // 2, g.cells // 2), 2 * g.h, kt)
    bnd = next(tuple(i) for i in B.indices() if is_boundary_cell(B, tuple(i)))
    with pytest.raises(ValueError):
        mean_curvature(B, bnd, 0.5 * g.h, kt)
    with pytest.raises(ValueError):
        mean_curvature(B, bnd, kt.r_trunc, kt)


def test_profiles():
    g, om, kt = setup(n=24)
    H = rasterize(halfplane((0, 1)), g)
    prof = curvature_profile(H, om, None, kt)
    assert len(prof.samples) > 0
    assert all(abs(c.value) <= c.pv_pairing_error for c in prof.samples)
    assert prof.to_csv().splitlines()[0] == "cell_x,cell_y,value,pv_error"
    assert curvature_profile(CellSet.empty(g), om, None, kt).samples == ()
    assert curvature_profile(CellSet.empty(g), om, None, kt).residual == 0.0
