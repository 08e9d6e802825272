import math

import numpy as np
import pytest

from sminimal.grid import CellSet, GridSpec, ball, rasterize
from sminimal.kernel import (
    build_kernel,
    cache_key,
    far_mass,
    load_kernel,
    save_kernel,
    subdivided_weight,
    tail_norm,
    tent_weight_1d,
    tent_weight_2d,
    unit_stencil,
)
from sminimal.solver import ScalarField

# Exact unit-cell pair integrals, from an mpmath polar-split quadrature of the
# tent autocorrelation against |z|^{-2-s} (independent of the package code).
EXACT_NEAR = {
    (0.1, (1, 0)): 2.038362999447597,
    (0.1, (1, 1)): 0.6542536513240991,
    (0.5, (1, 0)): 3.647087515503142,
    (0.5, (1, 1)): 0.6760083986859471,
    (0.9, (1, 0)): 19.379525543386567,
    (0.9, (1, 1)): 0.7567314130118675,
}

# s-perimeter of the unit square: polar integral of |z|^{-2-s}(1 - overlap(z)).
PER_UNIT_SQUARE = {0.1: 70.64642364634824, 0.5: 27.21190836025653, 0.9: 85.14253989712084}


def small_kernel(s=0.5, n=16, r=1.5):
    g = GridSpec(2, (-1.0, -1.0), 2.0, n)
    om = rasterize(ball((0, 0), 0.5), g)
    return build_kernel(g, om, r, s)


@pytest.mark.parametrize("key", sorted(EXACT_NEAR))
def test_near_weights_match_oracle(key):
    s, o = key
    assert tent_weight_2d(*o, s) == pytest.approx(EXACT_NEAR[key], rel=1e-10)


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_subdivision_converges_to_exact_near_weight(s):
    exact = tent_weight_2d(1, 0, s)
    errs = [abs(subdivided_weight((1, 0), s, k) - exact) for k in (4, 8, 16)]
    assert errs[0] > errs[1] > errs[2]


def test_tent_weight_1d_closed_form_against_quadrature():
    from scipy.integrate import quad

    s = 0.5
    for o in (1, 2, 5):
        f = lambda z: (1 - abs(z - o)) * abs(z) ** (-1 - s)
        pts = [o - 1, o, o + 1]
        val = sum(quad(f, a, b, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))
        assert tent_weight_1d(o, s) == pytest.approx(val, rel=1e-7)


def test_well_separated_pair_is_midpoint():
    kt = small_kernel(s=0.5, n=20, r=2.0)
    h = kt.grid.h
    w = kt.weight((0, 0), (10, 0))
    assert w == pytest.approx(h**4 * (10 * h) ** -2.5, rel=1e-13)


def test_far_mass_closed_form():
    # 2 pi 4^{-1/2} / (1/2) = 2 pi
    assert far_mass(2, 0.5, 4.0) == pytest.approx(2 * math.pi, rel=1e-14)
    assert far_mass(1, 0.5, 4.0) == pytest.approx(2 * 4**-0.5 / 0.5)


def test_weights_symmetric_and_positive():
    kt = small_kernel()
    st = kt.stencil
    assert np.array_equal(st, st[::-1, ::-1])
    assert np.array_equal(st, st.T)
    K = kt.radius_cells
    assert st[K, K] == 0.0
    offs, w = kt.nonzero()
    assert np.all(w > 0)
    D = kt.dense()
    assert np.array_equal(D, D.T)


def test_monotone_in_distance_for_separated_pairs():
    kt = small_kernel(r=1.9)
    offs, w = kt.nonzero()
    d2 = np.sum(offs**2, axis=1)
    far = d2 >= 4
    order = np.argsort(d2[far], kind="stable")
    dd, ww = d2[far][order], w[far][order]
    for a in range(len(dd) - 1):
        if dd[a] < dd[a + 1]:
            assert ww[a] > ww[a + 1]


def test_homogeneity_under_grid_scaling():
    s = 0.3
    g1 = GridSpec(2, (0.0, 0.0), 8.0, 8)
    g2 = GridSpec(2, (0.0, 0.0), 24.0, 8)
    om1 = CellSet.from_indices(g1, [(0, 0), (1, 0)])
    om2 = CellSet.from_indices(g2, [(0, 0), (1, 0)])
    k1 = build_kernel(g1, om1, 8.0, s)
    k2 = build_kernel(g2, om2, 24.0, s)
    for j in [(1, 0), (3, 2), (5, 4)]:
        assert k2.weight((0, 0), j) == pytest.approx(3.0 ** (2 - s) * k1.weight((0, 0), j), rel=1e-13)


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_kernel_mass_consistency(s):
    # total stencil mass plus far mass is the s-perimeter of one cell
    g = GridSpec(2, (0.0, 0.0), 1.0, 2)
    om = CellSet.from_indices(g, [(0, 0)])
    kt = build_kernel(g, om, 20 * g.h, s)
    assert kt.total_mass() == pytest.approx(g.h ** (2 - s) * PER_UNIT_SQUARE[s], rel=0.05)


def test_build_kernel_rejects():
    g = GridSpec(2, (-1.0, -1.0), 2.0, 8)
    om = rasterize(ball((0, 0), 0.5), g)
    with pytest.raises(ValueError):
        build_kernel(g, om, 2.0, 1.0)
    with pytest.raises(ValueError):
        build_kernel(g, om, 2.0, 0.0)
    with pytest.raises(ValueError):
        build_kernel(g, om, 0.5, 0.5)
    with pytest.raises(ValueError):
        build_kernel(g, CellSet.empty(g), 2.0, 0.5)
    with pytest.raises(ValueError):
        build_kernel(g, om, 2.0, 0.5, near_rule="simpson")


def test_near_rule_options():
    for rule in ("tent", "midpoint", "subdivided(2)"):
        st = unit_stencil(2, 0.5, 3, rule)
        assert st[3, 3] == 0 and st[4, 3] > 0
    assert unit_stencil(2, 0.5, 3, "midpoint")[4, 3] == 1.0
    st1 = unit_stencil(1, 0.5, 3, "exact_1d")
    assert st1[4] == pytest.approx(tent_weight_1d(1, 0.5))
    with pytest.raises(ValueError):
        unit_stencil(2, 0.5, 3, "exact_1d")


def test_ring_covers_truncation_neighbourhood():
    kt = small_kernel(r=1.2)
    ring = kt.ring
    assert not (ring & kt.omega).count
    K = kt.radius_cells
    om = kt.omega.indices()
    for j in ring.indices()[:50]:
        d = np.min(np.sum((om - j) ** 2, axis=1))
        assert d <= K * K


def test_tail_norm():
    kt = small_kernel()
    g, om = kt.grid, kt.omega
    assert tail_norm(ScalarField.constant(g, om, 0.0), kt, 1.0) == 0.0
    one = ScalarField.constant(g, om, 1.0)
    three = ScalarField.constant(g, om, 3.0)
    assert tail_norm(three, kt, 1.0) == pytest.approx(3 * tail_norm(one, kt, 1.0), rel=1e-14)
    # single exterior cell: the sum of its weights to omega
    j0 = tuple(kt.ring.indices()[0])
    vals = np.zeros(g.shape)
    vals[j0] = 1.0
    phi = ScalarField(g, om, vals, 0.0)
    expect = sum(kt.weight(i, j0) for i in om.indices())
    assert tail_norm(phi, kt, 1.0) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(ValueError):
        tail_norm(one, kt, 0.0)


def test_binary_cache_round_trip(tmp_path):
    kt = small_kernel()
    path = tmp_path / "k.bin"
    save_kernel(kt, path)
    raw = path.read_bytes()
    assert raw[:4] == b"SMKT"
    back = load_kernel(path, kt.grid, kt.omega, kt.s, kt.r_trunc, kt.near_rule)
    assert np.array_equal(back.stencil, kt.stencil)
    with pytest.raises(ValueError):
        load_kernel(path, kt.grid, kt.omega, 0.6, kt.r_trunc, kt.near_rule)
    assert cache_key(kt.grid, 0.5, 1.5, "tent") != cache_key(kt.grid, 0.5, 1.5, "midpoint")


def test_cache_directory_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SMINIMAL_KERNEL_CACHE", str(tmp_path))
    g = GridSpec(2, (0.0, 0.0), 1.0, 7)
    om = CellSet.from_indices(g, [(3, 3)])
    k1 = build_kernel(g, om, 0.77, 0.37)
    assert list(tmp_path.iterdir())
    k2 = build_kernel(g, om, 0.77, 0.37)
    assert np.array_equal(k1.stencil, k2.stencil)
