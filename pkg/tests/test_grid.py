import math

import numpy as np
import pytest

from sminimal.grid import (
    CellSet,
    FarField,
    GridSpec,
    ShapeDesc,
    ball,
    box,
    complement,
    diameter,
    dilate,
    dumbbell_K,
    dumbbell_Omega,
    halfplane,
    intersection,
    rasterize,
    sphere_measure,
    union,
)


def test_gridspec_basics():
    g = GridSpec(2, (-1.0, -1.0), 2.0, 4)
    assert g.h == 0.5
    assert g.shape == (4, 4)
    assert g.size == 16
    c = g.centers()
    assert np.allclose(c[0, 0], (-0.75, -0.75))
    assert np.allclose(c[3, 2], (0.75, 0.25))


@pytest.mark.parametrize("bad", [dict(dim=3), dict(cells=1), dict(extent=0.0)])
def test_gridspec_rejects(bad):
    args = dict(dim=2, origin=(0.0, 0.0), extent=1.0, cells=4)
    args.update(bad)
    if args["dim"] == 3:
        args["origin"] = (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        GridSpec(args["dim"], args["origin"], args["extent"], args["cells"])


def test_sphere_measure():
    assert sphere_measure(1) == 2.0
    assert sphere_measure(2) == pytest.approx(2 * math.pi)


def test_ball_area_within_3_percent():
    g = GridSpec(2, (-1.0, -1.0), 2.0, 64)
    r = 0.5 * g.extent
    B = rasterize(ball((0, 0), r), g)
    assert B.volume == pytest.approx(math.pi * r * r, rel=0.03)


def test_ball_area_converges():
    errs = []
    for n in (16, 32, 64, 128):
        g = GridSpec(2, (-1.2, -1.2), 2.4, n)
        errs.append(abs(rasterize(ball((0, 0), 1), g).volume - math.pi))
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.02


def test_complement_of_full_box():
    g = GridSpec(2, (0.0, 0.0), 1.0, 8)
    C = rasterize(complement(box((0, 0), (1, 1))), g)
    assert C.count == 0
    assert C.far_field.kind == "full"


def test_halfplane_far_field_is_half_the_directions():
    g = GridSpec(2, (-1.0, -1.0), 2.0, 8)
    H = rasterize(halfplane((0, 1)), g)
    assert H.far_field.kind == "cone"
    assert H.far_field.measure(2) == pytest.approx(math.pi)
    assert H.count == 32


def test_dumbbell_K_symmetric():
    g = GridSpec(2, (-2.2, -2.2), 4.4, 128)
    K = rasterize(dumbbell_K(), g)
    assert np.array_equal(K.mask, K.mask[::-1, :])


def test_dumbbell_omega_is_b2_minus_k():
    g = GridSpec(2, (-2.2, -2.2), 4.4, 64)
    K = rasterize(dumbbell_K(), g)
    B2 = rasterize(ball((0, 0), 2), g)
    Om = rasterize(dumbbell_Omega(), g)
    assert np.array_equal(Om.mask, B2.mask & ~K.mask)


def test_rasterize_rejects_non_shape():
    g = GridSpec(2, (0.0, 0.0), 1.0, 4)
    with pytest.raises(TypeError):
        rasterize("ball", g)
    with pytest.raises(ValueError):
        ShapeDesc("torus")


def test_cellset_operations():
    g = GridSpec(2, (0.0, 0.0), 4.0, 4)
    A = CellSet.from_indices(g, [(0, 0), (1, 1)])
    B = CellSet.from_indices(g, [(1, 1), (2, 2)])
    assert (A | B).count == 3
    assert (A & B).count == 1
    assert (A - B).count == 1
    assert (~A).count == 14 and (~A).far_field.kind == "full"
    assert A.volume == 2.0
    assert (A & B).issubset(A)
    assert not A.issubset(B)


def test_cellset_text_and_csv():
    g = GridSpec(2, (0.0, 0.0), 3.0, 3)
    A = CellSet.from_indices(g, [(0, 1), (2, 2)])
    # one text row per grid line, highest y first
    assert A.to_text().splitlines() == ["001", "100", "000"]
    assert A.to_csv().splitlines()[1:] == ["0,1", "2,2"]


def test_dilate_zero_is_identity():
    g = GridSpec(2, (-1.0, -1.0), 2.0, 16)
    B = rasterize(ball((0, 0), 0.6), g)
    assert dilate(B, 0.0).same_as(B)


def test_dilate_single_cell():
    # centers closer than 2h + h/2: offsets with |o|^2 <= 5
    g = GridSpec(2, (0.0, 0.0), 9.0, 9)
    E = CellSet.from_indices(g, [(4, 4)])
    D = dilate(E, 2 * g.h)
    off = D.indices() - 4
    assert D.count == 21
    assert np.all(np.sum(off**2, axis=1) <= 5)


def test_dilate_ball_matches_bigger_ball_up_to_a_layer():
    g = GridSpec(2, (-2.5, -2.5), 5.0, 100)
    D = dilate(rasterize(ball((0, 0), 1), g), 1.0)
    B2 = rasterize(ball((0, 0), 2), g)
    layer = rasterize(ball((0, 0), 2 + 2 * g.h), g) - rasterize(ball((0, 0), 2 - 2 * g.h), g)
    sym = (D - B2) | (B2 - D)
    assert sym.issubset(layer)


def test_dilate_rejects_negative():
    g = GridSpec(2, (0.0, 0.0), 1.0, 4)
    with pytest.raises(ValueError):
        dilate(CellSet.empty(g), -1.0)


def test_diameter():
    g = GridSpec(2, (0.0, 0.0), 10.0, 10)
    assert diameter(CellSet.from_indices(g, [(3, 3)])) == g.h
    assert diameter(CellSet.from_indices(g, [(1, 2), (6, 2)])) == pytest.approx(5 * g.h + g.h)
    with pytest.raises(ValueError):
        diameter(CellSet.empty(g))
    gf = GridSpec(2, (-1.2, -1.2), 2.4, 120)
    assert abs(diameter(rasterize(ball((0, 0), 1), gf)) - 2.0) <= 2 * gf.h


def test_far_field_algebra():
    q = intersection(halfplane((-1, 0)), halfplane((0, -1))).far_field(2)
    assert q.measure(2) == pytest.approx(math.pi / 2)
    assert q.complement().measure(2) == pytest.approx(3 * math.pi / 2)
    assert union(halfplane((0, 1)), halfplane((0, -1))).far_field(2).kind == "full"
    assert FarField.empty().complement().kind == "full"
