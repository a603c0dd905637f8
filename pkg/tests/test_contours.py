import math

import numpy as np
import pytest

from charval.contours import (Annulus, Rectangle, SectorRegion, circle, make_contour,
                              rectangle, region_from_spec, sector_boundary, self_test)
from charval.core import ParameterError


def test_circle_cauchy_integral():
    ct = circle(0, 1, 64)
    assert abs(np.sum(ct.weights / ct.nodes) - 2j * np.pi) <= 1e-12


def test_rectangle_winding():
    ct = rectangle([-1 - 1j, 1 + 1j], 32)
    assert abs(ct.winding(0.3 - 0.2j) - 1) <= 1e-12
    assert abs(ct.winding(2.0)) <= 1e-12


def test_sector_winding():
    ct = sector_boundary(SectorRegion(0.5, 0.1, 1.0), 32)
    assert abs(ct.winding(0.5) - 1) <= 1e-8
    assert abs(ct.winding(-0.5)) <= 1e-8


def test_self_test_random_points(rng):
    ct = circle(0.2 + 0.1j, 0.7, 256)
    ang = rng.uniform(0, 2 * np.pi, 100)
    inner = 0.2 + 0.1j + rng.uniform(0, 0.5, 100) * np.exp(1j * ang)
    outer = 0.2 + 0.1j + rng.uniform(0.95, 3, 100) * np.exp(1j * ang)
    assert self_test(ct, inner, outer)

    rect = make_contour("rectangle", corners=[-1 - 2j, 2 + 1j], n_per_side=64)
    inner = rng.uniform(-0.7, 1.7, 100) + 1j * rng.uniform(-1.7, 0.7, 100)
    outer = rng.uniform(2.5, 4, 100) + 1j * rng.uniform(-3, 3, 100)
    assert self_test(rect, inner, outer)


def test_refined_doubles_nodes():
    ct = circle(0, 1, 32)
    assert ct.refined().nodes.size == 64
    r = rectangle([0, 1 + 1j], 8)
    assert r.refined().nodes.size == 2 * r.nodes.size


@pytest.mark.parametrize("bad", [
    lambda: circle(0, 0, 64),
    lambda: circle(0, 1, 4),
    lambda: rectangle([0, 1], 8),
    lambda: SectorRegion(0.5, 1.0, 0.5),
    lambda: SectorRegion(-0.1, 0.1, 1.0),
    lambda: Annulus(0.5, 0.1),
    lambda: make_contour("hexagon"),
    lambda: SectorRegion(0.5, -0.1, 1.0).root_boxes(),
])
def test_degenerate_geometry(bad):
    with pytest.raises(ParameterError):
        bad()


def test_sector_boxes_tile_the_sector():
    reg = SectorRegion(0.3, 1e-3, 1.0)
    boxes = reg.root_boxes()
    los = sorted(math.exp(b.u0) for b in boxes)
    his = sorted(math.exp(b.u1) for b in boxes)
    assert los[0] == pytest.approx(1e-3)
    assert his[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(los[1:], his[:-1])


def test_annulus_real_intervals():
    full = Annulus(0.1, 1.0)
    assert sorted(full.real_intervals()) == [(-1.0, -0.1), (0.1, 1.0)]
    upper = Annulus(0.1, 1.0, phi0=0.1, span=1.0)
    assert upper.real_intervals() == []
    assert upper.contains(0.5 * np.exp(0.5j))
    assert not upper.contains(0.5 * np.exp(-0.5j))


def test_region_from_spec():
    assert region_from_spec({"kind": "rectangle", "x0": 0, "x1": 1, "y0": -1, "y1": 1}) == Rectangle(0, 1, -1, 1)
    assert region_from_spec({"kind": "sector", "theta": 0.2, "a": 0.1, "b": 1}).theta == 0.2
    assert region_from_spec({"kind": "annulus", "r_in": 0.1, "r_out": 1}).span == pytest.approx(2 * math.pi)
