import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fractrace import geometry as G


def test_signed_distance_examples(interval, square, disk):
    assert interval.signed_distance(np.array([[2.0]]))[0] == pytest.approx(1.0)
    assert disk.signed_distance(np.array([[0.0, 0.0]]))[0] == pytest.approx(-1.0)
    assert square.signed_distance(np.array([[0.5, 0.1]]))[0] == pytest.approx(-0.1)


def test_signed_distance_sign_convention(all_domains, rng):
    for dom in all_domains.values():
        lo, hi = dom.bounding_box()
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        pts = lo - 1 + (hi - lo + 2) * rng.random((500, dom.dim))
        sd = np.asarray(dom.signed_distance(pts)).reshape(-1)
        inside = dom.contains(pts)
        assert np.all(sd[inside] < 0)
        assert np.all(sd[~inside] >= 0)


def test_lipschitz_property_bulk(all_domains, rng):
    # 1e5 random pairs per shape: |sd(x)-sd(y)| <= |x-y|
    for name, dom in all_domains.items():
        lo, hi = dom.bounding_box()
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        span = hi - lo
        x = lo - span + 3 * span * rng.random((100_000, dom.dim))
        y = lo - span + 3 * span * rng.random((100_000, dom.dim))
        sdx = np.asarray(dom.signed_distance(x)).reshape(-1)
        sdy = np.asarray(dom.signed_distance(y)).reshape(-1)
        gap = np.abs(sdx - sdy) - np.linalg.norm(x - y, axis=-1)
        assert gap.max() <= 1e-10, f"{name}: Lipschitz violated by {gap.max()}"


@given(x=st.floats(-5, 5), y=st.floats(-5, 5))
@settings(max_examples=200, deadline=None)
def test_lipschitz_property_interval(x, y):
    dom = G.unit_interval()
    sdx = dom.signed_distance(np.array([[x]]))[0]
    sdy = dom.signed_distance(np.array([[y]]))[0]
    assert abs(sdx - sdy) <= abs(x - y) + 1e-12


def test_nearest_boundary_point(all_domains, rng):
    for dom in all_domains.values():
        lo, hi = dom.bounding_box()
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        pts = lo - 1 + (hi - lo + 2) * rng.random((200, dom.dim))
        nb = dom.nearest_boundary_point(pts)
        d = np.abs(np.asarray(dom.signed_distance(pts)).reshape(-1))
        assert np.allclose(np.linalg.norm(pts - nb, axis=-1), d, atol=1e-9)
        assert np.all(np.abs(np.asarray(dom.signed_distance(nb)).reshape(-1))
                      < 1e-9)


def test_inradius_diameter(all_domains):
    for name, dom in all_domains.items():
        assert dom.inradius > 0
        assert np.isfinite(dom.diameter)
        assert dom.inradius <= dom.diameter / 2 + 1e-12, name
    assert G.unit_disk().inradius == 1.0
    assert G.unit_square().inradius == 0.5
    # L-shape deepest inscribed ball, found by the multiscale scan
    assert G.l_shape().inradius == pytest.approx(0.29289, abs=1e-3)


def test_collar_regions(interval, disk):
    pred = interval.collar_region(1.0, "exterior")
    pts = np.array([[-0.5], [-1.5], [0.5], [1.5], [2.5]])
    assert list(pred(pts)) == [True, False, False, True, False]
    pred = disk.collar_region(0.5, "exterior")
    assert pred(np.array([[1.25, 0.0]]))[0]
    assert not pred(np.array([[2.0, 0.0]]))[0]


def test_collar_nesting(all_domains, rng):
    for dom in all_domains.values():
        lo, hi = dom.bounding_box()
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        pts = lo - 2 + (hi - lo + 4) * rng.random((2000, dom.dim))
        for side in ("interior", "exterior"):
            small = dom.collar_region(0.3, side)(pts)
            large = dom.collar_region(0.9, side)(pts)
            assert np.all(large[small])


def test_boundary_quadrature_interval(interval):
    bq = interval.boundary_quadrature(2)
    assert bq.total_mass == pytest.approx(2.0)
    assert sorted(bq.points[:, 0]) == [0.0, 1.0]
    with pytest.raises(ValueError):
        interval.boundary_quadrature(1)


def test_boundary_quadrature_masses(disk, square):
    assert disk.boundary_quadrature(10_000).total_mass == pytest.approx(
        2 * np.pi, abs=1e-6)
    assert square.boundary_quadrature(400).total_mass == pytest.approx(
        4.0, abs=1e-9)


def test_boundary_quadrature_properties(all_domains):
    for dom in all_domains.values():
        if dom.dim == 1:
            continue
        bq = dom.boundary_quadrature(256)
        assert np.all(bq.weights > 0)
        sd = np.abs(np.asarray(dom.signed_distance(bq.points)).reshape(-1))
        assert sd.max() <= 1e-12 * dom.diameter


def test_boundary_quadrature_second_order(square):
    f = lambda p: np.exp(p[:, 0] + 0.5 * p[:, 1])
    ref = square.boundary_quadrature(40_000).integrate(f)
    e1 = abs(square.boundary_quadrature(100).integrate(f) - ref)
    e2 = abs(square.boundary_quadrature(200).integrate(f) - ref)
    assert e2 < e1 / 2


def test_polygon_validation():
    with pytest.raises(ValueError):  # clockwise
        G.Polygon(((0, 0), (0, 1), (1, 1), (1, 0)))
    with pytest.raises(ValueError):  # self-intersecting bowtie
        G.Polygon(((0, 0), (1, 1), (1, 0), (0, 1)))


def test_union_domain():
    u = G.UnionDomain((G.Interval(0, 1), G.Interval(2, 3)))
    sd = u.signed_distance(np.array([[1.5], [0.5], [2.5], [-1.0]]))
    assert sd[0] == pytest.approx(0.5)
    assert sd[1] == pytest.approx(-0.5)
    assert sd[2] == pytest.approx(-0.5)
    assert sd[3] == pytest.approx(1.0)
    assert u.inradius == 0.5
    assert u.diameter == pytest.approx(3.0)
    assert u.volume() == pytest.approx(2.0)
    assert u.boundary_quadrature(2).total_mass == pytest.approx(4.0)


def test_make_domain():
    assert isinstance(G.make_domain("interval", [0, 1]), G.Interval)
    assert isinstance(G.make_domain("ball", [0, 0, 1]), G.Ball)
    assert isinstance(G.make_domain("lshape", []), G.Polygon)
    assert isinstance(G.make_domain("box", [0, 0, 1, 1]), G.Box)
    with pytest.raises(ValueError):
        G.make_domain("torus", [1])
