import numpy as np
import pytest

from topocurrent.lattice import (GeometryError, Region, annulus, box, build_lattice, disk,
                                 half_plane, sector, triple_partition)


def test_square_counts_and_bbox():
    assert build_lattice("square", 2, 2).n_sites == 4
    lat = build_lattice("square", 24, 24)
    assert lat.n_sites == 576
    lo, hi = lat.bbox
    np.testing.assert_array_equal(lo, [0, 0])
    np.testing.assert_array_equal(hi, [23, 23])


def test_honeycomb_two_sites_per_cell_and_bond_length():
    lat = build_lattice("honeycomb", 8, 8)
    assert lat.n_sites == 128
    d = np.hypot(*lat.displacement(lat.positions[0]).T)
    assert np.isclose(np.sort(d)[1], 1 / np.sqrt(3))


def test_orbitals_per_site():
    lat = build_lattice("chain", 5, orbitals=2)
    assert lat.n_orbitals == 10
    assert lat.orbital_slice(3) == slice(6, 8)
    np.testing.assert_array_equal(lat.orbital_site[:4], [0, 0, 1, 1])


@pytest.mark.parametrize("kwargs", [dict(kind="square", Lx=0, Ly=3),
                                    dict(kind="hexagon", Lx=3, Ly=3),
                                    dict(kind="honeycomb", Lx=4, Ly=3, periodic=True)])
def test_bad_lattices(kwargs):
    with pytest.raises(GeometryError):
        build_lattice(**kwargs)


def test_torus_minimum_image():
    lat = build_lattice("square", 10, 10, periodic=True)
    d = lat.displacement([0.0, 0.0])
    assert np.abs(d).max() <= 5.0
    assert np.isclose(lat.distance([0.0, 0.0])[9], 1.0)


def test_triple_partition_covers_and_is_disjoint():
    lat = build_lattice("square", 12, 12)
    part = triple_partition(lat, lat.center + [0.13, 0.07], (90, 210, 330))
    A, B, C = part.regions()
    total = A.mask.astype(int) + B.mask.astype(int) + C.mask.astype(int)
    assert np.all(total == 1)
    assert len(A) + len(B) + len(C) == lat.n_sites


def test_partition_matches_brute_force_angles():
    lat = build_lattice("square", 9, 7)
    p = np.array([4.3, 3.2])
    part = triple_partition(lat, p, (90, 210, 330))
    for j, x in enumerate(lat.positions):
        ang = np.degrees(np.arctan2(x[1] - p[1], x[0] - p[0])) % 360
        expect = "A" if 90 <= ang < 210 else ("B" if 210 <= ang < 330 else "C")
        got = [k for k, r in zip("ABC", part.regions()) if j in r]
        assert got == [expect]


def test_rotating_rays_permutes_sectors():
    lat = build_lattice("square", 10, 10)
    p = lat.center + np.array([0.31, 0.17])
    a = triple_partition(lat, p, (90, 210, 330))
    b = triple_partition(lat, p, (210, 330, 90))
    assert b.A == a.B and b.B == a.C and b.C == a.A


def test_clockwise_orientation_swaps_two_sectors():
    # clockwise reading of the same rays: A and B trade places
    lat = build_lattice("square", 10, 10)
    p = lat.center + [0.13, 0.07]
    ccw = triple_partition(lat, p, (90, 210, 330))
    cw = triple_partition(lat, p, (330, 210, 90), orientation=-1)
    assert cw.orientation == -1
    assert cw.A == ccw.B and cw.B == ccw.A and cw.C == ccw.C


@pytest.mark.parametrize("point, angles", [((5.0, 5.0), (90, 210, 330)),
                                           ((5.5, 5.5), (0, 20, 180)),
                                           ((50.0, 5.5), (90, 210, 330))])
def test_partition_errors(point, angles):
    lat = build_lattice("square", 10, 10)
    with pytest.raises(GeometryError):
        triple_partition(lat, point, angles)


def test_half_plane_and_complement():
    lat = build_lattice("square", 4, 4)
    hp = half_plane(lat, "x", 1.5)
    assert len(hp) == 8
    assert hp.complement() == half_plane(lat, "x", 1.5, side=-1)


def test_disk_annulus_box():
    lat = build_lattice("square", 11, 11)
    c = np.array([5.0, 5.0])
    assert len(disk(lat, c, 0.0)) == 0
    r = np.hypot(*(lat.positions - c).T)
    ann = annulus(lat, c, 2.0, 4.0)
    np.testing.assert_array_equal(ann.mask, (r >= 2) & (r < 4))
    assert len(box(lat, c, (1.5, 0.5))) == 3
    with pytest.raises(GeometryError):
        annulus(lat, c, 3.0, 3.0)


def test_sector_wraps_through_zero():
    lat = build_lattice("square", 11, 11)
    s = sector(lat, [5.2, 5.1], 300, 60)
    for j in s.to_list():
        x = lat.positions[j] - [5.2, 5.1]
        ang = np.degrees(np.arctan2(x[1], x[0])) % 360
        assert ang >= 300 or ang < 60


def test_region_algebra():
    lat = build_lattice("square", 3, 3)
    a = Region(lat, [0, 1, 2])
    b = Region(lat, [2, 3])
    assert (a | b).to_list() == [0, 1, 2, 3]
    assert (a & b).to_list() == [2]
    assert (a - b).to_list() == [0, 1]
    other = build_lattice("square", 3, 3)
    with pytest.raises(GeometryError):
        a | Region(other, [1])
