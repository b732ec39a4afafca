import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard_lattice.errors import CapacityError, ValidationError
from choquard_lattice.lattice import MAX_SITES, LatticeBox, build_box, l1_distance


@pytest.mark.parametrize("d,L,M", [(1, 1, 3), (2, 2, 25), (3, 10, 9261)])
def test_site_counts(d, L, M):
    box = build_box(d, L)
    assert box.M == M
    assert box.coords.shape == (M, d)


def test_one_dimensional_sites_in_order():
    assert build_box(1, 1).coords.ravel().tolist() == [-1, 0, 1]


def test_row_major_first_coordinate_slowest():
    box = build_box(2, 1)
    assert box.site_of(0) == (-1, -1)
    assert box.site_of(1) == (-1, 0)
    assert box.site_of(3) == (0, -1)
    assert box.site_of(box.origin_index) == (0, 0)


@pytest.mark.parametrize("d,L", [(1, 30), (2, 7), (3, 4), (4, 2)])
def test_index_round_trip_exhaustive(d, L):
    box = build_box(d, L)
    assert box.M <= 10**4
    for i in range(box.M):
        site = box.site_of(i)
        assert max(abs(c) for c in site) <= L
        assert box.index_of(site) == i


@pytest.mark.parametrize("d,L", [(0, 1), (1, 0), (-1, 3), (1.5, 2)])
def test_invalid_box(d, L):
    with pytest.raises(ValidationError):
        build_box(d, L)


def test_capacity_error():
    with pytest.raises(CapacityError):
        build_box(3, 100)
    assert (2 * 100 + 1) ** 3 > MAX_SITES


def test_index_outside_box():
    box = build_box(2, 2)
    with pytest.raises(ValidationError):
        box.index_of((3, 0))
    with pytest.raises(ValidationError):
        box.index_of((0,))
    with pytest.raises(ValidationError):
        box.site_of(box.M)


@pytest.mark.parametrize(
    "x,y,dist", [((0, 0), (1, 1), 2), ((3,), (3,), 0), ((-2, 1, 0), (1, 1, -1), 4)]
)
def test_l1_distance_examples(x, y, dist):
    assert l1_distance(x, y) == dist


def test_l1_dimension_mismatch():
    with pytest.raises(ValidationError):
        l1_distance((0, 0), (1, 1, 1))


sites = st.lists(st.integers(-1000, 1000), min_size=3, max_size=3)


@given(sites, sites, sites)
@settings(max_examples=200, deadline=None)
def test_triangle_inequality_and_symmetry(x, y, z):
    assert l1_distance(x, z) <= l1_distance(x, y) + l1_distance(y, z)
    assert l1_distance(x, y) == l1_distance(y, x)
    assert (l1_distance(x, y) == 0) == (x == y)


def test_check_field_accepts_grid_shape():
    box = build_box(2, 2)
    u = np.arange(25.0).reshape(5, 5)
    assert np.array_equal(box.check_field(u), u.ravel())
    with pytest.raises(ValidationError):
        box.check_field(np.ones(24))
    bad = np.ones(25)
    bad[3] = np.nan
    with pytest.raises(ValidationError):
        box.check_field(bad)


def test_displacement_offsets_address_differences():
    box = build_box(2, 3)
    off, center = box.offsets
    width = 4 * box.L + 1
    table = np.arange(width**2).reshape(width, width)
    flat = table.ravel()
    rng = np.random.default_rng(0)
    for _ in range(50):
        i, j = rng.integers(0, box.M, 2)
        z = box.coords[i] - box.coords[j]
        assert flat[center + off[i] - off[j]] == table[tuple(z + 2 * box.L)]


def test_box_is_immutable():
    box = LatticeBox(1, 2)
    with pytest.raises(ValueError):
        box.coords[0, 0] = 7
    assert box.delta().sum() == 1 and box.delta()[box.origin_index] == 1
