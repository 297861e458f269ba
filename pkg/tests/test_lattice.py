import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtransport.lattice import Lattice, build, neighbors


@pytest.mark.parametrize(
    "kind, dims, n_edges",
    [
        ("chain", 5, 4),
        ("ring", 5, 5),
        ("square", 3, 12),
        ("rectangle", (2, 3), 7),
        ("torus", (3, 4), 24),
    ],
)
def test_edge_counts(kind, dims, n_edges):
    lat = build(kind, dims, "corner" if kind not in ("chain", "ring") else "end")
    assert len(lat.edges) == n_edges


def test_chain_degrees_and_exit():
    lat = build("chain", 6, "end")
    assert lat.exits == (6,)
    assert lat.degrees().tolist() == [1, 2, 2, 2, 2, 1]
    assert lat.z == 2
    np.testing.assert_array_equal(lat.exit_index(), [5])


def test_row_major_indexing():
    lat = build("rectangle", (3, 4), "corner")
    assert lat.site(0, 0) == 1
    assert lat.site(1, 0) == 5
    assert lat.site(2, 3) == 12
    assert lat.coords(7) == (1, 2)
    assert neighbors(lat, 6) == [2, 5, 7, 10]
    assert lat.z == 4


def test_perimeter_and_corners():
    lat = build("rectangle", (3, 4), "perimeter")
    assert lat.exits == (1, 2, 3, 4, 5, 8, 9, 10, 11, 12)
    assert lat.corners() == (1, 4, 9, 12)
    with pytest.raises(ValueError):
        build("torus", 4, "perimeter")


def test_torus_is_regular():
    lat = build("torus", (3, 5), "corner")
    assert set(lat.degrees()) == {4}


def test_all_sites_averaged_returns_one_lattice_per_exit():
    lats = build("chain", 4, "all-sites-averaged")
    assert [l.exits for l in lats] == [(1,), (2,), (3,), (4,)]


@pytest.mark.parametrize(
    "kind, dims, spec",
    [
        ("ring", 2, "end"),
        ("torus", (2, 4), "corner"),
        ("square", (3, 4), "corner"),
        ("chain", 5, "corner"),
        ("square", 3, "end"),
        ("chain", 5, [7]),
        ("chain", 0, "end"),
        ("hexagon", 3, "end"),
        ("chain", 4, "middle"),
    ],
)
def test_invalid_constructions(kind, dims, spec):
    with pytest.raises(ValueError):
        build(kind, dims, spec)


def test_duplicate_exits_rejected():
    with pytest.raises(ValueError):
        build("chain", 4, [2, 2])


def test_json_round_trip():
    lat = build("rectangle", (2, 5), [3, 7])
    back = Lattice.from_json(lat.to_json())
    assert back == lat
    assert json.loads(lat.to_json())["exits"] == [3, 7]


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(["chain", "ring", "square", "rectangle", "torus"]),
    n=st.integers(3, 7),
    m=st.integers(3, 7),
)
def test_adjacency_properties(kind, n, m):
    dims = n if kind in ("chain", "ring", "square") else (n, m)
    spec = "end" if kind in ("chain", "ring") else "corner"
    lat = build(kind, dims, spec)
    A = lat.adjacency()
    np.testing.assert_array_equal(A, A.T)
    assert not A.diagonal().any()
    assert lat.degrees().sum() == 2 * len(lat.edges)
    assert (lat.adjacency(sparse=True).toarray() == A).all()
    for s in lat.sites:
        for t in neighbors(lat, s):
            assert s in neighbors(lat, t)
