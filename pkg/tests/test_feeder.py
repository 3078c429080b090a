import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saver.feeder import (Bus, Feeder, FeederError, Line, TopologyError, chain_feeder, dumps_feeder,
                          ieee13, load_feeder, loads_feeder, path_to_root, random_feeder, save_feeder,
                          star_feeder, subtree_buses)

TWO_BUS = """
[limits]
v0 = 1.0
v_min = 0.95
v_max = 1.05
[buses]
0 = head no 0 0
1 = leaf yes 0 0 -0.5 0.5
[lines]
0-1 = 0.01 0.01
"""


def test_ieee13_shape_and_bounds():
    f = ieee13()
    assert len(f.buses) == 13 and len(f.lines) == 12
    assert f.n == 12
    np.testing.assert_allclose(f.v_lower, 0.9025)
    np.testing.assert_allclose(f.v_upper, 1.1025)
    assert f.v0 == 1.0


def test_two_bus_file():
    f = loads_feeder(TWO_BUS)
    assert len(f.lines) == 1
    assert f.lines[0].r == 0.01 and f.lines[0].x == 0.01
    assert list(f.controllable) == [0]


def test_cycle_is_rejected():
    text = TWO_BUS.replace("0-1 = 0.01 0.01", "0-1 = 0.01 0.01\n1-0 = 0.02 0.02")
    with pytest.raises(TopologyError):
        loads_feeder(text)
    buses = tuple(Bus(i) for i in range(4))
    lines = (Line(0, 1, .01, .01), Line(1, 2, .01, .01), Line(2, 1, .01, .01))
    with pytest.raises(TopologyError, match="cycle|duplicate"):
        Feeder(buses, lines)


def test_disconnected_and_bad_impedance():
    buses = tuple(Bus(i) for i in range(4))
    with pytest.raises(TopologyError):
        Feeder(buses, (Line(0, 1, .01, .01), Line(2, 3, .01, .01), Line(3, 2, .01, .01)))
    with pytest.raises(FeederError, match="impedance"):
        Feeder(buses[:2], (Line(0, 1, 0.0, .01),))


def test_unknown_key_and_malformed_number():
    with pytest.raises(FeederError):
        loads_feeder(TWO_BUS + "\n[extra]\na = 1\n")
    with pytest.raises(FeederError):
        loads_feeder(TWO_BUS.replace("0.01 0.01", "0.01 abc"))


def test_subtree_examples():
    chain = chain_feeder(3)
    assert subtree_buses(chain, 2) == {2, 3}
    assert subtree_buses(chain, 0) == {0, 1, 2, 3}
    assert subtree_buses(star_feeder(3), 1) == {1}
    with pytest.raises(FeederError):
        subtree_buses(chain, 9)


def test_path_examples():
    chain = chain_feeder(3)
    assert [(ln.from_bus, ln.to_bus) for ln in path_to_root(chain, 3)] == [(0, 1), (1, 2), (2, 3)]
    assert path_to_root(chain, 0) == []
    with pytest.raises(FeederError):
        path_to_root(chain, -1)


def test_lines_are_oriented_from_the_head():
    buses = tuple(Bus(i) for i in range(3))
    f = Feeder(buses, (Line(2, 1, .01, .02), Line(1, 0, .03, .04)))
    assert {(ln.from_bus, ln.to_bus) for ln in f.lines} == {(0, 1), (1, 2)}


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**31 - 1))
def test_subtree_path_duality(n, seed):
    f = random_feeder(n, np.random.default_rng(seed))
    for j in range(1, n + 1):
        sub = subtree_buses(f, j)
        for k in range(n + 1):
            on_path = k == j or any(ln.to_bus == j for ln in path_to_root(f, k))
            assert (k in sub) == on_path
    for b in range(n + 1):
        kids = f.children(b)
        assert sum(len(subtree_buses(f, c)) for c in kids) == len(subtree_buses(f, b)) - 1


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_round_trip(n, seed):
    f = random_feeder(n, np.random.default_rng(seed))
    g = loads_feeder(dumps_feeder(f))
    assert g == f
    assert g.fingerprint() == f.fingerprint()


def test_round_trip_file(tmp_path):
    f = ieee13()
    save_feeder(f, tmp_path / "f.ini")
    assert load_feeder(tmp_path / "f.ini") == f


def test_fingerprint_tracks_changes():
    f = ieee13()
    assert f.with_q_limits(-0.2, 0.2).fingerprint() != f.fingerprint()
