import json

import pytest
from hypothesis import given, settings, strategies as st

from armlearn.environments import truth_machine
from armlearn.machine import (MachineFormatError, MealyRewardMachine, check_equivalence, from_dict,
                              from_edges, from_json)
from armlearn.mdp import History, LabelingFunction

import numpy as np

M, E, G, T, J = range(5)


@pytest.fixture
def tm():
    return truth_machine("treasure")


def test_step_follows_edges(tm):
    assert tm.step(0, M) == (1, 10)
    assert tm.step(3, T) == (4, 95)


def test_null_step_pays_default(tm):
    for u in range(tm.n_nodes):
        assert tm.step(u, None) == (u, -0.1)


def test_invalid_node(tm):
    with pytest.raises(IndexError):
        tm.step(9, M)


def test_run_observations(tm):
    assert tm.run_observations([M, G, T, J]) == (10, 70, 95, 180)
    assert tm.run_observations([]) == ()
    # unspecified pairs are self-loops paying 0
    assert tm.run_observations([M, J, T]) == (10, 0, 0)


def test_unknown_symbol(tm):
    with pytest.raises(KeyError):
        tm.run_observations([7])


def test_run_history_places_default_on_null():
    labels = LabelingFunction(np.array([[-1, 0, 2]]), ("m", "e", "g", "t", "j"))
    tm = truth_machine("treasure")
    assert tm.run_history(History(0, [(0, 0), (0, 0)]), labels) == (-0.1, -0.1)
    assert tm.run_history(History(0, [(0, 1), (0, 0), (0, 2)]), labels) == (10, -0.1, 70)
    assert tm.run_history(History(0), labels) == ()


def minimal_cube():
    edges = [(0, "a", 1, 0), (1, "a", 2, 0), (2, "a", 3, 0), (2, "b", 5, 2),
             (3, "a", 4, 0), (4, "a", 1, 0), (4, "b", 5, 1), (5, "b", 0, 0)]
    return from_edges(("a", "b"), 6, edges)


def test_equivalence_with_self(tm):
    assert check_equivalence(tm, tm) is None


def test_cube_machine_equals_its_minimal_form():
    cube = truth_machine("cube")
    assert cube.n_nodes == 7
    assert check_equivalence(cube, minimal_cube()) is None
    assert check_equivalence(minimal_cube(), cube) is None


def test_counterexample_on_first_letter(tm):
    other = tm.with_edge(0, M, reward=9)
    assert check_equivalence(tm, other) == (M,)


def test_alphabet_mismatch(tm):
    other = from_edges(("a",), 1, [])
    with pytest.raises(ValueError):
        check_equivalence(tm, other)


def test_dot_uses_edge_labels(tm):
    dot = tm.to_dot()
    assert '"m|10"' in dot
    assert '"j|180"' in dot


def test_json_roundtrip(tm):
    again = from_json(tm.to_json())
    assert again == tm


def test_malformed_json_reports_location():
    with pytest.raises(MachineFormatError) as err:
        from_json('{"nodes": [0],\n "start": }')
    assert "line 2" in str(err.value)


def test_missing_edge_rejected(tm):
    data = tm.to_dict()
    data["edges"].pop()
    with pytest.raises(MachineFormatError):
        from_dict(data)


def test_office_request_pays_one():
    office = truth_machine("office")
    assert office.step(0, office.alphabet.index("mrA")) == (1, 1)


@st.composite
def machines(draw, n_symbols=2, max_nodes=4):
    n = draw(st.integers(1, max_nodes))
    trans = [[draw(st.integers(0, n - 1)) for _ in range(n_symbols)] for _ in range(n)]
    out = [[draw(st.sampled_from([0.0, 1.0, 2.0])) for _ in range(n_symbols)] for _ in range(n)]
    return MealyRewardMachine(tuple("ab"[:n_symbols]), trans, out, 0.0, 0)


words = st.lists(st.integers(0, 1), max_size=12)


@settings(max_examples=150, deadline=None)
@given(machines(), machines())
def test_equivalence_symmetric_and_witnessed(r, h):
    w1, w2 = check_equivalence(r, h), check_equivalence(h, r)
    assert (w1 is None) == (w2 is None)
    if w1 is not None:
        a, b = r.run_observations(w1), h.run_observations(w1)
        assert a[:-1] == b[:-1]
        assert a[-1] != b[-1]


@settings(max_examples=150, deadline=None)
@given(machines(), machines(), st.lists(words, max_size=10))
def test_equivalent_machines_agree_on_words(r, h, ws):
    if check_equivalence(r, h) is None:
        for w in ws:
            assert r.run_observations(w) == h.run_observations(w)


@settings(max_examples=100, deadline=None)
@given(machines(), words)
def test_output_length(m, w):
    assert len(m.run_observations(w)) == len(w)


@settings(max_examples=100, deadline=None)
@given(machines(), st.lists(st.integers(-1, 1), max_size=15))
def test_history_agrees_with_filtered_word(m, raw):
    # one state per step whose label is the drawn observation (-1 = null)
    labels = LabelingFunction(np.array([raw + [0]]), m.alphabet)
    hist = History(0, [(0, i) for i in range(len(raw))])
    full = m.run_history(hist, labels)
    kept = [r for r, z in zip(full, raw) if z >= 0]
    assert tuple(kept) == m.run_observations([z for z in raw if z >= 0])
    assert all(r == m.default_reward for r, z in zip(full, raw) if z < 0)


@settings(max_examples=100, deadline=None)
@given(machines())
def test_json_roundtrip_any(m):
    assert from_json(m.to_json()) == m
    json.loads(m.to_json())
