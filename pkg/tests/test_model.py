"""Window functions and core value types."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from larstream.model import (
    Atom,
    Stream,
    Timeline,
    Variable,
    WindowSpec,
    apply_substitution,
    time_window,
    tuple_size,
    tuple_window,
)
from larstream.parser import AtLiteral

from conftest import atom


# -- concrete windows over the running-example stream ------------------------


def test_time_window_size3_at_41(fig1_stream):
    w = time_window(fig1_stream, 41, 3)
    assert (w.timeline.start, w.timeline.end) == (38, 41)
    assert set(w.atoms_at(38)) == {atom("a", "x2", "y"), atom("b", "y", "z")}
    assert set(w.atoms_at(40)) == {atom("a", "x3", "y")}
    assert w.atoms_at(36) == ()
    # arrival order is preserved
    assert w.atoms_at(38) == (atom("a", "x2", "y"), atom("b", "y", "z"))


def test_time_window_size0_selects_current_point(fig1_stream):
    w = time_window(fig1_stream, 40, 0)
    assert (w.timeline.start, w.timeline.end) == (40, 40)
    assert set(w.atoms_at(40)) == {atom("a", "x3", "y")}


def test_time_window_clamps_at_stream_start(fig1_stream):
    w = time_window(fig1_stream, 36, 100)
    assert (w.timeline.start, w.timeline.end) == (35, 36)
    assert tuple_size(w) == 1


def test_tuple_window_size3_matches_time_window(fig1_stream):
    w = tuple_window(fig1_stream, 41, 3)
    assert (w.timeline.start, w.timeline.end) == (38, 41)
    assert {a for t in w.timeline for a in w.atoms_at(t)} == {
        atom("a", "x2", "y"),
        atom("b", "y", "z"),
        atom("a", "x3", "y"),
    }


def test_tuple_window_size2_drops_earlier_arrival_at_boundary(fig1_stream):
    w = tuple_window(fig1_stream, 41, 2)
    assert (w.timeline.start, w.timeline.end) == (38, 41)
    assert set(w.atoms_at(38)) == {atom("b", "y", "z")}
    assert set(w.atoms_at(40)) == {atom("a", "x3", "y")}
    assert tuple_size(w) == 2


def test_tuple_window_short_prefix_falls_back_to_time_window(fig1_stream):
    w = tuple_window(fig1_stream, 36, 5)
    assert (w.timeline.start, w.timeline.end) == (35, 36)
    assert tuple_size(w) == 1


def test_tuple_size(fig1_stream):
    assert tuple_size(fig1_stream) == 4
    assert tuple_size(fig1_stream.restrict(Timeline(38, 41))) == 3
    assert tuple_size(Stream(Timeline(0, 3))) == 0


def test_window_errors(fig1_stream):
    with pytest.raises(ValueError):
        time_window(fig1_stream, 99, 3)
    with pytest.raises(ValueError):
        tuple_window(fig1_stream, 41, 0)
    with pytest.raises(ValueError):
        tuple_window(fig1_stream, 30, 2)


def test_stream_dedupes_and_validates():
    tl = Timeline(5, 8)
    s = Stream(tl, [(5, atom("a", "y")), (5, atom("a", "y")), (8, atom("a", "y"))])
    assert tuple_size(s) == 2
    assert s.sequence_of(5, atom("a", "y")) == 1
    assert s.sequence_of(8, atom("a", "y")) == 2
    with pytest.raises(ValueError):
        Stream(tl, [(9, atom("a",))])
    with pytest.raises(ValueError):
        Stream(tl, [(7, atom("a",)), (6, atom("b",))])
    with pytest.raises(ValueError):
        Stream(tl, [(6, Atom("a", (Variable("X"),)))])


def test_window_spec_validation():
    WindowSpec("time", 0)
    WindowSpec("tuple", 1)
    with pytest.raises(ValueError):
        WindowSpec("tuple", 0)
    with pytest.raises(ValueError):
        WindowSpec("time", -1)
    with pytest.raises(ValueError):
        WindowSpec("sliding", 2)


# -- substitution -------------------------------------------------------------


def test_apply_substitution_atom():
    a = Atom("a", (Variable("X"), Variable("Y")))
    assert apply_substitution(a, {"X": "x1", "Y": "y"}) == atom("a", "x1", "y")


def test_apply_substitution_partial():
    q = Atom("q", (Variable("X"), Variable("Y"), Variable("Z")))
    out = apply_substitution(q, {"X": "x2"})
    assert out == Atom("q", ("x2", Variable("Y"), Variable("Z")))


def test_apply_substitution_at_literal():
    lit = AtLiteral(Variable("U"), Atom("steam", (Variable("V"),)))
    out = apply_substitution(lit, {"U": 36, "V": 100})
    assert out == AtLiteral(36, atom("steam", 100))


# -- properties ---------------------------------------------------------------


@st.composite
def streams(draw):
    start = draw(st.integers(0, 5))
    end = start + draw(st.integers(0, 10))
    n = draw(st.integers(0, 15))
    ticks = sorted(draw(st.lists(st.integers(start, end), min_size=n, max_size=n)))
    events = [
        (t, Atom(draw(st.sampled_from("ab")), (draw(st.integers(0, 3)),)))
        for t in ticks
    ]
    return Stream(Timeline(start, end), events)


@given(streams(), st.integers(0, 6), st.data())
@settings(max_examples=150, deadline=None)
def test_time_window_properties(stream, n, data):
    t = data.draw(st.integers(stream.timeline.start, stream.timeline.end))
    w = time_window(stream, t, n)
    assert w.timeline.start >= stream.timeline.start
    assert w.timeline.end == t
    assert len(w.timeline) <= n + 1
    for u in w.timeline:
        assert set(w.atoms_at(u)) <= set(stream.atoms_at(u))
    # idempotence at the same evaluation point
    again = time_window(w, t, n)
    assert again == w
    # determinism
    assert time_window(stream, t, n) == w


@given(streams(), st.integers(1, 6), st.data())
@settings(max_examples=150, deadline=None)
def test_tuple_window_properties(stream, n, data):
    t = data.draw(st.integers(stream.timeline.start, stream.timeline.end))
    w = tuple_window(stream, t, n)
    prefix = stream.prefix(t)
    assert w.timeline.start >= stream.timeline.start
    assert w.timeline.end == t
    for u in w.timeline:
        assert set(w.atoms_at(u)) <= set(stream.atoms_at(u))
    assert tuple_size(w) == min(n, tuple_size(prefix))
    assert tuple_window(stream, t, n) == w
