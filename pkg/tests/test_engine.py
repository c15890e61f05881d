"""Incremental engine: annotations, ticks, expiry, oracle agreement."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from larstream.engine import INF, Annotation, Engine, EvaluationError, eval_program
from larstream.model import Atom, Stream, Timeline, Variable, WindowSpec
from larstream.oracle import output_stream_naive
from larstream.parser import (
    AT,
    BOX,
    DIAMOND,
    AtLiteral,
    PlainLiteral,
    WindowLiteral,
    parse_program,
    parse_stream,
)

from conftest import atom


def wlit(kind, size, mode, a, time=None, negated=False):
    return WindowLiteral(WindowSpec(kind, size), mode, a, negated, time)


def agreement(program, stream, background=frozenset()):
    expected = output_stream_naive(program, stream, background)
    actual = eval_program(program, stream, background)
    report = []
    for t in stream.timeline:
        got, want = set(actual.atoms_at(t)), set(expected.atoms_at(t))
        if got != want:
            report.append((t, sorted(map(str, got)), sorted(map(str, want))))
    return report


# -- grounding annotations -----------------------------------------------------


def test_diamond_annotations_overlap():
    program = parse_program("q(X) :- [9 t] <> a(X).")
    engine = Engine(program, timeline_start=0)
    for t in range(0, 9):
        engine.tick(t, [atom("a", "y")] if t in (5, 8) else [])
    lit = wlit("time", 9, DIAMOND, Atom("a", (Variable("X"),)))
    anns = {g.annotation for g in engine.grd(lit)}
    assert Annotation(5, 14, 1, INF) in anns
    assert Annotation(8, 17, 2, INF) in anns
    assert len(anns) == 2


def test_box_annotation_at_current_tick_only():
    program = parse_program("q(X) :- [2 t] [] a(X).")
    engine = Engine(program, timeline_start=0)
    for t in range(0, 8):
        engine.tick(t, [atom("a", "y")] if t in (5, 6, 7) else [])
    lit = wlit("time", 2, BOX, Atom("a", (Variable("X"),)))
    groundings = engine.grd(lit, 0, 7)
    assert [g.annotation for g in groundings] == [Annotation(7, 7, 0, INF)]
    assert groundings[0].literal.atom == atom("a", "y")


def test_tuple_diamond_count_annotation(fig1_stream):
    program = parse_program("q(Y,Z) :- [3 #] <> b(Y,Z).")
    engine = Engine(program, timeline_start=35)
    for t in range(35, 39):
        engine.tick(t, fig1_stream.atoms_at(t))
    lit = wlit("tuple", 3, DIAMOND, Atom("b", (Variable("Y"), Variable("Z"))))
    (g,) = engine.grd(lit)
    assert (g.annotation.cc, g.annotation.hc) == (3, 5)
    assert g.annotation.c == 38
    assert g.annotation.h == INF


def test_count_expiry_when_window_slides_past():
    program = parse_program("q(Y,Z) :- [3 #] <> b(Y,Z).")
    engine = Engine(program, timeline_start=0)
    engine.tick(0, [atom("a", "x1"), atom("a", "x2"), atom("b", "y", "z")])
    assert engine.tick(1, [atom("a", "x4"), atom("a", "x5")]) == {atom("q", "y", "z")}
    # the sixth arrival pushes b(y,z) out of the 3-tuple window
    assert engine.tick(2, [atom("a", "x6")]) == frozenset()
    assert engine.debug_scan() == []


# -- tick behaviour --------------------------------------------------------------


EX4 = {
    38: {atom("q", "x1", "y", "z"), atom("q", "x2", "y", "z")},
    39: {atom("q", "x1", "y", "z"), atom("q", "x2", "y", "z")},
    40: {atom("q", "x2", "y", "z"), atom("q", "x3", "y", "z")},
    41: {atom("q", "x2", "y", "z"), atom("q", "x3", "y", "z")},
    42: {atom("q", "x3", "y", "z")},
}


def test_tick_outputs_join_example(join_program, fig1_stream):
    engine = Engine(join_program, timeline_start=35)
    for t in fig1_stream.timeline:
        out = engine.tick(t, fig1_stream.atoms_at(t))
        assert out == frozenset(EX4.get(t, set())), f"tick {t}"
        assert engine.debug_scan() == []


def test_tick_gap_processes_intermediate_points(join_program, fig1_stream):
    engine = Engine(join_program, timeline_start=35)
    engine.tick(36, fig1_stream.atoms_at(36))
    engine.tick(38, fig1_stream.atoms_at(38))
    engine.tick(40, fig1_stream.atoms_at(40))
    assert engine.tick(42) == EX4[42]


def test_tick_with_no_arrivals_and_no_live_annotations():
    program = parse_program("q(X) :- [1 t] <> a(X).")
    engine = Engine(program, timeline_start=0)
    assert engine.tick(0) == frozenset()
    assert engine.tick(1) == frozenset()


def test_diamond_copy_rule_expires():
    program = parse_program("q(A,B) :- [2 t] <> p(A,B).")
    stream = parse_stream("@timeline 0 5\n0 p(c,d)\n")
    result = eval_program(program, stream)
    for t in (0, 1, 2):
        assert set(result.atoms_at(t)) == {atom("q", "c", "d")}
    for t in (3, 4, 5):
        assert result.atoms_at(t) == ()


def test_time_expiry_removes_stale_head():
    program = parse_program("q :- [1 t] <> a.")
    engine = Engine(program, timeline_start=38)
    engine.tick(38, [atom("a")])
    assert engine.output() == {atom("q")}
    engine.tick(39)
    assert engine.output() == {atom("q")}
    before = engine.telemetry().expirations
    engine.tick(40)
    assert engine.output() == frozenset()
    assert engine.telemetry().expirations > before
    assert engine.debug_scan() == []


def test_tick_regression_rejected():
    program = parse_program("q :- [1 t] <> a.")
    engine = Engine(program, timeline_start=0)
    engine.tick(3)
    with pytest.raises(EvaluationError):
        engine.tick(3)
    with pytest.raises(EvaluationError):
        engine.tick(1)


def test_intensional_arrival_rejected(join_program):
    engine = Engine(join_program, timeline_start=0)
    with pytest.raises(EvaluationError, match="intensional"):
        engine.tick(0, [atom("q", "x", "y", "z")])


def test_cooling_constant_steam(cooling_program):
    engine = Engine(cooling_program, timeline_start=0)
    outputs = {}
    for t in range(6):
        outputs[t] = engine.tick(t, [atom("temp", 200)])
    assert atom("alarm") in outputs[5]
    assert atom("isSteam") in outputs[5]
    assert atom("freeze") not in outputs[5]
    # the box window clamps at the timeline start, so constant steam
    # raises the alarm from the very first tick
    assert atom("alarm") in outputs[0]

    stream = Stream(Timeline(0, 5), [(t, atom("temp", 200)) for t in range(6)])
    assert agreement(cooling_program, stream) == []


def test_at_head_future_constant_materializes_when_reached():
    program = parse_program("@[4] marker :- [3 t] <> a. echo :- [0 t] <> marker.")
    stream = parse_stream("@timeline 0 6\n2 a\n")
    result = eval_program(program, stream)
    assert result.atoms_at(3) == ()
    assert set(result.atoms_at(4)) == {atom("marker"), atom("echo")}
    assert result.atoms_at(5) == ()
    expected = output_stream_naive(program, parse_stream("@timeline 0 6\n2 a\n"))
    assert result == expected


def test_at_head_guarantee_can_lapse_before_its_date():
    # the derivation's horizon passes before tick 4, so the pinned atom
    # never materializes; both evaluators agree
    program = parse_program("@[4] marker :- [1 t] <> a. echo :- [0 t] <> marker.")
    stream = parse_stream("@timeline 0 6\n2 a\n")
    assert agreement(program, stream) == []
    result = eval_program(program, stream)
    assert all(result.atoms_at(t) == () for t in stream.timeline)


def test_determinism_across_runs(join_program, fig1_stream):
    first = eval_program(join_program, fig1_stream)
    second = eval_program(join_program, fig1_stream)
    assert first == second


# -- ssne and gc -------------------------------------------------------------------


def test_ssne_disabled_output_identical_firings_higher():
    program = parse_program("q(A,C) :- [4 t] <> p(A,B), [4 t] <> p(B,C).")
    events = [(t, atom("p", f"c{t}", f"c{t+1}")) for t in range(10)]
    stream = Stream(Timeline(0, 9), events)

    on_engine = Engine(program, timeline_start=0, ssne=True)
    off_engine = Engine(program, timeline_start=0, ssne=False)
    for t in stream.timeline:
        assert on_engine.tick(t, stream.atoms_at(t)) == off_engine.tick(
            t, stream.atoms_at(t)
        )
    assert on_engine.telemetry().firings < off_engine.telemetry().firings


def test_gc_rejects_bare_at_bodies():
    program = parse_program("q(X) :- @[T] a(X).")
    with pytest.raises(ValueError, match="bare @"):
        Engine(program, gc=True)


def test_gc_outputs_identical(join_program, fig1_stream):
    plain = eval_program(join_program, fig1_stream)
    collected = eval_program(join_program, fig1_stream, gc=True)
    assert plain == collected


def test_telemetry_snapshot(join_program, fig1_stream):
    engine = Engine(join_program, timeline_start=35)
    for t in fig1_stream.timeline:
        engine.tick(t, fig1_stream.atoms_at(t))
    snap = engine.telemetry()
    assert snap.firings > 0
    assert snap.grd_calls > 0
    assert snap.db_size > 0


# -- oracle agreement ---------------------------------------------------------------


def test_agreement_join_example(join_program, fig1_stream):
    assert agreement(join_program, fig1_stream) == []


def test_agreement_negation_window_rewrites():
    program = parse_program(
        "p(X) :- [2 t] <> a(X).\n"
        "q(X) :- [3 t] <> a(X), not [1 t] <> p(X).\n"
        "r :- not q(1), [4 t] <> a(X).\n"
    )
    stream = parse_stream("@timeline 0 8\n1 a(1)\n4 a(2)\n")
    assert agreement(program, stream) == []


def test_agreement_box_over_derived_at_heads():
    program = parse_program(
        "@[T] hot :- [3 t] @[T] a(V), V >= 2.\n"
        "steady :- [2 t] [] hot.\n"
    )
    stream = parse_stream("@timeline 0 7\n1 a(5)\n2 a(3)\n3 a(9)\n5 a(2)\n")
    assert agreement(program, stream) == []


def test_agreement_diagonal_facts_do_not_pin_the_past():
    # p is re-derived only while its window covers the data; q looking back
    # through a window at p must not outlive p's support.
    program = parse_program("p :- [0 t] <> a.\nq :- [5 t] <> p.\n")
    stream = parse_stream("@timeline 0 6\n2 a\n")
    assert agreement(program, stream) == []
    result = eval_program(program, parse_stream("@timeline 0 6\n2 a\n"))
    assert set(result.atoms_at(2)) == {atom("p"), atom("q")}
    assert result.atoms_at(4) == ()


def test_agreement_at_over_derived_plain_head():
    program = parse_program("p :- [5 t] <> a.\nr(T) :- [5 t] @[T] p.\n")
    stream = parse_stream("@timeline 0 9\n2 a\n")
    assert agreement(program, stream) == []
    result = eval_program(program, parse_stream("@timeline 0 9\n2 a\n"))
    assert set(result.atoms_at(3)) == {atom("p"), atom("r", 3)}
    assert set(result.atoms_at(7)) == {atom("p"), atom("r", 7)}
    assert result.atoms_at(8) == ()


def test_agreement_background():
    program = parse_program(
        "q(X) :- [2 t] <> a(X), base(X).\ns(T) :- @[T] base(1).\n"
    )
    stream = parse_stream("@timeline 0 4\n1 a(1)\n2 a(2)\n")
    background = frozenset({atom("base", 1)})
    assert agreement(program, stream, background) == []


def test_agreement_tuple_box_and_at():
    program = parse_program(
        "q(X) :- [2 #] [] a(X).\nr(T,X) :- [3 #] @[T] a(X).\n"
    )
    stream = parse_stream("@timeline 0 5\n0 a(1)\n1 a(1) a(1)\n2 a(1) a(2)\n4 a(2)\n")
    assert agreement(program, stream) == []


@given(st.integers(0, 300))
@settings(max_examples=60, deadline=None)
def test_agreement_fuzz_sample(seed):
    from larstream.fuzz import check_instance, random_instance

    divergence = check_instance(random_instance(seed))
    assert divergence is None, divergence
