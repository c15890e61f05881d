"""Program and stream parsing, negation rewrite, safety, stratification."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from larstream.model import Atom, Variable, WindowSpec
from larstream.parser import (
    AT,
    BOX,
    DIAMOND,
    AtLiteral,
    Negation,
    NegationCycleError,
    ParseError,
    PlainLiteral,
    Rule,
    UnsafeRuleError,
    WindowLiteral,
    parse_background,
    parse_program,
    parse_stream,
    program_to_text,
    rewrite_negation,
    stratify,
)

from conftest import COOLING_PROGRAM_TEXT, atom


def test_parse_join_rule():
    program = parse_program("q(X,Y,Z) :- [3 t] <> a(X,Y), [3 #] <> b(Y,Z).")
    (rule,) = program.rules
    assert rule.head == PlainLiteral(
        Atom("q", (Variable("X"), Variable("Y"), Variable("Z")))
    )
    first, second = rule.body
    assert first == WindowLiteral(
        WindowSpec("time", 3), DIAMOND, Atom("a", (Variable("X"), Variable("Y")))
    )
    assert second == WindowLiteral(
        WindowSpec("tuple", 3), DIAMOND, Atom("b", (Variable("Y"), Variable("Z")))
    )
    assert program.extensional == {"a", "b"}
    assert program.intensional == {"q"}


def test_parse_at_head_rule_with_const():
    program = parse_program(
        "@[T] steam(V) :- [n t] @[T] temp(V), V >= 100.", consts={"n": 5}
    )
    (rule,) = program.rules
    assert rule.head == AtLiteral(Variable("T"), Atom("steam", (Variable("V"),)))
    window, comparison = rule.body
    assert window == WindowLiteral(
        WindowSpec("time", 5), AT, Atom("temp", (Variable("V"),)), time=Variable("T")
    )
    assert comparison == PlainLiteral(Atom(">=", (Variable("V"), 100)))


def test_unresolved_const_is_error():
    with pytest.raises(ParseError, match="unresolved constant"):
        parse_program("@[T] steam(V) :- [n t] @[T] temp(V), V >= 100.")


def test_tuple_window_requires_extensional():
    parse_program("a :- [1 #] <> b.")  # fine: b never occurs in a head
    with pytest.raises(ParseError, match="tuple window over intensional"):
        parse_program("a :- [1 #] <> b. b :- [2 t] <> c.")


def test_unsafe_rules_rejected():
    with pytest.raises(UnsafeRuleError):
        parse_program("q(X) :- [2 t] <> a(Y).")
    with pytest.raises(UnsafeRuleError):
        parse_program("q :- X < 3.")
    with pytest.raises(UnsafeRuleError):
        parse_program("q(X) :- a(X), not b(Y).")
    with pytest.raises(UnsafeRuleError):
        parse_program("@[T] q :- a(T).")  # head time var needs a body @-position


def test_builtin_only_body_rejected():
    with pytest.raises(UnsafeRuleError):
        parse_program("q :- 3 < 5.")


def test_negated_only_body_allowed():
    program = parse_program("freeze :- not alarm, not normal. alarm :- [2 t] <> hot.")
    freeze = program.rules[0]
    assert all(lit.negated for lit in freeze.body)
    assert freeze.stratum > program.rules[1].stratum


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_program("q(X) :- [3 z] <> a(X).")
    assert err.value.line == 1
    assert err.value.column is not None


# -- negation rewrite ---------------------------------------------------------


def test_rewrite_not_diamond_to_box():
    rule = Rule(
        PlainLiteral(Atom("q", (Variable("X"),))),
        (
            PlainLiteral(Atom("a", (Variable("X"),))),
            Negation(WindowLiteral(WindowSpec("time", 2), DIAMOND, Atom("p", (Variable("X"),)))),
        ),
    )
    rewritten = rewrite_negation(rule)
    assert rewritten.body[1] == WindowLiteral(
        WindowSpec("time", 2), BOX, Atom("p", (Variable("X"),)), negated=True
    )


def test_rewrite_not_box_to_diamond():
    rule = Rule(
        PlainLiteral(Atom("q", (Variable("X"),))),
        (
            PlainLiteral(Atom("a", (Variable("X"),))),
            Negation(WindowLiteral(WindowSpec("time", 2), BOX, Atom("p", (Variable("X"),)))),
        ),
    )
    rewritten = rewrite_negation(rule)
    assert rewritten.body[1] == WindowLiteral(
        WindowSpec("time", 2), DIAMOND, Atom("p", (Variable("X"),)), negated=True
    )


def test_rewrite_plain_negation_unchanged():
    rule = Rule(
        PlainLiteral(Atom("q",)),
        (PlainLiteral(Atom("a",)), PlainLiteral(Atom("p",), negated=True)),
    )
    assert rewrite_negation(rule) == rule


def test_rewrite_involutive_on_image():
    text = "q(X) :- a(X), not [2 t] <> p(X). p(X) :- [1 t] <> a(X)."
    program = parse_program(text)
    for rule in program.rules:
        assert rewrite_negation(rule) == rule


def test_rewrite_at_window_keeps_quantifier():
    program = parse_program("q(X) :- a(X), not [2 t] @[3] p(X). p(X) :- a(X).")
    lit = program.rules[0].body[1]
    assert lit == WindowLiteral(
        WindowSpec("time", 2), AT, Atom("p", (Variable("X"),)), negated=True, time=3
    )


def test_parse_surface_negation_forms_agree():
    outer = parse_program("q :- a, not [2 t] <> p. p :- a.")
    inner = parse_program("q :- a, [2 t] [] not p. p :- a.")
    assert outer.rules[0] == inner.rules[0]


# -- stratification -----------------------------------------------------------


def test_cooling_strata(cooling_program):
    strata = cooling_program.strata
    level = {p: i for i, s in enumerate(strata) for p in s}
    assert level["freeze"] > level["alarm"]
    assert level["freeze"] > level["normal"]
    assert level["alarm"] >= level["isSteam"]
    assert level["isSteam"] >= level["steam"]


def test_positive_program_single_stratum(join_program):
    assert len(join_program.strata) == 1


def test_negation_cycle_rejected():
    with pytest.raises(NegationCycleError):
        parse_program("a :- not b. b :- not a.")


def test_strata_respect_dependencies():
    program = parse_program(
        "p :- [1 t] <> e. q :- p, not r. r :- [2 t] <> e. s :- q, r."
    )
    level = {pred: i for i, s in enumerate(program.strata) for pred in s}
    assert level["q"] > level["r"]
    assert level["s"] >= level["q"]
    assert level["p"] >= 0


# -- streams ------------------------------------------------------------------


def test_parse_stream_fig1(fig1_stream):
    assert (fig1_stream.timeline.start, fig1_stream.timeline.end) == (35, 42)
    assert set(fig1_stream.atoms_at(38)) == {atom("a", "x2", "y"), atom("b", "y", "z")}
    assert fig1_stream.sequence_of(38, atom("b", "y", "z")) == 3


def test_parse_stream_empty_with_header():
    s = parse_stream("@timeline 0 0\n")
    assert (s.timeline.start, s.timeline.end) == (0, 0)
    assert s.atoms_at(0) == ()


def test_parse_stream_timeline_inferred():
    s = parse_stream("5 a(y)\n8 a(y)\n")
    assert (s.timeline.start, s.timeline.end) == (5, 8)
    assert set(s.atoms_at(5)) == {atom("a", "y")}
    assert set(s.atoms_at(8)) == {atom("a", "y")}


def test_parse_stream_errors():
    with pytest.raises(ParseError, match="decreases"):
        parse_stream("5 a(y)\n3 a(y)\n")
    with pytest.raises(ParseError, match="variable"):
        parse_stream("5 a(X)\n")
    with pytest.raises(ParseError):
        parse_stream("")
    with pytest.raises(ParseError):
        parse_stream("@timeline 3 1\n")
    with pytest.raises(ParseError):
        parse_stream("@timeline 0 4\n9 a(y)\n")


def test_parse_background():
    bg = parse_background("anchor(1) anchor(2)\nlabel(x,7)\n% comment\n")
    assert bg == frozenset({atom("anchor", 1), atom("anchor", 2), atom("label", "x", 7)})
    with pytest.raises(ParseError):
        parse_background("p(X)\n")


# -- round-trips ----------------------------------------------------------------


def test_program_pretty_print_round_trip(cooling_program):
    text = program_to_text(cooling_program)
    assert parse_program(text) == cooling_program


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_fuzz_program_round_trip(seed):
    from larstream.fuzz import random_instance

    instance = random_instance(seed)
    assert parse_program(program_to_text(instance.program)) == instance.program
    reparsed = parse_stream(instance.stream_text)
    assert reparsed == instance.stream
