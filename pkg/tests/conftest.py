import pytest

from larstream.model import Atom, Stream, Timeline
from larstream.parser import parse_program, parse_stream

FIG1_STREAM_TEXT = """\
@timeline 35 42
36 a(x1,y)
38 a(x2,y) b(y,z)
40 a(x3,y)
"""

JOIN_PROGRAM_TEXT = "q(X,Y,Z) :- [3 t] <> a(X,Y), [3 #] <> b(Y,Z).\n"

COOLING_PROGRAM_TEXT = """\
@[T] steam(V) :- [n t] @[T] temp(V), V >= 100.
@[T] liquid(V) :- [n t] @[T] temp(V), V >= 1, V < 100.
@[T] isSteam :- [n t] @[T] steam(V).
@[T] isLiquid :- [n t] @[T] liquid(V).
alarm :- [n t] [] isSteam.
normal :- [n t] [] isLiquid.
freeze :- not alarm, not normal.
veryHot(T) :- [n t] @[T] steam(V), V >= 150.
veryCold(T) :- [n t] @[T] liquid(V), V = 1.
"""


@pytest.fixture
def fig1_stream() -> Stream:
    return parse_stream(FIG1_STREAM_TEXT)


@pytest.fixture
def join_program():
    return parse_program(JOIN_PROGRAM_TEXT)


@pytest.fixture
def cooling_program():
    return parse_program(COOLING_PROGRAM_TEXT, consts={"n": 5})


def atom(pred: str, *args) -> Atom:
    return Atom(pred, tuple(args))
