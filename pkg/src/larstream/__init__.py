"""Incremental stream reasoning for plain LARS programs.

The package evaluates rule programs with sliding time- and tuple-based
windows over timestamped atom streams.  Two evaluators are provided: an
annotation-based incremental engine and a brute-force semantic oracle
that recomputes every tick from scratch; they are required to agree on
every stratified program.
"""

from larstream.model import (
    Atom,
    Stream,
    Timeline,
    Variable,
    WindowSpec,
    time_window,
    tuple_size,
    tuple_window,
)
from larstream.parser import (
    ParseError,
    Program,
    Rule,
    parse_background,
    parse_program,
    parse_stream,
)
from larstream.oracle import answer_stream, output, output_stream_naive
from larstream.engine import Engine, eval_program

__all__ = [
    "Atom",
    "Stream",
    "Timeline",
    "Variable",
    "WindowSpec",
    "time_window",
    "tuple_window",
    "tuple_size",
    "ParseError",
    "Program",
    "Rule",
    "parse_program",
    "parse_stream",
    "parse_background",
    "answer_stream",
    "output",
    "output_stream_naive",
    "Engine",
    "eval_program",
]
