"""Core value types: terms, atoms, streams, and sliding window functions.

A stream assigns sets of ground atoms to the time points of a closed
integer timeline.  Within a time point atoms are kept in arrival order
and every (atom, time) pair carries a global arrival sequence number,
which makes the tuple-based window deterministic: when a window boundary
cuts through a time point, the latest-arriving atoms win.

Everything in this module is immutable after construction; the window
functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

#: Builtin comparison predicates, evaluated over integers.
COMPARISON_PREDICATES = frozenset({"<", "<=", ">", ">=", "=", "!="})

TIME = "time"
TUPLE = "tuple"


@dataclass(frozen=True, slots=True)
class Variable:
    """A logic variable; by convention names start with an upper-case letter."""

    name: str

    def __repr__(self) -> str:
        return self.name


#: A term is an integer constant, a symbolic constant, or a variable.
Term = Union[int, str, Variable]

#: A substitution maps variable names to terms (ground terms once complete).
Substitution = Mapping[str, Term]


def is_ground_term(term: Term) -> bool:
    return not isinstance(term, Variable)


def term_str(term: Term) -> str:
    return str(term)


def substitute_term(term: Term, subst: Substitution) -> Term:
    if isinstance(term, Variable):
        return subst.get(term.name, term)
    return term


@dataclass(frozen=True, slots=True)
class Atom:
    """A predicate applied to a tuple of terms.

    Comparison predicates (``<``, ``<=``, ...) are builtin; whether a
    regular predicate is extensional or intensional is a property of the
    program it occurs in, not of the atom itself.
    """

    predicate: str
    args: tuple[Term, ...] = ()

    def is_ground(self) -> bool:
        return all(is_ground_term(t) for t in self.args)

    def is_comparison(self) -> bool:
        return self.predicate in COMPARISON_PREDICATES

    def variables(self) -> Iterator[Variable]:
        for term in self.args:
            if isinstance(term, Variable):
                yield term

    def substitute(self, subst: Substitution) -> "Atom":
        if not self.args:
            return self
        return Atom(self.predicate, tuple(substitute_term(t, subst) for t in self.args))

    def __str__(self) -> str:
        if self.is_comparison():
            return f"{term_str(self.args[0])} {self.predicate} {term_str(self.args[1])}"
        if not self.args:
            return self.predicate
        return f"{self.predicate}({','.join(term_str(t) for t in self.args)})"


def apply_substitution(obj, subst: Substitution):
    """Apply a substitution to any formula-like object with a substitute method."""
    return obj.substitute(subst)


def evaluate_comparison(op: str, left: Term, right: Term) -> bool:
    """Evaluate a builtin comparison; only defined on integers."""
    if not isinstance(left, int) or not isinstance(right, int):
        raise BuiltinTypeError(
            f"comparison {op} requires integer operands, got {left!r} and {right!r}"
        )
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    raise ValueError(f"unknown comparison operator {op!r}")


class BuiltinTypeError(TypeError):
    """A comparison builtin was applied to non-integer constants."""


@dataclass(frozen=True, slots=True)
class Timeline:
    """A closed integer interval of time points."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"empty timeline [{self.start},{self.end}]")
        if self.start < 0:
            raise ValueError("time points are natural numbers")

    def __contains__(self, t: object) -> bool:
        return isinstance(t, int) and self.start <= t <= self.end

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.start, self.end + 1))

    def __len__(self) -> int:
        return self.end - self.start + 1

    def __str__(self) -> str:
        return f"[{self.start},{self.end}]"


@dataclass(frozen=True, slots=True)
class WindowSpec:
    """Size and kind of a sliding window; time windows allow size 0, tuple
    windows must select at least one atom."""

    kind: str
    size: int

    def __post_init__(self) -> None:
        if self.kind not in (TIME, TUPLE):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.size < 0:
            raise ValueError("window size must be non-negative")
        if self.kind == TUPLE and self.size < 1:
            raise ValueError("tuple windows require size >= 1")

    def __str__(self) -> str:
        unit = "t" if self.kind == TIME else "#"
        return f"[{self.size} {unit}]"


class Stream:
    """A timeline plus an evaluation mapping time points to ground atoms.

    Atoms at a time point are deduplicated; re-adding an identical atom
    at the same time point is a no-op.  Arrival sequence numbers are
    1-based and strictly increase with (time, within-time position).
    """

    __slots__ = ("timeline", "_by_time", "_seq")

    def __init__(self, timeline: Timeline, events: Iterable[tuple[int, Atom]] = ()):
        by_time: dict[int, list[Atom]] = {}
        seq: dict[tuple[int, Atom], int] = {}
        last_t: int | None = None
        counter = 0
        for t, atom in events:
            if t not in timeline:
                raise ValueError(f"time point {t} outside timeline {timeline}")
            if last_t is not None and t < last_t:
                raise ValueError(f"arrival order violates time order at t={t}")
            if not atom.is_ground():
                raise ValueError(f"stream atom {atom} is not ground")
            if atom.is_comparison():
                raise ValueError(f"comparison atom {atom} cannot occur in a stream")
            last_t = t
            if (t, atom) in seq:
                continue
            counter += 1
            seq[(t, atom)] = counter
            by_time.setdefault(t, []).append(atom)
        self.timeline = timeline
        self._by_time = {t: tuple(atoms) for t, atoms in by_time.items()}
        self._seq = seq

    @classmethod
    def _from_parts(
        cls,
        timeline: Timeline,
        by_time: dict[int, tuple[Atom, ...]],
        seq: dict[tuple[int, Atom], int],
    ) -> "Stream":
        stream = cls.__new__(cls)
        stream.timeline = timeline
        stream._by_time = by_time
        stream._seq = seq
        return stream

    def atoms_at(self, t: int) -> tuple[Atom, ...]:
        return self._by_time.get(t, ())

    def events(self) -> list[tuple[int, Atom, int]]:
        """All (time, atom, sequence) triples in arrival order."""
        triples = [(t, atom, k) for (t, atom), k in self._seq.items()]
        triples.sort(key=lambda e: e[2])
        return triples

    def sequence_of(self, t: int, atom: Atom) -> int:
        return self._seq[(t, atom)]

    def active_times(self) -> list[int]:
        return sorted(self._by_time)

    def restrict(self, timeline: Timeline) -> "Stream":
        """Pointwise restriction to a sub-timeline, preserving sequence numbers."""
        by_time = {
            t: atoms for t, atoms in self._by_time.items() if t in timeline
        }
        seq = {(t, a): k for (t, a), k in self._seq.items() if t in timeline}
        return Stream._from_parts(timeline, by_time, seq)

    def prefix(self, t: int) -> "Stream":
        if t not in self.timeline:
            raise ValueError(f"time point {t} outside timeline {self.timeline}")
        return self.restrict(Timeline(self.timeline.start, t))

    def constants(self) -> set[Term]:
        found: set[Term] = set()
        for atoms in self._by_time.values():
            for atom in atoms:
                found.update(atom.args)
        return found

    def predicates(self) -> set[str]:
        return {a.predicate for atoms in self._by_time.values() for a in atoms}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Stream):
            return NotImplemented
        if self.timeline != other.timeline:
            return False
        times = set(self._by_time) | set(other._by_time)
        return all(
            frozenset(self.atoms_at(t)) == frozenset(other.atoms_at(t)) for t in times
        )

    def __repr__(self) -> str:
        parts = ", ".join(
            f"{t}: {{{', '.join(map(str, self.atoms_at(t)))}}}"
            for t in self.active_times()
        )
        return f"Stream({self.timeline}, {{{parts}}})"


def tuple_size(stream: Stream) -> int:
    """Number of (atom, time) pairs in the stream."""
    return len(stream._seq)


def time_window(stream: Stream, t: int, n: int) -> Stream:
    """Sliding time-based window: the sub-stream on [max(start, t-n), t]."""
    if n < 0:
        raise ValueError("time window size must be non-negative")
    if t not in stream.timeline:
        raise ValueError(f"time point {t} outside timeline {stream.timeline}")
    start = max(stream.timeline.start, t - n)
    return stream.restrict(Timeline(start, t))


def tuple_window(stream: Stream, t: int, n: int) -> Stream:
    """Sliding tuple-based window: the last n atoms before or at t.

    When the window boundary falls inside a time point, the later-arriving
    atoms at that point are kept, which resolves the choice left open by
    the set-per-time-point model deterministically.
    """
    if n < 1:
        raise ValueError("tuple window size must be at least 1")
    if t not in stream.timeline:
        raise ValueError(f"time point {t} outside timeline {stream.timeline}")
    prefix = stream.prefix(t)
    arrivals = prefix.events()
    if len(arrivals) <= n:
        return prefix
    kept = arrivals[-n:]
    boundary = kept[0][0]
    timeline = Timeline(boundary, t)
    by_time: dict[int, tuple[Atom, ...]] = {}
    seq: dict[tuple[int, Atom], int] = {}
    for u, atom, k in kept:
        by_time.setdefault(u, ())
        by_time[u] = by_time[u] + (atom,)
        seq[(u, atom)] = k
    return Stream._from_parts(timeline, by_time, seq)
