"""Seeded random instances (program + stream + background) for the
engine-versus-oracle equivalence harness.

Programs are stratified by construction: each intensional predicate gets
a level, positive body literals reference equal or lower levels, negated
ones strictly lower (or extensional data).  Constants are small integers
so comparison builtins are always well-typed.  Tuple windows are placed
over extensional predicates only and safety is guaranteed by drawing
head, negated, and builtin variables from positively bound ones.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from larstream.model import TIME, TUPLE, Atom, Stream, Term, Timeline, Variable, WindowSpec
from larstream.parser import (
    AT,
    BOX,
    DIAMOND,
    AtLiteral,
    BodyLiteral,
    PlainLiteral,
    Program,
    Rule,
    WindowLiteral,
    parse_program,
    parse_stream,
    program_to_text,
)

_VAR_POOL = ("X", "Y", "Z", "W")
_TIME_VARS = ("T", "U")
_COMPARISONS = ("<", "<=", ">", ">=", "=", "!=")


@dataclass(frozen=True)
class FuzzInstance:
    seed: int
    program: Program
    program_text: str
    stream: Stream
    stream_text: str
    background: frozenset[Atom]


def _random_args(rng: random.Random, arity: int, bound: list[str], constants) -> tuple[Term, ...]:
    args: list[Term] = []
    for _ in range(arity):
        roll = rng.random()
        if roll < 0.45:
            name = rng.choice(_VAR_POOL)
            args.append(Variable(name))
        elif roll < 0.6 and bound:
            args.append(Variable(rng.choice(bound)))
        else:
            args.append(rng.choice(constants))
    return tuple(args)


def _ground_args(rng: random.Random, arity: int, constants) -> tuple[Term, ...]:
    return tuple(rng.choice(constants) for _ in range(arity))


def _bound_vars(literals: list[BodyLiteral]) -> tuple[list[str], list[str]]:
    bound: list[str] = []
    at_bound: list[str] = []
    for lit in literals:
        for var in lit.atom.variables():
            if var.name not in bound:
                bound.append(var.name)
        time = getattr(lit, "time", None)
        if isinstance(time, Variable):
            if time.name not in bound:
                bound.append(time.name)
            if time.name not in at_bound:
                at_bound.append(time.name)
    return bound, at_bound


def random_instance(seed: int) -> FuzzInstance:
    rng = random.Random(seed)
    constants = list(range(1, rng.randint(2, 5)))
    ext_preds = [("a", rng.randint(0, 2)), ("b", rng.randint(1, 2))]
    int_preds = [
        (name, rng.randint(0, 2), level)
        for level, name in enumerate(rng.sample(["p", "q", "r"], rng.randint(1, 3)))
    ]

    horizon = rng.randint(0, 11)
    timeline = Timeline(0, horizon)

    rules = []
    for _ in range(rng.randint(1, 4)):
        head_pred, head_arity, head_level = rng.choice(int_preds)
        body: list[BodyLiteral] = []
        for _ in range(rng.randint(1, 2)):
            body.append(_random_positive(rng, ext_preds, int_preds, head_level, constants, body))
        bound, at_bound = _bound_vars(body)
        extras = rng.randint(0, 3 - len(body)) if len(body) < 3 else 0
        for _ in range(extras):
            lit = _random_check(rng, ext_preds, int_preds, head_level, constants, bound, timeline)
            if lit is not None:
                body.append(lit)
        head = _random_head(rng, head_pred, head_arity, bound, at_bound, constants, timeline)
        rules.append(Rule(head, tuple(body)))

    text_lines = [str(rule) for rule in rules]
    program_text = "\n".join(text_lines) + "\n"
    program = parse_program(program_text)

    stream_text, stream = _random_stream(rng, timeline, ext_preds, constants)
    background = _random_background(rng, ext_preds, int_preds, constants, program)
    return FuzzInstance(seed, program, program_text, stream, stream_text, background)


def _random_positive(rng, ext_preds, int_preds, head_level, constants, existing) -> BodyLiteral:
    bound, _ = _bound_vars(existing)
    same_level = [(n, a) for (n, a, lv) in int_preds if lv <= head_level]
    use_intensional = same_level and rng.random() < 0.35
    if use_intensional:
        pred, arity = rng.choice(same_level)
    else:
        pred, arity = rng.choice(ext_preds)
    atom = Atom(pred, _random_args(rng, arity, bound, constants))
    shape = rng.random()
    if shape < 0.2:
        return PlainLiteral(atom)
    if shape < 0.35:
        return AtLiteral(_time_term(rng, bound), atom)
    window_kind = TUPLE if (not use_intensional and rng.random() < 0.3) else TIME
    size = rng.randint(1, 4) if window_kind == TUPLE else rng.randint(0, 4)
    mode = rng.choice((DIAMOND, DIAMOND, BOX, AT))
    if mode == AT:
        return WindowLiteral(WindowSpec(window_kind, size), AT, atom, time=_time_term(rng, bound))
    return WindowLiteral(WindowSpec(window_kind, size), mode, atom)


def _time_term(rng, bound) -> Term:
    roll = rng.random()
    if roll < 0.6:
        return Variable(rng.choice(_TIME_VARS))
    if roll < 0.7 and bound:
        return Variable(rng.choice(bound))
    return rng.randint(0, 13)


def _random_check(rng, ext_preds, int_preds, head_level, constants, bound, timeline) -> BodyLiteral | None:
    if rng.random() < 0.4:
        if len(bound) == 0:
            left: Term = rng.choice(constants)
        else:
            left = Variable(rng.choice(bound))
        right = rng.choice(constants)
        return PlainLiteral(Atom(rng.choice(_COMPARISONS), (left, right)))
    lower = [(n, a) for (n, a, lv) in int_preds if lv < head_level]
    pool = list(ext_preds) + lower
    pred, arity = rng.choice(pool)
    args = tuple(
        Variable(rng.choice(bound)) if (bound and rng.random() < 0.5) else rng.choice(constants)
        for _ in range(arity)
    )
    atom = Atom(pred, args)
    shape = rng.random()
    bound_time: Term = (
        Variable(rng.choice(bound)) if (bound and rng.random() < 0.3) else rng.randint(0, 13)
    )
    is_ext = pred in {n for n, _ in ext_preds}
    if shape < 0.35:
        return PlainLiteral(atom, negated=True)
    if shape < 0.5:
        return AtLiteral(bound_time, atom, negated=True)
    window_kind = TUPLE if (is_ext and rng.random() < 0.3) else TIME
    size = rng.randint(1, 4) if window_kind == TUPLE else rng.randint(0, 4)
    mode = rng.choice((DIAMOND, BOX, AT))
    if mode == AT:
        return WindowLiteral(
            WindowSpec(window_kind, size), AT, atom, negated=True, time=bound_time
        )
    return WindowLiteral(WindowSpec(window_kind, size), mode, atom, negated=True)


def _random_head(rng, pred, arity, bound, at_bound, constants, timeline):
    args = tuple(
        Variable(rng.choice(bound)) if (bound and rng.random() < 0.6) else rng.choice(constants)
        for _ in range(arity)
    )
    atom = Atom(pred, args)
    if rng.random() < 0.3:
        if at_bound and rng.random() < 0.7:
            return AtLiteral(Variable(rng.choice(at_bound)), atom)
        return AtLiteral(rng.randint(0, timeline.end + 2), atom)
    return PlainLiteral(atom)


def _random_stream(rng, timeline, ext_preds, constants):
    n_atoms = rng.randint(0, 20)
    events: list[tuple[int, Atom]] = []
    for _ in range(n_atoms):
        t = rng.randint(timeline.start, timeline.end)
        pred, arity = rng.choice(ext_preds)
        events.append((t, Atom(pred, _ground_args(rng, arity, constants))))
    events.sort(key=lambda e: e[0])
    lines = [f"@timeline {timeline.start} {timeline.end}"]
    for t, atom in events:
        lines.append(f"{t} {atom}")
    text = "\n".join(lines) + "\n"
    return text, parse_stream(text)


def _random_background(rng, ext_preds, int_preds, constants, program) -> frozenset[Atom]:
    if rng.random() > 0.3:
        return frozenset()
    atoms = set()
    pool = list(ext_preds) + [(n, a) for (n, a, _) in int_preds]
    for _ in range(rng.randint(1, 3)):
        pred, arity = rng.choice(pool)
        atoms.add(Atom(pred, _ground_args(rng, arity, constants)))
    return frozenset(atoms)


def check_instance(instance: FuzzInstance) -> tuple[int, frozenset, frozenset] | None:
    """Run both evaluators; returns the first divergent tick as
    (tick, incremental atoms, oracle atoms), or None when equal."""
    from larstream.engine import eval_program
    from larstream.oracle import output_stream_naive

    expected = output_stream_naive(instance.program, instance.stream, instance.background)
    actual = eval_program(instance.program, instance.stream, instance.background)
    for t in instance.stream.timeline:
        got = frozenset(actual.atoms_at(t))
        want = frozenset(expected.atoms_at(t))
        if got != want:
            return t, got, want
    return None
