"""Direct, non-incremental evaluation of program semantics.

This module is the correctness baseline: it recomputes everything from
scratch at every time point, straight from the entailment relation, and
shares no machinery with the incremental engine.

``holds`` implements the entailment cases one-to-one (atom, diamond, box,
at, window) by materializing window sub-streams; it is deliberately slow.
The fixpoint evaluator used by ``answer_stream`` evaluates the same
semantics but batches window lookups per literal, since enumerating the
full constant universe per rule is hopeless even at desk scale.
Candidate substitutions are drawn from the atoms that occur in the
relevant window (plus background data), which is complete: a quantified
atom can only hold through an atom that occurs there.

Evaluation at time t treats [start, t] as the visible timeline: data
beyond t is masked and at-heads dated after t are recorded only once
their time point is reached.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from larstream.model import (
    TIME,
    TUPLE,
    Atom,
    Stream,
    Term,
    Timeline,
    Variable,
    evaluate_comparison,
    is_ground_term,
    substitute_term,
    time_window,
    tuple_window,
)
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
)

_EMPTY: frozenset[Atom] = frozenset()


@dataclass(frozen=True)
class Structure:
    """An interpretation: data stream, derived intensional atoms, background."""

    data: Stream
    derived: Mapping[int, frozenset[Atom]] = field(default_factory=dict)
    background: frozenset[Atom] = frozenset()

    @property
    def timeline(self) -> Timeline:
        return self.data.timeline

    def atoms_at(self, t: int) -> frozenset[Atom]:
        return frozenset(self.data.atoms_at(t)) | self.derived.get(t, _EMPTY)


def holds(structure: Structure, t: int, literal: BodyLiteral) -> bool:
    """Entailment of a ground extended atom at time t.

    Windows are materialized as sub-streams on every call; inside a tuple
    window only the selected data atoms (and background) are visible.
    """
    timeline = structure.timeline
    if t not in timeline:
        raise ValueError(f"evaluation time {t} outside timeline {timeline}")

    if isinstance(literal, PlainLiteral):
        atom = literal.atom
        if not atom.is_ground():
            raise ValueError(f"holds requires a ground formula, got {literal}")
        if atom.is_comparison():
            result = evaluate_comparison(atom.predicate, atom.args[0], atom.args[1])
        else:
            result = atom in structure.atoms_at(t) or atom in structure.background
        return result != literal.negated

    if isinstance(literal, AtLiteral):
        u = literal.time
        if not isinstance(u, int):
            raise ValueError(f"holds requires a ground formula, got {literal}")
        if u not in timeline:
            return False
        return holds(structure, u, PlainLiteral(literal.atom, literal.negated))

    assert isinstance(literal, WindowLiteral)
    spec = literal.window
    if spec.kind == TIME:
        wdata = time_window(structure.data, t, spec.size)
        wderived = {
            u: atoms for u, atoms in structure.derived.items() if u in wdata.timeline
        }
    else:
        wdata = tuple_window(structure.data, t, spec.size)
        wderived = {}
    windowed = Structure(wdata, wderived, structure.background)
    inner = PlainLiteral(literal.atom, literal.negated)
    if literal.mode == DIAMOND:
        return any(holds(windowed, u, inner) for u in wdata.timeline)
    if literal.mode == BOX:
        return all(holds(windowed, u, inner) for u in wdata.timeline)
    u = literal.time
    if not isinstance(u, int):
        raise ValueError(f"holds requires a ground formula, got {literal}")
    if u not in wdata.timeline:
        return False
    return holds(windowed, u, inner)


# ---------------------------------------------------------------------------
# Fixpoint evaluation
# ---------------------------------------------------------------------------


def _unify(pattern: Atom, ground: Atom, sigma: dict[str, Term]) -> dict[str, Term] | None:
    if pattern.predicate != ground.predicate or len(pattern.args) != len(ground.args):
        return None
    out = sigma
    for p, g in zip(pattern.args, ground.args):
        if isinstance(p, Variable):
            bound = out.get(p.name)
            if bound is None:
                if out is sigma:
                    out = dict(sigma)
                out[p.name] = g
            elif bound != g:
                return None
        elif p != g:
            return None
    return out


class _Evaluation:
    """One answer-stream computation for a data stream viewed up to t_eval."""

    def __init__(
        self,
        program: Program,
        data: Stream,
        background: frozenset[Atom],
        t_eval: int,
        arrivals: Sequence[tuple[int, Atom, int]] | None = None,
        derived: Mapping[int, set[Atom]] | None = None,
    ):
        self.program = program
        self.data = data
        self.background = background
        self.t_eval = t_eval
        self.t_start = data.timeline.start
        self.derived: dict[int, set[Atom]] = (
            {u: set(atoms) for u, atoms in derived.items()} if derived else {}
        )
        self.arrivals = data.events() if arrivals is None else arrivals
        self._arrival_times = [a[0] for a in self.arrivals]
        self._data_at: dict[int, frozenset[Atom]] = {}
        self._tuple_snaps: dict[int, tuple[int, dict[int, frozenset[Atom]]]] = {}
        self._union_cache: dict[tuple[str, int], dict[str, set[Atom]]] = {}
        self.pass_sizes: list[int] = []
        self.derivations = 0

    # -- primitive lookups --------------------------------------------------

    def _data_atoms(self, u: int) -> frozenset[Atom]:
        if u < self.t_start or u > self.t_eval:
            return _EMPTY
        cached = self._data_at.get(u)
        if cached is None:
            cached = frozenset(self.data.atoms_at(u))
            self._data_at[u] = cached
        return cached

    def present(self, atom: Atom, u: int) -> bool:
        return (
            atom in self.background
            or atom in self._data_atoms(u)
            or atom in self.derived.get(u, _EMPTY)
        )

    def _pool_at(self, u: int) -> Iterable[Atom]:
        return list(self._data_atoms(u)) + list(self.derived.get(u, _EMPTY))

    def _time_range(self, size: int) -> range:
        return range(max(self.t_start, self.t_eval - size), self.t_eval + 1)

    def _tuple_snapshot(self, size: int) -> tuple[int, dict[int, frozenset[Atom]]]:
        """Timeline start and per-time atom sets of the tuple window at t_eval."""
        snap = self._tuple_snaps.get(size)
        if snap is not None:
            return snap
        idx = bisect_right(self._arrival_times, self.t_eval)
        kept = self.arrivals[:idx]
        if len(kept) > size:
            kept = kept[-size:]
            lo = kept[0][0]
        else:
            lo = self.t_start
        by_time: dict[int, set[Atom]] = {}
        for u, atom, _ in kept:
            by_time.setdefault(u, set()).add(atom)
        snap = (lo, {u: frozenset(s) for u, s in by_time.items()})
        self._tuple_snaps[size] = snap
        return snap

    def invalidate_unions(self) -> None:
        self._union_cache.clear()

    def _time_union(self, size: int) -> dict[str, set[Atom]]:
        """Atoms occurring anywhere in the time window at t_eval, by predicate;
        rebuilt per fixpoint pass (derived atoms land in windows too)."""
        key = (TIME, size)
        union = self._union_cache.get(key)
        if union is None:
            union = {}
            for u in self._time_range(size):
                for atom in self._data_atoms(u):
                    union.setdefault(atom.predicate, set()).add(atom)
                for atom in self.derived.get(u, _EMPTY):
                    union.setdefault(atom.predicate, set()).add(atom)
            self._union_cache[key] = union
        return union

    def _tuple_union(self, size: int) -> dict[str, set[Atom]]:
        key = (TUPLE, size)
        union = self._union_cache.get(key)
        if union is None:
            union = {}
            _, by_time = self._tuple_snapshot(size)
            for atoms in by_time.values():
                for atom in atoms:
                    union.setdefault(atom.predicate, set()).add(atom)
            self._union_cache[key] = union
        return union

    # -- candidate generation ------------------------------------------------

    def _extend(self, literal: BodyLiteral, sigma: dict[str, Term]) -> list[dict[str, Term]]:
        atom = literal.atom.substitute(sigma)
        out: list[dict[str, Term]] = []

        def match_pool(pool: Iterable[Atom]) -> None:
            for ga in pool:
                s = _unify(atom, ga, sigma)
                if s is not None:
                    out.append(s)

        def match_with_time(var: Variable, times: Iterable[int], pool_of) -> None:
            for u in times:
                for ga in pool_of(u):
                    s = _unify(atom, ga, sigma)
                    if s is not None:
                        s = dict(s)
                        s[var.name] = u
                        out.append(s)

        if isinstance(literal, PlainLiteral):
            match_pool(self._pool_at(self.t_eval))
            match_pool(self.background)
        elif isinstance(literal, AtLiteral):
            time = substitute_term(literal.time, sigma)
            times = range(self.t_start, self.t_eval + 1)
            if isinstance(time, Variable):
                match_with_time(time, times, self._pool_at)
                for u in times:
                    for ga in self.background:
                        s = _unify(atom, ga, sigma)
                        if s is not None:
                            s = dict(s)
                            s[time.name] = u
                            out.append(s)
            elif isinstance(time, int) and time in times:
                match_pool(self._pool_at(time))
                match_pool(self.background)
        elif literal.window.kind == TIME:
            rng = self._time_range(literal.window.size)
            if literal.mode == DIAMOND:
                match_pool(self._time_union(literal.window.size).get(atom.predicate, ()))
                match_pool(self.background)
            elif literal.mode == BOX:
                match_pool(self._pool_at(self.t_eval))
                match_pool(self.background)
            else:
                time = substitute_term(literal.time, sigma)
                if isinstance(time, Variable):
                    match_with_time(time, rng, self._pool_at)
                    for u in rng:
                        for ga in self.background:
                            s = _unify(atom, ga, sigma)
                            if s is not None:
                                s = dict(s)
                                s[time.name] = u
                                out.append(s)
                elif isinstance(time, int) and time in rng:
                    match_pool(self._pool_at(time))
                    match_pool(self.background)
        else:
            lo, by_time = self._tuple_snapshot(literal.window.size)
            times = range(lo, self.t_eval + 1)
            if literal.mode == DIAMOND:
                match_pool(self._tuple_union(literal.window.size).get(atom.predicate, ()))
                match_pool(self.background)
            elif literal.mode == BOX:
                match_pool(by_time.get(self.t_eval, _EMPTY))
                match_pool(self.background)
            else:
                time = substitute_term(literal.time, sigma)
                if isinstance(time, Variable):
                    match_with_time(time, times, lambda u: by_time.get(u, _EMPTY))
                    for u in times:
                        for ga in self.background:
                            s = _unify(atom, ga, sigma)
                            if s is not None:
                                s = dict(s)
                                s[time.name] = u
                                out.append(s)
                elif isinstance(time, int) and time in times:
                    match_pool(by_time.get(time, _EMPTY))
                    match_pool(self.background)
        return out

    # -- ground checks -------------------------------------------------------

    def check(self, literal: BodyLiteral, sigma: Mapping[str, Term]) -> bool:
        lit = literal.substitute(sigma)
        atom = lit.atom
        if not atom.is_ground():
            raise ValueError(f"unbound variables in {lit}")

        if isinstance(lit, PlainLiteral):
            if atom.is_comparison():
                result = evaluate_comparison(atom.predicate, atom.args[0], atom.args[1])
            else:
                result = self.present(atom, self.t_eval)
            return result != lit.negated

        if isinstance(lit, AtLiteral):
            u = lit.time
            if not isinstance(u, int) or not (self.t_start <= u <= self.t_eval):
                return False
            return self.present(atom, u) != lit.negated

        if lit.window.kind == TIME:
            rng = self._time_range(lit.window.size)
            if lit.mode == DIAMOND:
                if not lit.negated:
                    return (
                        atom in self._time_union(lit.window.size).get(atom.predicate, ())
                        or atom in self.background
                    )
                return any(not self.present(atom, u) for u in rng)
            if lit.mode == BOX:
                return all(self.present(atom, u) != lit.negated for u in rng)
            u = lit.time
            if not isinstance(u, int) or u not in rng:
                return False
            return self.present(atom, u) != lit.negated

        lo, by_time = self._tuple_snapshot(lit.window.size)
        rng = range(lo, self.t_eval + 1)

        def in_snap(u: int) -> bool:
            return atom in by_time.get(u, _EMPTY) or atom in self.background

        if lit.mode == DIAMOND:
            if not lit.negated:
                return (
                    atom in self._tuple_union(lit.window.size).get(atom.predicate, ())
                    or atom in self.background
                )
            return any(not in_snap(u) for u in rng)
        if lit.mode == BOX:
            return all(in_snap(u) != lit.negated for u in rng)
        u = lit.time
        if not isinstance(u, int) or u not in rng:
            return False
        return in_snap(u) != lit.negated

    # -- rules ---------------------------------------------------------------

    def rule_substitutions(self, rule: Rule) -> list[dict[str, Term]]:
        positives = [
            lit
            for lit in rule.body
            if not lit.negated and not lit.atom.is_comparison()
        ]
        sigmas: list[dict[str, Term]] = [{}]
        for lit in positives:
            extended: list[dict[str, Term]] = []
            for sigma in sigmas:
                extended.extend(self._extend(lit, sigma))
            seen: set[tuple] = set()
            sigmas = []
            for s in extended:
                key = tuple(sorted(s.items(), key=lambda kv: kv[0]))
                if key not in seen:
                    seen.add(key)
                    sigmas.append(s)
            if not sigmas:
                return []
        # Candidates from diamond/at/plain pools hold by construction (the
        # match pins the literal to an atom actually present); box pools are
        # only a heuristic, and negated/builtin literals never generate.
        to_verify = [
            lit
            for lit in rule.body
            if lit.negated
            or lit.atom.is_comparison()
            or (isinstance(lit, WindowLiteral) and lit.mode == BOX)
        ]
        if not to_verify:
            return sigmas
        return [s for s in sigmas if all(self.check(lit, s) for lit in to_verify)]

    def head_target(self, rule: Rule, sigma: Mapping[str, Term]) -> tuple[Atom, int] | None:
        atom = rule.head.atom.substitute(sigma)
        if isinstance(rule.head, AtLiteral):
            u = substitute_term(rule.head.time, sigma)
            if not isinstance(u, int) or not (self.t_start <= u <= self.t_eval):
                return None
            return atom, u
        return atom, self.t_eval

    def head_holds(self, rule: Rule, sigma: Mapping[str, Term]) -> bool:
        target = self.head_target(rule, sigma)
        if target is None:
            # At-head dated outside the visible timeline: deferred, not owed.
            return True
        atom, u = target
        return self.present(atom, u)

    def run(self) -> dict[int, set[Atom]]:
        by_stratum: dict[int, list[Rule]] = {}
        for rule in self.program.rules:
            by_stratum.setdefault(rule.stratum, []).append(rule)
        for stratum in sorted(by_stratum):
            while True:
                changed = False
                self.invalidate_unions()
                for rule in by_stratum[stratum]:
                    for sigma in self.rule_substitutions(rule):
                        self.derivations += 1
                        target = self.head_target(rule, sigma)
                        if target is None:
                            continue
                        atom, u = target
                        if atom in self.background:
                            continue  # already satisfied; a minimal model adds nothing
                        bucket = self.derived.setdefault(u, set())
                        if atom not in bucket:
                            bucket.add(atom)
                            changed = True
                self.pass_sizes.append(sum(len(v) for v in self.derived.values()))
                if not changed:
                    break
        return self.derived


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def _validate_data_stream(program: Program, data: Stream) -> None:
    clash = data.predicates() & program.intensional
    if clash:
        raise ValueError(
            "data stream contains intensional predicates: " + ", ".join(sorted(clash))
        )


def answer_stream(
    program: Program,
    data: Stream,
    background: frozenset[Atom] = frozenset(),
    t: int | None = None,
) -> Stream:
    """The unique answer stream of a stratified program at time t.

    Returns the data stream extended with every derived (atom, time) pair;
    the result's timeline is the data timeline.
    """
    if t is None:
        t = data.timeline.end
    if t not in data.timeline:
        raise ValueError(f"evaluation time {t} outside timeline {data.timeline}")
    _validate_data_stream(program, data)
    evaluation = _Evaluation(program, data, background, t)
    derived = evaluation.run()
    events: list[tuple[int, Atom]] = []
    for u in data.timeline:
        for atom in data.atoms_at(u):
            events.append((u, atom))
        for atom in sorted(derived.get(u, ()), key=str):
            events.append((u, atom))
    return Stream(data.timeline, events)


def output(
    program: Program,
    data: Stream,
    background: frozenset[Atom] = frozenset(),
    t: int | None = None,
) -> frozenset[Atom]:
    """Intensional atoms holding at t in the answer stream at t."""
    if t is None:
        t = data.timeline.end
    if t not in data.timeline:
        raise ValueError(f"evaluation time {t} outside timeline {data.timeline}")
    _validate_data_stream(program, data)
    evaluation = _Evaluation(program, data, background, t)
    derived = evaluation.run()
    return frozenset(derived.get(t, ()))


def iter_outputs(
    program: Program,
    data: Stream,
    background: frozenset[Atom] = frozenset(),
    stats: dict | None = None,
):
    """Yield (t, output atoms) for every time point, each recomputed from
    scratch over the prefix ending there.  With ``stats``, accumulates the
    number of rule derivations under the key ``"derivations"``."""
    _validate_data_stream(program, data)
    arrivals = data.events()
    for t in data.timeline:
        evaluation = _Evaluation(program, data, background, t, arrivals)
        derived = evaluation.run()
        if stats is not None:
            stats["derivations"] = stats.get("derivations", 0) + evaluation.derivations
        yield t, frozenset(derived.get(t, ()))


def output_stream_naive(
    program: Program,
    data: Stream,
    background: frozenset[Atom] = frozenset(),
) -> Stream:
    """Output at every time point; the naive baseline timed by benchmarks."""
    events: list[tuple[int, Atom]] = []
    for t, atoms in iter_outputs(program, data, background):
        for atom in sorted(atoms, key=str):
            events.append((t, atom))
    return Stream(data.timeline, events)


def model_violations(
    program: Program,
    data: Stream,
    background: frozenset[Atom],
    t: int,
    derived: Mapping[int, set[Atom]],
    reduct_from: Mapping[int, set[Atom]] | None = None,
) -> list[tuple[Rule, dict[str, Term]]]:
    """Ground rule instances whose body holds but whose head does not, in
    the interpretation given by ``derived`` (no fixpoint is run).

    With ``reduct_from``, only instances whose body also holds in that
    interpretation are considered; this checks modelhood of the reduct.
    """
    evaluation = _Evaluation(program, data, background, t, derived=derived)
    reduct_eval = (
        _Evaluation(program, data, background, t, derived=reduct_from)
        if reduct_from is not None
        else None
    )
    violations = []
    for rule in program.rules:
        for sigma in evaluation.rule_substitutions(rule):
            if reduct_eval is not None and not all(
                reduct_eval.check(lit, sigma) for lit in rule.body
            ):
                continue
            if not evaluation.head_holds(rule, sigma):
                violations.append((rule, sigma))
    return violations
