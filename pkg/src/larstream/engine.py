"""Incremental evaluation with annotated ground formulae.

Every grounding of a body literal is annotated with a validity interval
``[c, h]`` from a consideration time to a horizon time, plus an optional
count interval ``[c#, h#]`` over arrival sequence numbers for tuple
windows.  The annotation asserts that the grounding holds at every
evaluation time (and arrival count) inside the intervals, so work done at
one tick is reused for free at later ticks until the horizon passes.

Derivations are organized around three kinds of stored facts:

* data facts: input atoms, pinned to their arrival time forever;
* at facts: derived ``@[u] a`` heads, pinning ``a`` to time point ``u``
  for the validity interval of the derivation;
* diagonal facts: derived plain heads, meaning the atom holds "now" at
  every evaluation time in the interval.  A diagonal fact says nothing
  about past time points at later ticks, which is what makes windows over
  derived atoms expire exactly when re-derivation support is gone.

New facts are translated eagerly into per-literal grounding stores; box
quantifiers, tuple-window box/at forms, and at-forms over diagonal facts
are re-derived each tick because they carry no future guarantee.  Rules
fire per the weak semi-naive condition: at least one body annotation must
have consideration time equal to the current tick.  A firing is kept only
when the intersected body annotation contains the current tick and
arrival count, which keeps vacuous intervals out of the database.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
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
    substitute_term,
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

INF = float("inf")


class EvaluationError(RuntimeError):
    """A runtime contract violation: tick regression, intensional input, ..."""


@dataclass(frozen=True, slots=True)
class Annotation:
    """Validity interval: time dimension [c, h], count dimension [cc, hc]."""

    c: int
    h: int | float
    cc: int = 0
    hc: int | float = INF

    def covers(self, t: int, k: int) -> bool:
        return self.c <= t <= self.h and self.cc <= k <= self.hc

    def intersect(self, other: "Annotation") -> "Annotation":
        return Annotation(
            max(self.c, other.c),
            min(self.h, other.h),
            max(self.cc, other.cc),
            min(self.hc, other.hc),
        )

    def is_empty(self) -> bool:
        return self.c > self.h or self.cc > self.hc

    def __str__(self) -> str:
        def fmt(x):
            return "inf" if x == INF else str(x)

        s = f"[{self.c},{fmt(self.h)}]"
        if self.cc > 0 or self.hc != INF:
            s += f"[{self.cc}#,{fmt(self.hc)}#]"
        return s


@dataclass(frozen=True)
class AnnotatedFormula:
    """A ground body literal, the substitution that produced it, and its
    annotation; the unit returned by grounding."""

    literal: BodyLiteral
    subst: tuple[tuple[str, Term], ...]
    annotation: Annotation

    def __str__(self) -> str:
        return f"{self.literal}_{self.annotation}"


@dataclass(frozen=True)
class Telemetry:
    firings: int
    grd_calls: int
    expirations: int
    db_size: int


# ---------------------------------------------------------------------------
# Stores
# ---------------------------------------------------------------------------

# Grounding entries are (sigma, c, h, cc, hc) where sigma is a tuple of
# ground terms positional over the literal's variable names.
_Entry = tuple[tuple, int, int | float, int, int | float]


class _GroundingStore:
    __slots__ = ("var_names", "entries", "by_c", "by_var", "heap_h", "heap_hc", "_seq")

    def __init__(self, var_names: tuple[str, ...]):
        self.var_names = var_names
        self.entries: set[_Entry] = set()
        self.by_c: dict[int, set[_Entry]] = {}
        self.by_var: dict[str, dict[Term, set[_Entry]]] = {v: {} for v in var_names}
        self.heap_h: list[tuple[int, int, _Entry]] = []
        self.heap_hc: list[tuple[int, int, _Entry]] = []
        self._seq = 0

    def add(self, entry: _Entry) -> bool:
        if entry in self.entries:
            return False
        self.entries.add(entry)
        sigma, c, h, cc, hc = entry
        self.by_c.setdefault(c, set()).add(entry)
        for name, value in zip(self.var_names, sigma):
            self.by_var[name].setdefault(value, set()).add(entry)
        self._seq += 1
        if h != INF:
            heapq.heappush(self.heap_h, (h, self._seq, entry))
        if hc != INF:
            heapq.heappush(self.heap_hc, (hc, self._seq, entry))
        return True

    def _discard(self, entry: _Entry) -> None:
        self.entries.discard(entry)
        sigma, c, h, cc, hc = entry
        bucket = self.by_c.get(c)
        if bucket is not None:
            bucket.discard(entry)
            if not bucket:
                del self.by_c[c]
        for name, value in zip(self.var_names, sigma):
            vb = self.by_var[name].get(value)
            if vb is not None:
                vb.discard(entry)
                if not vb:
                    del self.by_var[name][value]

    def expire(self, now: int, count: int) -> int:
        removed = 0
        while self.heap_h and self.heap_h[0][0] < now:
            _, _, entry = heapq.heappop(self.heap_h)
            if entry in self.entries:
                self._discard(entry)
                removed += 1
        while self.heap_hc and self.heap_hc[0][0] < count:
            _, _, entry = heapq.heappop(self.heap_hc)
            if entry in self.entries:
                self._discard(entry)
                removed += 1
        return removed

    def fresh(self, t: int) -> Iterable[_Entry]:
        return self.by_c.get(t, ())

    def lookup(self, var: str, value: Term) -> Iterable[_Entry]:
        return self.by_var[var].get(value, ())


# Fact entries.
_DiagFact = tuple[str, tuple, int, int | float, int, int | float]
_AtFact = tuple[str, tuple, int, int, int | float, int, int | float]


class _FactDB:
    """Data, diagonal, and at facts with expiry and pinned-membership indexes."""

    __slots__ = (
        "data_by_pred",
        "data_at_time",
        "data_set",
        "arrivals",
        "diag_by_pred",
        "diag_by_atom",
        "at_by_pred",
        "at_by_atom_time",
        "at_by_due",
        "heap_h",
        "heap_hc",
        "bg_by_pred",
        "bg_set",
        "_seq",
    )

    def __init__(self, background: Iterable[Atom]):
        self.data_by_pred: dict[str, list[tuple[tuple, int, int]]] = {}
        self.data_at_time: dict[tuple[str, int], list[tuple]] = {}
        self.data_set: set[tuple[str, tuple, int]] = set()
        self.arrivals: list[tuple[int, str, tuple, int]] = []
        self.diag_by_pred: dict[str, set[_DiagFact]] = {}
        self.diag_by_atom: dict[tuple[str, tuple], set[_DiagFact]] = {}
        self.at_by_pred: dict[str, set[_AtFact]] = {}
        self.at_by_atom_time: dict[tuple[str, tuple, int], set[_AtFact]] = {}
        self.at_by_due: dict[int, set[_AtFact]] = {}
        self.heap_h: list[tuple[int, int, int, _DiagFact | _AtFact]] = []
        self.heap_hc: list[tuple[int, int, int, _DiagFact | _AtFact]] = []
        self.bg_by_pred: dict[str, list[tuple]] = {}
        self.bg_set: set[tuple[str, tuple]] = set()
        self._seq = 0
        for atom in background:
            self.bg_by_pred.setdefault(atom.predicate, []).append(atom.args)
            self.bg_set.add((atom.predicate, atom.args))

    def add_data(self, atom: Atom, t: int, k: int) -> None:
        key = (atom.predicate, atom.args, t)
        self.data_set.add(key)
        self.data_by_pred.setdefault(atom.predicate, []).append((atom.args, t, k))
        self.data_at_time.setdefault((atom.predicate, t), []).append(atom.args)
        self.arrivals.append((t, atom.predicate, atom.args, k))

    def add_diag(self, fact: _DiagFact) -> bool:
        pred, args = fact[0], fact[1]
        bucket = self.diag_by_pred.setdefault(pred, set())
        if fact in bucket:
            return False
        bucket.add(fact)
        self.diag_by_atom.setdefault((pred, args), set()).add(fact)
        self._seq += 1
        if fact[3] != INF:
            heapq.heappush(self.heap_h, (fact[3], 0, self._seq, fact))
        if fact[5] != INF:
            heapq.heappush(self.heap_hc, (fact[5], 0, self._seq, fact))
        return True

    def add_at(self, fact: _AtFact) -> bool:
        pred, args, u = fact[0], fact[1], fact[2]
        bucket = self.at_by_pred.setdefault(pred, set())
        if fact in bucket:
            return False
        bucket.add(fact)
        self.at_by_atom_time.setdefault((pred, args, u), set()).add(fact)
        self.at_by_due.setdefault(u, set()).add(fact)
        self._seq += 1
        if fact[4] != INF:
            heapq.heappush(self.heap_h, (fact[4], 1, self._seq, fact))
        if fact[6] != INF:
            heapq.heappush(self.heap_hc, (fact[6], 1, self._seq, fact))
        return True

    def _discard(self, kind: int, fact) -> bool:
        if kind == 0:
            pred, args = fact[0], fact[1]
            bucket = self.diag_by_pred.get(pred)
            if bucket is None or fact not in bucket:
                return False
            bucket.discard(fact)
            ab = self.diag_by_atom.get((pred, args))
            ab.discard(fact)
            if not ab:
                del self.diag_by_atom[(pred, args)]
            return True
        pred, args, u = fact[0], fact[1], fact[2]
        bucket = self.at_by_pred.get(pred)
        if bucket is None or fact not in bucket:
            return False
        bucket.discard(fact)
        ab = self.at_by_atom_time.get((pred, args, u))
        ab.discard(fact)
        if not ab:
            del self.at_by_atom_time[(pred, args, u)]
        db = self.at_by_due.get(u)
        db.discard(fact)
        if not db:
            del self.at_by_due[u]
        return True

    def expire(self, now: int, count: int) -> tuple[int, list[_DiagFact]]:
        """Remove facts whose horizon passed; returns (count, removed diagonals)."""
        removed = 0
        gone_diag: list[_DiagFact] = []
        while self.heap_h and self.heap_h[0][0] < now:
            _, kind, _, fact = heapq.heappop(self.heap_h)
            if self._discard(kind, fact):
                removed += 1
                if kind == 0:
                    gone_diag.append(fact)
        while self.heap_hc and self.heap_hc[0][0] < count:
            _, kind, _, fact = heapq.heappop(self.heap_hc)
            if self._discard(kind, fact):
                removed += 1
                if kind == 0:
                    gone_diag.append(fact)
        return removed, gone_diag

    def pinned(self, pred: str, args: tuple, u: int, now: int) -> bool:
        """True when the atom is guaranteed to hold at time point u, as seen
        from the current tick."""
        if (pred, args) in self.bg_set:
            return True
        if (pred, args, u) in self.data_set:
            return True
        if self.at_by_atom_time.get((pred, args, u)):
            return True
        return u == now and bool(self.diag_by_atom.get((pred, args)))

    def pinned_now(self, pred: str, args: tuple, now: int) -> bool:
        return self.pinned(pred, args, now, now)

    def size(self) -> int:
        return (
            len(self.data_set)
            + sum(len(v) for v in self.diag_by_pred.values())
            + sum(len(v) for v in self.at_by_pred.values())
        )


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


def _literal_vars(literal: BodyLiteral) -> tuple[str, ...]:
    names: list[str] = []
    for var in literal.atom.variables():
        if var.name not in names:
            names.append(var.name)
    time = getattr(literal, "time", None)
    if isinstance(time, Variable) and time.name not in names:
        names.append(time.name)
    return tuple(names)


def _is_per_tick(literal: BodyLiteral) -> bool:
    """Literals with no future guarantee, re-derived every tick."""
    if isinstance(literal, WindowLiteral):
        if literal.mode == BOX:
            return True
        if literal.window.kind == TUPLE and literal.mode == AT:
            return True
    return False


@dataclass
class _CompiledLiteral:
    literal: BodyLiteral
    var_names: tuple[str, ...]
    store: _GroundingStore
    per_tick: bool


@dataclass
class _CompiledRule:
    rule: Rule
    index: int
    positives: list[_CompiledLiteral]
    checks: list[BodyLiteral]
    plans: list[list[tuple[int, str | None]]] = field(default_factory=list)
    has_negated_check: bool = False

    def build_plans(self) -> None:
        n = len(self.positives)
        for seed in range(n):
            bound = set(self.positives[seed].var_names)
            order: list[tuple[int, str | None]] = [(seed, None)]
            remaining = [i for i in range(n) if i != seed]
            while remaining:
                pick = None
                key = None
                for i in remaining:
                    shared = [v for v in self.positives[i].var_names if v in bound]
                    if shared:
                        pick, key = i, shared[0]
                        break
                if pick is None:
                    pick, key = remaining[0], None
                order.append((pick, key))
                bound.update(self.positives[pick].var_names)
                remaining.remove(pick)
            self.plans.append(order)


def _unify_args(
    pattern: tuple[Term, ...], ground: tuple, sigma: dict[str, Term]
) -> dict[str, Term] | None:
    if len(pattern) != len(ground):
        return None
    out = sigma
    for p, g in zip(pattern, ground):
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


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class Engine:
    """Incremental evaluator for a stratified program.

    One instance is single-writer: calls to ``tick``/``advance`` must be
    externally serialized; the state may move between threads between
    ticks.  Telemetry snapshots are plain values and safe to read from
    anywhere when no tick is in progress.
    """

    def __init__(
        self,
        program: Program,
        background: Iterable[Atom] = (),
        *,
        timeline_start: int | None = None,
        ssne: bool = True,
        gc: bool = False,
    ):
        self.program = program
        self.ssne = ssne
        self.gc = gc
        if gc and program.has_bare_at_body():
            raise ValueError(
                "retention GC is unsound for programs with bare @-atoms in bodies"
            )
        self._retention = max(program.max_time_window(), self._max_tuple_window())
        self._t_start = timeline_start
        self._now: int | None = None
        self._count = 0
        self._db = _FactDB(background)
        self._firings = 0
        self._grd_calls = 0
        self._expirations = 0
        self._alive_out: dict[tuple[str, tuple], int] = {}
        self._fired: dict[int, set] = {}
        self._bg_seeded = False

        self._rules: list[_CompiledRule] = []
        self._consumers: dict[str, list[_CompiledLiteral]] = {}
        self._strata_rules: list[list[_CompiledRule]] = [
            [] for _ in range(len(program.strata) or 1)
        ]
        self._strata_preds: list[frozenset[str]] = list(program.strata) or [frozenset()]
        for idx, rule in enumerate(program.rules):
            positives: list[_CompiledLiteral] = []
            checks: list[BodyLiteral] = []
            for lit in rule.body:
                if lit.negated or lit.atom.is_comparison():
                    checks.append(lit)
                    continue
                cl = _CompiledLiteral(
                    lit, _literal_vars(lit), _GroundingStore(_literal_vars(lit)), _is_per_tick(lit)
                )
                positives.append(cl)
                self._consumers.setdefault(lit.atom.predicate, []).append(cl)
            crule = _CompiledRule(rule, idx, positives, checks)
            crule.has_negated_check = any(c.negated for c in checks)
            crule.build_plans()
            self._rules.append(crule)
            self._strata_rules[rule.stratum].append(crule)

    def _max_tuple_window(self) -> int:
        sizes = [
            lit.window.size
            for rule in self.program.rules
            for lit in rule.body
            if isinstance(lit, WindowLiteral) and lit.window.kind == TUPLE
        ]
        return max(sizes, default=0)

    # -- public API ----------------------------------------------------------

    def tick(self, t: int, atoms: Iterable[Atom] = ()) -> frozenset[Atom]:
        """Advance to tick t, ingest the arriving atoms, and return the
        intensional atoms holding at t."""
        self.advance(t, atoms)
        return self.output()

    def advance(self, t: int, atoms: Iterable[Atom] = ()) -> None:
        """Like tick, but without materializing the output set."""
        if self._now is not None and t <= self._now:
            raise EvaluationError(f"tick {t} does not advance past {self._now}")
        if self._t_start is None:
            self._t_start = t
        if t < self._t_start:
            raise EvaluationError(f"tick {t} precedes timeline start {self._t_start}")
        start = self._t_start if self._now is None else self._now + 1
        for gap in range(start, t):
            self._advance_one(gap, ())
        self._advance_one(t, atoms)

    def output(self) -> frozenset[Atom]:
        return frozenset(Atom(pred, args) for (pred, args) in self._alive_out)

    def current_tick(self) -> int | None:
        return self._now

    def arrival_count(self) -> int:
        return self._count

    def telemetry(self) -> Telemetry:
        size = self._db.size() + sum(
            len(cl.store.entries) for cr in self._rules for cl in cr.positives
        )
        return Telemetry(self._firings, self._grd_calls, self._expirations, size)

    def debug_scan(self) -> list[str]:
        """Expiration hygiene check: report live intensional annotations whose
        horizon (time or count) has already passed."""
        problems: list[str] = []
        now, count = self._now, self._count
        if now is None:
            return problems
        for bucket in self._db.diag_by_pred.values():
            for fact in bucket:
                if fact[3] < now or fact[5] < count:
                    problems.append(f"diagonal fact expired but live: {fact}")
        for bucket in self._db.at_by_pred.values():
            for fact in bucket:
                if fact[4] < now or fact[6] < count:
                    problems.append(f"at fact expired but live: {fact}")
        for cr in self._rules:
            for cl in cr.positives:
                for entry in cl.store.entries:
                    if entry[2] < now or entry[4] < count:
                        problems.append(
                            f"grounding expired but live: {cl.literal} {entry}"
                        )
        return problems

    # -- tick processing -------------------------------------------------------

    def _advance_one(self, t: int, atoms: Iterable[Atom]) -> None:
        self._fired = {}
        if not self._bg_seeded:
            self._seed_background()
            self._bg_seeded = True

        seen: set[Atom] = set()
        for atom in atoms:
            if atom in seen:
                continue
            seen.add(atom)
            if not atom.is_ground():
                raise EvaluationError(f"input atom {atom} is not ground")
            if atom.is_comparison():
                raise EvaluationError(f"comparison atom {atom} cannot arrive on the stream")
            if atom.predicate in self.program.intensional:
                raise EvaluationError(
                    f"intensional predicate {atom.predicate!r} arrived on the input stream"
                )
            self._count += 1
            self._db.add_data(atom, t, self._count)
            for cl in self._consumers.get(atom.predicate, ()):
                self._translate_data(cl, atom.args, t, self._count)

        self._expire(t)

        for stratum, rules in enumerate(self._strata_rules):
            self._materialize_due(stratum, t)
            while True:
                for cr in rules:
                    for cl in cr.positives:
                        if cl.per_tick:
                            self._regenerate(cl, t)
                        elif isinstance(cl.literal, (AtLiteral, WindowLiteral)) and (
                            getattr(cl.literal, "mode", AT) == AT
                            or isinstance(cl.literal, AtLiteral)
                        ):
                            self._regenerate_diag_at(cl, t)
                changed = False
                for cr in rules:
                    if self._fire_rule(cr, t):
                        changed = True
                if not changed:
                    break
        self._now = t
        if self.gc:
            self._collect_garbage(t)

    def _seed_background(self) -> None:
        t0 = self._t_start
        for pred, args_list in self._db.bg_by_pred.items():
            for cl in self._consumers.get(pred, ()):
                lit = cl.literal
                if isinstance(lit, PlainLiteral) or (
                    isinstance(lit, WindowLiteral) and lit.mode == DIAMOND
                ):
                    for args in args_list:
                        sigma = _unify_args(lit.atom.args, args, {})
                        if sigma is not None:
                            self._add_grounding(cl, sigma, t0, INF, 0, INF)

    def _expire(self, t: int) -> None:
        removed, gone_diag = self._db.expire(t, self._count)
        self._expirations += removed
        for fact in gone_diag:
            if fact[0] in self.program.intensional:
                self._drop_alive(fact[0], fact[1])
        for cr in self._rules:
            for cl in cr.positives:
                self._expirations += cl.store.expire(t, self._count)

    def _collect_garbage(self, t: int) -> None:
        horizon = t - self._retention
        if horizon <= 0:
            return
        for pred, entries in self._db.data_by_pred.items():
            kept = [e for e in entries if e[1] >= horizon]
            if len(kept) != len(entries):
                for args, u, _ in entries:
                    if u < horizon:
                        self._db.data_set.discard((pred, args, u))
                        self._db.data_at_time.pop((pred, u), None)
                self._db.data_by_pred[pred] = kept
        tail = self._max_tuple_window()
        if tail and len(self._db.arrivals) > tail:
            self._db.arrivals = self._db.arrivals[-tail:]

    def _materialize_due(self, stratum: int, t: int) -> None:
        preds = self._strata_preds[stratum]
        for fact in list(self._db.at_by_due.get(t, ())):
            if fact[0] in preds:
                self._insert_diag(fact[0], fact[1], t, t, fact[5], fact[6])

    # -- output index ----------------------------------------------------------

    def _raise_alive(self, pred: str, args: tuple) -> None:
        key = (pred, args)
        self._alive_out[key] = self._alive_out.get(key, 0) + 1

    def _drop_alive(self, pred: str, args: tuple) -> None:
        key = (pred, args)
        n = self._alive_out.get(key, 0) - 1
        if n <= 0:
            self._alive_out.pop(key, None)
        else:
            self._alive_out[key] = n

    # -- fact insertion ----------------------------------------------------------

    def _insert_diag(
        self, pred: str, args: tuple, c: int, h, cc: int, hc
    ) -> bool:
        if (pred, args) in self._db.bg_set:
            return False  # already satisfied through background data
        fact: _DiagFact = (pred, args, c, h, cc, hc)
        if not self._db.add_diag(fact):
            return False
        if pred in self.program.intensional:
            self._raise_alive(pred, args)
        for cl in self._consumers.get(pred, ()):
            self._translate_diag(cl, args, c, h, cc, hc)
        return True

    def _insert_at(
        self, pred: str, args: tuple, u: int, c: int, h, cc: int, hc, t: int
    ) -> bool:
        if u < (self._t_start or 0):
            return False
        if (pred, args) in self._db.bg_set:
            return False  # background pins the atom at every time point already
        fact: _AtFact = (pred, args, u, c, h, cc, hc)
        changed = self._db.add_at(fact)
        if changed:
            for cl in self._consumers.get(pred, ()):
                self._translate_at(cl, args, u, c, h, cc, hc)
        if u == t:
            if self._insert_diag(pred, args, t, t, cc, hc):
                changed = True
        return changed

    # -- translations ----------------------------------------------------------

    def _add_grounding(self, cl: _CompiledLiteral, sigma: dict, c, h, cc, hc) -> bool:
        if c > h or cc > hc:
            return False
        key = tuple(sigma[name] for name in cl.var_names)
        return cl.store.add((key, c, h, cc, hc))

    def _bind_time(self, lit, sigma: dict, value: int) -> dict | None:
        time = lit.time
        if isinstance(time, Variable):
            bound = sigma.get(time.name)
            if bound is None:
                sigma = dict(sigma)
                sigma[time.name] = value
                return sigma
            return sigma if bound == value else None
        return sigma if time == value else None

    def _translate_data(self, cl: _CompiledLiteral, args: tuple, t: int, k: int) -> None:
        self._grd_calls += 1
        lit = cl.literal
        sigma = _unify_args(lit.atom.args, args, {})
        if sigma is None:
            return
        if isinstance(lit, PlainLiteral):
            self._add_grounding(cl, sigma, t, t, k, INF)
            return
        if isinstance(lit, AtLiteral):
            sigma = self._bind_time(lit, sigma, t)
            if sigma is not None:
                self._add_grounding(cl, sigma, t, INF, k, INF)
            return
        window = lit.window
        if window.kind == TIME:
            if lit.mode == DIAMOND:
                self._add_grounding(cl, sigma, t, t + window.size, k, INF)
            elif lit.mode == AT:
                sigma = self._bind_time(lit, sigma, t)
                if sigma is not None:
                    self._add_grounding(cl, sigma, t, t + window.size, k, INF)
        else:
            if lit.mode == DIAMOND:
                self._add_grounding(cl, sigma, t, INF, k, k + window.size - 1)

    def _translate_diag(self, cl: _CompiledLiteral, args: tuple, c, h, cc, hc) -> None:
        self._grd_calls += 1
        lit = cl.literal
        if isinstance(lit, WindowLiteral) and (
            lit.window.kind == TUPLE or lit.mode == BOX
        ):
            return
        sigma = _unify_args(lit.atom.args, args, {})
        if sigma is None:
            return
        if isinstance(lit, PlainLiteral):
            self._add_grounding(cl, sigma, c, h, cc, hc)
        elif isinstance(lit, WindowLiteral) and lit.mode == DIAMOND:
            self._add_grounding(cl, sigma, c, h, cc, hc)
        # at-forms over diagonal facts are regenerated per tick

    def _translate_at(self, cl: _CompiledLiteral, args: tuple, u: int, c, h, cc, hc) -> None:
        self._grd_calls += 1
        lit = cl.literal
        if isinstance(lit, PlainLiteral):
            return
        sigma = _unify_args(lit.atom.args, args, {})
        if sigma is None:
            return
        if isinstance(lit, AtLiteral):
            sigma = self._bind_time(lit, sigma, u)
            if sigma is not None:
                self._add_grounding(cl, sigma, max(c, u), h, cc, hc)
            return
        window = lit.window
        if window.kind != TIME:
            return
        if lit.mode == DIAMOND:
            self._add_grounding(cl, sigma, max(c, u), min(h, u + window.size), cc, hc)
        elif lit.mode == AT:
            sigma = self._bind_time(lit, sigma, u)
            if sigma is not None:
                self._add_grounding(
                    cl, sigma, max(c, u), min(h, u + window.size), cc, hc
                )

    def _regenerate_diag_at(self, cl: _CompiledLiteral, t: int) -> None:
        """At-forms over diagonal facts and background: only the current tick
        can serve as the witness time point, so bindings are per tick."""
        lit = cl.literal
        if isinstance(lit, WindowLiteral) and lit.window.kind == TUPLE:
            return
        self._grd_calls += 1
        pred = lit.atom.predicate
        window_size = lit.window.size if isinstance(lit, WindowLiteral) else None
        for fact in self._db.diag_by_pred.get(pred, ()):
            sigma = _unify_args(lit.atom.args, fact[1], {})
            if sigma is None:
                continue
            sigma = self._bind_time(lit, sigma, t)
            if sigma is None:
                continue
            self._add_grounding(cl, sigma, t, t, fact[4], fact[5])
        for args in self._db.bg_by_pred.get(pred, ()):
            sigma = _unify_args(lit.atom.args, args, {})
            if sigma is None:
                continue
            sigma = self._bind_time(lit, sigma, t)
            if sigma is None:
                continue
            if window_size is None:
                self._add_grounding(cl, sigma, t, INF, 0, INF)
            else:
                self._add_grounding(cl, sigma, t, t + window_size, 0, INF)

    def _regenerate(self, cl: _CompiledLiteral, t: int) -> None:
        """Box quantifiers and tuple-window box/at forms, valid for this tick only."""
        self._grd_calls += 1
        lit = cl.literal
        assert isinstance(lit, WindowLiteral)
        if lit.window.kind == TIME:
            lo = max(self._t_start, t - lit.window.size)
            for sigma in self._box_candidates(lit, t):
                args = tuple(
                    substitute_term(a, sigma) for a in lit.atom.args
                )
                if all(
                    self._db.pinned(lit.atom.predicate, args, u, t)
                    for u in range(lo, t + 1)
                ):
                    self._add_grounding(cl, sigma, t, t, 0, INF)
            return
        lo, by_time = self._tuple_snapshot(lit.window.size, t)
        pred = lit.atom.predicate
        if lit.mode == BOX:
            pool = {args for (p, args) in by_time.get(t, ()) if p == pred} | {
                args for (p, args) in self._db.bg_set if p == pred
            }
            for args in pool:
                sigma = _unify_args(lit.atom.args, args, {})
                if sigma is None:
                    continue
                ground = tuple(substitute_term(a, sigma) for a in lit.atom.args)
                if all(
                    (pred, ground) in by_time.get(u, ())
                    or (pred, ground) in self._db.bg_set
                    for u in range(lo, t + 1)
                ):
                    self._add_grounding(cl, sigma, t, t, 0, INF)
        else:
            for u in range(lo, t + 1):
                for p, args in by_time.get(u, ()):
                    if p != pred:
                        continue
                    sigma = _unify_args(lit.atom.args, args, {})
                    if sigma is None:
                        continue
                    sigma = self._bind_time(lit, sigma, u)
                    if sigma is not None:
                        self._add_grounding(cl, sigma, t, t, 0, INF)
                for p, args in self._db.bg_set:
                    if p != pred:
                        continue
                    sigma = _unify_args(lit.atom.args, args, {})
                    if sigma is None:
                        continue
                    sigma = self._bind_time(lit, sigma, u)
                    if sigma is not None:
                        self._add_grounding(cl, sigma, t, t, 0, INF)

    def _box_candidates(self, lit: WindowLiteral, t: int) -> list[dict]:
        """Substitutions that could satisfy a box: pinned at the current tick."""
        pred = lit.atom.predicate
        out: list[dict] = []
        seen: set[tuple] = set()

        def consider(args: tuple) -> None:
            sigma = _unify_args(lit.atom.args, args, {})
            if sigma is None:
                return
            key = tuple(sorted(sigma.items()))
            if key not in seen:
                seen.add(key)
                out.append(sigma)

        for args in self._db.data_at_time.get((pred, t), ()):
            consider(args)
        for fact in self._db.diag_by_pred.get(pred, ()):
            consider(fact[1])
        for fact in self._db.at_by_due.get(t, ()):
            if fact[0] == pred:
                consider(fact[1])
        for p, args in self._db.bg_set:
            if p == pred:
                consider(args)
        return out

    def _tuple_snapshot(self, size: int, t: int) -> tuple[int, dict[int, set[tuple]]]:
        arrivals = self._db.arrivals
        # Compare against the total arrival count, not the retained list:
        # GC may have trimmed old arrivals.
        if self._count > size:
            kept = arrivals[-size:]
            lo = kept[0][0]
        else:
            kept = arrivals
            lo = self._t_start
        by_time: dict[int, set[tuple]] = {}
        for u, pred, args, _ in kept:
            by_time.setdefault(u, set()).add((pred, args))
        return lo, by_time

    # -- rule firing -------------------------------------------------------------

    def _fire_rule(self, cr: _CompiledRule, t: int) -> bool:
        changed = False
        fired = self._fired.setdefault(cr.index, set())
        # Materialized: firing mutates the stores the join reads.
        candidates = list(self._join(cr, t))
        for sigma, ann in candidates:
            key = (tuple(sorted(sigma.items())), ann)
            if key in fired:
                continue
            fired.add(key)
            if cr.has_negated_check:
                ann = ann.intersect(Annotation(t, t, 0, INF))
            if not ann.covers(t, self._count):
                continue
            if not all(self._check(lit, sigma, t) for lit in cr.checks):
                continue
            self._firings += 1
            if self._insert_head(cr, sigma, ann, t):
                changed = True
        return changed

    def _join(self, cr: _CompiledRule, t: int):
        if not cr.positives:
            yield {}, Annotation(t, t, 0, INF)
            return
        # A negated literal carries annotation [t,t], so it keeps the rule
        # fresh at every tick: the body can become true when a negated atom
        # expires, with no new positive grounding to seed from.
        fresh_only = self.ssne and not cr.has_negated_check
        seeds = range(len(cr.positives)) if fresh_only else (0,)
        emitted: set = set()
        for seed in seeds:
            plan = cr.plans[seed]
            first_cl = cr.positives[seed]
            if fresh_only:
                first_entries = first_cl.store.fresh(t)
            else:
                first_entries = [e for e in first_cl.store.entries if e[1] <= t]
            for entry in first_entries:
                sigma = dict(zip(first_cl.var_names, entry[0]))
                ann = Annotation(entry[1], entry[2], entry[3], entry[4])
                stack = [(1, sigma, ann)]
                while stack:
                    depth, sigma, ann = stack.pop()
                    if depth == len(plan):
                        key = (tuple(sorted(sigma.items())), ann)
                        if key not in emitted:
                            emitted.add(key)
                            yield sigma, ann
                        continue
                    pos, key_var = plan[depth]
                    cl = cr.positives[pos]
                    if key_var is not None:
                        pool = cl.store.lookup(key_var, sigma[key_var])
                    else:
                        pool = cl.store.entries
                    for other in pool:
                        if other[1] > t:
                            continue
                        merged = self._merge(cl, other, sigma)
                        if merged is None:
                            continue
                        new_ann = ann.intersect(
                            Annotation(other[1], other[2], other[3], other[4])
                        )
                        if new_ann.is_empty() or new_ann.c > t:
                            continue
                        stack.append((depth + 1, merged, new_ann))

    @staticmethod
    def _merge(cl: _CompiledLiteral, entry: _Entry, sigma: dict) -> dict | None:
        merged = None
        for name, value in zip(cl.var_names, entry[0]):
            bound = sigma.get(name)
            if bound is None:
                if merged is None:
                    merged = dict(sigma)
                merged[name] = value
            elif bound != value:
                return None
        return merged if merged is not None else sigma

    # -- checks ------------------------------------------------------------------

    def _check(self, literal: BodyLiteral, sigma: Mapping[str, Term], t: int) -> bool:
        lit = literal.substitute(sigma)
        atom = lit.atom
        if not atom.is_ground():
            raise EvaluationError(f"unbound variables in {lit}")
        if atom.is_comparison():
            result = evaluate_comparison(atom.predicate, atom.args[0], atom.args[1])
            return result != lit.negated
        pred, args = atom.predicate, atom.args

        if isinstance(lit, PlainLiteral):
            return self._db.pinned_now(pred, args, t) != lit.negated
        if isinstance(lit, AtLiteral):
            u = lit.time
            if not isinstance(u, int) or not (self._t_start <= u <= t):
                return False
            return self._db.pinned(pred, args, u, t) != lit.negated

        window = lit.window
        if window.kind == TIME:
            rng = range(max(self._t_start, t - window.size), t + 1)
            if lit.mode == DIAMOND:
                return any(self._db.pinned(pred, args, u, t) != lit.negated for u in rng)
            if lit.mode == BOX:
                return all(self._db.pinned(pred, args, u, t) != lit.negated for u in rng)
            u = lit.time
            if not isinstance(u, int) or u not in rng:
                return False
            return self._db.pinned(pred, args, u, t) != lit.negated

        lo, by_time = self._tuple_snapshot(window.size, t)
        rng = range(lo, t + 1)

        def in_snap(u: int) -> bool:
            return (pred, args) in by_time.get(u, ()) or (pred, args) in self._db.bg_set

        if lit.mode == DIAMOND:
            return any(in_snap(u) != lit.negated for u in rng)
        if lit.mode == BOX:
            return all(in_snap(u) != lit.negated for u in rng)
        u = lit.time
        if not isinstance(u, int) or u not in rng:
            return False
        return in_snap(u) != lit.negated

    # -- head insertion ------------------------------------------------------------

    def _insert_head(self, cr: _CompiledRule, sigma: Mapping[str, Term], ann: Annotation, t: int) -> bool:
        head = cr.rule.head
        atom = head.atom.substitute(sigma)
        if not atom.is_ground():
            raise EvaluationError(f"unsafe rule produced non-ground head {atom}")
        if isinstance(head, AtLiteral):
            u = substitute_term(head.time, sigma)
            if not isinstance(u, int):
                raise EvaluationError(f"head time term {u!r} is not an integer")
            return self._insert_at(
                atom.predicate, atom.args, u, ann.c, ann.h, ann.cc, ann.hc, t
            )
        return self._insert_diag(atom.predicate, atom.args, ann.c, ann.h, ann.cc, ann.hc)

    # -- reference grounding ---------------------------------------------------------

    def grd(
        self,
        literal: BodyLiteral,
        t_b: int | None = None,
        t_e: int | None = None,
    ) -> list[AnnotatedFormula]:
        """All annotated groundings of a body literal over the current
        database, recomputed from scratch; the incremental stores hold the
        still-live subset of exactly these."""
        if self._now is None:
            return []
        t_e = self._now if t_e is None else t_e
        t_b = self._t_start if t_b is None else t_b
        cl = _CompiledLiteral(
            literal, _literal_vars(literal), _GroundingStore(_literal_vars(literal)), _is_per_tick(literal)
        )
        pred = literal.atom.predicate
        if not literal.negated:
            window = literal.window if isinstance(literal, WindowLiteral) else None
            lo_data = t_b
            if window is not None and window.kind == TIME:
                lo_data = max(t_b, t_e - window.size)
            for args, u, k in self._db.data_by_pred.get(pred, ()):
                if lo_data <= u <= t_e:
                    self._translate_data(cl, args, u, k)
            for fact in self._db.diag_by_pred.get(pred, ()):
                self._translate_diag(cl, fact[1], fact[2], fact[3], fact[4], fact[5])
            for fact in self._db.at_by_pred.get(pred, ()):
                self._translate_at(cl, fact[1], fact[2], fact[3], fact[4], fact[5], fact[6])
            if cl.per_tick:
                self._regenerate(cl, t_e)
            elif isinstance(literal, (AtLiteral,)) or (
                isinstance(literal, WindowLiteral) and literal.mode == AT
            ):
                self._regenerate_diag_at(cl, t_e)
            if isinstance(literal, PlainLiteral) or (
                isinstance(literal, WindowLiteral) and literal.mode == DIAMOND
            ):
                for args in self._db.bg_by_pred.get(pred, ()):
                    sigma = _unify_args(literal.atom.args, args, {})
                    if sigma is not None:
                        self._add_grounding(cl, sigma, self._t_start, INF, 0, INF)
        out = []
        for entry in sorted(cl.store.entries, key=repr):
            sigma = dict(zip(cl.var_names, entry[0]))
            out.append(
                AnnotatedFormula(
                    literal.substitute(sigma),
                    tuple(sorted(sigma.items())),
                    Annotation(entry[1], entry[2], entry[3], entry[4]),
                )
            )
        return out


def eval_program(
    program: Program,
    data: Stream,
    background: Iterable[Atom] = (),
    *,
    ssne: bool = True,
    gc: bool = False,
) -> Stream:
    """Run the incremental engine over every tick of the data timeline and
    collect the per-tick outputs into a stream."""
    engine = Engine(
        program,
        background,
        timeline_start=data.timeline.start,
        ssne=ssne,
        gc=gc,
    )
    events: list[tuple[int, Atom]] = []
    for t in data.timeline:
        out = engine.tick(t, data.atoms_at(t))
        for atom in sorted(out, key=str):
            events.append((t, atom))
    return Stream(data.timeline, events)
