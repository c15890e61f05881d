"""Parsing of rule programs and stream files.

Concrete program syntax (ASCII, one-token lookahead):

    head :- body.                     rule; body is a comma-separated list
    q(X,Y)                            plain atom; zero-arity atoms drop parens
    @[T] a(X)                         at-atom, T a time variable or integer
    [3 t] <> a(X)                     time window, diamond quantifier
    [3 #] [] a(X)                     tuple window, box quantifier
    [n t] @[T] a(X)                   window with at; n resolved via consts
    not <literal>                     negation, pushed onto the atom
    V >= 100                          builtin comparison over integers
    % comment to end of line

Stream files are line based: an optional ``@timeline lo hi`` header, then
``tick atom [atom ...]`` lines with non-decreasing ticks; arrival order is
line order, then left to right.  Background files hold one or more ground
atoms per line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Union

import networkx as nx

from larstream.model import (
    COMPARISON_PREDICATES,
    TIME,
    TUPLE,
    Atom,
    Stream,
    Substitution,
    Term,
    Timeline,
    Variable,
    WindowSpec,
    is_ground_term,
    substitute_term,
    term_str,
)

DIAMOND = "diamond"
BOX = "box"
AT = "at"


class ParseError(ValueError):
    """Syntax or validation error, with source position when available."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = f" at line {line}" if line is not None else ""
        if line is not None and column is not None:
            where = f" at line {line}, column {column}"
        super().__init__(message + where)


class UnsafeRuleError(ParseError):
    """A rule violates the safety conditions."""


class NegationCycleError(ParseError):
    """The predicate dependency graph has a cycle through negation."""

    def __init__(self, predicates):
        self.predicates = tuple(sorted(predicates))
        super().__init__(
            "cycle through negation involving predicates: "
            + ", ".join(self.predicates)
        )


# ---------------------------------------------------------------------------
# Literals
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class PlainLiteral:
    """A bare atom, possibly negated; covers builtin comparisons."""

    atom: Atom
    negated: bool = False

    def substitute(self, subst: Substitution) -> "PlainLiteral":
        return PlainLiteral(self.atom.substitute(subst), self.negated)

    def __str__(self) -> str:
        return ("not " if self.negated else "") + str(self.atom)


@dataclass(frozen=True, slots=True)
class AtLiteral:
    """An at-atom over the full timeline: the atom holds at the given time."""

    time: Term
    atom: Atom
    negated: bool = False

    def substitute(self, subst: Substitution) -> "AtLiteral":
        return AtLiteral(
            substitute_term(self.time, subst), self.atom.substitute(subst), self.negated
        )

    def __str__(self) -> str:
        neg = "not " if self.negated else ""
        return f"@[{term_str(self.time)}] {neg}{self.atom}"


@dataclass(frozen=True, slots=True)
class WindowLiteral:
    """A window operator around a quantified atom.

    ``mode`` is one of diamond (holds somewhere in the window), box (holds
    everywhere in the window), or at (holds at ``time``, which must lie in
    the window).  The negation flag sits on the inner atom.
    """

    window: WindowSpec
    mode: str
    atom: Atom
    negated: bool = False
    time: Term | None = None

    def substitute(self, subst: Substitution) -> "WindowLiteral":
        t = substitute_term(self.time, subst) if self.time is not None else None
        return WindowLiteral(
            self.window, self.mode, self.atom.substitute(subst), self.negated, t
        )

    def __str__(self) -> str:
        neg = "not " if self.negated else ""
        if self.mode == DIAMOND:
            quant = "<>"
        elif self.mode == BOX:
            quant = "[]"
        else:
            quant = f"@[{term_str(self.time)}]"
        return f"{self.window} {quant} {neg}{self.atom}"


BodyLiteral = Union[PlainLiteral, AtLiteral, WindowLiteral]
Head = Union[PlainLiteral, AtLiteral]


@dataclass(frozen=True, slots=True)
class Negation:
    """Transient wrapper for ``not`` applied to a whole extended atom;
    removed by the negation rewrite before a rule is finalized."""

    inner: BodyLiteral

    def __str__(self) -> str:
        return f"not {self.inner}"


@dataclass(frozen=True, slots=True)
class Rule:
    head: Head
    body: tuple[BodyLiteral, ...]
    stratum: int = 0

    def literals(self) -> Iterator[BodyLiteral]:
        return iter(self.body)

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...]
    extensional: frozenset[str]
    intensional: frozenset[str]
    strata: tuple[frozenset[str], ...] = field(default=())

    def kind_of(self, predicate: str) -> str:
        if predicate in COMPARISON_PREDICATES:
            return "builtin"
        if predicate in self.intensional:
            return "intensional"
        return "extensional"

    def max_time_window(self) -> int:
        sizes = [
            lit.window.size
            for rule in self.rules
            for lit in rule.body
            if isinstance(lit, WindowLiteral) and lit.window.kind == TIME
        ]
        return max(sizes, default=0)

    def has_bare_at_body(self) -> bool:
        return any(
            isinstance(lit, AtLiteral) for rule in self.rules for lit in rule.body
        )

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.rules)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    value: object
    line: int
    column: int


_SYMBOLS = {
    ":-": "ARROW",
    "<>": "DIAMOND",
    "<=": "OP",
    ">=": "OP",
    "!=": "OP",
    "<": "OP",
    ">": "OP",
    "=": "OP",
    "(": "LPAREN",
    ")": "RPAREN",
    "[": "LBRACK",
    "]": "RBRACK",
    ",": "COMMA",
    ".": "DOT",
    "@": "ATSIGN",
    "#": "HASH",
}


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line = 1
    col = 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            tokens.append(Token("NEWLINE", None, line, col))
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("INT", int(text[i:j]), line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word == "not":
                tokens.append(Token("NOT", word, line, col))
            elif word[0].isupper() or word[0] == "_":
                tokens.append(Token("VAR", word, line, col))
            else:
                tokens.append(Token("IDENT", word, line, col))
            col += j - i
            i = j
            continue
        matched = None
        for sym in (":-", "<>", "<=", ">=", "!="):
            if text.startswith(sym, i):
                matched = sym
                break
        if matched is None and ch in _SYMBOLS:
            matched = ch
        if matched is None:
            raise ParseError(f"unexpected character {ch!r}", line, col)
        tokens.append(Token(_SYMBOLS[matched], matched, line, col))
        col += len(matched)
        i += len(matched)
    tokens.append(Token("EOF", None, line, col))
    return tokens


class _TokenStream:
    def __init__(self, tokens: list[Token], skip_newlines: bool = True):
        if skip_newlines:
            tokens = [t for t in tokens if t.kind != "NEWLINE"]
        self._tokens = tokens
        self._pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self._tokens[min(self._pos + offset, len(self._tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "EOF":
            self._pos += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {kind}, found {describe(tok)}", tok.line, tok.column)
        return self.next()

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind


def describe(tok: Token) -> str:
    if tok.kind == "EOF":
        return "end of input"
    return repr(str(tok.value))


# ---------------------------------------------------------------------------
# Program parsing
# ---------------------------------------------------------------------------


class _ProgramParser:
    def __init__(self, tokens: _TokenStream, consts: Mapping[str, int]):
        self.tokens = tokens
        self.consts = consts

    def parse_rules(self) -> list[Rule]:
        rules = []
        while not self.tokens.at("EOF"):
            rules.append(self.parse_rule())
        return rules

    def parse_rule(self) -> Rule:
        head = self.parse_head()
        self.tokens.expect("ARROW")
        body = [self.parse_body_literal()]
        while self.tokens.at("COMMA"):
            self.tokens.next()
            body.append(self.parse_body_literal())
        self.tokens.expect("DOT")
        return rewrite_negation(Rule(head, tuple(body)))

    def parse_head(self) -> Head:
        tok = self.tokens.peek()
        if tok.kind == "ATSIGN":
            time = self.parse_at_time()
            atom = self.parse_atom()
            return AtLiteral(time, atom)
        if tok.kind == "IDENT":
            atom = self.parse_atom()
            if atom.is_comparison():
                raise ParseError("builtin comparison cannot be a rule head", tok.line, tok.column)
            return PlainLiteral(atom)
        raise ParseError(f"expected rule head, found {describe(tok)}", tok.line, tok.column)

    def parse_body_literal(self) -> BodyLiteral | Negation:
        tok = self.tokens.peek()
        if tok.kind == "NOT":
            self.tokens.next()
            inner = self.parse_positive_literal()
            if isinstance(inner, PlainLiteral) and inner.atom.is_comparison():
                return PlainLiteral(inner.atom, negated=True)
            return Negation(inner)
        return self.parse_positive_literal()

    def parse_positive_literal(self) -> BodyLiteral:
        tok = self.tokens.peek()
        if tok.kind == "LBRACK":
            return self.parse_window_literal()
        if tok.kind == "ATSIGN":
            time = self.parse_at_time()
            negated, atom = self.parse_maybe_negated_atom()
            return AtLiteral(time, atom, negated)
        if tok.kind in ("IDENT", "INT", "VAR"):
            return self.parse_atom_or_comparison()
        raise ParseError(f"expected body literal, found {describe(tok)}", tok.line, tok.column)

    def parse_maybe_negated_atom(self) -> tuple[bool, Atom]:
        negated = False
        if self.tokens.at("NOT"):
            self.tokens.next()
            negated = True
        return negated, self.parse_atom()

    def parse_window_literal(self) -> WindowLiteral:
        open_tok = self.tokens.expect("LBRACK")
        size = self.parse_window_size()
        unit = self.tokens.next()
        if unit.kind == "IDENT" and unit.value == "t":
            kind = TIME
        elif unit.kind == "HASH":
            kind = TUPLE
        else:
            raise ParseError(
                f"expected window unit 't' or '#', found {describe(unit)}",
                unit.line,
                unit.column,
            )
        self.tokens.expect("RBRACK")
        try:
            window = WindowSpec(kind, size)
        except ValueError as exc:
            raise ParseError(str(exc), open_tok.line, open_tok.column) from exc
        quant = self.tokens.peek()
        if quant.kind == "DIAMOND":
            self.tokens.next()
            negated, atom = self.parse_maybe_negated_atom()
            return WindowLiteral(window, DIAMOND, atom, negated)
        if quant.kind == "LBRACK":
            self.tokens.next()
            self.tokens.expect("RBRACK")
            negated, atom = self.parse_maybe_negated_atom()
            return WindowLiteral(window, BOX, atom, negated)
        if quant.kind == "ATSIGN":
            time = self.parse_at_time()
            negated, atom = self.parse_maybe_negated_atom()
            return WindowLiteral(window, AT, atom, negated, time=time)
        raise ParseError(
            f"expected quantifier '<>', '[]' or '@[..]', found {describe(quant)}",
            quant.line,
            quant.column,
        )

    def parse_window_size(self) -> int:
        tok = self.tokens.next()
        if tok.kind == "INT":
            return tok.value
        if tok.kind == "IDENT":
            if tok.value in self.consts:
                return self.consts[tok.value]
            raise ParseError(
                f"unresolved constant {tok.value!r} (pass --const {tok.value}=N)",
                tok.line,
                tok.column,
            )
        raise ParseError(f"expected window size, found {describe(tok)}", tok.line, tok.column)

    def parse_at_time(self) -> Term:
        self.tokens.expect("ATSIGN")
        self.tokens.expect("LBRACK")
        tok = self.tokens.next()
        time: Term
        if tok.kind == "INT":
            time = tok.value
        elif tok.kind == "VAR":
            time = Variable(tok.value)
        elif tok.kind == "IDENT":
            if tok.value not in self.consts:
                raise ParseError(
                    f"unresolved constant {tok.value!r} in time position",
                    tok.line,
                    tok.column,
                )
            time = self.consts[tok.value]
        else:
            raise ParseError(f"expected time term, found {describe(tok)}", tok.line, tok.column)
        self.tokens.expect("RBRACK")
        return time

    def parse_atom_or_comparison(self) -> PlainLiteral:
        tok = self.tokens.peek()
        if tok.kind == "IDENT" and self.tokens.peek(1).kind not in ("OP",):
            return PlainLiteral(self.parse_atom())
        left = self.parse_term()
        op_tok = self.tokens.expect("OP")
        right = self.parse_term()
        return PlainLiteral(Atom(str(op_tok.value), (left, right)))

    def parse_atom(self) -> Atom:
        tok = self.tokens.expect("IDENT")
        name = str(tok.value)
        if not self.tokens.at("LPAREN"):
            return Atom(name)
        self.tokens.next()
        args = [self.parse_term()]
        while self.tokens.at("COMMA"):
            self.tokens.next()
            args.append(self.parse_term())
        self.tokens.expect("RPAREN")
        return Atom(name, tuple(args))

    def parse_term(self) -> Term:
        tok = self.tokens.next()
        if tok.kind == "INT":
            return tok.value
        if tok.kind == "VAR":
            return Variable(tok.value)
        if tok.kind == "IDENT":
            name = str(tok.value)
            return self.consts.get(name, name)
        raise ParseError(f"expected term, found {describe(tok)}", tok.line, tok.column)


# ---------------------------------------------------------------------------
# Negation rewrite
# ---------------------------------------------------------------------------


def push_negation(literal: BodyLiteral | Negation) -> BodyLiteral:
    """Push a literal-level negation onto the inner atom.

    Window negations flip the quantifier: not-diamond becomes box over the
    negated atom and vice versa.  Negated at-forms keep their quantifier;
    they coincide with the original reading only when the referenced time
    point lies in the timeline, which evaluation enforces.
    """
    if not isinstance(literal, Negation):
        return literal
    inner = literal.inner
    if isinstance(inner, PlainLiteral):
        return replace(inner, negated=not inner.negated)
    if isinstance(inner, AtLiteral):
        return replace(inner, negated=not inner.negated)
    if inner.mode == DIAMOND:
        return replace(inner, mode=BOX, negated=not inner.negated)
    if inner.mode == BOX:
        return replace(inner, mode=DIAMOND, negated=not inner.negated)
    return replace(inner, negated=not inner.negated)


def rewrite_negation(rule: Rule) -> Rule:
    """Normalize a rule so negation occurs only directly on atoms."""
    body = tuple(push_negation(lit) for lit in rule.body)
    return Rule(rule.head, body, rule.stratum)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _head_atom(rule: Rule) -> Atom:
    return rule.head.atom


def _literal_kind_positions(rule: Rule):
    """Split the body into positive non-builtin literals, negated literals,
    and builtin comparisons."""
    positives, negatives, builtins = [], [], []
    for lit in rule.body:
        atom = lit.atom
        if atom.is_comparison():
            builtins.append(lit)
        elif lit.negated:
            negatives.append(lit)
        else:
            positives.append(lit)
    return positives, negatives, builtins


def _bound_variables(positives) -> tuple[set[str], set[str]]:
    """Variables bound by positive literals: argument positions, and the
    subset bound specifically by at-positions (time variables)."""
    bound: set[str] = set()
    at_bound: set[str] = set()
    for lit in positives:
        for var in lit.atom.variables():
            bound.add(var.name)
        time = getattr(lit, "time", None)
        if isinstance(time, Variable):
            bound.add(time.name)
            at_bound.add(time.name)
    return bound, at_bound


def check_safety(rule: Rule) -> None:
    positives, negatives, builtins = _literal_kind_positions(rule)
    if not positives and not negatives:
        raise UnsafeRuleError(f"rule has no non-builtin body literal: {rule}")
    bound, at_bound = _bound_variables(positives)

    head = rule.head
    for var in head.atom.variables():
        if var.name not in bound:
            raise UnsafeRuleError(
                f"head variable {var.name} not bound by a positive body literal: {rule}"
            )
    if isinstance(head, AtLiteral) and isinstance(head.time, Variable):
        if head.time.name not in at_bound:
            raise UnsafeRuleError(
                f"head time variable {head.time.name} not bound by a body @-position: {rule}"
            )
    for lit in negatives + builtins:
        for var in lit.atom.variables():
            if var.name not in bound:
                raise UnsafeRuleError(
                    f"variable {var.name} in {lit} not bound by a positive body literal: {rule}"
                )
        time = getattr(lit, "time", None)
        if isinstance(time, Variable) and time.name not in bound:
            raise UnsafeRuleError(
                f"time variable {time.name} in {lit} not bound by a positive body literal: {rule}"
            )


def stratify(rules: list[Rule]) -> tuple[tuple[frozenset[str], ...], list[int]]:
    """Assign strata to intensional predicates and rules.

    Builds the dependency graph with an edge from each head predicate to
    every intensional body predicate, marked negative when the body atom
    is negated.  A strongly connected component containing a negative edge
    is a cycle through negation and is rejected.  Returns the strata as an
    ordered partition and the stratum index of each rule's head.
    """
    heads = {_head_atom(r).predicate for r in rules}
    graph = nx.DiGraph()
    graph.add_nodes_from(heads)
    for rule in rules:
        head = _head_atom(rule).predicate
        for lit in rule.body:
            pred = lit.atom.predicate
            if pred not in heads:
                continue
            negative = lit.negated or graph.edges.get((head, pred), {}).get("negative", False)
            graph.add_edge(head, pred, negative=negative)

    scc_of: dict[str, int] = {}
    components = list(nx.strongly_connected_components(graph))
    for idx, comp in enumerate(components):
        for pred in comp:
            scc_of[pred] = idx
    for u, v, data in graph.edges(data=True):
        if data["negative"] and scc_of[u] == scc_of[v]:
            raise NegationCycleError(components[scc_of[u]])

    condensation = nx.condensation(graph, components)
    level: dict[int, int] = {}
    for node in reversed(list(nx.topological_sort(condensation))):
        best = 0
        for _, succ in condensation.out_edges(node):
            negative = any(
                graph.edges[u, v]["negative"]
                for u in condensation.nodes[node]["members"]
                for v in condensation.nodes[succ]["members"]
                if graph.has_edge(u, v)
            )
            best = max(best, level[succ] + (1 if negative else 0))
        level[node] = best

    pred_level = {pred: level[scc_of[pred]] for pred in heads}
    n_levels = max(pred_level.values(), default=0) + 1 if heads else 1
    strata = tuple(
        frozenset(p for p, lv in pred_level.items() if lv == i) for i in range(n_levels)
    )
    rule_strata = [pred_level[_head_atom(r).predicate] for r in rules]
    return strata, rule_strata


def parse_program(text: str, consts: Mapping[str, int] | None = None) -> Program:
    """Parse, rewrite, validate, and stratify a program."""
    tokens = _TokenStream(tokenize(text))
    rules = _ProgramParser(tokens, consts or {}).parse_rules()

    intensional = frozenset(_head_atom(r).predicate for r in rules)
    extensional = frozenset(
        lit.atom.predicate
        for rule in rules
        for lit in rule.body
        if lit.atom.predicate not in intensional and not lit.atom.is_comparison()
    )

    for rule in rules:
        if _head_atom(rule).predicate in COMPARISON_PREDICATES:
            raise ParseError(f"builtin comparison cannot be derived: {rule}")
        check_safety(rule)
        for lit in rule.body:
            if (
                isinstance(lit, WindowLiteral)
                and lit.window.kind == TUPLE
                and lit.atom.predicate in intensional
            ):
                raise ParseError(
                    f"tuple window over intensional predicate {lit.atom.predicate!r}: {rule}"
                )

    strata, rule_strata = stratify(rules)
    final = tuple(
        Rule(r.head, r.body, stratum) for r, stratum in zip(rules, rule_strata)
    )
    return Program(final, extensional, intensional, strata)


# ---------------------------------------------------------------------------
# Stream and background parsing
# ---------------------------------------------------------------------------


def parse_stream(text: str) -> Stream:
    declared: Timeline | None = None
    events: list[tuple[int, Atom]] = []
    last_tick: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if line.startswith("@timeline"):
            if declared is not None:
                raise ParseError("duplicate @timeline header", lineno)
            parts = line.split()
            if len(parts) != 3:
                raise ParseError("expected '@timeline lo hi'", lineno)
            try:
                lo, hi = int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise ParseError("timeline bounds must be integers", lineno) from exc
            try:
                declared = Timeline(lo, hi)
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
            continue
        tokens = _TokenStream(tokenize(line))
        tick_tok = tokens.peek()
        if tick_tok.kind != "INT":
            raise ParseError(f"expected tick, found {describe(tick_tok)}", lineno)
        tokens.next()
        tick = int(tick_tok.value)
        if tick < 0:
            raise ParseError("ticks must be non-negative", lineno)
        if last_tick is not None and tick < last_tick:
            raise ParseError(
                f"tick {tick} decreases below previous tick {last_tick}", lineno
            )
        last_tick = tick
        parser = _ProgramParser(tokens, {})
        while not tokens.at("EOF"):
            atom_tok = tokens.peek()
            try:
                atom = parser.parse_atom()
            except ParseError as exc:
                raise ParseError(exc.message, lineno, atom_tok.column) from exc
            if not atom.is_ground():
                raise ParseError(f"stream atom {atom} contains a variable", lineno)
            events.append((tick, atom))

    if declared is None:
        if not events:
            raise ParseError("empty stream requires a @timeline header")
        declared = Timeline(events[0][0], events[-1][0])
    try:
        return Stream(declared, events)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def parse_background(text: str) -> frozenset[Atom]:
    atoms: set[Atom] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        tokens = _TokenStream(tokenize(line))
        parser = _ProgramParser(tokens, {})
        while not tokens.at("EOF"):
            atom = parser.parse_atom()
            if not atom.is_ground():
                raise ParseError(f"background atom {atom} contains a variable", lineno)
            atoms.add(atom)
    return frozenset(atoms)


def program_to_text(program: Program) -> str:
    return "\n".join(str(rule) for rule in program.rules) + "\n"
