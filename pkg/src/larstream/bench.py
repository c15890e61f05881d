"""Benchmark scenarios and runners for the incremental and naive engines.

Synthetic streams follow the micro-benchmark shapes: a series of unique
atoms at a fixed per-tick rate for the diamond join rules, per-tick
repeated atoms so the box quantifier can hold, chainable pairs so joins
produce output, and a random temperature stream for the cooling monitor.
The reported figure is reasoning time per ingested atom; output sets are
verified elsewhere and not materialized while timing.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from larstream.engine import Engine
from larstream.model import Atom, Stream, Timeline
from larstream.oracle import iter_outputs
from larstream.parser import Program, parse_program

SCENARIOS = ("diamond", "box", "join", "multirule", "cooling")

COOLING_RULES = """\
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


@dataclass(frozen=True)
class BenchResult:
    scenario: str
    window: int
    rate: int
    engine: str
    total_s: float
    per_atom_us: float
    firings: int

    def row(self) -> list:
        return [
            self.scenario,
            self.window,
            self.rate,
            self.engine,
            f"{self.total_s:.4f}",
            f"{self.per_atom_us:.2f}",
            self.firings,
        ]


def scenario_program(name: str, window: int) -> Program:
    if name == "diamond":
        return parse_program(f"q(A,B) :- [{window} t] <> p(A,B).")
    if name == "box":
        return parse_program(f"q(A,B) :- [{window} t] [] p(A,B).")
    if name == "join":
        return parse_program(
            f"q(A,C) :- [{window} t] <> p(A,B), [{window} t] <> p(B,C)."
        )
    if name == "multirule":
        rules = "\n".join(
            f"q{i}(A,C) :- [{window} t] <> p(A,B), [{window} t] <> p(B,C)."
            for i in range(1, 5)
        )
        return parse_program(rules)
    if name == "cooling":
        return parse_program(COOLING_RULES, consts={"n": window})
    raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")


def scenario_batches(name: str, rate: int, ticks: int, seed: int) -> list[list[Atom]]:
    """Per-tick arrival batches for a scenario."""
    rng = random.Random(seed)
    batches: list[list[Atom]] = []
    counter = 0
    if name == "box":
        fixed = [Atom("p", (j, -j)) for j in range(rate)]
        return [list(fixed) for _ in range(ticks)]
    for _ in range(ticks):
        batch: list[Atom] = []
        for _ in range(rate):
            if name in ("join", "multirule"):
                batch.append(Atom("p", (counter, counter + 1)))
            elif name == "cooling":
                batch.append(Atom("temp", (rng.randint(-30, 230),)))
            else:
                batch.append(Atom("p", (counter, -counter)))
            counter += 1
        batches.append(batch)
    return batches


def batches_to_stream(batches: list[list[Atom]]) -> Stream:
    events = [(t, atom) for t, batch in enumerate(batches) for atom in batch]
    return Stream(Timeline(0, len(batches) - 1), events)


def atoms_ingested(batches: list[list[Atom]]) -> int:
    # deduplicated per tick, matching what the engines actually ingest
    return sum(len(set(batch)) for batch in batches)


def run_incremental(
    program: Program, batches: list[list[Atom]], *, ssne: bool = True, gc: bool = False
) -> tuple[float, int]:
    """Reasoning seconds and rule firings for a full incremental run."""
    engine = Engine(program, timeline_start=0, ssne=ssne, gc=gc)
    started = time.perf_counter()
    for t, batch in enumerate(batches):
        engine.advance(t, batch)
    elapsed = time.perf_counter() - started
    return elapsed, engine.telemetry().firings


def run_naive(program: Program, batches: list[list[Atom]]) -> tuple[float, int]:
    """Reasoning seconds and derivation count for the per-tick recompute."""
    stream = batches_to_stream(batches)
    stats: dict = {}
    started = time.perf_counter()
    for _ in iter_outputs(program, stream, frozenset(), stats):
        pass
    elapsed = time.perf_counter() - started
    return elapsed, stats.get("derivations", 0)


def run_cell(
    scenario: str, window: int, rate: int, ticks: int, seed: int, engine: str
) -> BenchResult:
    program = scenario_program(scenario, window)
    batches = scenario_batches(scenario, rate, ticks, seed)
    if engine == "incremental":
        total, firings = run_incremental(program, batches)
    elif engine == "naive":
        total, firings = run_naive(program, batches)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    n_atoms = max(1, atoms_ingested(batches))
    return BenchResult(
        scenario, window, rate, engine, total, total / n_atoms * 1e6, firings
    )


def run_grid(
    scenario: str,
    windows: list[int],
    rates: list[int],
    ticks: int,
    seed: int,
    engines: list[str],
) -> list[BenchResult]:
    results = []
    for window in windows:
        for rate in rates:
            for engine in engines:
                results.append(run_cell(scenario, window, rate, ticks, seed, engine))
    return results
