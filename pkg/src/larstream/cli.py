"""Command-line front end: run programs over streams, cross-check the two
engines, and benchmark incremental against naive evaluation.

Exit codes: 0 success (check: engines identical), 1 check divergence,
2 parse or usage error, 3 runtime contract violation.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from larstream import bench
from larstream.engine import Engine, EvaluationError
from larstream.model import Atom, Stream
from larstream.oracle import iter_outputs
from larstream.parser import (
    ParseError,
    Program,
    parse_background,
    parse_program,
    parse_stream,
    tokenize,
    _ProgramParser,
    _TokenStream,
)


def _parse_consts(pairs: list[str] | None) -> dict[str, int]:
    consts: dict[str, int] = {}
    for pair in pairs or []:
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise ParseError(f"expected --const name=value, got {pair!r}")
        try:
            consts[name] = int(value)
        except ValueError as exc:
            raise ParseError(f"constant {name!r} needs an integer, got {value!r}") from exc
    return consts


def _load_program(args) -> Program:
    text = Path(args.program).read_text(encoding="utf-8")
    return parse_program(text, _parse_consts(args.const))


def _load_background(args) -> frozenset[Atom]:
    if not getattr(args, "background", None):
        return frozenset()
    return parse_background(Path(args.background).read_text(encoding="utf-8"))


def _warn_stream_overlap(program: Program, stream: Stream) -> None:
    clash = stream.predicates() & program.intensional
    if clash:
        print(
            "warning: stream feeds intensional predicates: " + ", ".join(sorted(clash)),
            file=sys.stderr,
        )


def _format_tick(t: int, atoms, fmt: str, writer) -> None:
    names = sorted(str(a) for a in atoms)
    if fmt == "csv":
        for name in names:
            writer.writerow([t, name])
    else:
        print(f"{t} -> {', '.join(names)}" if names else f"{t} ->")


def _print_telemetry(engine: Engine, t: int | None = None) -> None:
    snap = engine.telemetry()
    prefix = f"tick={t} " if t is not None else "total "
    print(
        f"telemetry: {prefix}firings={snap.firings} grd_calls={snap.grd_calls} "
        f"expirations={snap.expirations} db_size={snap.db_size}",
        file=sys.stderr,
    )


def _parse_stdin_line(line: str) -> tuple[int, list[Atom]] | None:
    stripped = line.split("%", 1)[0].strip()
    if not stripped:
        return None
    tokens = _TokenStream(tokenize(stripped))
    tick_tok = tokens.expect("INT")
    parser = _ProgramParser(tokens, {})
    atoms = []
    while not tokens.at("EOF"):
        atom = parser.parse_atom()
        if not atom.is_ground():
            raise ParseError(f"stream atom {atom} contains a variable")
        atoms.append(atom)
    return int(tick_tok.value), atoms


def _iter_stdin_ticks(lines):
    """Group consecutive equal-tick lines; a tick is complete once a later
    tick (or end of input) is seen."""
    pending_tick: int | None = None
    pending: list[Atom] = []
    for line in lines:
        parsed = _parse_stdin_line(line)
        if parsed is None:
            continue
        tick, atoms = parsed
        if pending_tick is None:
            pending_tick, pending = tick, list(atoms)
        elif tick == pending_tick:
            pending.extend(atoms)
        else:
            if tick < pending_tick:
                raise ParseError(f"tick {tick} decreases below {pending_tick}")
            yield pending_tick, pending
            pending_tick, pending = tick, list(atoms)
    if pending_tick is not None:
        yield pending_tick, pending


def cmd_run(args) -> int:
    program = _load_program(args)
    background = _load_background(args)
    writer = csv.writer(sys.stdout) if args.format == "csv" else None
    if writer is not None:
        writer.writerow(["tick", "atom"])

    if args.stdin:
        if args.engine == "naive":
            # buffered mode: the naive engine recomputes over prefixes and
            # needs the whole stream first
            events = [
                (t, atom)
                for t, atoms in _iter_stdin_ticks(sys.stdin)
                for atom in atoms
            ]
            if not events:
                return 0
            from larstream.model import Timeline

            stream = Stream(Timeline(events[0][0], events[-1][0]), events)
            _warn_stream_overlap(program, stream)
            for t, atoms in iter_outputs(program, stream, background):
                _format_tick(t, atoms, args.format, writer)
            return 0
        engine = Engine(program, background, gc=args.gc)
        for tick, atoms in _iter_stdin_ticks(sys.stdin):
            current = engine.current_tick()
            start = tick if current is None else current + 1
            for t in range(start, tick + 1):
                out = engine.tick(t, atoms if t == tick else ())
                _format_tick(t, out, args.format, writer)
                if args.telemetry:
                    _print_telemetry(engine, t)
        return 0

    stream = parse_stream(Path(args.stream).read_text(encoding="utf-8"))
    _warn_stream_overlap(program, stream)
    if args.engine == "naive":
        for t, atoms in iter_outputs(program, stream, background):
            _format_tick(t, atoms, args.format, writer)
        return 0
    engine = Engine(
        program, background, timeline_start=stream.timeline.start, gc=args.gc
    )
    for t in stream.timeline:
        out = engine.tick(t, stream.atoms_at(t))
        _format_tick(t, out, args.format, writer)
        if args.telemetry:
            _print_telemetry(engine, t)
    if args.telemetry:
        _print_telemetry(engine)
    return 0


def cmd_check(args) -> int:
    if args.fuzz:
        from larstream.fuzz import check_instance, random_instance

        lo, sep, hi = args.fuzz.partition(":")
        seeds = range(int(lo), int(hi)) if sep else range(0, int(lo))
        failures = 0
        for seed in seeds:
            divergence = check_instance(random_instance(seed))
            if divergence is not None:
                t, got, want = divergence
                print(f"seed {seed} diverges at tick {t}:")
                print(f"  incremental: {sorted(map(str, got))}")
                print(f"  naive:       {sorted(map(str, want))}")
                failures += 1
        print(f"checked {len(seeds)} seeds, {failures} divergent")
        return 1 if failures else 0

    program = _load_program(args)
    background = _load_background(args)
    stream = parse_stream(Path(args.stream).read_text(encoding="utf-8"))
    _warn_stream_overlap(program, stream)

    engine = Engine(
        program, background, timeline_start=stream.timeline.start, gc=args.gc
    )
    for t, naive_atoms in iter_outputs(program, stream, background):
        incremental_atoms = engine.tick(t, stream.atoms_at(t))
        if incremental_atoms != naive_atoms:
            print(f"engines diverge at tick {t}:")
            print(f"  incremental: {sorted(map(str, incremental_atoms))}")
            print(f"  naive:       {sorted(map(str, naive_atoms))}")
            return 1
    print(f"identical output streams over {len(stream.timeline)} ticks")
    return 0


def cmd_bench(args) -> int:
    windows = [int(w) for w in args.windows.split(",") if w]
    rates = [int(r) for r in args.rates.split(",") if r]
    engines = ["incremental", "naive"] if args.engine == "both" else [args.engine]
    results = bench.run_grid(
        args.scenario, windows, rates, args.ticks, args.seed, engines
    )
    writer = csv.writer(sys.stdout)
    writer.writerow(
        ["scenario", "window", "rate", "engine", "total_s", "per_atom_us", "firings"]
    )
    for result in results:
        writer.writerow(result.row())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="larstream",
        description="Evaluate window-rule programs over timestamped atom streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, stream_required: bool):
        p.add_argument("--program", required=True, help="program file (.lars)")
        if stream_required:
            group = p.add_mutually_exclusive_group(required=True)
            group.add_argument("--stream", help="stream file (.stream)")
            group.add_argument(
                "--stdin", action="store_true", help="read stream lines from stdin"
            )
        else:
            p.add_argument("--stream", help="stream file (.stream)")
        p.add_argument("--background", help="static background atoms file")
        p.add_argument(
            "--const",
            action="append",
            metavar="NAME=VALUE",
            help="bind a named integer constant (repeatable)",
        )
        p.add_argument("--gc", action="store_true", help="drop data older than the largest window")

    run_p = sub.add_parser("run", help="evaluate a program over a stream")
    common(run_p, stream_required=True)
    run_p.add_argument("--engine", choices=["incremental", "naive"], default="incremental")
    run_p.add_argument("--format", choices=["text", "csv"], default="text")
    run_p.add_argument("--telemetry", action="store_true", help="print counters to stderr")
    run_p.set_defaults(func=cmd_run)

    check_p = sub.add_parser("check", help="diff incremental against naive evaluation")
    check_p.add_argument("--program", help="program file (.lars)")
    check_p.add_argument("--stream", help="stream file (.stream)")
    check_p.add_argument("--background", help="static background atoms file")
    check_p.add_argument("--const", action="append", metavar="NAME=VALUE")
    check_p.add_argument("--gc", action="store_true")
    check_p.add_argument(
        "--fuzz",
        metavar="LO:HI",
        help="check seeded random instances instead of files",
    )
    check_p.set_defaults(func=cmd_check)

    bench_p = sub.add_parser("bench", help="time both engines on synthetic scenarios")
    bench_p.add_argument("--scenario", choices=bench.SCENARIOS, required=True)
    bench_p.add_argument("--windows", default="10", help="comma-separated window sizes")
    bench_p.add_argument("--rates", default="100", help="comma-separated atoms per tick")
    bench_p.add_argument("--ticks", type=int, default=500)
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument(
        "--engine", choices=["both", "incremental", "naive"], default="both"
    )
    bench_p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "check" and not args.fuzz:
        if not args.program or not args.stream:
            parser.error("check requires --program and --stream, or --fuzz")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EvaluationError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
