#!/usr/bin/env python3
"""Sweep fuzz seeds through the engine-versus-oracle harness and report
divergences; development aid for hunting semantics bugs.

Usage: fuzz_sweep.py [LO HI] (default 0 1000)
"""

import sys
import time

from larstream.fuzz import check_instance, random_instance


def main() -> int:
    lo, hi = 0, 1000
    if len(sys.argv) == 3:
        lo, hi = int(sys.argv[1]), int(sys.argv[2])
    started = time.perf_counter()
    failures = []
    for seed in range(lo, hi):
        try:
            divergence = check_instance(random_instance(seed))
        except Exception as exc:  # noqa: BLE001 - report and keep sweeping
            failures.append((seed, f"exception: {exc!r}"))
            continue
        if divergence is not None:
            t, got, want = divergence
            failures.append(
                (
                    seed,
                    f"tick {t}: engine={sorted(map(str, got))} oracle={sorted(map(str, want))}",
                )
            )
    elapsed = time.perf_counter() - started
    print(f"{hi - lo} seeds in {elapsed:.1f}s, {len(failures)} failures")
    for seed, msg in failures[:25]:
        print(f"  seed {seed}: {msg}")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
