"""Cross-check the checker and the monitors against independent oracles on
random instances and report disagreement counts.

    python scripts/oracle_sweep.py [--n 1000] [--seed 0]

Checker: verify vs bounded brute force with k = |P| * max monitor size + 1.
Monitor: error reachability vs the tableau bad-prefix oracle.
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from helpers import EXECS, SENSORS, random_fsa, random_spec, random_word, ts_over  # noqa: E402

from safeplan.automaton import product  # noqa: E402
from safeplan.checker import brute_force_check, verify_product  # noqa: E402
from safeplan.semantics import is_bad_prefix  # noqa: E402
from safeplan.spec_logic import build_monitor  # noqa: E402


def checker_sweep(rng: random.Random, n: int) -> tuple[int, int]:
    disagree = fails = 0
    for _ in range(n):
        sensors = SENSORS[: rng.randint(1, 2)]
        execs = EXECS[: rng.randint(1, 2)]
        p = product(random_fsa(rng, sensors, execs), ts_over(sensors))
        f = random_spec(rng, list(sensors + execs))
        v = verify_product(p, f, known_props=sensors + execs)
        k = len(p) * max(len(build_monitor(c)) for c in f.clauses()) + 1
        disagree += v.result != brute_force_check(p, f, k).result
        fails += not v.passed
    return disagree, fails


def monitor_sweep(rng: random.Random, n: int) -> tuple[int, int]:
    disagree = bad = 0
    for _ in range(n):
        props = ["a", "b", "c"][: rng.randint(1, 3)]
        f = random_spec(rng, props)
        word = random_word(rng, props, 6)
        m = build_monitor(f)
        want = is_bad_prefix(f, word)
        disagree += m.is_error(m.run(word)) != want
        bad += want
    return disagree, bad


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    t0 = time.perf_counter()
    d, f = checker_sweep(rng, args.n)
    print(f"checker: {args.n} instances, {f} fail verdicts, {d} disagreements ({time.perf_counter() - t0:.1f}s)")
    t0 = time.perf_counter()
    d, b = monitor_sweep(rng, args.n)
    print(f"monitor: {args.n} pairs, {b} bad prefixes, {d} disagreements ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
