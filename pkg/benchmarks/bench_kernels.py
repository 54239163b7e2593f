"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--events N] [--repeat R]

Both backends receive identical inputs; the script also checks that their
outputs agree before reporting the speed-up.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from telesched import _backend, _pycore, sim


def _time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_simulate(n_events: int, repeat: int) -> list[tuple[str, float, float]]:
    rows = []
    for policy, buf in ((("lifo-po", "lifo-po"), 10), (("fifo-po", "fifo-po"), 10), (("fifo-po", "lifo-po"), 100)):
        spec = sim.PolicySpec.from_names(*policy)

        def fast():
            return sim.simulate(4.5, 5.0, buf, buf, spec, n_events, 1)

        def slow():
            return sim.simulate(4.5, 5.0, buf, buf, spec, n_events, 1, pure=True)

        if fast().to_csv() != slow().to_csv():
            raise SystemExit(f"backends disagree on {policy}")
        label = f"simulate {'/'.join(policy)} B={buf} n={n_events}"
        rows.append((label, _time(fast, repeat), _time(slow, repeat)))
    return rows


def bench_i1e(n: int, repeat: int) -> list[tuple[str, float, float]]:
    x = np.geomspace(1e-4, 1e4, n)

    def fast():
        return _backend.kernels.i1e_array(x)

    def slow():
        return np.array([_pycore.i1e(v) for v in x])

    if np.max(np.abs(fast() - slow())) > 1e-15:
        raise SystemExit("backends disagree on i1e")
    return [(f"i1e n={n}", _time(fast, repeat), _time(slow, repeat))]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--points", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _backend.COMPILED:
        print("compiled extension unavailable; nothing to compare", file=sys.stderr)
        return 1
    rows = bench_simulate(args.events, args.repeat) + bench_i1e(args.points, args.repeat)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'compiled s':>11}  {'pure s':>9}  {'speed-up':>8}")
    for name, fast, slow in rows:
        print(f"{name:<{width}}  {fast:11.4f}  {slow:9.4f}  {slow / fast:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
