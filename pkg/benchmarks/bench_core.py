"""Compare the compiled and pure-Python backends on the hot kernels.

Usage: python benchmarks/bench_core.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from spotkit import _accel
from spotkit.rng import XorShift64Star


def _words(rng, n, lo=3, hi=12):
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    return ["".join(rng.choice(letters) for _ in range(rng.randint(lo, hi))) for _ in range(n)]


def _ring(n, cx, cy, r, jitter, rng):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    rad = r * (1 - jitter * rng.uniform_array(n))
    return np.stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)], axis=1)


def cases():
    rng = XorShift64Star(1)
    words = _words(rng, 200)
    lexicon = sorted(_words(rng, 20_000))
    queries = _words(rng, 20)
    cost = rng.uniform_array((100, 100))
    a = _ring(20, 0, 0, 1, 0.3, rng)
    b = _ring(20, 0.4, 0.2, 1, 0.3, rng)
    return {
        "levenshtein (200 pairs)":
            lambda m: [m.levenshtein(x, y) for x, y in zip(words, words[1:])],
        "nearest_word (20 x 20k words)":
            lambda m: [m.nearest_word(q, lexicon, (len(q) + 1) // 2) for q in queries],
        "solve_assignment (100 x 100)":
            lambda m: m.solve_assignment(cost),
        "intersection_area (20-gons, x100)":
            lambda m: [m.intersection_area(a, b) for _ in range(100)],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _accel.BACKENDS
    names = sorted(backends, reverse=True)       # python first
    print(f"{'kernel':<36}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases().items():
        times = {n: min(timeit.repeat(lambda: fn(backends[n]), number=1, repeat=args.repeat))
                 for n in names}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<36}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
              + f"{speed:>9.1f}x")
    if "cython" not in backends:
        print("compiled extension not built; only the Python backend was timed")


if __name__ == "__main__":
    main()
