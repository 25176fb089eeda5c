"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on identical inputs under every available backend; the
table reports the best wall time and the maximum relative deviation from the
pure-Python result.
"""

import argparse
import timeit

import numpy as np

from ncve.kernels import available_backends


def cases(rng):
    mu = rng.uniform(0, 30, 24) + 1j * rng.normal(size=24)
    coefs = np.stack([np.diag([0.5, -0.3]), rng.normal(size=(2, 2))]).astype(complex)
    z = rng.normal(size=4000) + 1j * rng.normal(size=4000)
    t = np.linspace(0, 8, 20000)
    return {
        "phi1": lambda k: k.phi1(z),
        "gram_block(24x24)": lambda k: k.gram_block(mu, mu, 8.0),
        "expsum_eval(24 terms, 2e4 pts)": lambda k: k.expsum_eval(mu, np.ones(24, complex), t),
        "char_det_batch(2x2, 4e3 pts)": lambda k: k.char_det_batch(coefs, 1.0, z),
        "segment_arg_change": lambda k: k.segment_arg_change(coefs, 1.0, -0.25 - 4j, -0.25 + 4j),
    }


def _rel(a, b):
    a = np.asarray(a[0] if isinstance(a, tuple) else a, dtype=complex)
    b = np.asarray(b[0] if isinstance(b, tuple) else b, dtype=complex)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = available_backends()
    table = cases(np.random.default_rng(0))
    print(f"{'kernel':34s}" + "".join(f"{name:>12s}" for name in backends) + f"{'speedup':>10s}{'max rel dev':>14s}")
    for label, fn in table.items():
        times = {name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
                 for name, mod in backends.items()}
        ref = fn(backends["python"])
        dev = max(_rel(fn(mod), ref) for mod in backends.values())
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:34s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in backends)
              + f"{speed:9.1f}x{dev:14.2e}")


if __name__ == "__main__":
    main()
