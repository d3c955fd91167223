"""Compare the numba and pure-numpy kernels on simulation and estimation.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from qnet import _kernels
from qnet.estimators import init_state
from qnet.numerics import stream_key
from qnet.quality import demo_model


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    model = demo_model()
    t = model.topology
    sim_args = (np.uint64(stream_key(1)), 0, args.n, np.asarray(t.column_sizes), t.cumulative_weights(),
                *model.tables())
    paths, quality, _ = _kernels.simulate_numpy(*sim_args)

    def accumulate(fn):
        state = init_state(t)
        fn(paths, quality, *state.moments())

    cases = {"simulate": lambda fn: fn(*sim_args), "accumulate": accumulate}
    backends = {"numpy": "_numpy"}
    if _kernels.HAVE_NUMBA:
        backends["numba"] = "_numba"
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, call in cases.items():
        times = {}
        for backend, suffix in backends.items():
            fn = getattr(_kernels, f"{name}{suffix}")
            call(fn)  # compile / warm up
            times[backend] = min(timeit.repeat(lambda: call(fn), number=1, repeat=args.repeat))
        speedup = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        print(f"{name:<12}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends) + f"{speedup:>9.1f}x")


if __name__ == "__main__":
    main()
