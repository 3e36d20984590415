"""Compare the compiled kernels against the numpy fallback.

Each case is timed under both backends (best of ``--repeat`` runs) and the
outputs are checked for bit-identity before the timings are reported.

    python benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import logging
import timeit

import numpy as np

from dpzoo import kernels
from dpzoo.bench import make_weakly_convex_logistic
from dpzoo.estimator import SamplingKey, zo_gradient
from dpzoo.params import DirectionDistribution, sample_directions

logger = logging.getLogger("bench_kernels")


def cases(size):
    rng = np.random.default_rng(0)
    d = 64
    dist = DirectionDistribution.standard(d)
    M = rng.normal(size=(size, d))
    w = rng.normal(size=size)
    u = rng.uniform(size=size * 8)
    obj, data = make_weakly_convex_logistic(20, 512, 0.1, seed=0)
    batch = data.batch(np.arange(16))
    return {
        f"sample_directions {size}x{d}": lambda: sample_directions(dist, 1, 1, 1, np.arange(size)),
        f"ndtri {size * 8}": lambda: kernels.ndtri(u),
        f"seq_rowsum {size}x{d}": lambda: kernels.seq_rowsum(M),
        f"seq_accumulate {size}x{d}": lambda: kernels.seq_accumulate(w, M, None),
        "zo_gradient P=4096 m=16 d=20": lambda: zo_gradient(
            obj.loss, obj.init, batch, 4096, 1e-3, DirectionDistribution.standard(20), SamplingKey(3)),
    }


def run(size, repeat):
    backends = kernels.available_backends()
    if "cython" not in backends:
        logger.warning("compiled kernels not built; only the numpy fallback is timed")
    original = kernels.current_backend()
    timings, outputs = {}, {}
    try:
        for backend in backends:
            kernels.use_backend(backend)
            for name, fn in cases(size).items():
                outputs[backend, name] = np.asarray(fn())
                timings[backend, name] = min(timeit.repeat(fn, number=1, repeat=repeat))
    finally:
        kernels.use_backend(original)

    names = list(cases(size))
    header = f"{'case':<34}" + "".join(f"{b:>12}" for b in backends)
    print(header + ("     speedup  identical" if len(backends) == 2 else ""))
    for name in names:
        row = f"{name:<34}" + "".join(f"{timings[b, name] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            same = np.array_equal(outputs["cython", name].view(np.uint64),
                                  outputs["python", name].view(np.uint64))
            row += f"{timings['python', name] / timings['cython', name]:>11.1f}x  {same}"
        print(row)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=20_000, help="rows per kernel case")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    run(args.size, args.repeat)


if __name__ == "__main__":
    main()
