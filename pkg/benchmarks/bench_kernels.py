"""Time each numeric kernel under numba and under plain numpy.

Both backends are called directly, so one process compares them regardless
of BIDESP_NUMBA. Results are checked for agreement before timing.

    python benchmarks/bench_kernels.py [--repeat 5] [--seed 0]
"""

import argparse
import time

import numpy as np

from bidesp import _kernels as K
from bidesp.distance import _csr, compute_vm
from bidesp.network import NetworkGenConfig, generate


def best_of(fn, args, repeat):
    fn(*args)  # warm up (and compile, for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(seed):
    rng = np.random.default_rng(seed)
    net = generate(NetworkGenConfig(layers=12, molecules_per_layer=42, seed=seed,
                                    max_producers_per_molecule=5))
    vm = compute_vm(net, "unit")
    best = np.array([vm[m] for m in net.ids])
    yield "through_costs", (len(net), best) + _csr(net, "unit"), \
        K.through_costs_numpy, K.through_costs_numba

    data = (rng.random((10_000, 16)) < 0.5).astype(np.uint8)
    cent = (rng.random((256, 16)) < 0.5).astype(np.uint8)
    yield "hamming_assign", (data, cent), K.hamming_assign_numpy, K.hamming_assign_numba

    mat = (rng.random((10_000, 256)) < 0.5).astype(np.float64)
    q = (rng.random(256) < 0.5).astype(np.float64)
    yield "cosine_scores", (mat, mat.sum(axis=1), q), K.cosine_scores_numpy, \
        K.cosine_scores_numba

    codes = rng.integers(0, 256, size=(10_000, 16)).astype(np.int64)
    luts = rng.random((16, 256))
    yield "adc_dots", (codes, luts), K.adc_dots_numpy, K.adc_dots_numba


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=0, atol=1e-9, equal_nan=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not K._HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':16s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, a, f_np, f_nb in cases(args.seed):
        if not same(f_np(*a), f_nb(*a)):
            raise SystemExit(f"{name}: backends disagree")
        t_np = best_of(f_np, a, args.repeat)
        t_nb = best_of(f_nb, a, args.repeat)
        print(f"{name:16s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
