"""Compare the jitted and vectorized kernel backends on the hot paths.

Times matmul, row softmax, scaled attention, layer norm, the FFN block, and
a full encoder forward pass on every available backend, then prints a table
of best-of-N wall times and the speed ratio against the first backend.

Usage: python benchmarks/bench_kernels.py [--n 256] [--dim 128] [--repeats 5]
"""

import argparse
import time

import numpy as np

from pmtk import encoder, kernels


def best_of(repeats, fn):
    fn()  # warm any jit compilation and caches before timing
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def build_workloads(n, dim, seed):
    rng = np.random.default_rng(seed)
    square = rng.standard_normal((n, n)).astype(np.float32)
    a = rng.standard_normal((n, dim)).astype(np.float32)
    b = rng.standard_normal((dim, dim)).astype(np.float32)
    q = rng.standard_normal((n, dim)).astype(np.float32)
    k = rng.standard_normal((n, dim)).astype(np.float32)
    v = rng.standard_normal((n, dim)).astype(np.float32)
    gamma = np.ones(dim, dtype=np.float32)
    beta = np.zeros(dim, dtype=np.float32)
    w1 = (rng.standard_normal((dim, 2 * dim)) * 0.02).astype(np.float32)
    w2 = (rng.standard_normal((2 * dim, dim)) * 0.02).astype(np.float32)

    cfg = encoder.EncoderConfig(image_size=32, patch_size=4, dim=dim,
                                heads=4, layers=4, ffn_dim=2 * dim, seed=seed)
    weights = encoder.init_weights(cfg)
    image = encoder.synthetic_image("noise", cfg)

    return {
        "matmul": lambda: kernels.matmul(a, b),
        "softmax_rows": lambda: kernels.softmax_rows(square),
        "attention": lambda: kernels.attention(q, k, v, dim),
        "layer_norm": lambda: kernels.layer_norm(a, gamma, beta),
        "ffn": lambda: kernels.ffn(a, w1, w2),
        "encoder_forward": lambda: encoder.forward(image, weights, cfg),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=256, help="rows per matrix")
    parser.add_argument("--dim", type=int, default=128, help="feature width")
    parser.add_argument("--repeats", type=int, default=5, help="timed repeats")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = kernels.available_backends()
    workloads = build_workloads(args.n, args.dim, args.seed)

    times = {}
    previous = kernels.active_backend()
    try:
        for backend in backends:
            kernels.use_backend(backend)
            times[backend] = {
                name: best_of(args.repeats, fn) for name, fn in workloads.items()
            }
    finally:
        kernels.use_backend(previous)

    header = f"{'kernel':18}" + "".join(f"{b + ' (ms)':>16}" for b in backends)
    if len(backends) > 1:
        header += f"{backends[0] + '/' + backends[1]:>16}"
    print(f"n={args.n} dim={args.dim} best of {args.repeats}")
    print(header)
    for name in workloads:
        row = f"{name:18}"
        for backend in backends:
            row += f"{times[backend][name] * 1e3:>16.6g}"
        if len(backends) > 1:
            ratio = times[backends[0]][name] / times[backends[1]][name]
            row += f"{ratio:>16.6g}"
        print(row)


if __name__ == "__main__":
    main()
