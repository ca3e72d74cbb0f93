"""Compare the numba-jitted and pure-numpy kernel paths.

Times the im2col/col2im hot kernels and a full model forward/backward pass
under both backends and prints a small table. The numba path pays a one-time
JIT compilation cost, which is excluded by a warmup call.

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from semcom.model import ModelConfig, MultiLevelCodec
from semcom.nn import backend
from semcom.training import mse_loss_grad


def time_call(fn, repeats):
    fn()  # warmup (JIT compile + cache touch)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(name, repeats):
    rng = np.random.default_rng(0)
    m, stride = 5, 2
    hp = wp = 128 + m - stride  # padded input for SAME-style stride-2 output
    oh = ow = 128 // stride
    xp = rng.standard_normal((8, hp, wp, 32)).astype(np.float32)
    cols = backend.im2col(xp, m, stride, oh, ow)
    results = {}
    results["im2col 8x128x128x32 k5 s2"] = time_call(
        lambda: backend.im2col(xp, m, stride, oh, ow), repeats
    )
    results["col2im (adjoint)"] = time_call(
        lambda: backend.col2im(cols, hp, wp, stride), repeats
    )
    return results


def bench_model(name, repeats):
    cfg = ModelConfig(t=8, l=4, e=8, o=16, h=64, w=64, seed=0)
    model = MultiLevelCodec(cfg)
    rng = np.random.default_rng(1)
    b = 8
    img = rng.random((b, 64, 64, 3), dtype=np.float32)
    p = rng.standard_normal((b, 2 * 64 * 64 // 64)).astype(np.float32)
    a = rng.random((b, 64, 64, 1), dtype=np.float32)
    f = rng.random((b, 64, 64, 4), dtype=np.float32)

    def step():
        out = model.forward(img, p, a, f)
        model.zero_grads()
        model.backward(mse_loss_grad(img, out).astype(np.float32))

    return {"model fwd+bwd b=8 64x64": time_call(step, repeats)}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    table = {}
    for name in ("numpy", "numba"):
        try:
            backend.set_backend(name)
        except Exception as exc:  # numba may be unavailable
            print(f"skipping backend {name}: {exc}")
            continue
        table[name] = {}
        table[name].update(bench_kernels(name, args.repeats))
        table[name].update(bench_model(name, args.repeats))

    rows = sorted({k for per in table.values() for k in per})
    width = max(len(r) for r in rows)
    header = f"{'case':<{width}}  " + "  ".join(f"{n:>12}" for n in table)
    print(header)
    print("-" * len(header))
    for row in rows:
        cells = "  ".join(
            f"{table[n].get(row, float('nan')) * 1e3:>10.2f}ms" for n in table
        )
        print(f"{row:<{width}}  {cells}")
    if len(table) == 2:
        fwd = "model fwd+bwd b=8 64x64"
        speedup = table["numpy"][fwd] / table["numba"][fwd]
        print(f"\nnumba speedup on model step: {speedup:.2f}x")


if __name__ == "__main__":
    main()
