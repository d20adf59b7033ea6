"""Compare the compiled kernel lane against the NumPy reference lane on
workload-shaped inputs. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes mirror real use: band convolutions see a batch of flattened 9x9
windows over a 103-band axis, plane convolutions see merged-depth windows,
and the message pass sees a 96x96 inference tile.
"""

import argparse
import time

import numpy as np

from hsigancrf._kernels import reference
from hsigancrf import _kernels as active


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def cases(rng):
    # first discriminator layer: 50 windows of 9x9 pixels, 103 bands, 24 maps
    x_band = rng.standard_normal((50 * 81, 103, 1)).astype(np.float64)
    k_band = rng.standard_normal((7, 1, 24))
    out_band = reference.band_conv(x_band, k_band, 2, 0)
    g_band = rng.standard_normal(out_band.shape)

    # merged-depth spatial stage: 50 windows, 9x9, 49 channels -> 24
    x_plane = rng.standard_normal((50, 9, 9, 49))
    k_plane = rng.standard_normal((3, 3, 49, 24))
    out_plane = reference.plane_conv(x_plane, k_plane, 1, 1)
    g_plane = rng.standard_normal(out_plane.shape)

    # one inference tile of the pairwise message pass
    n_pix = 96 * 96
    pos = rng.random((n_pix, 2)) * 96
    app = rng.standard_normal((n_pix, 3))
    q = rng.random((n_pix, 4))
    q /= q.sum(axis=1, keepdims=True)

    kern_t = np.ascontiguousarray(k_band.transpose(0, 2, 1))
    plane_t = np.ascontiguousarray(k_plane.transpose(0, 1, 3, 2))
    return [
        ("band_conv", lambda m: m.band_conv(x_band, k_band, 2, 0)),
        ("band_scatter", lambda m: m.band_scatter(g_band, kern_t, 2, 0, 103)),
        ("band_kernel_grad",
         lambda m: m.band_kernel_grad(x_band, g_band, 7, 2, 0)),
        ("plane_conv", lambda m: m.plane_conv(x_plane, k_plane, 1, 1)),
        ("plane_scatter",
         lambda m: m.plane_scatter(g_plane, plane_t, 1, 1, 9, 9)),
        ("plane_kernel_grad",
         lambda m: m.plane_kernel_grad(x_plane, g_plane, 3, 3, 1, 1)),
        ("crf_message_pass",
         lambda m: m.crf_message_pass(pos, app, q, 5.0, 0.5)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions; best of N is reported")
    args = parser.parse_args()

    if active.kernel_backend() != "compiled":
        print("compiled lane not active (HSIGAN_KERNELS or missing build); "
              "benchmark needs both lanes")
        return 1

    rng = np.random.default_rng(0)
    rows = []
    for name, call in cases(rng):
        ref = call(reference)
        fast = call(active)
        if not isinstance(ref, tuple):
            ref, fast = (ref,), (fast,)
        worst = max(float(np.abs(np.asarray(r) - np.asarray(f)).max())
                    for r, f in zip(ref, fast))
        t_ref = timeit(lambda: call(reference), args.repeat)
        t_fast = timeit(lambda: call(active), args.repeat)
        rows.append((name, t_ref, t_fast, t_ref / t_fast, worst))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'python':>10}  {'compiled':>10}  "
          f"{'speedup':>8}  {'max |diff|':>10}")
    for name, t_ref, t_fast, speedup, worst in rows:
        print(f"{name:<{width}}  {t_ref * 1e3:>8.2f}ms  {t_fast * 1e3:>8.2f}ms  "
              f"{speedup:>7.1f}x  {worst:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
