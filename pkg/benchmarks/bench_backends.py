"""Compare the compiled pair-sum kernels with the NumPy fallback.

    python3 benchmarks/bench_backends.py --d 2 --sizes 8 16 32

Prints a timing table and the compiled-over-python speedups; exits 3 if any
direct convolution disagrees with the FFT route.
"""
import argparse
import sys

from choquard_lattice import _backend
from choquard_lattice.bench import format_table, run_benchmark


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--cache-dir", default=".cache")
    args = ap.parse_args(argv)

    backends = _backend.available()
    rows = run_benchmark(args.d, args.sizes, args.alpha, repeats=args.repeats, cache_dir=args.cache_dir, backends=backends)
    print(format_table(rows))
    if set(backends) >= {"compiled", "python"}:
        print("\nspeedup of compiled over python (direct conv, grad_sq, laplacian):")
        by = {(r.L, r.backend): r for r in rows}
        for L in args.sizes:
            c, p = by[(L, "compiled")], by[(L, "python")]
            print(f"  L={L:>3}: {p.direct_s / c.direct_s:6.1f}x {p.gradient_sq_s / c.gradient_sq_s:6.1f}x {p.laplacian_s / c.laplacian_s:6.1f}x")
    else:
        print(f"\nonly {backends} available; build the extension for a comparison")
    return 0 if all(r.agrees for r in rows) else 3


if __name__ == "__main__":
    sys.exit(main())
