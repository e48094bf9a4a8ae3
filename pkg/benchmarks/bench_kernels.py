"""Time each compiled kernel against its numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats N] [--out results.json]
"""
import argparse
import json
import sys

from mmmap.harness.kernel_bench import run_kernel_bench


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    report = run_kernel_bench(args.repeats, args.seed)
    print(f"{'kernel':<20}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}{'max diff':>11}")
    for name, row in report["kernels"].items():
        nb = row.get("numba_s")
        print(f"{name:<20}{row['numpy_s'] * 1e3:>10.2f}"
              + (f"{nb * 1e3:>10.2f}{row['speedup']:>9.1f}{row['max_abs_diff']:>11.1e}" if nb else ""))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
