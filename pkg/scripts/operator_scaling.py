#!/usr/bin/env python3
"""Cost scaling of the operators and the full solve across grid sizes.

Every operator in the chain is a fixed number of flops per grid sample,
so the whole reconstruction is O(N).  This driver counts actual flops
(and wall time) from p_min to p_max and prints flops per sample, which
should be flat in p: 6 - 14/N for each fractal pass, 2 per sample plus
2 per slope for the sensor, about 34 per PCG iteration for the full
normal-equations operator.

    python3 scripts/operator_scaling.py --p-min 5 --p-max 8 --out results/bench.csv
"""

import argparse
from collections import defaultdict
from pathlib import Path

from fracwave import fileio
from fracwave.harness import run_bench


def parse_args(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p-min", type=int, default=5)
    ap.add_argument("--p-max", type=int, default=8)
    ap.add_argument("--r0", type=float, default=1.0)
    ap.add_argument("--noise-std", type=float, default=1.0)
    ap.add_argument("--max-iter", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/bench.csv")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    ps = list(range(args.p_min, args.p_max + 1))
    rows = run_bench(ps, r0=args.r0, noise_std=args.noise_std,
                     iterations=args.max_iter, seed=args.seed)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"p": ",".join(map(str, ps)), "r0": args.r0,
            "noise_std": args.noise_std, "max_iter": args.max_iter}
    fileio.write_bench_csv(out, rows, meta)

    print(f"{'p':>3} {'n':>5} {'op':<28} {'flops':>12} {'flops/sample':>13} {'us/sample':>10}")
    per_sample = defaultdict(list)
    for row in rows:
        fps = row.flops / row.samples
        print(f"{row.p:>3} {row.n:>5} {row.op:<28} {row.flops:>12d} "
              f"{fps:>13.2f} {1e6 * row.seconds / row.samples:>10.3f}")
        per_sample[row.op].append(fps)

    print("\nflops per sample across grid sizes (flat means linear cost):")
    for op, values in per_sample.items():
        if values[0] == 0:
            continue  # build steps are timed, not counted
        spread = max(values) / min(values)
        print(f"  {op:<28} {min(values):>9.2f} .. {max(values):>9.2f}  (ratio {spread:.3f})")

    print(f"\nwrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
