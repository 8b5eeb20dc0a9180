"""Finite-difference check of the full model for every encoder variant."""
import argparse
import sys
import time

from sufisent.encoder import VARIANT_NAMES
from sufisent.gradcheck import check_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--e", type=int, default=6)
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tolerance", type=float, default=1e-5)
    args = ap.parse_args()

    ok = True
    t0 = time.perf_counter()
    for name in VARIANT_NAMES:
        t = time.perf_counter()
        r = check_pipeline(name, args.d, args.e, args.n, seed=args.seed, tolerance=args.tolerance)
        ok &= r.passed
        print(f"{name:18s} {'PASS' if r.passed else 'FAIL'}  {r.checked:5d} scalars  "
              f"worst {r.worst_error:.2e}  {time.perf_counter() - t:5.1f} s")
    print(f"total {time.perf_counter() - t0:.1f} s")
    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())
