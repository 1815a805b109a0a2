"""Exact uniform-stability margin over a two-piece family of rays.

Sweeps g = max(a x1, b (1 - x1)) over a rational grid of slopes,
computes DF and the minimum norm exactly, and reports the smallest
ratio DF / norm seen.  A positive floor over the family is evidence of
uniform stability along it; every row is exact rational arithmetic so
the margin is a certificate for the sampled rays, not an estimate.

    python3 scripts/stability_margin.py --denom 4 --span 3 --dim 2
"""
import argparse
from fractions import Fraction

from kstab import donaldson_futaki, make_config, minimum_norm, normalize
from kstab.polytope import box, interval

F = Fraction


def family(dim, span, denom):
    """Two-piece convex rays max(a x1, b (1 - x1)) with a, b > 0."""
    base = interval(0, 1) if dim == 1 else box(dim)
    for i in range(1, span * denom + 1):
        for j in range(1, span * denom + 1):
            a, b = F(i, denom), F(j, denom)
            grad_a = (a,) + (F(0),) * (dim - 1)
            grad_b = (-b,) + (F(0),) * (dim - 1)
            yield a, b, make_config(base, [(grad_a, F(0)), (grad_b, b)])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--span", type=int, default=3)
    ap.add_argument("--denom", type=int, default=4)
    ap.add_argument("--dim", type=int, default=1, choices=(1, 2))
    ap.add_argument("--table", action="store_true",
                    help="print every sampled ray, not just the margin")
    args = ap.parse_args(argv)

    worst = None
    count = 0
    for a, b, cfg in family(args.dim, args.span, args.denom):
        ncfg = normalize(cfg, "min_zero")
        df, norm = donaldson_futaki(ncfg), minimum_norm(ncfg)
        ratio = df / norm
        count += 1
        if args.table:
            print(f"a={a} b={b} df={df} norm={norm} ratio={ratio}")
        if worst is None or ratio < worst[0]:
            worst = (ratio, a, b, df, norm)
    ratio, a, b, df, norm = worst
    print(f"{count} rays sampled, dim={args.dim}")
    print(f"margin inf DF/norm = {ratio} (= {float(ratio):.6f}) "
          f"at a={a}, b={b} (df={df}, norm={norm})")
    return 0 if ratio > 0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
