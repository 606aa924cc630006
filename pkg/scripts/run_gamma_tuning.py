"""Agreement-weight sweep at a low and a high reduction setting.

For each seed group, tunes gamma on synthetic dev instances at both settings
and reports the pair of best values; the optimum is expected to move up (or
stay) as the reduction rate grows.

    python3 scripts/run_gamma_tuning.py --groups 10 --out sweep.csv
"""

import argparse
import sys

from acpmbr.evaluation import desk_rate, rows_to_csv, synthetic_instance, tune_gamma
from acpmbr.factorization import FactorizerConfig
from acpmbr.sampling import derive_seed
from acpmbr.synth import SynthSpec

SETTINGS = {"low": (32, 2), "high": (1024, 64)}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--sigma-d", type=float, default=0.0)
    p.add_argument("--grid", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--groups", type=int, default=10)
    p.add_argument("--dev", type=int, default=2, help="dev instances per group")
    p.add_argument("--out", default="-")
    args = p.parse_args()

    grid = [float(g) for g in args.grid.split(",")]
    spec = SynthSpec(args.n, args.n, 8, correlation=args.rho)
    cfg = FactorizerConfig()
    rows, up = [], 0
    for group in range(args.groups):
        dev = [synthetic_instance(spec, args.sigma_d, derive_seed(20_000, group, k)) for k in range(args.dev)]
        best = {}
        for name, (r, rp) in SETTINGS.items():
            r, rp = desk_rate(r, args.n), desk_rate(rp, args.n)
            res = tune_gamma(dev, grid, cfg, r, rp, seeds=[group])
            best[name] = res.best_gamma
            rows.extend(res.rows)
        up += best["high"] >= best["low"]
        print(f"group {group}: best gamma low={best['low']} high={best['high']}", file=sys.stderr)
    print(f"high >= low in {up}/{args.groups} groups", file=sys.stderr)

    text = rows_to_csv(rows, ("gamma", "r", "r_prime", "seed", "mse"))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
