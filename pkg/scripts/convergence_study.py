"""Manufactured-solution error under dt halving for the rough coefficient."""

import argparse

import numpy as np

from logzyg.coeff import make_coefficient
from logzyg.config import ExperimentConfig, load_config
from logzyg.grid import PeriodicGrid
from logzyg.harness import MANUFACTURED
from logzyg.solver import manufactured_problem, solve


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dts", type=float, nargs="+", default=[0.02, 0.01, 0.005, 0.0025])
    args = p.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    g = PeriodicGrid(args.n)
    a = make_coefficient(cfg.solver_spec(args.n), estimate=False)
    lo = cfg.lower_order(args.n)
    for ms in MANUFACTURED:
        print(f"k={ms.k} w={ms.w}")
        prev = None
        for dt in args.dts:
            tr = solve(manufactured_problem(a, g, args.T, dt=dt, lower=lo, ms=ms), n_out=1)
            err = float(np.max(np.abs(tr.u[-1] - ms.u(args.T, g.x))))
            ratio = f"{prev / err:8.2f}" if prev else "       -"
            print(f"  dt={dt:<8g} err={err:.3e} ratio={ratio}")
            prev = err


if __name__ == "__main__":
    main()
