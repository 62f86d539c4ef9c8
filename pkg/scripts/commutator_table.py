"""Commutator norms ||[phi_nu, f]|| against nu for the principal and lower-order fields."""

import argparse

import numpy as np

from logzyg.commutator import verify_comm_decay
from logzyg.config import ExperimentConfig, load_config
from logzyg.grid import PeriodicGrid
from logzyg.harness import commutator_fields
from logzyg.lp import build_profile


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--nus", type=int, nargs=2, default=[2, 8])
    args = p.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    prof = build_profile(PeriodicGrid(args.n))
    nus = range(args.nus[0], min(args.nus[1], prof.nu_max) + 1)
    a, _, fields = commutator_fields(cfg)
    extra = {"cusp": (lambda x: np.abs(2 * np.sin(x / 2)) ** 0.5, "hoelder(0.5)")}
    for name, (f, kind) in {**fields, **extra}.items():
        if name == "k":
            rep = verify_comm_decay(f, kind, nus, prof, a.sup_norm, a.C0_est)
        else:
            rep = verify_comm_decay(f, kind, nus, prof)
        print(f"{name} ({kind}) slope={rep.slope:.3f}")
        for nu, v in zip(rep.nus, rep.norms):
            print(f"  nu={nu:2d} norm={v:.4e} log2={np.log2(v) if v > 0 else -np.inf:8.3f}")


if __name__ == "__main__":
    main()
