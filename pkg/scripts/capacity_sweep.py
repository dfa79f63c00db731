"""Sweep the RBF kernel width of a copy of a moons classifier and print
the trace for both monitors (training points and held-out synthetic split).

    python3 scripts/capacity_sweep.py --seeds 0 1 2
"""
import argparse

from copyforge import models as M
from copyforge.copying import CapacityConfig, capacity_sweep
from copyforge.data import make_moons, stratified_split
from copyforge.oracle import Oracle
from copyforge.sampling import SamplingDistribution, generate_raw


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--n-samples", type=int, default=20_000)
    ap.add_argument("--epsilon", type=float, default=1e-4)
    args = ap.parse_args()

    train, test = stratified_split(make_moons(2000, 0.1, seed=0), 0.2, seed=0)
    oracle = Oracle(M.train_rbf(train.X, train.y, gamma=1.0, seed=0), dim=2, n_classes=2)
    print(f"original holdout accuracy {float((oracle.query(test.X) == test.y).mean()):.4f}")
    for seed in args.seeds:
        synth = generate_raw(oracle, SamplingDistribution.uniform(2), args.n_samples, seed=seed)
        for monitor in ("validation", "train"):
            cap = CapacityConfig.log_grid(1e3, 1e-2, 20, epsilon=args.epsilon, monitor=monitor)
            res = capacity_sweep(oracle, synth, cap, "rbf", seed=0, holdout=(test.X, test.y))
            print(f"\nseed {seed}, monitor {monitor}: selected gamma {res.selected:.4g}")
            print(f"{'gamma':>10} {'r_train':>9} {'r_val':>9} {'r_hold':>9}  feasible")
            for p in res.trace:
                print(f"{p.capacity:10.4g} {p.r_train:9.5f} {p.r_validation:9.5f} {p.r_holdout:9.5f}  {p.feasible}")


if __name__ == "__main__":
    main()
