"""Compare raw and balanced sampling when one class occupies ~5% of the
input volume: minority fraction under raw sampling, and the minority-class
accuracy of tree copies built from each, over a range of query budgets.

    python3 scripts/volume_imbalance.py --budgets 100 200 1000
"""
import argparse

import numpy as np

from copyforge import models as M
from copyforge.copying import CopyConfig, single_pass_copy
from copyforge.data import make_volume_imbalance
from copyforge.oracle import Oracle
from copyforge.sampling import SamplingDistribution, generate_raw, volume_report


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--budgets", type=int, nargs="+", default=[100, 200, 1000])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    train, test = make_volume_imbalance(1000, seed=0), make_volume_imbalance(1000, seed=1)
    oracle = Oracle(M.train_forest(train.X, train.y, seed=0), dim=2, n_classes=2)
    vr = volume_report(generate_raw(oracle, SamplingDistribution.uniform(2), 10_000, seed=0))
    print(f"raw minority fraction at N=10000: {vr.fractions[1]:.4f} (stderr bound {vr.stderr_bound:.4f})")
    minority = test.X[test.y == 1]
    print(f"{'budget':>7} {'raw':>8} {'balanced':>9}")
    for budget in args.budgets:
        acc = {}
        for balanced in (False, True):
            vals = [
                float(np.mean(single_pass_copy(oracle, CopyConfig("tree", n_samples=budget, balanced=balanced, seed=s)).model.predict(minority) == 1))
                for s in range(args.seeds)
            ]
            acc[balanced] = np.mean(vals)
        print(f"{budget:7d} {acc[False]:8.4f} {acc[True]:9.4f}")


if __name__ == "__main__":
    main()
