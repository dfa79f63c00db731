"""Run one or more experiment configs and print their summary tables.

    python3 scripts/reproduce_table.py configs/iris.json configs/breast_cancer_wisc.json
"""
import argparse
import logging

from copyforge.experiment import ExperimentConfig, format_table, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--repetitions", type=int, default=None)
    ap.add_argument("--n-samples", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    rows = []
    for path in args.configs:
        cfg = ExperimentConfig.load(path)
        if args.repetitions:
            cfg.repetitions = args.repetitions
        if args.n_samples:
            cfg.n_samples = args.n_samples
        rows += run_experiment(cfg).rows
    print(format_table(rows))


if __name__ == "__main__":
    main()
