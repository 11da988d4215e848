"""Achievable downlink rate of calibrated, perfect and uncalibrated beams across data SNR."""

import argparse

from hacal.channel import SystemConfig
from hacal.evaluation import ExperimentSpec, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    methods = ("HAC", "CRC", "Perfect", "None")
    cfg = SystemConfig(n_t=16, n_r=16, m_t=4, m_r=4, k_paths=2, pilot_plan=(4, 1, 15, 15))
    spec = ExperimentSpec(sweep_kind="rate-vs-data-snr", sweep_values=(0, 10, 20, 30, 40),
                          trials=args.trials, master_seed=args.seed, cfg=cfg, methods=methods, n_streams=2)
    table = run_experiment(spec)
    print(f"{'SNR dB':>7} " + " ".join(f"{m:>8}" for m in methods))
    for value in spec.sweep_values:
        rates = [table.lookup(value, m, "rate").mean for m in methods]
        print(f"{value:7.0f} " + " ".join(f"{r:8.2f}" for r in rates))
    if table.failures:
        print("failed runs:", table.failures)


if __name__ == "__main__":
    main()
