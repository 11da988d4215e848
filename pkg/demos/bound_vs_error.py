"""Analog-chain error of the oracle-angle solver next to its lower bound, across calibration SNR."""

import argparse

from hacal.channel import SystemConfig
from hacal.evaluation import ExperimentSpec, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = SystemConfig(n_t=16, n_r=16, m_t=4, m_r=4, k_paths=2, pilot_plan=(4, 1, 15, 15))
    spec = ExperimentSpec(sweep_kind="cal-snr", sweep_values=(0, 10, 20, 30, 40), trials=args.trials,
                          master_seed=args.seed, cfg=cfg, methods=("OracleHAC",))
    table = run_experiment(spec)
    print(f"{'SNR dB':>7} {'NMSE t2':>10} {'bound t2':>10} {'NMSE u2':>10} {'bound u2':>10}")
    for value in spec.sweep_values:
        cells = [table.lookup(value, method, metric).mean
                 for metric in ("nmse_t2_aligned", "nmse_u2_aligned")
                 for method in ("OracleHAC", "CRLB")]
        print(f"{value:7.0f} " + " ".join(f"{c:10.3e}" for c in cells))


if __name__ == "__main__":
    main()
