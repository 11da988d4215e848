"""Calibrate the downlink of one random scenario and report the estimate quality."""

import argparse

import numpy as np

from hacal.airlink import effective_channel
from hacal.channel import LinkDirection, SystemConfig, sample_channel, sample_mismatch
from hacal.evaluation import nmse
from hacal.hac import SolverSettings, calibrate_link, reconstruct_effective_channel
from hacal.mathkit import collinearity_defect
from hacal.seeding import substream


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--cal-snr-db", type=float, default=30.0)
    args = parser.parse_args()

    cfg = SystemConfig(pilot_power=10 ** (args.cal_snr_db / 10))
    ch = sample_channel(cfg, substream(args.seed, "channel"))
    mm = sample_mismatch(cfg, substream(args.seed, "mismatch"))
    cal, _ = calibrate_link(LinkDirection.DOWNLINK, cfg, ch, mm, SolverSettings(),
                            substream(args.seed, "beamformers"), substream(args.seed, "noise"),
                            substream(args.seed, "solver"))

    truth = effective_channel(LinkDirection.DOWNLINK, cfg, ch, mm)
    estimate = reconstruct_effective_channel(cal.analog, cfg)
    trace = np.asarray(cal.analog.objective_trace)
    print(f"array {cfg.n_t}x{cfg.n_r}, {cfg.m_t} chains, {cfg.k_paths} paths, cal SNR {args.cal_snr_db:g} dB")
    print(f"outer iterations       {cal.analog.iterations} (converged: {cal.analog.converged})")
    print(f"residual first/last    {trace[0]:.3e} / {trace[-1]:.3e}")
    print(f"u1 collinearity defect {collinearity_defect(cal.digital.u1_hat, mm.u1):.3e}")
    print(f"t1 collinearity defect {collinearity_defect(cal.digital.t1_hat, mm.t1):.3e}")
    print(f"effective channel NMSE {nmse(estimate, truth, align=True):.3e}")
    print(f"true AoD (deg)         {np.sort(np.degrees(ch.thetas))}")
    print(f"estimated AoD (deg)    {np.sort(np.degrees(cal.analog.theta_hat))}")


if __name__ == "__main__":
    main()
