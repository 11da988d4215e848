"""Command-line entry point.

Every command is a pure function of the config file, the seed and its
flags: outputs carry no timestamps and JSON keys are sorted, so two runs
with the same inputs write byte-identical files.

Exit status: 0 on success, 1 on invalid input (config, pilot lengths,
arguments), 2 when a solver fails.
"""

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys

from . import __version__
from .airlink import effective_channel
from .channel import LinkDirection, sample_channel, sample_mismatch
from .config import load_config
from .crc import overhead_report
from .crlb import crlb_full
from .errors import HacalError, ValidationError
from .evaluation import nmse, run_experiment, run_trial, sidecar
from .hac import calibrate_link, true_analog_parameters
from .pilots import design_analog_stage, design_digital_stage, validate_pilot_lengths
from .seeding import substream

COMMANDS = ("calibrate", "sweep", "crlb", "overhead", "replay")

log = logging.getLogger("hacal")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    """Report argument errors through the validation exit status."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """What one invocation was asked to do."""

    command: str
    config_path: str
    output_dir: str
    master_seed: int
    output_format: str = "csv"
    value_index: int = 0
    trial: int = 0


# ---------------------------------------------------------------------------
# output helpers


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(manifest, name, text):
    os.makedirs(manifest.output_dir, exist_ok=True)
    path = os.path.join(manifest.output_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    log.info("wrote %s", path)
    return path


def _csv_text(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _write_records(manifest, stem, header, rows):
    """Write ``rows`` as ``<stem>.csv`` or as ``<stem>.json`` (a list of objects)."""
    if manifest.output_format == "json":
        records = [dict(zip(header, row)) for row in rows]
        return _write(manifest, stem + ".json", _dumps(records))
    return _write(manifest, stem + ".csv", _csv_text(header, rows))


def _scenario(cfg, mismatch_model, seed):
    ch = sample_channel(cfg, substream(seed, "channel", 0))
    mm = sample_mismatch(cfg, substream(seed, "mismatch", 0), mismatch_model)
    return ch, mm


# ---------------------------------------------------------------------------
# commands


def cmd_calibrate(manifest):
    """Full downlink and uplink calibration of one drawn scenario."""
    run = load_config(manifest.config_path)
    cfg, seed = run.system, manifest.master_seed
    for direction in LinkDirection:
        validate_pilot_lengths(cfg, direction).raise_if_invalid()
    ch, mm = _scenario(cfg, run.mismatch, seed)
    _write(manifest, "scenario.json", _dumps({
        "system": cfg.to_dict(), "channel": ch.to_dict(), "mismatch": mm.to_dict(), "seed": seed,
    }))

    rows, traces = [], []
    truth_names = {
        LinkDirection.DOWNLINK: ("u1", "t1", "u2", "t2"),
        LinkDirection.UPLINK: ("r1", "v1", "r2", "v2"),
    }
    for i, direction in enumerate(LinkDirection):
        result, _ = calibrate_link(
            direction, cfg, ch, mm, run.solver,
            beam_rng=substream(seed, "beamformers", 0, i),
            noise_rng=substream(seed, "noise", 0, i),
            solver_rng=substream(seed, "solver", 0, i),
        )
        _write(manifest, f"calibration_{direction.value}.json", result.to_json() + "\n")
        rx1, tx1, rx2, tx2 = (getattr(mm, name) for name in truth_names[direction])
        analog = result.analog
        rows.append([
            direction.value,
            repr(nmse(result.digital.u1_hat, rx1, align=True)),
            repr(nmse(result.digital.t1_hat, tx1, align=True)),
            repr(nmse(analog.u2_hat, rx2, align=True)),
            repr(nmse(analog.t2_hat, tx2, align=True)),
            analog.iterations,
            analog.converged,
            repr(analog.objective_trace[-1]),
        ])
        traces.extend([direction.value, k, repr(v)] for k, v in enumerate(analog.objective_trace))
    _write_records(manifest, "diagnostics", [
        "direction", "nmse_rx_digital", "nmse_tx_digital", "nmse_rx_analog", "nmse_tx_analog",
        "iterations", "converged", "final_objective",
    ], rows)
    _write_records(manifest, "objective_trace", ["direction", "iteration", "objective"], traces)
    return 0


def _progress(spec):
    def report(vi, trial):
        if trial == 0:
            log.info("sweep value %s (%d trials)", spec.sweep_values[vi], spec.trials)
    return report


def cmd_sweep(manifest):
    """Monte-Carlo sweep described by the ``[experiment]`` section."""
    run = load_config(manifest.config_path)
    spec = run.experiment_spec(manifest.master_seed)
    table = run_experiment(spec, progress=_progress(spec))
    if manifest.output_format == "json":
        _write(manifest, "results.json", _dumps(table.to_dict()))
    else:
        _write(manifest, "results.csv", table.to_csv())
    _write(manifest, "results.meta.json", _dumps(sidecar(spec, table)))
    return 0


def cmd_crlb(manifest):
    """Bounds for the downlink coefficients of one drawn scenario."""
    run = load_config(manifest.config_path)
    cfg, seed = run.system, manifest.master_seed
    validate_pilot_lengths(cfg).raise_if_invalid()
    ch, mm = _scenario(cfg, run.mismatch, seed)
    beams = substream(seed, "beamformers", 0, 0)
    dplan = design_digital_stage(cfg, beams)
    aplan = design_analog_stage(cfg, beams)
    effective = effective_channel(LinkDirection.DOWNLINK, cfg, ch, mm)
    beta_d = complex(dplan.b_dr @ effective @ dplan.f_dr) / math.sqrt(cfg.m_t)
    truth = true_analog_parameters(LinkDirection.DOWNLINK, cfg, ch, mm)
    report = crlb_full(cfg, aplan, truth, beta_d, dplan.l_dr,
                       digital_noise_gain=cfg.n_r, analog_noise_gain=cfg.n_r * abs(mm.u1[0]) ** 2)
    if manifest.output_format == "json":
        _write(manifest, "crlb.json", report.to_json() + "\n")
    else:
        rows = []
        for name in ("crlb_u1", "crlb_t1", "crlb_u2", "crlb_t2"):
            rows.extend([name, i, repr(float(v))] for i, v in enumerate(getattr(report, name)))
        _write(manifest, "crlb.csv", _csv_text(["coefficient", "index", "bound"], rows))
    if report.singular:
        log.warning("analog Fisher matrix has %d null directions; bounds are unreliable",
                    report.fim_analog_nullity)
    return 0


def cmd_overhead(manifest):
    """Training overhead and complexity of CRC and HAC for the configured sizes."""
    run = load_config(manifest.config_path)
    report = overhead_report(run.system)
    rows = [
        ["CRC", report.crc_overhead, report.crc_flops_order],
        ["HAC", report.hac_overhead, report.hac_flops_order],
    ]
    for method, overhead, order in rows:
        print(f"{method:<4} overhead {overhead:>8}  complexity {order}")
    if manifest.output_format == "json":
        _write(manifest, "overhead.json", report.to_json() + "\n")
    else:
        _write(manifest, "overhead.csv", _csv_text(["method", "overhead", "complexity"], rows))
    return 0


def cmd_replay(manifest):
    """Metrics of one (sweep value, trial) pair of the configured sweep."""
    run = load_config(manifest.config_path)
    spec = run.experiment_spec(manifest.master_seed)
    if not 0 <= manifest.value_index < len(spec.sweep_values):
        raise ValidationError(f"--value-index must be below {len(spec.sweep_values)}")
    if not 0 <= manifest.trial < spec.trials:
        raise ValidationError(f"--trial must be below {spec.trials}")
    results = run_trial(spec, manifest.value_index, manifest.trial)
    value = spec.sweep_values[manifest.value_index]
    rows = []
    for method, metrics in results.items():
        if isinstance(metrics, Exception):
            rows.append([repr(value), method, "error", str(metrics)])
            continue
        rows.extend([repr(value), method, metric, repr(metrics[metric])] for metric in sorted(metrics))
    _write_records(manifest, "trial", ["sweep_value", "method", "metric", "value"], rows)
    return 0


HANDLERS = {
    "calibrate": cmd_calibrate,
    "sweep": cmd_sweep,
    "crlb": cmd_crlb,
    "overhead": cmd_overhead,
    "replay": cmd_replay,
}


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file (defaults apply if omitted)")
    common.add_argument("--seed", type=_seed, default=0, metavar="U64", help="master seed (default 0)")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default .)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="hacal", description="Reciprocity calibration for hybrid-beamforming arrays.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "calibrate": "calibrate the downlink and uplink of one drawn scenario",
        "sweep": "run the Monte-Carlo sweep of the [experiment] section",
        "crlb": "bounds on the downlink coefficients of one drawn scenario",
        "overhead": "training overhead and complexity of CRC and HAC",
        "replay": "metrics of one sweep point and trial",
    }
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        if name == "replay":
            cmd.add_argument("--value-index", type=int, default=0, help="index into sweep_values")
            cmd.add_argument("--trial", type=int, default=0, help="trial index")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    manifest = RunManifest(
        command=args.command,
        config_path=args.config,
        output_dir=args.out,
        master_seed=args.seed,
        output_format=args.format,
        value_index=getattr(args, "value_index", 0),
        trial=getattr(args, "trial", 0),
    )
    try:
        return HANDLERS[args.command](manifest)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except HacalError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
