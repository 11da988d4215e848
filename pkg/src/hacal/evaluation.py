"""Metrics and the Monte-Carlo sweep harness.

Every method is judged by how well the BS can design downlink beams from
what it believes the downlink hardware to be. That belief is expressed as a
virtual downlink channel, ``(m_r n_r) x (m_t n_t)``, which for per-chain
mismatch estimates factorizes as

    (u1 ⊗ diag(u2)) H^T (t1^T ⊗ diag(t2)).

Methods
-------
``HAC``
    Both solvers on downlink training, angles from the grid initializer.
``OracleHAC``
    Same training, analog solver started at the true angles with angles frozen.
``CRC``
    Relative coefficients from uplink and downlink virtual-channel estimates.
``Perfect``
    True downlink hardware.
``None``
    No calibration: the downlink is assumed to be the transposed uplink.

Random draws are keyed by trial index only, so every sweep point of one
trial sees the same channel, hardware, beams and noise samples and the
points of a curve are paired comparisons.
"""

import dataclasses
import enum
import math

import numpy as np

from . import __version__
from .airlink import effective_channel, run_training
from .channel import (
    LinkDirection,
    MismatchModel,
    SystemConfig,
    assemble_channel,
    sample_channel,
    sample_mismatch,
)
from .crc import check_size, crc_run_link, downlink_from_uplink
from .crlb import crlb_analog, crlb_digital
from .errors import HacalError, ValidationError
from .hac import (
    SolverSettings,
    calibrate_analog,
    reconstruct_effective_channel,
    solve_digital,
    true_analog_parameters,
)
from .pilots import design_analog_stage, design_digital_stage, validate_pilot_lengths
from .seeding import substream
from .serialize import JsonMixin, nested

CSV_HEADER = "sweep_value,method,metric,mean,std_error,trials_used"

METHODS = ("HAC", "OracleHAC", "CRC", "Perfect", "None")

#: Pseudo-method under which bound rows are reported.
BOUND = "CRLB"


class SweepKind(str, enum.Enum):
    CAL_SNR = "cal-snr"
    PILOT_LENGTH = "pilot-length"
    RATE_VS_DATA_SNR = "rate-vs-data-snr"
    RATE_VS_CAL_SNR = "rate-vs-cal-snr"
    RATE_VS_PILOTS = "rate-vs-pilots"


RATE_SWEEPS = (SweepKind.RATE_VS_DATA_SNR, SweepKind.RATE_VS_CAL_SNR, SweepKind.RATE_VS_PILOTS)


def db_to_linear(db):
    return 10.0 ** (float(db) / 10.0)


# ---------------------------------------------------------------------------
# metrics


def nmse(est, truth, align=False):
    """``||truth - c est||^2 / ||truth||^2`` with ``c = 1`` or the best complex scale.

    Raises
    ------
    ValidationError
        If the shapes differ or ``truth`` is zero.
    """
    est = np.asarray(est, dtype=complex).reshape(-1)
    truth = np.asarray(truth, dtype=complex).reshape(-1)
    if est.shape != truth.shape:
        raise ValidationError(f"estimate has {est.size} entries, truth has {truth.size}")
    energy = float(np.vdot(truth, truth).real)
    if energy == 0:
        raise ValidationError("NMSE is undefined for an all-zero truth")
    scale = 1.0
    if align:
        power = float(np.vdot(est, est).real)
        scale = np.vdot(est, truth) / power if power > 0 else 0.0
    err = truth - scale * est
    return float(np.vdot(err, err).real) / energy


@dataclasses.dataclass(frozen=True, eq=False)
class HardwareBelief:
    """Per-chain downlink mismatch as the beam designer believes it to be."""

    u1: np.ndarray
    u2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray


def virtual_downlink(cfg, ch, belief):
    """Virtual downlink channel implied by ``belief`` and the wireless channel."""
    h_t = assemble_channel(cfg, ch).T
    left = np.kron(np.asarray(belief.u1)[:, None], np.diag(belief.u2))
    right = np.kron(np.asarray(belief.t1)[None, :], np.diag(belief.t2))
    return left @ h_t @ right


def virtual_from_effective(u1, effective, t1):
    """Virtual downlink channel from digital estimates and an analog-port channel estimate."""
    n_r, n_t = effective.shape
    left = np.kron(np.asarray(u1)[:, None], np.eye(n_r))
    right = np.kron(np.asarray(t1)[None, :], np.eye(n_t))
    return left @ effective @ right


def perfect_belief(mm):
    return HardwareBelief(u1=mm.u1, u2=mm.u2, t1=mm.t1, t2=mm.t2)


def uncalibrated_belief(mm):
    """Transposed-uplink belief: UE transmit chains stand in for its receive chains."""
    return HardwareBelief(u1=mm.v1, u2=mm.v2, t1=mm.r1, t2=mm.r2)


def _block(virtual, m, m_prime, n_rx, n_tx):
    return virtual[m * n_rx : (m + 1) * n_rx, m_prime * n_tx : (m_prime + 1) * n_tx]


def _chain_channel(virtual, b_r, f_t):
    """``B~ H_virtual F~``: digital-port channel for per-chain analog beams."""
    m_r, m_t = b_r.shape[1], f_t.shape[1]
    n_r, n_t = b_r.shape[0], f_t.shape[0]
    out = np.empty((m_r, m_t), dtype=complex)
    for m in range(m_r):
        for mp in range(m_t):
            out[m, mp] = b_r[:, m] @ _block(virtual, m, mp, n_r, n_t) @ f_t[:, mp]
    return out


def design_beams(cfg, virtual, n_s):
    """SVD-based hybrid beams from a virtual downlink channel.

    Analog beams are the phases of the leading singular vectors of the
    first-chain block, scaled to unit norm per chain; digital beams are the leading singular vectors of the
    resulting digital-port channel. ``d_r`` is the conjugate of the left
    singular vectors so that ``d_r.T`` undoes them.

    Returns ``(f_t, b_r, w_t, d_r)``.
    """
    analog = _block(virtual, 0, 0, cfg.n_r, cfg.n_t)
    u_a, _, vh_a = np.linalg.svd(analog)
    f_t = np.exp(1j * np.angle(vh_a.conj().T[:, : cfg.m_t])) / math.sqrt(cfg.n_t)
    b_r = np.exp(1j * np.angle(u_a[:, : cfg.m_r].conj())) / math.sqrt(cfg.n_r)
    u_d, _, vh_d = np.linalg.svd(_chain_channel(virtual, b_r, f_t))
    w_t = vh_d.conj().T[:, :n_s]
    d_r = u_d[:, :n_s].conj()
    return f_t, b_r, w_t, d_r


def achievable_rate(cfg, ch, mm, belief, data_snr, n_s):
    """Downlink sum rate in bits/s/Hz with beams designed from ``belief``.

    Parameters
    ----------
    belief : HardwareBelief, ndarray or str
        Per-chain estimates, a virtual downlink channel estimate, or one of
        ``"perfect"`` and ``"none"``.
    data_snr : float
        Linear data SNR; the data power is ``data_snr * cfg.noise_var``.
    n_s : int
        Number of streams, at most ``min(m_t, m_r)``.

    The signal passes through the true hardware.
    """
    if not 1 <= n_s <= min(cfg.m_t, cfg.m_r):
        raise ValidationError(f"n_s={n_s} must be between 1 and min(m_t, m_r)={min(cfg.m_t, cfg.m_r)}")
    if isinstance(belief, str):
        belief = {"perfect": perfect_belief, "none": uncalibrated_belief}[belief.lower()](mm)
    virtual = belief if isinstance(belief, np.ndarray) else virtual_downlink(cfg, ch, belief)
    f_t, b_r, w_t, d_r = design_beams(cfg, virtual, n_s)

    true_virtual = virtual_downlink(cfg, ch, perfect_belief(mm))
    streams = d_r.T @ _chain_channel(true_virtual, b_r, f_t) @ w_t
    combiner = d_r.T @ (mm.u1[:, None] * b_r.T)
    noise = np.sum(np.abs(combiner) ** 2, axis=1) * cfg.noise_var
    power = data_snr * cfg.noise_var
    gains = np.abs(streams) ** 2
    desired = np.diag(gains)
    interference = gains.sum(axis=1) - desired
    return float(np.sum(np.log2(1.0 + power * desired / (power * interference + noise))))


# ---------------------------------------------------------------------------
# experiment description and results


@dataclasses.dataclass(frozen=True)
class ExperimentSpec(JsonMixin):
    """One sweep of the Monte-Carlo harness.

    ``sweep_values`` are in dB for the SNR sweeps and are ``q_da = p_da``
    for the pilot sweeps. Quantities a sweep does not vary come from
    ``cfg``: calibration SNR ``pilot_power / noise_var`` and data SNR
    ``data_power / noise_var``.
    """

    sweep_kind: str
    sweep_values: tuple
    trials: int = 1
    master_seed: int = 0
    cfg: SystemConfig = nested(SystemConfig, default_factory=SystemConfig)
    settings: SolverSettings = nested(SolverSettings, default_factory=SolverSettings)
    methods: tuple = ("HAC", "OracleHAC", "Perfect", "None")
    mismatch: MismatchModel = nested(MismatchModel, default_factory=MismatchModel)
    n_streams: int = 4

    def __post_init__(self):
        try:
            object.__setattr__(self, "sweep_kind", SweepKind(self.sweep_kind).value)
        except ValueError:
            choices = ", ".join(k.value for k in SweepKind)
            raise ValidationError(f"sweep_kind must be one of {choices}, got {self.sweep_kind!r}") from None
        object.__setattr__(self, "sweep_values", tuple(float(v) for v in self.sweep_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if int(self.trials) < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if not self.sweep_values:
            raise ValidationError("sweep_values must not be empty")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise ValidationError(f"sweep_values must be strictly increasing, got {self.sweep_values}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ValidationError(f"unknown methods {unknown}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValidationError(f"methods repeat: {self.methods}")
        if int(self.master_seed) < 0 or int(self.master_seed) >= 2**64:
            raise ValidationError("master_seed must be an unsigned 64-bit integer")
        if self.sweep_kind in (SweepKind.PILOT_LENGTH.value, SweepKind.RATE_VS_PILOTS.value):
            if any(v != int(v) for v in self.sweep_values):
                raise ValidationError("pilot-length sweep values must be integers")
        if not 1 <= self.n_streams <= min(self.cfg.m_t, self.cfg.m_r):
            raise ValidationError(f"n_streams={self.n_streams} exceeds min(m_t, m_r)")

    def point_config(self, value):
        """System configuration and linear data SNR at one sweep value."""
        cfg = self.cfg
        kind = SweepKind(self.sweep_kind)
        if kind in (SweepKind.CAL_SNR, SweepKind.RATE_VS_CAL_SNR):
            cfg = cfg.replace(pilot_power=db_to_linear(value) * cfg.noise_var)
        elif kind in (SweepKind.PILOT_LENGTH, SweepKind.RATE_VS_PILOTS):
            q_dr, p_dr, _, _ = cfg.pilot_plan
            cfg = cfg.replace(pilot_plan=(q_dr, p_dr, int(value), int(value)))
        else:
            cfg = cfg.replace(data_power=db_to_linear(value) * cfg.noise_var)
        return cfg, cfg.data_power / cfg.noise_var


@dataclasses.dataclass(frozen=True)
class ResultRow:
    sweep_value: float
    method: str
    metric: str
    mean: float
    std_error: float
    trials_used: int


@dataclasses.dataclass(frozen=True)
class ResultTable:
    """Aggregated rows plus the per-method failure counts."""

    rows: tuple
    failures: dict = dataclasses.field(default_factory=dict)

    def to_csv(self):
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.sweep_value!r},{r.method},{r.metric},{r.mean!r},{r.std_error!r},{r.trials_used}"
            )
        return "\n".join(lines) + "\n"

    def lookup(self, sweep_value, method, metric):
        for r in self.rows:
            if r.sweep_value == sweep_value and r.method == method and r.metric == metric:
                return r
        raise KeyError((sweep_value, method, metric))

    def to_dict(self):
        return {
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "failures": {k: v for k, v in sorted(self.failures.items())},
        }


def sidecar(spec, table):
    """Experiment metadata written next to the CSV."""
    return {
        "toolkit_version": __version__,
        "spec": spec.to_dict(),
        "failures": table.to_dict()["failures"],
    }


# ---------------------------------------------------------------------------
# trials


def _solver_rng(seed, trial, method):
    return substream(seed, "solver", trial, METHODS.index(method))


def _hac_estimates(cfg, ch, mm, settings, training, dplan, aplan, solver_rng, oracle):
    digital = solve_digital(training.y_dr, dplan.x_dr, dplan.p_dr, settings.c_dr)
    init = None
    if oracle:
        _, _, _, thetas, phis = true_analog_parameters(LinkDirection.DOWNLINK, cfg, ch, mm)
        init = (thetas, phis)
    analog = calibrate_analog(training.y_da, aplan, cfg, settings, init=init, rng=solver_rng,
                              freeze_angles=oracle)
    return digital, analog


def _hac_metrics(cfg, ch, mm, settings, beta_d, estimates, n_s, data_snr, want_rate):
    digital, analog = estimates
    c_dr = settings.c_dr
    u1_ref = mm.u1 * c_dr / mm.u1[0]
    t1_ref = mm.t1 * mm.u1[0] * beta_d / c_dr
    out = {
        "nmse_u1": nmse(digital.u1_hat, u1_ref),
        "nmse_t1": nmse(digital.t1_hat, t1_ref),
        "nmse_u1_aligned": nmse(digital.u1_hat, mm.u1, align=True),
        "nmse_t1_aligned": nmse(digital.t1_hat, mm.t1, align=True),
        "nmse_u2": nmse(analog.u2_hat, mm.u2 / mm.u2[0]),
        "nmse_t2": nmse(analog.t2_hat, mm.t2 / mm.t2[0]),
        "nmse_u2_aligned": nmse(analog.u2_hat, mm.u2, align=True),
        "nmse_t2_aligned": nmse(analog.t2_hat, mm.t2, align=True),
        "nmse_channel": nmse(
            reconstruct_effective_channel(analog, cfg),
            effective_channel(LinkDirection.DOWNLINK, cfg, ch, mm),
            align=True,
        ),
    }
    if want_rate:
        # t2_hat and u2_hat carry a phase ramp traded against the angle
        # estimates; only their product with the estimated paths is identified
        virtual = virtual_from_effective(digital.u1_hat, reconstruct_effective_channel(analog, cfg),
                                         digital.t1_hat)
        out["rate"] = achievable_rate(cfg, ch, mm, virtual, data_snr, n_s)
    return out


def _crlb_metrics(cfg, ch, mm, training, dplan, aplan):
    n_rx = cfg.n_r
    _, crlb_t1 = crlb_digital(cfg, training.beta_d, dplan.l_dr, noise_gain=n_rx)
    truth = true_analog_parameters(LinkDirection.DOWNLINK, cfg, ch, mm)
    crlb_u2, crlb_t2, cond, _ = crlb_analog(cfg, aplan, truth, noise_gain=n_rx * abs(mm.u1[0]) ** 2)
    return {
        "nmse_t1": float(np.sum(crlb_t1)) / float(np.sum(np.abs(mm.t1) ** 2)),
        "nmse_u2_aligned": float(np.sum(crlb_u2)) / float(np.sum(np.abs(mm.u2) ** 2)),
        "nmse_t2_aligned": float(np.sum(crlb_t2)) / float(np.sum(np.abs(mm.t2) ** 2)),
        "fim_log10_cond": math.log10(cond) if math.isfinite(cond) else float("inf"),
    }


def _crc_prediction(cfg, ch, mm, seed, trial):
    check_size(cfg)
    coefficients, h_ul, _ = crc_run_link(cfg, ch, mm, cfg.noise_var, substream(seed, "beamformers", trial, 1))
    return downlink_from_uplink(h_ul, coefficients)


def _crc_metrics(cfg, ch, mm, predicted, n_s, data_snr, want_rate):
    truth = effective_channel(LinkDirection.DOWNLINK, cfg, ch, mm)
    out = {"nmse_channel": nmse(_block(predicted, 0, 0, cfg.n_r, cfg.n_t), truth, align=True)}
    if want_rate:
        out["rate"] = achievable_rate(cfg, ch, mm, predicted, data_snr, n_s)
    return out


def _reference_metrics(cfg, ch, mm, method, n_s, data_snr, want_rate):
    out = {}
    if method == "None":
        assumed = effective_channel(LinkDirection.UPLINK, cfg, ch, mm)
        truth = effective_channel(LinkDirection.DOWNLINK, cfg, ch, mm)
        out["nmse_channel"] = nmse(assumed.T, truth, align=True)
    if want_rate:
        out["rate"] = achievable_rate(cfg, ch, mm, method.lower(), data_snr, n_s)
    return out


def run_trial(spec, value_index, trial, cache=None):
    """Metrics of every method at one sweep point and trial.

    Returns a dict ``method -> dict(metric -> value)``; a method whose
    solver failed maps to the exception instead. ``cache`` lets sweep points
    that differ only in the data SNR share one calibration per trial.
    """
    seed = spec.master_seed
    cfg, data_snr = spec.point_config(spec.sweep_values[value_index])
    want_rate = SweepKind(spec.sweep_kind) in RATE_SWEEPS
    want_bound = not want_rate
    cache = {} if cache is None else cache
    cal_cfg = cfg.replace(data_power=1.0)

    ch = sample_channel(cfg, substream(seed, "channel", trial))
    if spec.mismatch.redraw_per_trial:
        mm = sample_mismatch(cfg, substream(seed, "mismatch", trial), spec.mismatch)
    else:
        mm = sample_mismatch(cfg, substream(seed, "mismatch"), spec.mismatch)

    training = dplan = aplan = None
    if want_bound or {"HAC", "OracleHAC"} & set(spec.methods):
        beams = substream(seed, "beamformers", trial, 0)
        dplan = design_digital_stage(cfg, beams)
        aplan = design_analog_stage(cfg, beams)
        training = run_training(LinkDirection.DOWNLINK, cfg, ch, mm, dplan, aplan, cfg.noise_var,
                                substream(seed, "noise", trial))

    def cached(method, compute):
        key = (trial, cal_cfg, method)
        if key not in cache:
            try:
                cache[key] = compute()
            except (HacalError, np.linalg.LinAlgError) as err:
                cache[key] = err
        return cache[key]

    results = {}
    for method in spec.methods:
        if method in ("HAC", "OracleHAC"):
            estimates = cached(method, lambda: _hac_estimates(
                cfg, ch, mm, spec.settings, training, dplan, aplan,
                _solver_rng(seed, trial, method), method == "OracleHAC"))
            compute = lambda: _hac_metrics(cfg, ch, mm, spec.settings, training.beta_d, estimates,
                                           spec.n_streams, data_snr, want_rate)
        elif method == "CRC":
            estimates = cached(method, lambda: _crc_prediction(cfg, ch, mm, seed, trial))
            compute = lambda: _crc_metrics(cfg, ch, mm, estimates, spec.n_streams, data_snr, want_rate)
        else:
            estimates = None
            compute = lambda: _reference_metrics(cfg, ch, mm, method, spec.n_streams, data_snr, want_rate)
        if isinstance(estimates, Exception):
            results[method] = estimates
            continue
        try:
            results[method] = compute()
        except (HacalError, np.linalg.LinAlgError) as err:
            results[method] = err
    if want_bound:
        results[BOUND] = _crlb_metrics(cfg, ch, mm, training, dplan, aplan)
    return results


def _aggregate(samples):
    values = np.asarray(samples, dtype=float)
    n = values.size
    mean = float(np.sum(values) / n)
    std_error = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, std_error


def run_experiment(spec, progress=None):
    """Run every sweep point and trial and aggregate the metrics.

    Failed solver runs are excluded from that method's rows and counted in
    :attr:`ResultTable.failures` under ``"<method>@<sweep_value>"``.
    ``progress`` is called with ``(value_index, trial)`` before each trial.
    """
    if "CRC" in spec.methods:
        for value in spec.sweep_values:
            check_size(spec.point_config(value)[0])
    for value in spec.sweep_values:
        cfg, _ = spec.point_config(value)
        validate_pilot_lengths(cfg).raise_if_invalid()

    rows = []
    failures = {}
    cache = {}
    order = list(spec.methods) + ([] if SweepKind(spec.sweep_kind) in RATE_SWEEPS else [BOUND])
    for vi, value in enumerate(spec.sweep_values):
        collected = {method: {} for method in order}
        for trial in range(spec.trials):
            if progress is not None:
                progress(vi, trial)
            for method, metrics in run_trial(spec, vi, trial, cache).items():
                if isinstance(metrics, Exception):
                    name = f"{method}@{value!r}"
                    failures[name] = failures.get(name, 0) + 1
                    continue
                for metric, x in metrics.items():
                    collected[method].setdefault(metric, []).append(x)
        for method in order:
            for metric in sorted(collected[method]):
                samples = collected[method][metric]
                mean, std_error = _aggregate(samples)
                rows.append(ResultRow(value, method, metric, mean, std_error, len(samples)))
    return ResultTable(rows=tuple(rows), failures=failures)
