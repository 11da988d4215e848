"""Run configuration files.

An INI file with up to four sections. Every key is optional and defaults to
the library default; unknown sections or keys are errors.

.. code-block:: ini

    [system]
    n_t = 32
    n_r = 32
    m_t = 8
    m_r = 8
    k_paths = 4
    d_over_lambda = 0.5
    noise_var = 1.0
    cal_snr_db = 30       ; pilot_power = noise_var * 10^(cal_snr_db / 10)
    data_snr_db = 40      ; data_power = noise_var * 10^(data_snr_db / 10)
    q_dr = 8
    p_dr = 1
    q_da = 29
    p_da = 29

    [mismatch]
    log_amp_var = 0.01
    phase_range_deg = 30
    redraw_per_trial = true

    [solver]
    eps_outer = 1e-8
    eps_angle = 1e-10
    max_outer = 50
    max_angle_iters = 10
    init_grid_size = 64
    update_order = t2-first
    c_dr = 1+0j
    mismatch_init = nominal

    [experiment]
    sweep_kind = cal-snr
    sweep_values = 0, 10, 20, 30
    trials = 200
    methods = HAC, OracleHAC, Perfect, None
    n_streams = 4
"""

import configparser
import dataclasses
import math

from .channel import MismatchModel, SystemConfig
from .errors import ValidationError
from .evaluation import ExperimentSpec, db_to_linear
from .hac import SolverSettings


def _as_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_list(text):
    return [item.strip() for item in text.split(",") if item.strip()]


SYSTEM_KEYS = {
    "n_t": int, "n_r": int, "m_t": int, "m_r": int, "k_paths": int,
    "d_over_lambda": float, "noise_var": float, "cal_snr_db": float, "data_snr_db": float,
    "q_dr": int, "p_dr": int, "q_da": int, "p_da": int,
}
MISMATCH_KEYS = {"log_amp_var": float, "phase_range_deg": float, "redraw_per_trial": _as_bool}
SOLVER_KEYS = {
    "eps_outer": float, "eps_angle": float, "max_outer": int, "max_angle_iters": int,
    "init_grid_size": int, "update_order": str, "c_dr": complex, "mismatch_init": str,
}
EXPERIMENT_KEYS = {
    "sweep_kind": str,
    "sweep_values": lambda text: [float(v) for v in _as_list(text)],
    "trials": int,
    "methods": _as_list,
    "n_streams": int,
}
SECTIONS = {
    "system": SYSTEM_KEYS,
    "mismatch": MISMATCH_KEYS,
    "solver": SOLVER_KEYS,
    "experiment": EXPERIMENT_KEYS,
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a command needs besides the seed."""

    system: SystemConfig
    mismatch: MismatchModel
    solver: SolverSettings
    experiment: dict

    def experiment_spec(self, master_seed):
        """:class:`ExperimentSpec` from the ``[experiment]`` section.

        Raises
        ------
        ValidationError
            If ``sweep_kind`` or ``sweep_values`` is missing.
        """
        missing = [k for k in ("sweep_kind", "sweep_values") if k not in self.experiment]
        if missing:
            raise ValidationError(f"[experiment] is missing required keys: {', '.join(missing)}")
        return ExperimentSpec(
            cfg=self.system,
            settings=self.solver,
            mismatch=self.mismatch,
            master_seed=master_seed,
            **self.experiment,
        )


def _parse_section(parser, section):
    keys = SECTIONS[section]
    values = {}
    if not parser.has_section(section):
        return values
    for key, text in parser.items(section):
        if key not in keys:
            raise ValidationError(
                f"unknown key '{key}' in [{section}]; allowed keys: {', '.join(sorted(keys))}"
            )
        try:
            values[key] = keys[key](text)
        except ValueError as err:
            raise ValidationError(f"bad value for '{key}' in [{section}]: {err}") from None
    return values


def parse_config(text):
    """Build a :class:`RunConfig` from INI text.

    Raises
    ------
    ValidationError
        On unknown sections or keys, unparsable values or values the
        dataclasses reject.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ValidationError(f"malformed config: {err}") from None
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ValidationError(f"unknown section [{unknown[0]}]; allowed: {', '.join(SECTIONS)}")

    system = _parse_section(parser, "system")
    defaults = SystemConfig()
    noise_var = system.pop("noise_var", defaults.noise_var)
    plan = list(defaults.pilot_plan)
    for i, key in enumerate(("q_dr", "p_dr", "q_da", "p_da")):
        if key in system:
            plan[i] = system.pop(key)
    if "cal_snr_db" in system:
        system["pilot_power"] = noise_var * db_to_linear(system.pop("cal_snr_db"))
    if "data_snr_db" in system:
        system["data_power"] = noise_var * db_to_linear(system.pop("data_snr_db"))

    mismatch = _parse_section(parser, "mismatch")
    if "phase_range_deg" in mismatch:
        mismatch["phase_range"] = math.radians(mismatch.pop("phase_range_deg"))
    try:
        return RunConfig(
            system=SystemConfig(noise_var=noise_var, pilot_plan=tuple(plan), **system),
            mismatch=MismatchModel(**mismatch),
            solver=SolverSettings(**_parse_section(parser, "solver")),
            experiment=_parse_section(parser, "experiment"),
        )
    except ValueError as err:
        if isinstance(err, ValidationError):
            raise
        raise ValidationError(str(err)) from None


def load_config(path):
    """Read and parse a config file; ``None`` gives all defaults."""
    if path is None:
        return parse_config("")
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as err:
        raise ValidationError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text)
