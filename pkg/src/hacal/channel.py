"""System configuration, geometric mmWave channels and RF mismatch draws."""

import dataclasses
import enum
import math

import numpy as np

from .errors import DimensionError, ValidationError
from .serialize import JsonMixin, carray

HALF_PI = math.pi / 2


class LinkDirection(str, enum.Enum):
    """Which side transmits during a training phase."""

    DOWNLINK = "downlink"
    UPLINK = "uplink"


@dataclasses.dataclass(frozen=True)
class SystemConfig(JsonMixin):
    """Array sizes, powers and the training-length plan of one BS-UE link.

    Parameters
    ----------
    n_t, n_r : int
        Antennas (and analog chains) at the BS and at the UE.
    m_t, m_r : int
        Digital chains at the BS and at the UE.
    k_paths : int
        Number of propagation paths.
    d_over_lambda : float
        Antenna spacing in wavelengths.
    noise_var : float
        Per-antenna noise variance.
    pilot_power, data_power : float
        Per-symbol pilot and data energy.
    pilot_plan : tuple of int
        ``(q_dr, p_dr, q_da, p_da)``: pilot length and number of receive
        beamformers for the digital and the analog training stage.
    """

    n_t: int = 32
    n_r: int = 32
    m_t: int = 8
    m_r: int = 8
    k_paths: int = 4
    d_over_lambda: float = 0.5
    noise_var: float = 1.0
    pilot_power: float = 1000.0
    data_power: float = 10000.0
    pilot_plan: tuple = (8, 1, 29, 29)

    def __post_init__(self):
        object.__setattr__(self, "pilot_plan", tuple(int(v) for v in self.pilot_plan))
        for name in ("n_t", "n_r", "m_t", "m_r", "k_paths"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.m_t > self.n_t:
            raise ValidationError(f"m_t={self.m_t} exceeds n_t={self.n_t}")
        if self.m_r > self.n_r:
            raise ValidationError(f"m_r={self.m_r} exceeds n_r={self.n_r}")
        if 2 * self.k_paths > min(self.n_t, self.n_r):
            raise ValidationError(
                f"k_paths={self.k_paths} must be <= min(n_t, n_r)/2 = {min(self.n_t, self.n_r) / 2}"
            )
        for name in ("noise_var", "pilot_power", "data_power", "d_over_lambda"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive and finite, got {value}")
        if len(self.pilot_plan) != 4 or min(self.pilot_plan) < 1:
            raise ValidationError(
                f"pilot_plan must be four positive counts (q_dr, p_dr, q_da, p_da), got {self.pilot_plan}"
            )

    @property
    def q_dr(self):
        return self.pilot_plan[0]

    @property
    def p_dr(self):
        return self.pilot_plan[1]

    @property
    def q_da(self):
        return self.pilot_plan[2]

    @property
    def p_da(self):
        return self.pilot_plan[3]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def link_dims(self, direction):
        """``(n_tx, m_tx, n_rx, m_rx)`` for a training direction."""
        if LinkDirection(direction) is LinkDirection.DOWNLINK:
            return self.n_t, self.m_t, self.n_r, self.m_r
        return self.n_r, self.m_r, self.n_t, self.m_t


@dataclasses.dataclass(frozen=True)
class MismatchModel(JsonMixin):
    """Distribution of the RF mismatch coefficients.

    Each coefficient is ``exp(g) * exp(1j * psi)`` with ``g ~ N(0, log_amp_var)``
    and ``psi ~ U(-phase_range, phase_range)``. Setting both to zero gives
    identity hardware. ``redraw_per_trial`` controls whether a Monte-Carlo
    sweep draws fresh hardware for every trial or holds one draw fixed.
    """

    log_amp_var: float = 0.01
    phase_range: float = math.pi / 6
    redraw_per_trial: bool = True

    def __post_init__(self):
        if self.log_amp_var < 0 or self.phase_range < 0:
            raise ValidationError("mismatch spreads must be non-negative")


@dataclasses.dataclass(frozen=True, eq=False)
class ChannelRealization(JsonMixin):
    """Path gains, departure angles (BS side) and arrival angles (UE side)."""

    alphas: np.ndarray = carray()
    thetas: np.ndarray = carray()
    phis: np.ndarray = carray()

    @property
    def k_paths(self):
        return len(self.alphas)


@dataclasses.dataclass(frozen=True, eq=False)
class MismatchSet(JsonMixin):
    """Diagonals of the eight RF mismatch matrices.

    ``t1``/``t2`` are the BS transmit digital/analog chains, ``r1``/``r2`` the
    BS receive chains, ``v1``/``v2`` the UE transmit chains and ``u1``/``u2``
    the UE receive chains.
    """

    t1: np.ndarray = carray()
    t2: np.ndarray = carray()
    r1: np.ndarray = carray()
    r2: np.ndarray = carray()
    v1: np.ndarray = carray()
    v2: np.ndarray = carray()
    u1: np.ndarray = carray()
    u2: np.ndarray = carray()

    @classmethod
    def identity(cls, cfg):
        return cls(**{name: np.ones(n, dtype=complex) for name, n in mismatch_sizes(cfg).items()})


def mismatch_sizes(cfg):
    """Length of each mismatch vector, in draw order."""
    return dict(t1=cfg.m_t, t2=cfg.n_t, r1=cfg.m_t, r2=cfg.n_t,
                v1=cfg.m_r, v2=cfg.n_r, u1=cfg.m_r, u2=cfg.n_r)


def wrap_angle(angle):
    """Map angles to the equivalent direction in ``[-pi/2, pi/2)``.

    Steering vectors depend on ``sin(angle)`` only, so ``angle`` and
    ``pi - angle`` describe the same direction.
    """
    wrapped = np.arcsin(np.clip(np.sin(angle), -1.0, 1.0))
    # sin = +1 and sin = -1 coincide for half-wavelength arrays; keep the half-open range
    return np.where(wrapped >= HALF_PI, -HALF_PI, wrapped)


def steering_vector(n, angle, d_over_lambda=0.5):
    """ULA response ``exp(-2j*pi*d*m*sin(angle))`` for ``m = 0..n-1``."""
    if n < 1:
        raise DimensionError(f"array size must be >= 1, got {n}")
    m = np.arange(n)
    return np.exp(-2j * np.pi * d_over_lambda * m * np.sin(angle))


def steering_gradient(n, angle, d_over_lambda=0.5):
    """Derivative of :func:`steering_vector` with respect to the angle."""
    m = np.arange(n)
    return steering_vector(n, angle, d_over_lambda) * (
        -2j * np.pi * d_over_lambda * m * np.cos(angle)
    )


def steering_matrix(n, angles, d_over_lambda=0.5):
    """Columns are steering vectors for each entry of ``angles``."""
    if n < 1:
        raise DimensionError(f"array size must be >= 1, got {n}")
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    m = np.arange(n)[:, None]
    return np.exp(-2j * np.pi * d_over_lambda * m * np.sin(angles)[None, :])


def steering_gradient_matrix(n, angles, d_over_lambda=0.5):
    """Columns are :func:`steering_gradient` for each entry of ``angles``."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    m = np.arange(n)[:, None]
    return steering_matrix(n, angles, d_over_lambda) * (
        -2j * np.pi * d_over_lambda * m * np.cos(angles)[None, :]
    )


def complex_normal(rng, size, var=1.0):
    """Circularly-symmetric complex Gaussian samples of variance ``var``."""
    scale = math.sqrt(var / 2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_channel(cfg, rng):
    """Draw unit-variance path gains and uniform angles on ``[-pi/2, pi/2)``."""
    k = cfg.k_paths
    alphas = complex_normal(rng, k)
    thetas = wrap_angle(rng.uniform(-HALF_PI, HALF_PI, k))
    phis = wrap_angle(rng.uniform(-HALF_PI, HALF_PI, k))
    return ChannelRealization(alphas=alphas, thetas=thetas, phis=phis)


def assemble_channel(cfg, ch):
    """Channel matrix ``H`` (``n_t x n_r``) of the realization ``ch``."""
    if ch.k_paths != cfg.k_paths:
        raise DimensionError(f"realization has {ch.k_paths} paths, config expects {cfg.k_paths}")
    a_t = steering_matrix(cfg.n_t, ch.thetas, cfg.d_over_lambda)
    a_r = steering_matrix(cfg.n_r, ch.phis, cfg.d_over_lambda)
    scale = math.sqrt(cfg.n_t * cfg.n_r / cfg.k_paths)
    return scale * (a_t * ch.alphas[None, :]) @ a_r.T


def path_gains(cfg, ch):
    """Path gains with the array-size prefactor folded in."""
    return ch.alphas * math.sqrt(cfg.n_t * cfg.n_r / cfg.k_paths)


def _coefficients(rng, n, model):
    g = rng.normal(0.0, math.sqrt(model.log_amp_var), n) if model.log_amp_var > 0 else np.zeros(n)
    if model.phase_range > 0:
        psi = rng.uniform(-model.phase_range, model.phase_range, n)
    else:
        psi = np.zeros(n)
    return np.exp(g) * np.exp(1j * psi)


def sample_mismatch(cfg, rng, model=None):
    """Draw the eight mismatch vectors independently from ``model``."""
    model = model or MismatchModel()
    return MismatchSet(
        **{name: _coefficients(rng, n, model) for name, n in mismatch_sizes(cfg).items()}
    )
