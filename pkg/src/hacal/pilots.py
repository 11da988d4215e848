"""Training schedules that decouple digital-chain from analog-chain estimation.

During the digital stage every digital chain drives the same analog beam, so
the received block is rank one and exposes the digital mismatch alone. During
the analog stage only the first digital chain is active, so the received
samples depend on the analog mismatch, the paths and one common scalar.
"""

import dataclasses
import math

import numpy as np

from .channel import LinkDirection
from .errors import PilotLengthError
from .serialize import JsonMixin, carray


@dataclasses.dataclass(frozen=True, eq=False)
class DigitalStagePlan(JsonMixin):
    """Beamformers and pilots of the digital training stage.

    Attributes
    ----------
    f_dr : (n_tx,) ndarray
        Analog transmit beam shared by every transmit digital chain.
    b_dr : (n_rx,) ndarray
        Analog receive beam shared by every receive digital chain.
    x_dr : (m_tx, q_dr) ndarray
        Row-orthogonal pilots with ``conj(x_dr) @ x_dr.T == pilot_power * q_dr * I``.
    p_dr : int
        Number of repetitions of the pilot block.
    """

    f_dr: np.ndarray = carray()
    b_dr: np.ndarray = carray()
    x_dr: np.ndarray = carray()
    p_dr: int = 1

    @property
    def q_dr(self):
        return self.x_dr.shape[1]

    @property
    def l_dr(self):
        return self.q_dr * self.p_dr


@dataclasses.dataclass(frozen=True, eq=False)
class AnalogStagePlan(JsonMixin):
    """Beamformers and pilots of the analog training stage.

    Attributes
    ----------
    f_da : (n_tx, q_da) ndarray
        Column ``q`` is the analog beam of transmit chain 1 for pilot ``q``.
    b_da : (n_rx, p_da) ndarray
        Column ``p`` is the analog beam of receive chain 1 for block ``p``.
    x_da : (q_da,) ndarray
        Pilot scalars of transmit chain 1.
    """

    f_da: np.ndarray = carray()
    b_da: np.ndarray = carray()
    x_da: np.ndarray = carray()

    @property
    def q_da(self):
        return self.f_da.shape[1]

    @property
    def p_da(self):
        return self.b_da.shape[1]

    @property
    def x_tilde(self):
        """Transmit beams scaled by their pilots, ``f_da @ diag(x_da)``."""
        return self.f_da * self.x_da[None, :]


@dataclasses.dataclass(frozen=True)
class PilotLengthReport(JsonMixin):
    """Minimum training lengths and whether a plan meets them."""

    q_dr_min: int
    p_dr_min: int
    q_da_min: int
    p_da_min: int
    ok: bool
    violations: tuple = ()

    def raise_if_invalid(self):
        if not self.ok:
            raise PilotLengthError("pilot plan too short: " + "; ".join(self.violations))


def random_phases(rng, shape):
    """Unit-modulus entries with i.i.d. uniform phases."""
    return np.exp(2j * np.pi * rng.uniform(0.0, 1.0, shape))


def dft_pilots(m, q, power):
    """First ``m`` rows of the ``q``-point DFT matrix scaled by ``sqrt(power)``."""
    rows = np.arange(m)[:, None]
    cols = np.arange(q)[None, :]
    return math.sqrt(power) * np.exp(-2j * np.pi * rows * cols / q)


def design_digital_stage(cfg, rng, direction=LinkDirection.DOWNLINK):
    """Random shared analog beams plus DFT pilots for the digital stage.

    Raises
    ------
    PilotLengthError
        If ``q_dr`` is smaller than the number of transmit digital chains.
    """
    n_tx, m_tx, n_rx, _ = cfg.link_dims(direction)
    if cfg.q_dr < m_tx:
        raise PilotLengthError(
            f"q_dr={cfg.q_dr} violates q_dr >= m_tx={m_tx}: pilots of the "
            "transmit digital chains cannot be orthogonal"
        )
    f_dr = random_phases(rng, n_tx)
    b_dr = random_phases(rng, n_rx)
    x_dr = dft_pilots(m_tx, cfg.q_dr, cfg.pilot_power)
    return DigitalStagePlan(f_dr=f_dr, b_dr=b_dr, x_dr=x_dr, p_dr=cfg.p_dr)


def design_analog_stage(cfg, rng, direction=LinkDirection.DOWNLINK):
    """Random-phase analog beams and constant pilots for the analog stage."""
    n_tx, _, n_rx, _ = cfg.link_dims(direction)
    f_da = random_phases(rng, (n_tx, cfg.q_da))
    b_da = random_phases(rng, (n_rx, cfg.p_da))
    x_da = np.full(cfg.q_da, math.sqrt(cfg.pilot_power), dtype=complex)
    return AnalogStagePlan(f_da=f_da, b_da=b_da, x_da=x_da)


def validate_pilot_lengths(cfg, direction=LinkDirection.DOWNLINK):
    """Check the plan against the identifiability minima.

    The minima are ``q_dr >= m_tx``, ``p_dr >= 1``, ``q_da >= n_tx - K + 1``
    and ``p_da >= n_rx - K + 1``.
    """
    n_tx, m_tx, n_rx, _ = cfg.link_dims(direction)
    k = cfg.k_paths
    minima = (m_tx, 1, n_tx - k + 1, n_rx - k + 1)
    rules = ("q_dr >= m_tx", "p_dr >= 1", "q_da >= n_tx - k_paths + 1", "p_da >= n_rx - k_paths + 1")
    names = ("q_dr", "p_dr", "q_da", "p_da")
    violations = tuple(
        f"{name}={value} violates {rule} = {minimum}"
        for name, value, rule, minimum in zip(names, cfg.pilot_plan, rules, minima)
        if value < minimum
    )
    return PilotLengthReport(*minima, ok=not violations, violations=violations)
