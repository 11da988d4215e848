"""Over-the-air training simulator for the two-stage calibration schedule.

Both directions are expressed in a transmitter/receiver frame. For the
downlink the BS transmits through ``(t1, t2)``, the wireless matrix is
``H.T`` and the UE receives through ``(u2, u1)``. For the uplink the UE
transmits through ``(v1, v2)``, the wireless matrix is ``H`` and the BS
receives through ``(r2, r1)``.

Noise is added at the receive antenna ports and then passes through the
analog combiner and the receive digital-chain mismatch, so the combined
noise is colored exactly as the hardware would color it.
"""

import dataclasses
import math

import numpy as np

from .channel import LinkDirection, assemble_channel, complex_normal, path_gains
from .errors import DimensionError
from .pilots import random_phases
from .serialize import JsonMixin, carray, cscalar

__all__ = [
    "LinkDirection",
    "LinkModel",
    "TrainingOutput",
    "effective_channel",
    "link_model",
    "link_paths",
    "run_training",
]


@dataclasses.dataclass(frozen=True, eq=False)
class LinkModel:
    """Wireless matrix and mismatch vectors seen by one training direction.

    ``gain`` is ``n_rx x n_tx``; ``tx1``/``tx2`` are the transmit digital and
    analog mismatch, ``rx1``/``rx2`` the receive ones.
    """

    gain: np.ndarray
    tx1: np.ndarray
    tx2: np.ndarray
    rx1: np.ndarray
    rx2: np.ndarray

    @property
    def effective(self):
        """``diag(rx2) @ gain @ diag(tx2)``."""
        return self.rx2[:, None] * self.gain * self.tx2[None, :]


@dataclasses.dataclass(frozen=True, eq=False)
class TrainingOutput(JsonMixin):
    """Received training blocks.

    Attributes
    ----------
    y_dr : (m_rx * p_dr, q_dr) ndarray
        Digital-stage blocks stacked vertically, one per repetition.
    y_da : (p_da, q_da) ndarray
        Analog-stage samples at receive digital chain 1.
    beta_d : complex
        Ground-truth common gain of the digital stage. Kept for bounds and
        test oracles; the solvers never take it as input.
    y_da_chains : (m_rx, p_da, q_da) ndarray or None
        Outputs of every receive digital chain during the analog stage,
        present only when requested.
    """

    y_dr: np.ndarray = carray()
    y_da: np.ndarray = carray()
    beta_d: complex = cscalar()
    y_da_chains: np.ndarray = carray(default=None)


def link_model(direction, cfg, ch, mm):
    """Assemble the :class:`LinkModel` of ``direction``."""
    h = assemble_channel(cfg, ch)
    if LinkDirection(direction) is LinkDirection.DOWNLINK:
        return LinkModel(gain=h.T, tx1=mm.t1, tx2=mm.t2, rx1=mm.u1, rx2=mm.u2)
    return LinkModel(gain=h, tx1=mm.v1, tx2=mm.v2, rx1=mm.r1, rx2=mm.r2)


def link_paths(direction, cfg, ch):
    """Path gains and ``(tx_angles, rx_angles)`` in the frame of ``direction``.

    The gains include the array-size prefactor, so that the wireless matrix
    equals ``A_rx @ diag(gains) @ A_tx.T``.
    """
    gains = path_gains(cfg, ch)
    if LinkDirection(direction) is LinkDirection.DOWNLINK:
        return gains, ch.thetas, ch.phis
    return gains, ch.phis, ch.thetas


def effective_channel(direction, cfg, ch, mm):
    """Channel between the analog ports: ``U2 H^T T2`` (downlink) or ``R2 H V2`` (uplink)."""
    return link_model(direction, cfg, ch, mm).effective


def _check_plans(cfg, direction, dplan, aplan, link):
    n_rx, n_tx = link.gain.shape
    m_tx, m_rx = link.tx1.size, link.rx1.size
    if dplan.f_dr.shape != (n_tx,) or dplan.b_dr.shape != (n_rx,):
        raise DimensionError("digital-stage beams do not match the array sizes")
    if dplan.x_dr.shape[0] != m_tx:
        raise DimensionError(f"x_dr has {dplan.x_dr.shape[0]} rows, expected {m_tx} transmit chains")
    if aplan.f_da.shape[0] != n_tx or aplan.b_da.shape[0] != n_rx:
        raise DimensionError("analog-stage beams do not match the array sizes")
    if aplan.x_da.shape != (aplan.q_da,):
        raise DimensionError("x_da must hold one pilot per transmit beam")
    return n_tx, m_tx, n_rx, m_rx


def _receive(link, noise_var, rng, transmitted, combiners, digital_combiner):
    """Apply ``D^T U1 B_p^T (U2 G s + n)`` for every block ``p``.

    ``transmitted`` is ``n_tx x Q``; ``combiners`` has shape ``(P, n_rx, m_rx)``.
    Returns an array of shape ``(P, m_rx, Q)``.
    """
    noiseless = link.rx2[:, None] * (link.gain @ transmitted)
    out = []
    for b in combiners:
        received = noiseless
        if noise_var > 0:
            received = noiseless + complex_normal(rng, noiseless.shape, noise_var)
        combined = link.rx1[:, None] * (b.T @ received)
        out.append(digital_combiner.T @ combined)
    return np.stack(out)


def run_training(direction, cfg, ch, mm, dplan, aplan, noise_var, rng, full_outputs=False):
    """Simulate both training stages of one direction.

    Parameters
    ----------
    direction : LinkDirection or str
    cfg : SystemConfig
    ch : ChannelRealization
    mm : MismatchSet
    dplan : DigitalStagePlan
    aplan : AnalogStagePlan
        Plans designed for ``direction``.
    noise_var : float
        Per-antenna noise variance; zero gives noiseless blocks.
    rng : numpy.random.Generator
        Noise stream.
    full_outputs : bool
        Also return every receive chain of the analog stage. The inactive
        beam columns and pilots this needs are drawn from ``rng`` after the
        noise, so the noise realization does not depend on this flag.
    """
    link = link_model(direction, cfg, ch, mm)
    _, m_tx, _, m_rx = _check_plans(cfg, direction, dplan, aplan, link)
    q_da, p_da = aplan.q_da, aplan.p_da

    # digital stage: every chain shares one analog beam, W = I / sqrt(m_tx), D = I
    f_dr = np.outer(dplan.f_dr, np.ones(m_tx))
    b_dr = np.outer(dplan.b_dr, np.ones(m_rx))
    precoder = np.eye(m_tx) / math.sqrt(m_tx)
    transmitted = link.tx2[:, None] * (f_dr @ (link.tx1[:, None] * (precoder @ dplan.x_dr)))
    blocks = _receive(link, noise_var, rng, transmitted, [b_dr] * dplan.p_dr, np.eye(m_rx))
    y_dr = blocks.reshape(m_rx * dplan.p_dr, dplan.q_dr)
    beta_d = complex(dplan.b_dr @ link.effective @ dplan.f_dr) / math.sqrt(m_tx)

    # analog stage: only digital chain 1 is active on both sides
    transmitted = link.tx2[:, None] * aplan.f_da * (link.tx1[0] * aplan.x_da)[None, :]
    first = np.zeros((m_rx, m_rx))
    first[0, 0] = 1.0
    noiseless = link.rx2[:, None] * (link.gain @ transmitted)
    y_da = np.empty((p_da, q_da), dtype=complex)
    noises = []
    for p in range(p_da):
        received = noiseless
        if noise_var > 0:
            noise = complex_normal(rng, noiseless.shape, noise_var)
            received = noiseless + noise
            if full_outputs:
                noises.append(noise)
        y_da[p] = link.rx1[0] * (aplan.b_da[:, p] @ received)

    chains = None
    if full_outputs:
        chains = _full_analog_chain(link, aplan, rng, noises, first, m_tx, m_rx)
    return TrainingOutput(y_dr=y_dr, y_da=y_da, beta_d=beta_d, y_da_chains=chains)


def _full_analog_chain(link, aplan, rng, noises, first, m_tx, m_rx):
    """Every receive chain of the analog stage through the complete hardware chain."""
    q_da, p_da = aplan.q_da, aplan.p_da
    # inactive beam columns and pilot entries are arbitrary; the block-diagonal
    # precoder and combiner remove them
    f_extra = random_phases(rng, (link.tx2.size, q_da, m_tx - 1))
    x_extra = complex_normal(rng, (q_da, m_tx - 1))
    b_extra = random_phases(rng, (link.rx2.size, p_da, m_rx - 1))
    precoder = np.zeros((m_tx, m_tx))
    precoder[0, 0] = 1.0
    sent = np.empty((link.tx2.size, q_da), dtype=complex)
    for q in range(q_da):
        f_q = np.column_stack([aplan.f_da[:, q], f_extra[:, q, :]])
        x_q = np.concatenate([[aplan.x_da[q]], x_extra[q]])
        sent[:, q] = link.tx2 * (f_q @ (link.tx1 * (precoder @ x_q)))
    signal = link.rx2[:, None] * (link.gain @ sent)
    out = np.empty((m_rx, p_da, q_da), dtype=complex)
    for p in range(p_da):
        received = signal + noises[p] if noises else signal
        b_p = np.column_stack([aplan.b_da[:, p], b_extra[:, p, :]])
        out[:, p, :] = first.T @ (link.rx1[:, None] * (b_p.T @ received))
    return out
