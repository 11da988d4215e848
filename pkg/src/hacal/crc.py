"""Conventional relative calibration (CRC) baseline.

CRC treats every (digital chain, antenna) pair as one virtual antenna and
estimates the full equivalent channel

    H_eq = (rx1 ⊗ diag(rx2)) G (tx1^T ⊗ diag(tx2))

of size ``(m_rx n_rx) x (m_tx n_tx)`` by least squares. Comparing the
downlink and uplink equivalent channels yields relative calibration
coefficients, one per virtual antenna, fixed up to a common scale.

Virtual antenna ``(m, i)`` (chain ``m``, antenna ``i``) has index ``m * n + i``.
"""

import dataclasses

import numpy as np

from . import mathkit
from .airlink import link_model
from .channel import LinkDirection, complex_normal
from .errors import PilotLengthError, RankDeficiencyError, SolverError, ValidationError
from .pilots import random_phases
from .serialize import JsonMixin, carray

#: Largest equivalent-channel size (entries) CRC is run at.
MAX_VEC_LENGTH = 4096


@dataclasses.dataclass(frozen=True, eq=False)
class CrcTrainingOutput(JsonMixin):
    """Received CRC training and the factors of its sensing matrix.

    The sensing matrix ``b_crc = kron(f_tilde.T, b_tilde)`` maps
    ``vec(H_eq)`` to ``vec(y_ue)``; it is formed on demand because it grows
    with the fourth power of the array size.
    """

    y_ue: np.ndarray = carray()
    f_tilde: np.ndarray = carray()
    b_tilde: np.ndarray = carray()
    h_eq_true: np.ndarray = carray()

    @property
    def b_crc(self):
        return np.kron(self.f_tilde.T, self.b_tilde)


@dataclasses.dataclass(frozen=True, eq=False)
class CrcCoefficients(JsonMixin):
    """Relative calibration coefficients ``c = [c_bs; c_ue]`` with ``c[0] == 1``.

    ``n_bs`` is the number of BS virtual antennas (``m_t * n_t``).
    """

    c: np.ndarray = carray()
    n_bs: int = 0

    @property
    def c_bs(self):
        return self.c[: self.n_bs]

    @property
    def c_ue(self):
        return self.c[self.n_bs :]


@dataclasses.dataclass(frozen=True)
class OverheadReport(JsonMixin):
    """Downlink training overhead and computational order of CRC and HAC."""

    crc_overhead: int
    hac_overhead: int
    crc_flops_order: str
    hac_flops_order: str


def equivalent_channel(direction, cfg, ch, mm):
    """Virtual-array channel of ``direction``, receive x transmit."""
    link = link_model(direction, cfg, ch, mm)
    left = np.kron(link.rx1[:, None], np.diag(link.rx2))
    right = np.kron(link.tx1[None, :], np.diag(link.tx2))
    return left @ link.gain @ right


def check_size(cfg):
    size = cfg.n_t * cfg.m_t * cfg.n_r * cfg.m_r
    if size > MAX_VEC_LENGTH:
        raise ValidationError(
            f"CRC equivalent channel has {size} entries (n_t*m_t*n_r*m_r), above the cap of {MAX_VEC_LENGTH}"
        )


def crc_run_training(direction, cfg, ch, mm, q_crc, p_crc, noise_var, rng):
    """Simulate CRC training with random analog beams and random pilots.

    Raises
    ------
    PilotLengthError
        Unless ``q_crc >= n_tx * m_tx`` and ``p_crc >= n_rx``.
    ValidationError
        If the equivalent channel exceeds :data:`MAX_VEC_LENGTH` entries.
    """
    check_size(cfg)
    n_tx, m_tx, n_rx, m_rx = cfg.link_dims(direction)
    if q_crc < n_tx * m_tx or p_crc < n_rx:
        raise PilotLengthError(
            f"CRC needs q_crc >= n_tx*m_tx = {n_tx * m_tx} and p_crc >= n_rx = {n_rx}, "
            f"got q_crc={q_crc}, p_crc={p_crc}"
        )
    link = link_model(direction, cfg, ch, mm)
    f_beams = random_phases(rng, (q_crc, n_tx, m_tx))
    pilots = np.sqrt(cfg.pilot_power) * random_phases(rng, (q_crc, m_tx))
    b_beams = random_phases(rng, (p_crc, n_rx, m_rx))

    # column q of f_tilde stacks f_{q,m} * x_{q,m} over chains m
    f_tilde = (f_beams * pilots[:, None, :]).transpose(0, 2, 1).reshape(q_crc, m_tx * n_tx).T
    # block p of b_tilde is blkdiag(b_{p,1}^T, ..., b_{p,m}^T)
    b_tilde = np.zeros((p_crc * m_rx, m_rx * n_rx), dtype=complex)
    for p in range(p_crc):
        for m in range(m_rx):
            b_tilde[p * m_rx + m, m * n_rx : (m + 1) * n_rx] = b_beams[p, :, m]

    transmitted = np.einsum("qnm,m,qm->nq", f_beams, link.tx1, pilots)
    noiseless = link.rx2[:, None] * (link.gain @ (link.tx2[:, None] * transmitted))
    y_ue = np.empty((p_crc * m_rx, q_crc), dtype=complex)
    for p in range(p_crc):
        received = noiseless
        if noise_var > 0:
            received = noiseless + complex_normal(rng, noiseless.shape, noise_var)
        y_ue[p * m_rx : (p + 1) * m_rx] = link.rx1[:, None] * (b_beams[p].T @ received)
    h_eq = equivalent_channel(direction, cfg, ch, mm)
    return CrcTrainingOutput(y_ue=y_ue, f_tilde=f_tilde, b_tilde=b_tilde, h_eq_true=h_eq)


def crc_estimate_equivalent_channel(out, dense=False):
    """Least-squares equivalent channel from CRC training.

    With both Kronecker factors of full column rank the least-squares
    solution factorizes, ``H = pinv(b_tilde) @ y_ue @ pinv(f_tilde)``, which
    is what the default path computes. ``dense=True`` solves the full
    ``vec`` system instead.
    """
    rows, cols = out.b_tilde.shape[1], out.f_tilde.shape[0]
    try:
        if dense:
            return mathkit.unvec(
                mathkit.lstsq(out.b_crc, mathkit.vec(out.y_ue), name="CRC sensing matrix"), rows, cols
            )
        left = mathkit.lstsq(out.b_tilde, out.y_ue, name="stacked receive beams")
        return mathkit.lstsq(out.f_tilde.T, left.T, name="stacked transmit beams").T
    except RankDeficiencyError as err:
        raise RankDeficiencyError(err.rank, err.cols, f"CRC sensing factor ({err.name})") from None


def crc_matrix(h_ul_eq, h_dl_eq):
    """``[I ⊙ H_ul^T, -(H_dl^T ⊙ I)]``, whose null space holds the coefficients."""
    h_ul_t = np.asarray(h_ul_eq).T
    h_dl_t = np.asarray(h_dl_eq).T
    n_bs, n_ue = h_ul_t.shape[1], h_ul_t.shape[0]
    if h_dl_t.shape != (n_bs, n_ue):
        raise ValidationError(
            f"uplink {np.shape(h_ul_eq)} and downlink {np.shape(h_dl_eq)} channels are not transposes in shape"
        )
    return np.hstack([
        mathkit.khatri_rao(np.eye(n_bs), h_ul_t),
        -mathkit.khatri_rao(h_dl_t, np.eye(n_ue)),
    ])


def crc_coefficients(h_ul_eq, h_dl_eq):
    """Relative coefficients making ``C_ue H_dl = H_ul^T C_bs`` hold.

    Parameters
    ----------
    h_ul_eq : (m_t n_t, m_r n_r) array_like
        Uplink equivalent channel (BS receive x UE transmit).
    h_dl_eq : (m_r n_r, m_t n_t) array_like
        Downlink equivalent channel (UE receive x BS transmit).
    """
    matrix = crc_matrix(h_ul_eq, h_dl_eq)
    first, rest = matrix[:, 0], matrix[:, 1:]
    try:
        tail = -mathkit.lstsq(rest, first, name="CRC coefficient matrix")
    except RankDeficiencyError as err:
        raise SolverError(f"CRC coefficients are not unique: {err}") from None
    c = np.concatenate([[1.0 + 0.0j], tail])
    return CrcCoefficients(c=c, n_bs=np.shape(h_ul_eq)[0])


def downlink_from_uplink(h_ul_eq, coefficients):
    """Predict the downlink equivalent channel, ``C_ue^{-1} H_ul^T C_bs``."""
    return (np.asarray(h_ul_eq).T * coefficients.c_bs[None, :]) / coefficients.c_ue[:, None]


def overhead_report(cfg):
    """Minimum downlink training length and complexity order of CRC and HAC."""
    return OverheadReport(
        crc_overhead=cfg.n_t * cfg.m_t * cfg.n_r,
        hac_overhead=cfg.m_t + cfg.n_t * cfg.n_r,
        crc_flops_order="O(Nt^3 Mt^3 Nr^3 Mr^3)",
        hac_flops_order="O(L_ao (Mr^3 + Mt^3 + Nr^3 + Nt^3 + L_an K^3))",
    )


def crc_run_link(cfg, ch, mm, noise_var, rng, q_crc=None, p_crc=None):
    """Train both directions at the minimum lengths and compute the coefficients.

    Returns the coefficients with the estimated uplink and downlink
    equivalent channels.
    """
    estimates = {}
    for direction in (LinkDirection.UPLINK, LinkDirection.DOWNLINK):
        n_tx, m_tx, n_rx, _ = cfg.link_dims(direction)
        out = crc_run_training(direction, cfg, ch, mm, q_crc or n_tx * m_tx, p_crc or n_rx,
                               noise_var, rng)
        estimates[direction] = crc_estimate_equivalent_channel(out)
    h_ul, h_dl = estimates[LinkDirection.UPLINK], estimates[LinkDirection.DOWNLINK]
    return crc_coefficients(h_ul, h_dl), h_ul, h_dl
