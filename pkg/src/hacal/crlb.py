"""Cramér-Rao lower bounds for the mismatch coefficients.

The digital and analog stages use disjoint training blocks with independent
noise, so the Fisher information is block diagonal and the two blocks are
computed by separate functions that share no state.

Every bound is stated per complex coefficient as the sum of the variances of
its real and imaginary parts.

The analog model is invariant to a complex rescaling of ``t2`` and of ``u2``
(absorbed by the path gains) and to a linear phase ramp across ``t2`` or
``u2`` (absorbed by a shift of ``sin`` of every departure or arrival angle).
These six real directions are structural null directions of the analog
Fisher matrix, so the analog block is inverted with a pseudo-inverse. The
values then bound the error component orthogonal to those directions.
"""

import dataclasses

import numpy as np

from .errors import ValidationError
from .hac import AnalogModel
from .serialize import JsonMixin, carray

#: Real null directions of the analog Fisher matrix implied by the model:
#: two complex scales and two phase ramps.
GAUGE_NULLITY = 6

#: Relative singular-value threshold separating the null space.
RANK_RTOL = 1e-10


@dataclasses.dataclass(frozen=True, eq=False)
class CrlbReport(JsonMixin):
    """Per-coefficient bounds and analog Fisher-matrix diagnostics.

    Attributes
    ----------
    crlb_u1, crlb_t1, crlb_u2, crlb_t2 : ndarray
        Bounds for the receive/transmit digital (``u1`` excludes the fixed
        reference entry) and analog mismatch coefficients.
    fim_analog_cond : float
        Ratio of the largest to the smallest singular value of the analog
        Fisher matrix outside its null space.
    fim_analog_nullity : int
        Numerical nullity of the analog Fisher matrix.
    singular : bool
        True when the nullity exceeds :data:`GAUGE_NULLITY`, meaning the
        bounds of some coefficients are not informative (for example with
        merged paths).
    """

    crlb_u1: np.ndarray = carray()
    crlb_t1: np.ndarray = carray()
    crlb_u2: np.ndarray = carray()
    crlb_t2: np.ndarray = carray()
    fim_analog_cond: float = 0.0
    fim_analog_nullity: int = 0
    singular: bool = False


def crlb_digital(cfg, beta_d, l_dr, noise_gain=1.0):
    """Bounds on the digital mismatch coefficients.

    Parameters
    ----------
    cfg : SystemConfig
        Supplies ``noise_var``, ``pilot_power`` and ``m_t``, ``m_r``.
    beta_d : complex
        Common gain of the digital stage.
    l_dr : int
        Total digital training length ``q_dr * p_dr``.
    noise_gain : float
        Factor by which the receive combining scales the antenna noise
        variance (``||b_dr||^2`` for the shared beam). The default of 1
        treats ``cfg.noise_var`` as the post-combining variance.

    Returns
    -------
    crlb_u1 : ndarray of M_r - 1 zeros
        The reference rows are noise free relative to each other in the
        limit the closed form takes, so the receive digital bound vanishes.
    crlb_t1 : ndarray of M_t equal values
        ``noise_var * noise_gain / (pilot_power * |beta_d|^2 * l_dr)``.
    """
    if beta_d == 0:
        raise ValidationError("beta_d is zero: digital-stage training carries no information")
    if int(l_dr) < 1:
        raise ValidationError(f"l_dr must be >= 1, got {l_dr}")
    value = cfg.noise_var * noise_gain / (cfg.pilot_power * abs(beta_d) ** 2 * int(l_dr))
    return np.zeros(cfg.m_r - 1), np.full(cfg.m_t, value)


def _unpack(truth):
    t2, u2, h, thetas, phis = truth
    t2, u2, h = (np.asarray(v, dtype=complex) for v in (t2, u2, h))
    thetas, phis = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (thetas, phis))
    if thetas.size != h.size or phis.size != h.size:
        raise ValidationError(
            f"truth has {h.size} gains but {thetas.size} transmit and {phis.size} receive angles"
        )
    return t2, u2, h, thetas, phis


def analog_jacobian(cfg, aplan, truth):
    """Complex Jacobian of ``vec(mean)`` with respect to the real analog parameters.

    Column order: ``Re t2, Im t2, Re u2, Im u2, Re h, Im h``, transmit
    angles, receive angles.
    """
    t2, u2, h, thetas, phis = _unpack(truth)
    model = AnalogModel(aplan, cfg.d_over_lambda)
    if t2.size != model.n_tx or u2.size != model.n_rx:
        raise ValidationError(
            f"truth has {t2.size} transmit and {u2.size} receive coefficients, "
            f"plan has {model.n_tx} and {model.n_rx} antennas"
        )
    g_t = model.gamma_t(u2, h, thetas, phis)
    g_u = model.gamma_u(t2, h, thetas, phis)
    g_h = model.gamma_h(t2, u2, thetas, phis)
    g_tx = model.gamma_aod(t2, u2, h, thetas, phis)
    g_rx = model.gamma_aoa(t2, u2, h, thetas, phis)
    return np.hstack([g_t, 1j * g_t, g_u, 1j * g_u, g_h, 1j * g_h, g_tx, g_rx])


def fisher_analog(cfg, aplan, truth, noise_gain=1.0):
    """Fisher information of the analog-stage parameters.

    ``(2 / variance) * Re{J^H J}`` with ``J`` from :func:`analog_jacobian`
    and ``variance = cfg.noise_var * noise_gain``.
    """
    jac = analog_jacobian(cfg, aplan, truth)
    fim = 2.0 / (cfg.noise_var * noise_gain) * (jac.conj().T @ jac).real
    return (fim + fim.T) / 2


def _pinv_diagnostics(fim):
    u, s, vt = np.linalg.svd(fim, hermitian=True)
    keep = s > RANK_RTOL * s[0] if s.size and s[0] > 0 else np.zeros(s.size, dtype=bool)
    inverse = (vt[keep].T / s[keep]) @ u[:, keep].T
    cond = float(s[keep][0] / s[keep][-1]) if keep.any() else float("inf")
    return inverse, cond, int(s.size - keep.sum())


def crlb_analog(cfg, aplan, truth, noise_gain=1.0):
    """Bounds on ``u2`` and ``t2`` with the analog Fisher diagnostics.

    Returns ``(crlb_u2, crlb_t2, cond, nullity)``.
    """
    fim = fisher_analog(cfg, aplan, truth, noise_gain)
    inverse, cond, nullity = _pinv_diagnostics(fim)
    n_tx, n_rx = np.size(truth[0]), np.size(truth[1])
    diag = np.clip(np.diag(inverse), 0.0, None)
    crlb_t2 = diag[:n_tx] + diag[n_tx : 2 * n_tx]
    start = 2 * n_tx
    crlb_u2 = diag[start : start + n_rx] + diag[start + n_rx : start + 2 * n_rx]
    return crlb_u2, crlb_t2, cond, nullity


def crlb_full(cfg, aplan, truth, beta_d, l_dr, digital_noise_gain=1.0, analog_noise_gain=1.0):
    """Assemble the digital and analog bounds into one :class:`CrlbReport`."""
    crlb_u1, crlb_t1 = crlb_digital(cfg, beta_d, l_dr, digital_noise_gain)
    crlb_u2, crlb_t2, cond, nullity = crlb_analog(cfg, aplan, truth, analog_noise_gain)
    return CrlbReport(
        crlb_u1=crlb_u1,
        crlb_t1=crlb_t1,
        crlb_u2=crlb_u2,
        crlb_t2=crlb_t2,
        fim_analog_cond=cond,
        fim_analog_nullity=nullity,
        singular=nullity > GAUGE_NULLITY,
    )
