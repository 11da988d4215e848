"""Hierarchical-absolute calibration estimators.

The digital-chain mismatch follows in closed form from the rank-one
digital-stage blocks. The analog-chain mismatch, path gains and angles are
fitted to the analog-stage samples by block-coordinate descent:

    y_da ≈ B^T diag(u2) A_rx(phis) diag(h) A_tx(thetas)^T diag(t2) X

where ``B`` holds the receive beams, ``X = f_da @ diag(x_da)`` the scaled
transmit beams, and ``A_rx``/``A_tx`` are steering matrices. Gains and each
mismatch vector enter linearly and are refreshed by exact least squares.
Angles are refreshed by Gauss-Newton steps on their first-order expansion.

In the uplink the same code estimates ``(r2, v2)`` in place of ``(u2, t2)``:
``u2`` always denotes the receiving array and ``t2`` the transmitting one.
"""

import dataclasses
import enum
import math

import numpy as np

from . import mathkit
from .airlink import link_paths, run_training
from .channel import (
    HALF_PI,
    LinkDirection,
    complex_normal,
    steering_gradient_matrix,
    steering_matrix,
    wrap_angle,
)
from .errors import DimensionError, RankDeficiencyError, SolverError, ValidationError
from .pilots import (
    AnalogStagePlan,
    DigitalStagePlan,
    design_analog_stage,
    design_digital_stage,
    random_phases,
    validate_pilot_lengths,
)
from .serialize import JsonMixin, carray, cscalar, nested

#: Halvings tried before an angle step that raises the residual is rejected.
MAX_STEP_HALVINGS = 20


class Side(str, enum.Enum):
    """Which array's path angles an update refines."""

    AOA = "aoa"  # receive side
    AOD = "aod"  # transmit side


class UpdateOrder(str, enum.Enum):
    T2_FIRST = "t2-first"
    U2_FIRST = "u2-first"


class MismatchInit(str, enum.Enum):
    """Starting point of the analog mismatch vectors."""

    NOMINAL = "nominal"  # ideal hardware, all ones
    RANDOM = "random"  # unit-modulus random phases


@dataclasses.dataclass(frozen=True)
class SolverSettings(JsonMixin):
    """Stopping rules and knobs of the analog solver.

    Attributes
    ----------
    eps_outer : float
        Stop when the residual changes by less than ``eps_outer * ||y_da||^2``.
    eps_angle : float
        Stop angle refinement when the squared step norm (rad^2) falls below this.
    max_outer, max_angle_iters : int
        Iteration caps of the outer loop and of each angle refinement.
    init_grid_size : int
        Grid points per angle axis for the matched-filter initializer.
    update_order : str
        ``"t2-first"`` or ``"u2-first"`` within each outer iteration.
    c_dr : complex
        Value assigned to the first receive digital-chain coefficient.
    mismatch_init : str
        ``"nominal"`` starts the analog mismatch at all ones, ``"random"`` at
        random unit-modulus phases.
    """

    eps_outer: float = 1e-8
    eps_angle: float = 1e-10
    max_outer: int = 50
    max_angle_iters: int = 10
    init_grid_size: int = 64
    update_order: str = UpdateOrder.T2_FIRST.value
    c_dr: complex = cscalar(default=1.0 + 0.0j)
    mismatch_init: str = MismatchInit.NOMINAL.value

    def __post_init__(self):
        if not (self.eps_outer > 0 and self.eps_angle > 0):
            raise ValidationError("eps_outer and eps_angle must be > 0")
        if min(self.max_outer, self.max_angle_iters, self.init_grid_size) < 1:
            raise ValidationError("max_outer, max_angle_iters and init_grid_size must be >= 1")
        for name, kind in (("update_order", UpdateOrder), ("mismatch_init", MismatchInit)):
            try:
                object.__setattr__(self, name, kind(getattr(self, name)).value)
            except ValueError:
                choices = ", ".join(v.value for v in kind)
                raise ValidationError(f"{name} must be one of {choices}, got {getattr(self, name)!r}") from None
        object.__setattr__(self, "c_dr", complex(self.c_dr))
        if self.c_dr == 0:
            raise ValidationError("c_dr must be nonzero")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True, eq=False)
class DigitalCalibration(JsonMixin):
    """Receive and transmit digital-chain estimates; ``u1_hat[0] == c_dr``."""

    u1_hat: np.ndarray = carray()
    t1_hat: np.ndarray = carray()


@dataclasses.dataclass(frozen=True, eq=False)
class AnalogCalibration(JsonMixin):
    """Analog-chain estimates with the solver's convergence record.

    ``u2_hat`` and ``t2_hat`` are scaled so their first entry is 1; the
    common scale is carried by ``h_alpha_hat``. ``objective_trace[0]`` is the
    residual at the starting point and each later entry the residual after
    one outer iteration.
    """

    u2_hat: np.ndarray = carray()
    t2_hat: np.ndarray = carray()
    h_alpha_hat: np.ndarray = carray()
    theta_hat: np.ndarray = carray()
    phi_hat: np.ndarray = carray()
    objective_trace: tuple = ()
    iterations: int = 0
    converged: bool = False


@dataclasses.dataclass(frozen=True, eq=False)
class LinkCalibration(JsonMixin):
    """Outcome of the full two-stage procedure on one direction."""

    direction: str
    digital: DigitalCalibration = nested(DigitalCalibration)
    analog: AnalogCalibration = nested(AnalogCalibration)
    digital_plan: DigitalStagePlan = nested(DigitalStagePlan)
    analog_plan: AnalogStagePlan = nested(AnalogStagePlan)


# ---------------------------------------------------------------------------
# digital stage


def solve_digital(y_dr, x_dr, p_dr, c_dr=1.0):
    """Closed-form digital-chain estimates from the digital-stage blocks.

    Parameters
    ----------
    y_dr : (m_rx * p_dr, q_dr) array_like
        Stacked received blocks.
    x_dr : (m_tx, q_dr) array_like
        Pilot matrix.
    p_dr : int
        Number of stacked blocks.
    c_dr : complex
        Value assigned to the first receive coefficient.

    Returns
    -------
    DigitalCalibration
        ``u1_hat`` is exact up to the reference even with noise, because
        every receive chain sees the same combined noise sample.
    """
    y_dr = np.asarray(y_dr)
    x_dr = np.asarray(x_dr)
    c_dr = complex(c_dr)
    if c_dr == 0:
        raise ValidationError("c_dr must be nonzero")
    rows, q_dr = y_dr.shape
    if p_dr < 1 or rows % p_dr:
        raise DimensionError(f"y_dr has {rows} rows, not a multiple of p_dr={p_dr}")
    if x_dr.shape[1] != q_dr:
        raise DimensionError(f"x_dr has {x_dr.shape[1]} columns, y_dr has {q_dr}")
    m_rx = rows // p_dr
    blocks = y_dr.reshape(p_dr, m_rx, q_dr)
    reference = blocks[:, 0, :]

    u1_hat = np.empty(m_rx, dtype=complex)
    u1_hat[0] = c_dr
    if m_rx > 1:
        eye = np.eye(m_rx - 1)
        stacked = np.vstack([np.kron(row[:, None], eye) for row in reference])
        others = np.concatenate([mathkit.vec(block[1:]) for block in blocks])
        u1_hat[1:] = c_dr * mathkit.lstsq(stacked, others, name="stacked reference-row matrix of y_dr")

    design = np.vstack([x_dr.T] * p_dr)
    try:
        t1_hat = mathkit.lstsq(design, reference.reshape(-1), name="x_dr") / c_dr
    except RankDeficiencyError as err:
        raise RankDeficiencyError(err.rank, err.cols, "x_dr (pilot rows not independent)") from None
    return DigitalCalibration(u1_hat=u1_hat, t1_hat=t1_hat)


# ---------------------------------------------------------------------------
# analog-stage model


class AnalogModel:
    """Factor matrices of the analog-stage mean for fixed plan data.

    Parameters
    ----------
    aplan : AnalogStagePlan
    d_over_lambda : float
    """

    def __init__(self, aplan, d_over_lambda=0.5):
        self.b_t = aplan.b_da.T  # p_da x n_rx
        self.x_t = aplan.x_tilde.T  # q_da x n_tx
        self.n_rx = aplan.b_da.shape[0]
        self.n_tx = aplan.f_da.shape[0]
        self.d = d_over_lambda

    def rx_steering(self, phis):
        return steering_matrix(self.n_rx, phis, self.d)

    def tx_steering(self, thetas):
        return steering_matrix(self.n_tx, thetas, self.d)

    def left(self, u2, phis):
        """``B^T diag(u2) A_rx``, shape ``p_da x K``."""
        return self.b_t @ (u2[:, None] * self.rx_steering(phis))

    def right(self, t2, thetas):
        """``X^T diag(t2) A_tx``, shape ``q_da x K``."""
        return self.x_t @ (t2[:, None] * self.tx_steering(thetas))

    def mean(self, t2, u2, h, thetas, phis):
        return (self.left(u2, phis) * h[None, :]) @ self.right(t2, thetas).T

    def residual(self, y, t2, u2, h, thetas, phis):
        r = y - self.mean(t2, u2, h, thetas, phis)
        return float(np.vdot(r, r).real)

    def gamma_h(self, t2, u2, thetas, phis):
        return mathkit.khatri_rao(self.right(t2, thetas), self.left(u2, phis))

    def gamma_u(self, t2, h, thetas, phis):
        inner = (self.rx_steering(phis) * h[None, :]) @ self.right(t2, thetas).T  # n_rx x q_da
        return mathkit.khatri_rao(inner.T, self.b_t)

    def gamma_t(self, u2, h, thetas, phis):
        inner = (self.left(u2, phis) * h[None, :]) @ self.tx_steering(thetas).T  # p_da x n_tx
        return mathkit.khatri_rao(self.x_t, inner)

    def gamma_aoa(self, t2, u2, h, thetas, phis):
        """Derivative of ``vec(mean)`` with respect to the receive-side angles."""
        grad = self.b_t @ (u2[:, None] * steering_gradient_matrix(self.n_rx, phis, self.d))
        return mathkit.khatri_rao(self.right(t2, thetas) * h[None, :], grad)

    def gamma_aod(self, t2, u2, h, thetas, phis):
        """Derivative of ``vec(mean)`` with respect to the transmit-side angles."""
        grad = self.x_t @ (t2[:, None] * steering_gradient_matrix(self.n_tx, thetas, self.d))
        return mathkit.khatri_rao(grad, self.left(u2, phis) * h[None, :])


def _model(aplan, cfg):
    return AnalogModel(aplan, cfg.d_over_lambda)


def _as_complex(v):
    return np.asarray(v, dtype=complex)


def _as_angles(v):
    return np.atleast_1d(np.asarray(v, dtype=float))


def estimate_gains(y_da, aplan, t2, u2, thetas, phis, cfg):
    """Least-squares path gains with everything else held fixed."""
    model = _model(aplan, cfg)
    gamma = model.gamma_h(_as_complex(t2), _as_complex(u2), _as_angles(thetas), _as_angles(phis))
    return mathkit.lstsq(gamma, mathkit.vec(y_da), name="gain regressor (check q_da, p_da and path separation)")


def estimate_u2(y_da, aplan, t2, h_alpha, thetas, phis, cfg):
    """Least-squares receive analog mismatch with everything else held fixed."""
    model = _model(aplan, cfg)
    gamma = model.gamma_u(_as_complex(t2), _as_complex(h_alpha), _as_angles(thetas), _as_angles(phis))
    return mathkit.lstsq(gamma, mathkit.vec(y_da), name="receive-mismatch regressor (check p_da)")


def estimate_t2(y_da, aplan, u2, h_alpha, thetas, phis, cfg):
    """Least-squares transmit analog mismatch with everything else held fixed."""
    model = _model(aplan, cfg)
    gamma = model.gamma_t(_as_complex(u2), _as_complex(h_alpha), _as_angles(thetas), _as_angles(phis))
    return mathkit.lstsq(gamma, mathkit.vec(y_da), name="transmit-mismatch regressor (check q_da)")


def _real_step(gamma, r):
    """Solve ``Re{G^H G} xi = Re{G^H r}`` with one damped retry."""
    a = np.vstack([gamma.real, gamma.imag])
    b = np.concatenate([r.real, r.imag])
    try:
        return mathkit.lstsq(a, b, name="angle normal matrix")
    except RankDeficiencyError:
        k = gamma.shape[1]
        damping = 1e-10 * float(np.sum(np.abs(gamma) ** 2)) / k
        if damping <= 0:
            raise SolverError("angle normal matrix is zero; re-initialize the angles") from None
        a = np.vstack([a, math.sqrt(damping) * np.eye(k)])
        b = np.concatenate([b, np.zeros(k)])
        try:
            return mathkit.lstsq(a, b, name="damped angle normal matrix")
        except RankDeficiencyError:
            raise SolverError(
                "angle normal matrix is singular even after damping; re-initialize the angles"
            ) from None


def update_angles(y_da, aplan, u2, t2, h_alpha, thetas, phis, side, settings, cfg):
    """Gauss-Newton refinement of the angles on one side.

    Each step solves the real least-squares problem of the first-order
    expansion. A step that would raise the residual is halved until it does
    not, and refinement stops when no such step exists, so the residual never
    increases. Iteration stops once the squared step norm drops below
    ``settings.eps_angle`` or after ``settings.max_angle_iters`` steps.

    Returns
    -------
    ndarray
        Updated angles of ``side`` (transmit side for AoD, receive for AoA),
        wrapped to ``[-pi/2, pi/2)``.
    """
    side = Side(side)
    model = _model(aplan, cfg)
    y = np.asarray(y_da)
    t2, u2, h = _as_complex(t2), _as_complex(u2), _as_complex(h_alpha)
    thetas, phis = _as_angles(thetas).copy(), _as_angles(phis).copy()

    def fit(angles):
        if side is Side.AOA:
            return model.residual(y, t2, u2, h, thetas, angles)
        return model.residual(y, t2, u2, h, angles, phis)

    angles = phis if side is Side.AOA else thetas
    objective = fit(angles)
    for _ in range(settings.max_angle_iters):
        if objective == 0.0:
            break
        if side is Side.AOA:
            gamma = model.gamma_aoa(t2, u2, h, thetas, angles)
            r = y - model.mean(t2, u2, h, thetas, angles)
        else:
            gamma = model.gamma_aod(t2, u2, h, angles, phis)
            r = y - model.mean(t2, u2, h, angles, phis)
        xi = _real_step(gamma, mathkit.vec(r))
        step = xi
        for _ in range(MAX_STEP_HALVINGS):
            candidate = wrap_angle(angles + step)
            value = fit(candidate)
            if value <= objective:
                break
            step = step / 2
        else:
            break
        angles, objective = candidate, value
        if float(xi @ xi) < settings.eps_angle:
            break
    return wrap_angle(angles)


def _angle_grid(size):
    return -HALF_PI + math.pi * np.arange(size) / size


def init_angles(y_da, aplan, cfg, settings):
    """Coarse angle pairs from a two-dimensional matched-filter grid.

    For every grid pair the samples are correlated with the unit-norm
    receive projection ``B^T a_rx(phi)`` and transmit projection
    ``X^T a_tx(theta)``. Peaks are extracted greedily: after each pick the
    gains of all picked atoms are refitted by least squares and their
    contribution is subtracted, so sidelobes of strong paths do not mask
    weak ones. Cells within two grid steps of a pick on both axes are
    excluded from later picks.

    Returns
    -------
    thetas, phis : ndarray
        Transmit-side and receive-side angles in pick order.
    """
    y = np.asarray(y_da)
    k = cfg.k_paths
    p_da, q_da = y.shape
    if k > min(p_da, q_da):
        raise ValidationError(f"k_paths={k} exceeds min(p_da, q_da)={min(p_da, q_da)}")
    size = settings.init_grid_size
    model = _model(aplan, cfg)
    grid = _angle_grid(size)
    rx, tx = _projections(model, grid, grid)
    allowed = np.ones((size, size), dtype=bool)
    picks = []
    residual = y
    for _ in range(k):
        if not allowed.any():
            raise SolverError("angle grid too coarse to separate the requested paths")
        score = np.abs(rx.conj().T @ residual @ tx.conj())  # receive grid x transmit grid
        score[~allowed] = -1.0
        i_rx, i_tx = divmod(int(np.argmax(score)), size)
        allowed[max(0, i_rx - 2) : i_rx + 3, max(0, i_tx - 2) : i_tx + 3] = False
        picks.append(_zoom(model, residual, grid[i_tx], grid[i_rx], math.pi / size))
        atoms = np.column_stack([_atom(model, theta, phi) for theta, phi in picks])
        gains, *_ = np.linalg.lstsq(atoms, mathkit.vec(y), rcond=None)
        residual = y - mathkit.unvec(atoms @ gains, p_da, q_da)
    thetas = np.array([theta for theta, _ in picks])
    phis = np.array([phi for _, phi in picks])
    return thetas, phis


def _projections(model, thetas, phis):
    rx = model.b_t @ model.rx_steering(phis)
    tx = model.x_t @ model.tx_steering(thetas)
    rx = rx / np.maximum(np.linalg.norm(rx, axis=0), np.finfo(float).tiny)
    tx = tx / np.maximum(np.linalg.norm(tx, axis=0), np.finfo(float).tiny)
    return rx, tx


def _atom(model, theta, phi):
    rx, tx = _projections(model, [theta], [phi])
    return np.kron(tx[:, 0], rx[:, 0])


#: Sub-steps per coarse cell when polishing a grid pick.
ZOOM_STEPS = 8


def _zoom(model, residual, theta, phi, cell):
    """Polish one grid pick on a finer local grid spanning one cell each way."""
    offsets = cell * np.arange(-ZOOM_STEPS, ZOOM_STEPS + 1) / ZOOM_STEPS
    thetas = theta + offsets
    phis = phi + offsets
    rx, tx = _projections(model, thetas, phis)
    score = np.abs(rx.conj().T @ residual @ tx.conj())
    # ties keep the coarse node, which sits at the center of the local grid
    center = ZOOM_STEPS * (2 * ZOOM_STEPS + 1) + ZOOM_STEPS
    best = int(np.argmax(score))
    if score.flat[best] <= score.flat[center]:
        best = center
    i_rx, i_tx = divmod(best, 2 * ZOOM_STEPS + 1)
    return float(wrap_angle(thetas[i_tx])), float(wrap_angle(phis[i_rx]))


def _normalized(v):
    return v / v[0] if v[0] != 0 else v


def calibrate_analog(y_da, aplan, cfg, settings, init=None, rng=None, freeze_angles=False):
    """Alternating estimation of analog mismatch, path gains and angles.

    Parameters
    ----------
    y_da : (p_da, q_da) array_like
    aplan : AnalogStagePlan
    cfg : SystemConfig
    settings : SolverSettings
    init : tuple of ndarray, optional
        Starting ``(thetas, phis)`` or ``(thetas, phis, t2, u2, h_alpha)``;
        the matched-filter grid and the ``mismatch_init`` rule are used for
        whatever is not given.
    rng : numpy.random.Generator, optional
        Stream for the random starting gains (and mismatch, if random).
    freeze_angles : bool
        Keep the starting angles fixed (oracle-angle mode).

    Returns
    -------
    AnalogCalibration
    """
    y = np.asarray(y_da)
    if y.shape != (aplan.p_da, aplan.q_da):
        raise DimensionError(f"y_da has shape {y.shape}, plan expects {(aplan.p_da, aplan.q_da)}")
    rng = rng if rng is not None else np.random.default_rng(0)
    model = _model(aplan, cfg)
    k = cfg.k_paths
    init = tuple(init) if init is not None else ()
    if len(init) not in (0, 2, 5):
        raise DimensionError("init must be (thetas, phis) or (thetas, phis, t2, u2, h_alpha)")
    if init:
        thetas, phis = (wrap_angle(_as_angles(a)) for a in init[:2])
        if thetas.size != k or phis.size != k:
            raise DimensionError(f"initial angles must have {k} entries per side")
    else:
        thetas, phis = init_angles(y, aplan, cfg, settings)

    if len(init) == 5:
        t2, u2, h = (_as_complex(v).copy() for v in init[2:])
        if (t2.size, u2.size, h.size) != (model.n_tx, model.n_rx, k):
            raise DimensionError(f"initial t2, u2, h_alpha must have {model.n_tx}, {model.n_rx}, {k} entries")
    else:
        if settings.mismatch_init == MismatchInit.RANDOM.value:
            t2 = random_phases(rng, model.n_tx)
            u2 = random_phases(rng, model.n_rx)
        else:
            t2 = np.ones(model.n_tx, dtype=complex)
            u2 = np.ones(model.n_rx, dtype=complex)
        h = complex_normal(rng, k)
    state = dict(t2=t2, u2=u2, h=h, thetas=thetas, phis=phis)
    objective = model.residual(y, **state)
    trace = [objective]
    energy = float(np.vdot(y, y).real)

    def attempt(name, value):
        nonlocal objective
        candidate = dict(state, **{name: value})
        fit = model.residual(y, **candidate)
        # exact block minimizers can still lose to roundoff near convergence
        if fit <= objective:
            state[name] = value
            objective = fit

    converged = False
    for _ in range(settings.max_outer):
        s = state
        attempt("h", estimate_gains(y, aplan, s["t2"], s["u2"], s["thetas"], s["phis"], cfg))
        if objective == 0.0:
            # an exact fit leaves nothing to refine, and zero gains would make
            # the mismatch regressors singular
            trace.append(objective)
            converged = True
            break
        blocks = ["t2", "u2"] if settings.update_order == UpdateOrder.T2_FIRST.value else ["u2", "t2"]
        for name in blocks:
            if name == "t2":
                value = estimate_t2(y, aplan, s["u2"], s["h"], s["thetas"], s["phis"], cfg)
            else:
                value = estimate_u2(y, aplan, s["t2"], s["h"], s["thetas"], s["phis"], cfg)
            attempt(name, value)
        if not freeze_angles:
            for side, name in ((Side.AOA, "phis"), (Side.AOD, "thetas")):
                value = update_angles(y, aplan, s["u2"], s["t2"], s["h"], s["thetas"], s["phis"],
                                      side, settings, cfg)
                attempt(name, value)
        trace.append(objective)
        if abs(trace[-2] - trace[-1]) <= settings.eps_outer * energy:
            converged = True
            break

    u2_ref, t2_ref = state["u2"][0], state["t2"][0]
    scale = u2_ref * t2_ref if u2_ref != 0 and t2_ref != 0 else 1.0
    return AnalogCalibration(
        u2_hat=_normalized(state["u2"]),
        t2_hat=_normalized(state["t2"]),
        h_alpha_hat=state["h"] * scale,
        theta_hat=state["thetas"],
        phi_hat=state["phis"],
        objective_trace=tuple(trace),
        iterations=len(trace) - 1,
        converged=converged,
    )


def reconstruct_effective_channel(cal, cfg):
    """``diag(u2) (sum_k h_k a_rx(phi_k) a_tx(theta_k)^T) diag(t2)``, receive x transmit."""
    a_rx = steering_matrix(cal.u2_hat.size, cal.phi_hat, cfg.d_over_lambda)
    a_tx = steering_matrix(cal.t2_hat.size, cal.theta_hat, cfg.d_over_lambda)
    paths = (a_rx * cal.h_alpha_hat[None, :]) @ a_tx.T
    return cal.u2_hat[:, None] * paths * cal.t2_hat[None, :]


def true_analog_parameters(direction, cfg, ch, mm):
    """Ground-truth ``(t2, u2, h_alpha, thetas, phis)`` in the frame the solver fits.

    The gains absorb the first digital-chain coefficients of both ends, since
    only chain 1 is active during the analog stage.
    """
    gains, tx_angles, rx_angles = link_paths(direction, cfg, ch)
    if LinkDirection(direction) is LinkDirection.DOWNLINK:
        tx1, tx2, rx1, rx2 = mm.t1, mm.t2, mm.u1, mm.u2
    else:
        tx1, tx2, rx1, rx2 = mm.v1, mm.v2, mm.r1, mm.r2
    return tx2, rx2, gains * tx1[0] * rx1[0], tx_angles, rx_angles


def calibrate_link(direction, cfg, ch, mm, settings, beam_rng, noise_rng, solver_rng,
                   noise_var=None, oracle_angles=False):
    """Run both training stages of ``direction`` and both solvers.

    Parameters
    ----------
    beam_rng, noise_rng, solver_rng : numpy.random.Generator
        Streams for beam design, receiver noise and solver initialization.
    noise_var : float, optional
        Overrides ``cfg.noise_var`` (zero gives noiseless training).
    oracle_angles : bool
        Start the analog solver at the true angles and keep them fixed.

    Returns
    -------
    LinkCalibration
    training : TrainingOutput
    """
    validate_pilot_lengths(cfg, direction).raise_if_invalid()
    dplan = design_digital_stage(cfg, beam_rng, direction)
    aplan = design_analog_stage(cfg, beam_rng, direction)
    sigma2 = cfg.noise_var if noise_var is None else noise_var
    training = run_training(direction, cfg, ch, mm, dplan, aplan, sigma2, noise_rng)
    digital = solve_digital(training.y_dr, dplan.x_dr, dplan.p_dr, settings.c_dr)
    init = None
    if oracle_angles:
        _, _, _, tx_angles, rx_angles = true_analog_parameters(direction, cfg, ch, mm)
        init = (tx_angles, rx_angles)
    analog = calibrate_analog(training.y_da, aplan, cfg, settings, init=init, rng=solver_rng,
                              freeze_angles=oracle_angles)
    result = LinkCalibration(direction=LinkDirection(direction).value, digital=digital,
                             analog=analog, digital_plan=dplan, analog_plan=aplan)
    return result, training
