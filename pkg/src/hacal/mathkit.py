"""Dense complex linear-algebra helpers.

Matrices are plain 2-D numpy arrays and vectors are 1-D arrays. Vectorization
is column-major throughout, so that ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionError, RankDeficiencyError

#: Relative threshold below which a pivot of the QR factor counts as zero.
RANK_TOL = 1e-10


def _as_matrix(a, name):
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def kron(a, b):
    """Kronecker product ``a ⊗ b``."""
    return np.kron(_as_matrix(a, "a"), _as_matrix(b, "b"))


def khatri_rao(a, b):
    """Column-wise Kronecker product.

    Column ``j`` of the result is ``kron(a[:, j], b[:, j])``.

    Raises
    ------
    DimensionError
        If the column counts differ.
    """
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"khatri_rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}"
        )
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def hadamard(a, b):
    """Entrywise product of two equally shaped arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"hadamard needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def vec(a):
    """Stack the columns of ``a`` into one vector."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec` for a ``rows x cols`` matrix."""
    v = np.asarray(v)
    if v.size != rows * cols:
        raise DimensionError(f"cannot reshape {v.size} entries into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def numerical_rank(a):
    """Rank of ``a`` using the same pivoted-QR cutoff as :func:`lstsq`."""
    a = _as_matrix(a, "a")
    if a.size == 0:
        return 0
    r = scipy.linalg.qr(a, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return 0
    return int(np.count_nonzero(diag > RANK_TOL * diag[0]))


def lstsq(a, b, name="matrix"):
    """Least-squares solution of ``a @ x ≈ b`` by column-pivoted QR.

    Parameters
    ----------
    a : (m, n) array_like
        System matrix with ``m >= n``.
    b : (m,) or (m, k) array_like
        Right-hand side(s).
    name : str
        Name used in the error message when ``a`` is rank deficient.

    Returns
    -------
    x : (n,) or (n, k) ndarray
        The unique minimizer of ``||a @ x - b||``.

    Raises
    ------
    DimensionError
        If ``a`` is wide or ``b`` has the wrong number of rows.
    RankDeficiencyError
        If a pivot falls below ``RANK_TOL`` times the largest pivot. The
        error carries the numerical rank; no minimum-norm fallback is used.
    """
    a = _as_matrix(a, name)
    b = np.asarray(b)
    m, n = a.shape
    if m < n:
        raise DimensionError(f"{name} is {m}x{n}; least squares needs rows >= cols")
    if b.shape[0] != m:
        raise DimensionError(f"right-hand side has {b.shape[0]} rows, {name} has {m}")
    if n == 0:
        return np.zeros((0,) + b.shape[1:], dtype=np.result_type(a, b))
    q, r, perm = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.count_nonzero(diag > RANK_TOL * diag[0])) if diag[0] > 0 else 0
    if rank < n:
        raise RankDeficiencyError(rank, n, name)
    y = q.conj().T @ b
    z = scipy.linalg.solve_triangular(r, y)
    x = np.empty_like(z)
    x[perm] = z
    return x


def collinearity_defect(a, b):
    """``1 - |<a, b>|^2 / (||a||^2 ||b||^2)``; zero iff the vectors are parallel."""
    a = np.ravel(a)
    b = np.ravel(b)
    na = np.vdot(a, a).real
    nb = np.vdot(b, b).real
    if na == 0 or nb == 0:
        return 1.0
    return float(max(0.0, 1.0 - abs(np.vdot(a, b)) ** 2 / (na * nb)))
