"""Dense float64 linear-algebra kernels used by the erasers.

Matrices and vectors are plain ``numpy.ndarray`` objects; the helpers here
only validate shape/finiteness and add the PSD clamping and pseudoinverse
cutoff conventions the rest of the package relies on.
"""

import numpy as np

SYMMETRY_RTOL = 1e-9
PSD_CLAMP = 1e-10
PINV_RCOND = 1e-10


class DimensionError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def _check_symmetric(m):
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.linalg.norm(m), 1e-300)
    if np.linalg.norm(m - m.T) > SYMMETRY_RTOL * scale:
        raise DimensionError("matrix is not symmetric")


def sym_eig(m):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    ``m ~= V @ diag(w) @ V.T``.
    """
    m = as_matrix(m)
    _check_symmetric(m)
    # symmetrize away rounding asymmetry before handing to LAPACK
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return w, v


def psd_sqrt(m):
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues in ``[-1e-10, 0)`` are treated as rounding noise and clamped
    to zero; anything more negative raises :class:`NotPSDError`.
    """
    w, v = sym_eig(m)
    if w.size and w[0] < -PSD_CLAMP:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3e} is below -{PSD_CLAMP}")
    w = np.clip(w, 0.0, None)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def pinv(m, rcond=PINV_RCOND):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rcond * sigma_max`` are treated as zero.
    """
    m = as_matrix(m)
    if m.size == 0:
        return np.zeros(m.shape[::-1])
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    cutoff = rcond * (s[0] if s.size else 0.0)
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def cross_covariance(x, z):
    """Population cross-covariance ``(1/n) (X - mean X)^T (Z - mean Z)``."""
    x = as_matrix(x, "x")
    z = as_matrix(z, "z")
    if x.shape[0] != z.shape[0]:
        raise DimensionError(f"row counts differ: {x.shape[0]} vs {z.shape[0]}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 rows, got {n}")
    xc = x - x.mean(axis=0)
    zc = z - z.mean(axis=0)
    return xc.T @ zc / n


def covariance(x):
    c = cross_covariance(x, x)
    return 0.5 * (c + c.T)
