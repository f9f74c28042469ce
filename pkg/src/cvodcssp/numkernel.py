"""Dense linear-algebra primitives.

Every other module works on plain 2-D ``float64`` numpy arrays; this module
owns the factorizations, the projection helpers and the tolerance record.
Nothing here keeps state between calls.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    ConvergenceError,
    DimensionError,
    ParameterError,
    RankDeficiencyError,
    ValidationError,
)

EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used across the package.

    ``rank_factor`` scales the numerical-rank cutoff: a singular value counts
    when it exceeds ``rank_factor * max(m, n) * eps * sigma_1``.
    """

    rank_factor: float = 1.0
    qr_rank: float = 1e-12
    orthonormality: float = 1e-10
    independence: float = 1e-10
    bound_rtol: float = 1e-8
    monotone_slack: float = 1e-9
    energy_zero: float = 1e-15
    ill_conditioned: float = 1e-13

    ENV_PREFIX = "CVODCSSP_TOL_"

    @classmethod
    def from_env(cls, environ=None) -> "Tolerances":
        """Defaults, overridden by ``CVODCSSP_TOL_<FIELD>`` variables."""
        environ = os.environ if environ is None else environ
        overrides = {}
        for f in dataclasses.fields(cls):
            key = cls.ENV_PREFIX + f.name.upper()
            if key in environ:
                try:
                    value = float(environ[key])
                except ValueError as exc:
                    raise ParameterError(f"{key}={environ[key]!r} is not a number") from exc
                if not np.isfinite(value) or value < 0:
                    raise ParameterError(f"{key} must be a finite nonnegative number")
                overrides[f.name] = value
        return cls(**overrides)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class SvdFactors:
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray
    numerical_rank: int


@dataclass(frozen=True)
class QrFactors:
    q: np.ndarray
    r_upper: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a nonempty finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def rank_cutoff(s: np.ndarray, shape, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    if s.size == 0:
        return 0.0
    return tol.rank_factor * max(shape) * EPS * float(s[0])


def numerical_rank_from_values(s: np.ndarray, shape, tol: Tolerances = DEFAULT_TOLERANCES) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_cutoff(s, shape, tol)))


def singular_values(a: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.svdvals(a, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        try:
            return scipy.linalg.svd(a, compute_uv=False, lapack_driver="gesvd", check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"SVD did not converge: {exc}") from exc


def numerical_rank(a, tol: Tolerances = DEFAULT_TOLERANCES) -> int:
    a = as_matrix(a)
    return numerical_rank_from_values(singular_values(a), a.shape, tol)


def svd(a, tol: Tolerances = DEFAULT_TOLERANCES) -> SvdFactors:
    """Thin SVD ``a = u @ diag(s) @ vt``.

    Falls back to the slower ``gesvd`` driver when divide-and-conquer fails;
    raises :class:`ConvergenceError` if both fail.
    """
    a = as_matrix(a)
    try:
        u, s, vt = scipy.linalg.svd(a, full_matrices=False, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        try:
            u, s, vt = scipy.linalg.svd(
                a, full_matrices=False, lapack_driver="gesvd", check_finite=False
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"SVD did not converge: {exc}") from exc
    return SvdFactors(u, s, vt, numerical_rank_from_values(s, a.shape, tol))


def _check_count(d, a: np.ndarray, what: str) -> int:
    if isinstance(d, bool) or int(d) != d:
        raise ParameterError(f"{what} must be an integer, got {d!r}")
    d = int(d)
    if not 1 <= d <= min(a.shape):
        raise ParameterError(f"{what}={d} outside [1, {min(a.shape)}]")
    return d


def truncated_left_basis(a, d: int) -> np.ndarray:
    """Top-``d`` left singular vectors of ``a`` as an ``m x d`` array."""
    a = as_matrix(a)
    d = _check_count(d, a, "d")
    return svd(a).u[:, :d].copy()


def best_rank_r(a, r: int) -> np.ndarray:
    """Best rank-``r`` approximation from the truncated SVD."""
    a = as_matrix(a)
    r = _check_count(r, a, "r")
    f = svd(a)
    return (f.u[:, :r] * f.singular_values[:r]) @ f.vt[:r]


def tail_energy(s: np.ndarray, r: int) -> float:
    """``sum_{j > r} s_j**2``, i.e. ``||A - A_r||_F**2`` given singular values ``s``."""
    return float(np.sum(s[r:] ** 2))


def qr_factor(a, tol: Tolerances = DEFAULT_TOLERANCES) -> QrFactors:
    """Economic QR of a full-column-rank matrix, with ``diag(R) >= 0``."""
    a = as_matrix(a)
    m, n = a.shape
    if n > m:
        raise RankDeficiencyError(f"{m}x{n} matrix cannot have full column rank")
    q, r = scipy.linalg.qr(a, mode="economic", check_finite=False)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    q = q * signs
    r = r * signs[:, None]
    scale = spectral_norm(a)
    diag = np.abs(np.diag(r))
    if scale == 0.0 or np.any(diag < tol.qr_rank * scale):
        raise RankDeficiencyError(
            f"matrix is numerically rank deficient (min |R_jj| = {diag.min():.3e}, "
            f"||a||_2 = {scale:.3e})"
        )
    return QrFactors(q, np.triu(r))


def project_out(q, b) -> np.ndarray:
    """``(I - q q^T) b`` without forming the ``m x m`` projector."""
    b = np.asarray(b, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or b.ndim not in (1, 2):
        raise DimensionError("q must be 2-D and b 1-D or 2-D")
    if q.shape[0] != b.shape[0]:
        raise DimensionError(f"row mismatch: q has {q.shape[0]}, b has {b.shape[0]}")
    if q.shape[1] == 0:
        return b.copy()
    out = b - q @ (q.T @ b)
    # second pass restores orthogonality lost to cancellation
    return out - q @ (q.T @ out)


def residual_norm_sq(u, x) -> np.ndarray | float:
    """Squared distance ``||x - U U^T x||**2`` of ``x`` (or each column of ``x``).

    Computed as ``||x||**2 - ||U^T x||**2`` and clamped at zero.
    """
    u = np.asarray(u, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if u.ndim != 2 or x.ndim not in (1, 2):
        raise DimensionError("u must be 2-D and x 1-D or 2-D")
    if u.shape[0] != x.shape[0]:
        raise DimensionError(f"row mismatch: u has {u.shape[0]}, x has {x.shape[0]}")
    total = np.sum(x * x, axis=0)
    if u.shape[1] > 0:
        coeffs = u.T @ x
        total = total - np.sum(coeffs * coeffs, axis=0)
    out = np.maximum(total, 0.0)
    return float(out) if x.ndim == 1 else out


def spectral_norm(a) -> float:
    a = as_matrix(a)
    return float(singular_values(a)[0])


def pinv_norm(a, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """``||a^+||_2 = 1 / sigma_min(a)`` for a full-column-rank ``a``."""
    a = as_matrix(a)
    if a.shape[1] > a.shape[0]:
        raise RankDeficiencyError("wide matrix cannot have full column rank")
    s = singular_values(a)
    if numerical_rank_from_values(s, a.shape, tol) < a.shape[1]:
        raise RankDeficiencyError(
            f"matrix is numerically rank deficient (sigma_min = {s[-1]:.3e})"
        )
    return float(1.0 / s[-1])


def sigma_min(a) -> float:
    """Smallest of the ``min(m, n)`` singular values (0.0 when columns exceed rows)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[1] == 0:
        return np.inf
    if a.shape[1] > a.shape[0]:
        return 0.0
    return float(singular_values(a)[-1])


def orthonormal_complement(w: np.ndarray) -> np.ndarray:
    """Columns completing the orthonormal ``w`` (``n x k``) to an orthogonal matrix."""
    n, k = w.shape
    q, _ = scipy.linalg.qr(w, mode="full", check_finite=False)
    return q[:, k:]
