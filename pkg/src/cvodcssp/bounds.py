"""Numerical checks of the error bounds for partition-based selection.

Each ``check_*`` function evaluates both sides of one inequality (or
identity) for a concrete run and returns a :class:`BoundReport`. Reports are
plain data; nothing here prints or serializes.

A report is *satisfied* when ``rhs - lhs >= -bound_rtol * max(1, rhs, scale)``,
where ``scale`` is the natural magnitude of the quantity (``||A||_F`` or
``||A||_F**2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, ParameterError
from .numkernel import (
    DEFAULT_TOLERANCES,
    Tolerances,
    as_matrix,
    numerical_rank_from_values,
    orthonormal_complement,
    pinv_norm,
    project_out,
    qr_factor,
    singular_values,
    spectral_norm,
    svd,
    tail_energy,
)
from .partitioner import Partition, energy
from .pipeline import CurResult, PipelineResult, id_error


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    slack: float
    satisfied: bool
    allowance: float
    ingredients: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "slack": float(self.slack),
            "satisfied": bool(self.satisfied),
            "allowance": float(self.allowance),
            "ingredients": {k: float(v) for k, v in sorted(self.ingredients.items())},
            "warnings": list(self.warnings),
        }


def _report(name, lhs, rhs, scale, tol, ingredients=None, warnings=None, allowance=None) -> BoundReport:
    lhs, rhs = float(lhs), float(rhs)
    if allowance is None:
        allowance = tol.bound_rtol * max(1.0, abs(rhs), scale)
    slack = rhs - lhs
    return BoundReport(name, lhs, rhs, slack, bool(slack >= -allowance), float(allowance),
                       dict(ingredients or {}), list(warnings or []))


def _spectrum(a: np.ndarray, tol: Tolerances):
    s = singular_values(a)
    return s, numerical_rank_from_values(s, a.shape, tol)


def _check_orthonormal(w: np.ndarray, name: str, tol: Tolerances) -> None:
    err = np.linalg.norm(w.T @ w - np.eye(w.shape[1]))
    if err > 1e3 * tol.orthonormality:
        raise ParameterError(f"{name} does not have orthonormal columns (||W^T W - I||_F = {err:.2e})")


def check_subspace_distance(w1, z1, tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    """Agreement of ``||W1 W1^T - Z1 Z1^T||``, ``||W1^T Z2||`` and ``||Z1^T W2||``.

    The three-way identity is exact in the spectral norm. In the Frobenius
    norm the two cross terms are equal and the projector distance is
    ``sqrt(||W1^T Z2||_F**2 + ||Z1^T W2||_F**2)``, i.e. ``sqrt(2)`` times
    either one; that relation is checked as well. ``lhs`` is the largest
    discrepancy over both forms; ``rhs`` is ``1e-9`` times the largest value
    involved (at least ``1e-9``).
    """
    w1 = as_matrix(w1, "w1")
    z1 = as_matrix(z1, "z1")
    if w1.shape != z1.shape:
        raise DimensionError(f"w1 {w1.shape} and z1 {z1.shape} differ")
    _check_orthonormal(w1, "w1", tol)
    _check_orthonormal(z1, "z1", tol)
    w2 = orthonormal_complement(w1)
    z2 = orthonormal_complement(z1)
    diff = w1 @ w1.T - z1 @ z1.T
    wz, zw = w1.T @ z2, z1.T @ w2
    two = [spectral_norm(x) if x.size else 0.0 for x in (diff, wz, zw)]
    fro = [float(np.linalg.norm(x)) for x in (diff, wz, zw)]
    disc = max(
        max(abs(x - y) for x in two for y in two),
        abs(fro[1] - fro[2]),
        abs(fro[0] - math.hypot(fro[1], fro[2])),
    )
    rhs = 1e-9 * max(1.0, *two, *fro)
    return _report(
        "subspace_distance", disc, rhs, 0.0, tol,
        {"projector_distance": two[0], "w1t_z2": two[1], "z1t_w2": two[2],
         "projector_distance_fro": fro[0], "w1t_z2_fro": fro[1], "z1t_w2_fro": fro[2]},
        allowance=0.0,
    )


def check_projection_lemma(a, c, r: int | None = None, tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    """``||U_r U_r^T - C C^+||_F <= ||A - A_r||_F ||C^+||_2`` for ``r`` columns ``C`` of ``A``."""
    a = as_matrix(a)
    c = as_matrix(c, "c")
    r = c.shape[1] if r is None else int(r)
    if r != c.shape[1]:
        raise DimensionError(f"c has {c.shape[1]} columns, expected r={r}")
    f = svd(a, tol)
    if r > min(a.shape):
        raise ParameterError(f"r={r} exceeds min(m, n)")
    ur = f.u[:, :r]
    q = qr_factor(c, tol).q
    lhs = np.linalg.norm(ur @ ur.T - q @ q.T)
    tail = math.sqrt(tail_energy(f.singular_values, r))
    cpinv = pinv_norm(c, tol)
    warnings = []
    if r >= f.numerical_rank:
        warnings.append(f"r={r} >= numerical rank {f.numerical_rank}")
    return _report(
        "projection_lemma", lhs, tail * cpinv, 1.0, tol,
        {"tail_norm": tail, "pinv_norm_c": cpinv, "r": r},
        warnings,
    )


@dataclass(frozen=True)
class _SetTerms:
    zeta: float
    energy: float
    residuals: np.ndarray
    counts: np.ndarray


def _set_terms(a: np.ndarray, partition: Partition, result: PipelineResult, tol: Tolerances) -> _SetTerms:
    if not result.per_set:
        raise ParameterError("pipeline result carries no per-set selections")
    zeta, total, resid, counts = 1.0, 0.0, [], []
    for s in result.per_set:
        v = a[:, np.asarray(partition.sets[s.set_index], dtype=np.intp)]
        if s.count:
            zeta = max(zeta, 1.0 + pinv_norm(s.c, tol) * float(singular_values(v)[0]))
            q = qr_factor(s.c, tol).q
            resid.append(float(np.linalg.norm(project_out(q, v)) ** 2))
        else:
            resid.append(float(np.sum(v * v)))
        # residual of the optimal rank-count basis of V_i
        total += tail_energy(singular_values(v), s.count)
        counts.append(s.count)
    return _SetTerms(zeta, total, np.asarray(resid), np.asarray(counts))


def _covering_factor(r: int, dims) -> float:
    """``L* = max_i ceil(r / d_i)``; infinite if some set has no dimension."""
    dims = [int(d) for d in dims]
    if not dims or min(dims) <= 0:
        return math.inf
    return float(max(math.ceil(r / d) for d in dims))


def _energy_rhs(s: np.ndarray, r: int, lstar: float) -> tuple:
    tail2 = tail_energy(s, r)
    head2 = float(np.sum(s[:r] ** 2))
    return tail2 + (1.0 - 1.0 / lstar) * head2, tail2, head2


def check_id_vs_energy(a, partition: Partition, result: PipelineResult, tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    """``||(I - C C^+) A||_F**2 <= zeta**2 * sum_i ||(I - U_i U_i^T) V_i||_F**2``.

    ``U_i`` is the top left singular basis of ``V_i`` with as many columns
    as were selected from ``V_i``; this equals the partition energy whenever
    no set came up short.
    """
    a = as_matrix(a)
    terms = _set_terms(a, partition, result, tol)
    err = id_error(a, result.c, tol)
    return _report(
        "id_vs_energy", err**2, terms.zeta**2 * terms.energy, float(np.sum(a * a)), tol,
        {"zeta": terms.zeta, "set_energy": terms.energy, "partition_energy": energy(a, partition),
         "id_error": err},
    )


def check_energy_bound(a, partition: Partition, r: int, tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    """``G* <= ||A - A_r||_F**2 + (1 - 1/L*) ||A_r||_F**2``."""
    a = as_matrix(a)
    s, _ = _spectrum(a, tol)
    lstar = _covering_factor(r, partition.dims)
    rhs, tail2, head2 = _energy_rhs(s, r, lstar)
    g = energy(a, partition)
    return _report(
        "energy_bound", g, rhs, float(np.sum(a * a)), tol,
        {"energy": g, "L_star": lstar, "tail_sq": tail2, "head_sq": head2, "k": partition.k},
    )


def check_combined_bound(a, partition: Partition, result: PipelineResult, r: int,
                         tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    """``||(I - C C^+) A||_F <= zeta * (||A - A_r||_F**2 + (1 - 1/L*) ||A_r||_F**2)**0.5``.

    ``L*`` uses the number of columns actually selected from each set.
    """
    a = as_matrix(a)
    s, _ = _spectrum(a, tol)
    terms = _set_terms(a, partition, result, tol)
    lstar = _covering_factor(r, terms.counts)
    erhs, tail2, head2 = _energy_rhs(s, r, lstar)
    err = id_error(a, result.c, tol)
    rhs = terms.zeta * math.sqrt(erhs)
    return _report(
        "combined_bound", err, rhs, float(np.linalg.norm(a)), tol,
        {"zeta": terms.zeta, "L_star": lstar, "energy_rhs": erhs, "set_energy": terms.energy,
         "zeta_sqrt_energy": terms.zeta * math.sqrt(terms.energy), "tail_norm": math.sqrt(tail2)},
    )


def _gamma(a: np.ndarray, partition: Partition, result: PipelineResult, sigma_rho: float, tol) -> float:
    terms = _set_terms(a, partition, result, tol)
    return float(terms.residuals.max()) / sigma_rho**2


def _sigma_rho(a: np.ndarray, tol: Tolerances):
    s, rho = _spectrum(a, tol)
    warnings = []
    if rho == 0:
        raise ParameterError("matrix is numerically zero")
    sigma_rho = float(s[rho - 1])
    if sigma_rho < tol.ill_conditioned * float(s[0]):
        warnings.append(f"ill-conditioned: sigma_rho/sigma_1 = {sigma_rho / s[0]:.2e}")
    return s, rho, sigma_rho, warnings


def check_lemma2_bound(a, partition: Partition, result: PipelineResult, r: int,
                       tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    """``||(I - C C^+) A||_F <= sqrt(k gamma_C) ||A - A_r||_F``."""
    a = as_matrix(a)
    s, rho, sigma_rho, warnings = _sigma_rho(a, tol)
    if r >= rho:
        warnings.append(f"r={r} >= numerical rank {rho}")
    gamma_c = _gamma(a, partition, result, sigma_rho, tol)
    tail = math.sqrt(tail_energy(s, r))
    err = id_error(a, result.c, tol)
    return _report(
        "lemma2_bound", err, math.sqrt(partition.k * gamma_c) * tail, float(np.linalg.norm(a)), tol,
        {"gamma_c": gamma_c, "k": partition.k, "sigma_rho": sigma_rho, "tail_norm": tail, "rho": rho},
        warnings,
    )


def check_cur_bound(a, cur: CurResult, r: int | None = None, tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    """``||A - C U R||_F <= (sqrt(k1 gamma_C) + sqrt(k2 gamma_R)) ||A - A_r||_F``."""
    a = as_matrix(a)
    r = cur.column_result.r_requested if r is None else int(r)
    s, rho, sigma_rho, warnings = _sigma_rho(a, tol)
    if r >= rho:
        warnings.append(f"r={r} >= numerical rank {rho}")
    gamma_c = _gamma(a, cur.column_partition, cur.column_result, sigma_rho, tol)
    gamma_r = _gamma(a.T, cur.row_partition, cur.row_result, sigma_rho, tol)
    k1, k2 = cur.column_partition.k, cur.row_partition.k
    tail = math.sqrt(tail_energy(s, r))
    rhs = (math.sqrt(k1 * gamma_c) + math.sqrt(k2 * gamma_r)) * tail
    return _report(
        "cur_bound", cur.error, rhs, float(np.linalg.norm(a)), tol,
        {"gamma_c": gamma_c, "gamma_r": gamma_r, "k1": k1, "k2": k2, "sigma_rho": sigma_rho,
         "tail_norm": tail},
        warnings,
    )


def check_all(a, partition: Partition, result: PipelineResult, r: int, cur: CurResult | None = None,
              tol: Tolerances = DEFAULT_TOLERANCES) -> list:
    """Every applicable check for one run."""
    a = as_matrix(a)
    reports = [
        check_energy_bound(a, partition, r, tol),
        check_id_vs_energy(a, partition, result, tol),
        check_combined_bound(a, partition, result, r, tol),
        check_lemma2_bound(a, partition, result, r, tol),
    ]
    if result.r_achieved <= min(a.shape):
        reports.append(check_projection_lemma(a, result.c, result.r_achieved, tol))
    if cur is not None:
        reports.append(check_cur_bound(a, cur, r, tol))
    return reports
