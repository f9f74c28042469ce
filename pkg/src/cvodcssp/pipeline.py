"""Partition-based column selection and the ID / CUR factorizations built on it.

:func:`partitioned_cssp` visits the Voronoi sets in ascending order of
centroid dimension. Each set is projected onto the orthogonal complement of
the columns chosen so far, the selector picks ``d_i`` columns of the
projected block, and the corresponding *original* columns are appended.
Because every block is projected first, the assembled ``C`` has full column
rank.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import RankDeficiencyError
from .numkernel import (
    DEFAULT_TOLERANCES,
    Tolerances,
    as_matrix,
    project_out,
    qr_factor,
    sigma_min,
    singular_values,
)
from .partitioner import (
    InitKind,
    Partition,
    PartitionConfig,
    run_adapt_cvod,
    run_cvod,
    single_set_partition,
)
from .selectors import SelectorSpec, select

log = logging.getLogger(__name__)


class Algorithm(str, enum.Enum):
    CVOD = "cvod"
    ADAPT_CVOD = "adapt_cvod"
    NONE = "none"

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        return cls(text.strip().lower().replace("-", "_"))


@dataclass(frozen=True)
class SetSelection:
    set_index: int
    local_indices: np.ndarray
    global_indices: np.ndarray
    c: np.ndarray
    requested: int

    @property
    def count(self) -> int:
        return int(self.local_indices.size)


@dataclass
class PipelineResult:
    global_indices: np.ndarray
    c: np.ndarray
    per_set: list
    order: list
    r_requested: int
    events: list = field(default_factory=list)

    @property
    def r_achieved(self) -> int:
        return int(self.global_indices.size)

    def as_dict(self) -> dict:
        return {
            "global_indices": [int(j) for j in self.global_indices],
            "order": [int(i) for i in self.order],
            "r_requested": self.r_requested,
            "r_achieved": self.r_achieved,
            "per_set": [
                {
                    "set_index": s.set_index,
                    "requested": s.requested,
                    "local_indices": [int(j) for j in s.local_indices],
                    "global_indices": [int(j) for j in s.global_indices],
                }
                for s in self.per_set
            ],
            "events": list(self.events),
        }


def partitioned_cssp(
    a,
    p: Partition,
    spec: SelectorSpec,
    *,
    strict: bool = False,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> PipelineResult:
    """Select ``sum(p.dims)`` columns of ``a`` set by set.

    If a projected block has fewer than ``d_i`` numerically independent
    directions left (relative to ``sigma_1(a)``), the default is to take as
    many as it has and record an event; ``strict=True`` raises
    :class:`RankDeficiencyError` instead.
    """
    a = as_matrix(a)
    m, n = a.shape
    p.validate(n, m)
    floor = tol.independence * float(singular_values(a)[0])
    order = [int(i) for i in np.argsort(np.asarray(p.dims), kind="stable")]
    rng = np.random.default_rng(spec.seed) if spec.kind.is_sampling else None

    blocks, chosen, per_set, events = [], [], [], []
    q = np.zeros((m, 0))
    for i in order:
        d = int(p.dims[i])
        idx = np.asarray(p.sets[i], dtype=np.intp)
        v = a[:, idx]
        local = np.zeros(0, dtype=np.intp)
        want = d
        if d > 0:
            b = project_out(q, v)
            avail = int(np.count_nonzero(singular_values(b) > floor))
            if avail < d:
                if strict:
                    raise RankDeficiencyError(
                        f"set {i}: projected block has {avail} independent directions, need {d}"
                    )
                events.append({"set_index": i, "requested": d, "reason": "projected rank", "available": avail})
                want = avail
            while want > 0:
                try:
                    cand = select(spec, b, want, tol, rng=rng)
                except RankDeficiencyError as exc:
                    if strict:
                        raise RankDeficiencyError(f"set {i}: {exc}") from exc
                    events.append({"set_index": i, "requested": want, "reason": f"selector: {exc}"})
                    want -= 1
                    continue
                if sigma_min(np.hstack(blocks + [v[:, cand]])) > floor:
                    local = cand
                    break
                if strict:
                    raise RankDeficiencyError(f"set {i}: appended columns are numerically dependent")
                events.append({"set_index": i, "requested": want, "reason": "dependent after append"})
                want -= 1
        if local.size < d:
            log.info("set %d: selected %d of %d columns", i, local.size, d)
        gidx = idx[local]
        per_set.append(SetSelection(i, local, gidx, v[:, local], d))
        if local.size:
            blocks.append(v[:, local])
            chosen.append(gidx)
            q = qr_factor(np.hstack(blocks), tol).q

    if not chosen:
        raise RankDeficiencyError("no columns could be selected")
    global_indices = np.concatenate(chosen)
    return PipelineResult(global_indices, a[:, global_indices], per_set, order, int(sum(p.dims)), events)


def id_error(a, c, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """``||(I - C C^+) A||_F`` through a QR factorization of ``C``."""
    a = as_matrix(a)
    q = qr_factor(as_matrix(c, "c"), tol).q
    return float(np.linalg.norm(project_out(q, a)))


def partition_columns(a, algorithm: Algorithm, config: PartitionConfig, tol: Tolerances = DEFAULT_TOLERANCES):
    """Partition the columns of ``a``; returns ``(Partition, LloydTrace or None)``."""
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.CVOD:
        return run_cvod(a, config, tol)
    if algorithm is Algorithm.ADAPT_CVOD:
        return run_adapt_cvod(a, config, tol)
    return single_set_partition(a, config.r, tol), None


@dataclass
class CurResult:
    c: np.ndarray
    u: np.ndarray
    r: np.ndarray
    row_indices: np.ndarray
    column_indices: np.ndarray
    error: float
    column_result: PipelineResult
    row_result: PipelineResult
    column_partition: Partition
    row_partition: Partition
    traces: tuple = (None, None)


def build_cur(
    a,
    spec: SelectorSpec,
    config: PartitionConfig,
    algorithm: Algorithm = Algorithm.CVOD,
    *,
    strict: bool = False,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CurResult:
    """CUR from two partitioned selections, on ``A`` (columns) and ``A^T`` (rows).

    The core ``U = C^+ A R^+`` is obtained from two least-squares solves.
    """
    a = as_matrix(a)
    col_p, col_trace = partition_columns(a, algorithm, config, tol)
    col = partitioned_cssp(a, col_p, spec, strict=strict, tol=tol)
    row_config = config
    if config.init is InitKind.PROVIDED:
        row_config = dataclasses.replace(config, init=InitKind.RANDOM_BALANCED, initial_sets=None)
    row_p, row_trace = partition_columns(a.T, algorithm, row_config, tol)
    row = partitioned_cssp(a.T, row_p, spec, strict=strict, tol=tol)
    c = col.c
    r = row.c.T
    x = np.linalg.lstsq(c, a, rcond=None)[0]
    u = np.linalg.lstsq(r.T, x.T, rcond=None)[0].T
    err = float(np.linalg.norm(a - c @ u @ r))
    return CurResult(
        c, u, r, row.global_indices, col.global_indices, err, col, row, col_p, row_p, (col_trace, row_trace)
    )
