"""CVOD and adaptCVOD column partitioning.

Both algorithms are generalized Lloyd iterations over the columns of ``A``:
each Voronoi set gets an orthonormal "centroid" basis ``U_i`` (its top left
singular vectors), then every column moves to the set whose centroid leaves
the smallest residual ``||x - U_i U_i^T x||**2``.

CVOD keeps the per-set dimensions ``d_i`` fixed. adaptCVOD pools the
singular values of all sets, keeps the global top ``r`` and lets sets that
receive none of them disappear, so ``k`` can shrink.

Step functions are pure; :func:`run_cvod` and :func:`run_adapt_cvod` own the
loop state.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateSetError, DimensionError, ParameterError, RankDeficiencyError
from .numkernel import (
    DEFAULT_TOLERANCES,
    Tolerances,
    as_matrix,
    numerical_rank_from_values,
    residual_norm_sq,
    svd,
)

log = logging.getLogger(__name__)


class InitKind(str, enum.Enum):
    RANDOM_BALANCED = "random_balanced"
    RANDOM_UNIFORM = "random_uniform"
    PROVIDED = "provided"


@dataclass(frozen=True)
class Partition:
    """Column partition with one orthonormal centroid basis per set."""

    sets: tuple
    centroids: tuple
    dims: tuple

    @property
    def k(self) -> int:
        return len(self.sets)

    def validate(self, n: int, m: int | None = None) -> None:
        if self.k < 1:
            raise DegenerateSetError("partition has no sets")
        if not (len(self.centroids) == len(self.dims) == self.k):
            raise DimensionError("sets, centroids and dims must have equal length")
        allidx = np.concatenate([np.asarray(s, dtype=np.intp) for s in self.sets])
        if allidx.size != n or not np.array_equal(np.sort(allidx), np.arange(n)):
            raise DegenerateSetError(f"sets are not a disjoint cover of the {n} columns")
        for i, (s, u, d) in enumerate(zip(self.sets, self.centroids, self.dims)):
            if len(s) == 0:
                raise DegenerateSetError(f"set {i} is empty")
            if u.shape[1] != d or (m is not None and u.shape[0] != m):
                raise DimensionError(f"centroid {i} has shape {u.shape}, expected ({m}, {d})")

    def summary(self) -> dict:
        return {
            "k": self.k,
            "dims": [int(d) for d in self.dims],
            "set_sizes": [len(s) for s in self.sets],
            "sets": [[int(j) for j in s] for s in self.sets],
        }


@dataclass
class LloydTrace:
    """Per-iteration record of a Lloyd run.

    ``energies[j]`` is the energy after the ``j``-th reassignment;
    ``final_energy`` is the energy of the returned partition, whose centroids
    are refreshed for the final sets.
    """

    energies: list = field(default_factory=list)
    k_history: list = field(default_factory=list)
    dims_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: str = ""
    final_energy: float = float("nan")
    repairs: list = field(default_factory=list)

    def is_monotone(self, slack: float = DEFAULT_TOLERANCES.monotone_slack) -> bool:
        seq = list(self.energies) + [self.final_energy]
        return all(b <= a + slack for a, b in zip(seq, seq[1:]))

    def as_dict(self) -> dict:
        return {
            "energies": [float(e) for e in self.energies],
            "k_history": [int(k) for k in self.k_history],
            "dims_history": [[int(d) for d in ds] for ds in self.dims_history],
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "final_energy": float(self.final_energy),
            "repairs": list(self.repairs),
        }


@dataclass(frozen=True)
class PartitionConfig:
    """Inputs of a CVOD/adaptCVOD run.

    ``dims`` is used by CVOD only. When absent, ``d_i = r // k`` with the
    remainder given one apiece to the first sets. ``relative=True`` compares
    the energy improvement to ``epsilon * G_prev`` instead of ``epsilon``.
    """

    k: int
    r: int
    dims: tuple | None = None
    epsilon: float = 1e-8
    max_iters: int = 100
    init: InitKind = InitKind.RANDOM_BALANCED
    seed: int = 0
    initial_sets: tuple | None = None
    relative: bool = False
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "init", InitKind(self.init))
        if self.k < 1 or self.r < 1:
            raise ParameterError("k and r must be positive")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be positive")
        if self.dims is not None:
            dims = tuple(int(d) for d in self.dims)
            if len(dims) != self.k or sum(dims) != self.r or min(dims) < 1:
                raise ParameterError(f"dims {dims} must have k={self.k} positive entries summing to r={self.r}")
            object.__setattr__(self, "dims", dims)
        if self.init is InitKind.PROVIDED:
            if self.initial_sets is None or len(self.initial_sets) != self.k:
                raise ParameterError("init='provided' needs initial_sets with k entries")
        if self.threads < 1:
            raise ParameterError("threads must be positive")

    def resolved_dims(self) -> tuple:
        if self.dims is not None:
            return self.dims
        return default_dims(self.k, self.r)


def default_dims(k: int, r: int) -> tuple:
    base, extra = divmod(r, k)
    if base == 0:
        raise ParameterError(f"r={r} < k={k} leaves some sets with no dimensions")
    return tuple(base + (1 if i < extra else 0) for i in range(k))


def energy(a, p: Partition) -> float:
    """Total squared residual of every column against its set's centroid."""
    a = as_matrix(a)
    total = 0.0
    for s, u in zip(p.sets, p.centroids):
        if u.shape[0] != a.shape[0]:
            raise DimensionError("centroid row count differs from matrix")
        total += float(np.sum(residual_norm_sq(u, a[:, np.asarray(s, dtype=np.intp)])))
    return total


def residual_table(a: np.ndarray, centroids) -> np.ndarray:
    """``k x n`` array of squared residuals of each column against each centroid."""
    colnorms = np.sum(a * a, axis=0)
    out = np.empty((len(centroids), a.shape[1]))
    for i, u in enumerate(centroids):
        if u.shape[0] != a.shape[0]:
            raise DimensionError(f"centroid {i} has {u.shape[0]} rows, matrix has {a.shape[0]}")
        proj = u.T @ a
        out[i] = np.maximum(colnorms - np.sum(proj * proj, axis=0), 0.0)
    return out


def find_voronoi_sets(a, centroids) -> list:
    """Assign each column to its nearest centroid; ties go to the lowest index.

    Empty sets are returned as empty arrays.
    """
    a = as_matrix(a)
    if len(centroids) == 0:
        raise ParameterError("need at least one centroid")
    labels = np.argmin(residual_table(a, centroids), axis=0)
    return [np.flatnonzero(labels == i) for i in range(len(centroids))]


def _block_svds(a: np.ndarray, sets, threads: int, tol: Tolerances):
    blocks = [a[:, np.asarray(s, dtype=np.intp)] for s in sets]
    for i, b in enumerate(blocks):
        if b.shape[1] == 0:
            raise DegenerateSetError(f"Voronoi set {i} is empty")
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: svd(b, tol), blocks))
    return [svd(b, tol) for b in blocks]


def update_centroids_fixed(a, sets, dims, *, threads: int = 1, tol: Tolerances = DEFAULT_TOLERANCES) -> list:
    """Top-``d_i`` left singular basis of each set.

    A set whose numerical rank is below ``d_i`` gets a basis of that rank
    instead (it is then represented exactly).
    """
    a = as_matrix(a)
    if len(sets) != len(dims):
        raise DimensionError("sets and dims differ in length")
    out = []
    for i, (f, d) in enumerate(zip(_block_svds(a, sets, threads, tol), dims)):
        d_eff = min(int(d), f.numerical_rank)
        if d_eff < d:
            log.debug("set %d: centroid dimension clamped from %d to %d", i, d, d_eff)
        out.append(f.u[:, :d_eff].copy())
    return out


@dataclass(frozen=True)
class AdaptUpdate:
    centroids: list
    dims: tuple
    kept: tuple

    @property
    def k_new(self) -> int:
        return len(self.kept)


def update_centroids_adapt(a, sets, r: int, *, threads: int = 1, tol: Tolerances = DEFAULT_TOLERANCES) -> AdaptUpdate:
    """Allocate ``r`` centroid dimensions by the global top-``r`` singular values.

    Singular values of all sets are pooled; ties go to the lower set index,
    then the lower position within the set. Sets receiving no dimension are
    dropped; ``kept`` lists the surviving original set indices.
    """
    a = as_matrix(a)
    factors = _block_svds(a, sets, threads, tol)
    values, owner, pos = [], [], []
    for i, f in enumerate(factors):
        q = f.numerical_rank
        values.append(f.singular_values[:q])
        owner.append(np.full(q, i))
        pos.append(np.arange(q))
    values = np.concatenate(values)
    owner = np.concatenate(owner)
    pos = np.concatenate(pos)
    if values.size < r:
        raise RankDeficiencyError(f"sets have total numerical rank {values.size} < r={r}")
    order = np.lexsort((pos, owner, -values))[:r]
    counts = np.bincount(owner[order], minlength=len(factors))
    kept = tuple(int(i) for i in np.flatnonzero(counts))
    # top singular values of a block are always taken in order, so counts suffice
    centroids = [factors[i].u[:, : counts[i]].copy() for i in kept]
    return AdaptUpdate(centroids, tuple(int(counts[i]) for i in kept), kept)


def initial_sets(n: int, config: PartitionConfig, rng: np.random.Generator) -> list:
    k = config.k
    if k > n:
        raise ParameterError(f"k={k} exceeds the number of columns n={n}")
    if config.init is InitKind.PROVIDED:
        sets = [np.sort(np.asarray(s, dtype=np.intp)) for s in config.initial_sets]
        allidx = np.concatenate(sets)
        if allidx.size != n or not np.array_equal(np.sort(allidx), np.arange(n)):
            raise ParameterError("initial_sets must be a disjoint cover of all columns")
        if any(len(s) == 0 for s in sets):
            raise ParameterError("initial_sets may not contain empty sets")
        return sets
    if config.init is InitKind.RANDOM_BALANCED:
        perm = rng.permutation(n)
        return [np.sort(chunk) for chunk in np.array_split(perm, k)]
    labels = rng.integers(0, k, size=n)
    sets = [np.flatnonzero(labels == i) for i in range(k)]
    # random_uniform may leave sets empty; refill from the largest set
    for i in range(k):
        if len(sets[i]) == 0:
            donor = max(range(k), key=lambda j: len(sets[j]))
            take = int(rng.integers(len(sets[donor])))
            sets[i] = sets[donor][take : take + 1]
            sets[donor] = np.delete(sets[donor], take)
    return sets


def _repair_empty(sets: list, table: np.ndarray, labels: np.ndarray) -> list:
    """Give each empty set the worst-represented column of a set with >= 2 columns."""
    moved = []
    resid = table[labels, np.arange(labels.size)]
    for i in range(len(sets)):
        if len(sets[i]) > 0:
            continue
        candidates = np.concatenate([s for s in sets if len(s) >= 2])
        if candidates.size == 0:
            raise DegenerateSetError("cannot repair empty set: every set is a singleton")
        worst = int(candidates[np.argmax(resid[candidates])])
        for j, s in enumerate(sets):
            if worst in s:
                sets[j] = s[s != worst]
        sets[i] = np.array([worst], dtype=np.intp)
        moved.append((i, worst))
    return moved


def _check_run_inputs(a: np.ndarray, config: PartitionConfig, tol: Tolerances) -> None:
    rank = numerical_rank_from_values(svd(a, tol).singular_values, a.shape, tol)
    if config.r > rank:
        raise RankDeficiencyError(f"r={config.r} exceeds numerical rank {rank}")
    if config.k > a.shape[1]:
        raise ParameterError(f"k={config.k} exceeds n={a.shape[1]}")


def _lloyd(a: np.ndarray, config: PartitionConfig, adaptive: bool, tol: Tolerances):
    _check_run_inputs(a, config, tol)
    rng = np.random.default_rng(config.seed)
    sets = initial_sets(a.shape[1], config, rng)
    dims = config.resolved_dims() if not adaptive else None
    if not adaptive and len(dims) != config.k:
        raise ParameterError("dims length must equal k")
    trace = LloydTrace()
    scale = float(np.sum(a * a))
    delta_prev = np.inf
    j = 1
    while True:
        if adaptive:
            upd = update_centroids_adapt(a, sets, config.r, threads=config.threads, tol=tol)
            centroids = upd.centroids
            if upd.k_new < len(sets):
                log.info("adaptCVOD: k reduced from %d to %d", len(sets), upd.k_new)
        else:
            centroids = update_centroids_fixed(a, sets, dims, threads=config.threads, tol=tol)
        table = residual_table(a, centroids)
        labels = np.argmin(table, axis=0)
        sets = [np.flatnonzero(labels == i) for i in range(len(centroids))]
        g = float(np.sum(table[labels, np.arange(a.shape[1])]))
        trace.energies.append(g)
        trace.k_history.append(len(centroids))
        trace.dims_history.append(tuple(u.shape[1] for u in centroids))
        if any(len(s) == 0 for s in sets):
            if adaptive:
                sets = [s for s in sets if len(s) > 0]
            else:
                moved = _repair_empty(sets, table, labels)
                trace.repairs.append({"iteration": j, "moves": [[int(i), int(c)] for i, c in moved]})
        trace.iterations = j
        if j >= 2:
            prev = trace.energies[-2]
            delta = prev - g
            threshold = config.epsilon * prev if config.relative else config.epsilon
        else:
            delta, threshold = delta_prev, config.epsilon
        delta_prev = delta
        if g <= tol.energy_zero * scale:
            trace.converged, trace.stop_reason = True, "zero_energy"
            break
        if delta <= threshold:
            trace.converged, trace.stop_reason = True, "tolerance"
            break
        if j >= config.max_iters:
            trace.stop_reason = "max_iters"
            break
        j += 1
    partition = _finalize(a, sets, dims, config, adaptive, tol)
    trace.final_energy = energy(a, partition)
    return partition, trace


def _finalize(a, sets, dims, config, adaptive, tol) -> Partition:
    # centroids of the returned partition are optimal for its sets
    if not adaptive:
        cents = update_centroids_fixed(a, sets, dims, threads=config.threads, tol=tol)
        return Partition(tuple(sets), tuple(cents), tuple(u.shape[1] for u in cents))
    while True:
        upd = update_centroids_adapt(a, sets, config.r, threads=config.threads, tol=tol)
        if upd.k_new == len(sets):
            return Partition(tuple(sets), tuple(upd.centroids), upd.dims)
        sets = [s for s in find_voronoi_sets(a, upd.centroids) if len(s) > 0]


def run_cvod(a, config: PartitionConfig, tol: Tolerances = DEFAULT_TOLERANCES):
    """CVOD with fixed per-set dimensions. Returns ``(Partition, LloydTrace)``."""
    return _lloyd(as_matrix(a), config, adaptive=False, tol=tol)


def run_adapt_cvod(a, config: PartitionConfig, tol: Tolerances = DEFAULT_TOLERANCES):
    """adaptCVOD with globally allocated dimensions. Returns ``(Partition, LloydTrace)``."""
    return _lloyd(as_matrix(a), config, adaptive=True, tol=tol)


def single_set_partition(a, r: int, tol: Tolerances = DEFAULT_TOLERANCES) -> Partition:
    """Trivial partition: one set with all columns and a rank-``r`` centroid."""
    a = as_matrix(a)
    sets = [np.arange(a.shape[1], dtype=np.intp)]
    cents = update_centroids_fixed(a, sets, (r,), tol=tol)
    return Partition(tuple(sets), tuple(cents), (cents[0].shape[1],))


def partition_from_sets(a, sets, dims, tol: Tolerances = DEFAULT_TOLERANCES) -> Partition:
    """Rebuild a partition (centroids included) from saved sets and dims."""
    a = as_matrix(a)
    sets = [np.asarray(s, dtype=np.intp) for s in sets]
    cents = update_centroids_fixed(a, sets, dims, tol=tol)
    p = Partition(tuple(sets), tuple(cents), tuple(u.shape[1] for u in cents))
    p.validate(a.shape[1], a.shape[0])
    return p
