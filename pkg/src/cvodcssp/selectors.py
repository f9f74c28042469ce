"""Column subset selection algorithms.

All selectors share the signature ``(a, r) -> indices`` where ``indices`` is
an ``intp`` array of ``r`` distinct 0-based column indices such that
``a[:, indices]`` has full column rank. :func:`select` dispatches on a
:class:`SelectorSpec`.

Sampling selectors draw without replacement. A draw that would make the
selection numerically rank deficient is rejected and redrawn, up to
``MAX_RETRIES`` times per draw.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import ParameterError, RankDeficiencyError
from .numkernel import (
    DEFAULT_TOLERANCES,
    Tolerances,
    as_matrix,
    numerical_rank_from_values,
    sigma_min,
    singular_values,
    svd,
)

MAX_RETRIES = 50


class SelectorKind(str, enum.Enum):
    DEIM = "deim"
    CPQR = "cpqr"
    LUPP = "lupp"
    NORM_SAMPLING = "norm_sampling"
    LEVERAGE_SAMPLING = "leverage_sampling"

    @property
    def is_sampling(self) -> bool:
        return self in (SelectorKind.NORM_SAMPLING, SelectorKind.LEVERAGE_SAMPLING)


_ALIASES = {
    "deim": SelectorKind.DEIM,
    "cpqr": SelectorKind.CPQR,
    "qr": SelectorKind.CPQR,
    "lupp": SelectorKind.LUPP,
    "lu": SelectorKind.LUPP,
    "norm": SelectorKind.NORM_SAMPLING,
    "norm_sampling": SelectorKind.NORM_SAMPLING,
    "leverage": SelectorKind.LEVERAGE_SAMPLING,
    "leverage_sampling": SelectorKind.LEVERAGE_SAMPLING,
}


@dataclass(frozen=True)
class SelectorSpec:
    """Which selector to run and with what parameters.

    ``k_lev`` is the number of right singular vectors used for leverage
    scores; when omitted it is ``r + oversampling`` capped at the numerical
    rank.
    """

    kind: SelectorKind
    seed: int | None = None
    oversampling: int = 0
    k_lev: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SelectorKind(self.kind))
        if self.kind.is_sampling and self.seed is None:
            raise ParameterError(f"selector {self.kind.value} requires a seed")
        if self.oversampling < 0:
            raise ParameterError("oversampling must be nonnegative")
        if self.k_lev is not None and self.k_lev < 1:
            raise ParameterError("k_lev must be positive")

    @classmethod
    def parse(cls, text: str) -> "SelectorSpec":
        """Parse ``"cpqr"`` or ``"leverage:seed=99,k=10"`` style strings."""
        name, _, rest = text.strip().partition(":")
        try:
            kind = _ALIASES[name.strip().lower()]
        except KeyError:
            raise ParameterError(
                f"unknown selector {name!r}; choose from {sorted(set(_ALIASES))}"
            ) from None
        kwargs = {}
        keys = {"seed": "seed", "k": "k_lev", "k_lev": "k_lev", "oversampling": "oversampling", "p": "oversampling"}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep or key.strip() not in keys:
                raise ParameterError(f"bad selector option {item!r}")
            try:
                kwargs[keys[key.strip()]] = int(value)
            except ValueError:
                raise ParameterError(f"selector option {item!r} is not an integer") from None
        return cls(kind, **kwargs)

    def with_seed(self, seed: int) -> "SelectorSpec":
        return SelectorSpec(self.kind, seed, self.oversampling, self.k_lev)

    def __str__(self) -> str:
        opts = []
        if self.seed is not None:
            opts.append(f"seed={self.seed}")
        if self.k_lev is not None:
            opts.append(f"k={self.k_lev}")
        if self.oversampling:
            opts.append(f"oversampling={self.oversampling}")
        return self.kind.value + (":" + ",".join(opts) if opts else "")


def _check_r(a: np.ndarray, r, tol: Tolerances) -> int:
    if isinstance(r, bool) or int(r) != r or r < 1:
        raise ParameterError(f"r must be a positive integer, got {r!r}")
    r = int(r)
    rank = numerical_rank_from_values(singular_values(a), a.shape, tol)
    if r > rank:
        raise RankDeficiencyError(f"cannot select {r} independent columns: numerical rank is {rank}")
    return r


def _independence_floor(a: np.ndarray, tol: Tolerances) -> float:
    return tol.independence * float(singular_values(a)[0])


def _verify(a: np.ndarray, idx: np.ndarray, tol: Tolerances, who: str) -> np.ndarray:
    if sigma_min(a[:, idx]) <= _independence_floor(a, tol):
        raise RankDeficiencyError(f"{who} selected numerically dependent columns {idx.tolist()}")
    return idx


def deim_select(a, r: int, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """DEIM interpolation indices of the top-``r`` right singular vectors."""
    a = as_matrix(a)
    r = _check_r(a, r, tol)
    w = svd(a, tol).vt[:r].T  # n x r
    idx = [int(np.argmax(np.abs(w[:, 0])))]
    for j in range(1, r):
        basis = w[:, :j]
        coeffs = np.linalg.solve(basis[idx], w[idx, j])
        res = w[:, j] - basis @ coeffs
        res[idx] = 0.0
        idx.append(int(np.argmax(np.abs(res))))
    return _verify(a, np.asarray(idx, dtype=np.intp), tol, "deim")


def cpqr_select(a, r: int, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """First ``r`` pivots of Householder QR with column pivoting."""
    a = as_matrix(a)
    r = _check_r(a, r, tol)
    _, piv = scipy.linalg.qr(a, mode="r", pivoting=True, check_finite=False)
    return _verify(a, np.asarray(piv[:r], dtype=np.intp), tol, "cpqr")


def lupp_select(a, r: int, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """First ``r`` row pivots of partially pivoted LU applied to ``a^T``."""
    a = as_matrix(a)
    r = _check_r(a, r, tol)
    with warnings.catch_warnings():
        # exact zero pivots past position r are expected for low-rank input
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        _, ipiv = scipy.linalg.lu_factor(a.T, check_finite=False)
    perm = np.arange(a.shape[1])
    for i, p in enumerate(ipiv):
        perm[[i, p]] = perm[[p, i]]
    return _verify(a, perm[:r].astype(np.intp), tol, "lupp")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ParameterError("sampling selectors require a seed")
    return np.random.default_rng(seed)


def _weighted_draws(a: np.ndarray, weights: np.ndarray, r: int, rng, tol: Tolerances, who: str) -> np.ndarray:
    weights = np.clip(np.asarray(weights, dtype=np.float64), 0.0, None)
    floor = _independence_floor(a, tol)
    available = weights > 0
    chosen: list[int] = []
    for _ in range(r):
        for _attempt in range(MAX_RETRIES + 1):
            w = np.where(available, weights, 0.0)
            total = w.sum()
            if total <= 0.0:
                raise RankDeficiencyError(f"{who}: no columns left to draw from")
            j = int(rng.choice(w.size, p=w / total))
            available[j] = False
            if sigma_min(a[:, chosen + [j]]) > floor:
                chosen.append(j)
                break
        else:
            raise RankDeficiencyError(f"{who}: {MAX_RETRIES} retries exhausted without an independent draw")
    return np.asarray(chosen, dtype=np.intp)


def norm_sampling_select(a, r: int, seed, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Sample columns with probability proportional to their squared norms."""
    a = as_matrix(a)
    r = _check_r(a, r, tol)
    return _weighted_draws(a, np.sum(a * a, axis=0), r, _as_rng(seed), tol, "norm_sampling")


def leverage_scores(a, k_lev: int, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Row norms squared of the top-``k_lev`` right singular vectors (sum to ``k_lev``)."""
    a = as_matrix(a)
    f = svd(a, tol)
    if not 1 <= k_lev <= f.numerical_rank:
        raise ParameterError(f"k_lev={k_lev} outside [1, numerical rank {f.numerical_rank}]")
    v = f.vt[:k_lev]
    return np.sum(v * v, axis=0)


def leverage_sampling_select(a, r: int, k_lev: int, seed, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Sample columns with probability proportional to rank-``k_lev`` leverage scores."""
    a = as_matrix(a)
    r = _check_r(a, r, tol)
    scores = leverage_scores(a, k_lev, tol)
    return _weighted_draws(a, scores, r, _as_rng(seed), tol, "leverage_sampling")


def select(spec: SelectorSpec, a, r: int, tol: Tolerances = DEFAULT_TOLERANCES, rng=None) -> np.ndarray:
    """Run the selector described by ``spec``.

    ``rng`` overrides the spec's seed for sampling kinds; callers that run a
    selector several times in sequence pass one generator to keep the draws
    reproducible but distinct.
    """
    a = as_matrix(a)
    kind = spec.kind
    if kind is SelectorKind.DEIM:
        return deim_select(a, r, tol)
    if kind is SelectorKind.CPQR:
        return cpqr_select(a, r, tol)
    if kind is SelectorKind.LUPP:
        return lupp_select(a, r, tol)
    source = rng if rng is not None else spec.seed
    if kind is SelectorKind.NORM_SAMPLING:
        return norm_sampling_select(a, r, source, tol)
    rank = numerical_rank_from_values(singular_values(a), a.shape, tol)
    k_lev = spec.k_lev if spec.k_lev is not None else r + spec.oversampling
    return leverage_sampling_select(a, r, min(k_lev, rank), source, tol)
