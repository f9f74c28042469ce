"""Seeded synthetic test matrices."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import ParameterError

KINDS = ("lowrank_noise", "clustered", "spectrum")


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _positive(name, value):
    if int(value) != value or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def lowrank_noise(m: int, n: int, true_rank: int, noise_sigma: float = 0.0, seed: int = 0) -> np.ndarray:
    """Gaussian rank-``true_rank`` product plus i.i.d. Gaussian noise."""
    m, n, true_rank = _positive("m", m), _positive("n", n), _positive("true_rank", true_rank)
    if true_rank > min(m, n):
        raise ParameterError(f"true_rank={true_rank} exceeds min(m, n)={min(m, n)}")
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, true_rank)) @ rng.standard_normal((true_rank, n))
    if noise_sigma > 0:
        a = a + noise_sigma * rng.standard_normal((m, n))
    return a


def clustered(
    clusters: int,
    dim: int,
    angle: float = 90.0,
    per_cluster: int = 10,
    m: int | None = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Columns drawn from ``clusters`` subspaces of dimension ``dim``.

    Every pair of cluster subspaces has all principal angles equal to
    ``angle`` degrees (90 gives mutually orthogonal subspaces). Column order
    is shuffled.
    """
    clusters, dim, per_cluster = (
        _positive("clusters", clusters), _positive("dim", dim), _positive("per_cluster", per_cluster)
    )
    if not 0.0 < angle <= 90.0:
        raise ParameterError("angle must be in (0, 90] degrees")
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be nonnegative")
    shared = angle < 90.0
    needed = dim * (clusters + int(shared))
    m = needed if m is None else _positive("m", m)
    if m < needed:
        raise ParameterError(f"m={m} too small: need at least {needed} rows")
    rng = np.random.default_rng(seed)
    basis = _orthonormal(rng, m, needed)
    # cos(t)^2 = cos(angle) makes every cross-cluster principal angle equal to angle
    c = math.sqrt(math.cos(math.radians(angle))) if shared else 0.0
    s = math.sqrt(1.0 - c * c)
    common = basis[:, :dim] if shared else 0.0
    offset = dim if shared else 0
    blocks = []
    for j in range(clusters):
        own = basis[:, offset + j * dim : offset + (j + 1) * dim]
        sub = c * common + s * own
        blocks.append(sub @ rng.standard_normal((dim, per_cluster)))
    a = np.hstack(blocks)
    if noise_sigma > 0:
        a = a + noise_sigma * rng.standard_normal(a.shape)
    return a[:, rng.permutation(a.shape[1])]


def spectrum(sigma, m: int | None = None, n: int | None = None, seed: int = 0) -> np.ndarray:
    """Random-orthogonal ``U diag(sigma) V^T`` with prescribed singular values."""
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    if sigma.size == 0 or np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
        raise ParameterError("sigma must be a nonempty list of finite nonnegative values")
    p = sigma.size
    m = p if m is None else _positive("m", m)
    n = p if n is None else _positive("n", n)
    if p > min(m, n):
        raise ParameterError(f"{p} singular values do not fit a {m}x{n} matrix")
    rng = np.random.default_rng(seed)
    u = _orthonormal(rng, m, p)
    v = _orthonormal(rng, n, p)
    return (u * sigma) @ v.T


def generate(kind: str, params: dict, seed: int = 0) -> np.ndarray:
    """Dispatch to a generator by name; ``params`` are its keyword arguments."""
    if kind not in KINDS:
        raise ParameterError(f"unknown generator {kind!r}; choose from {KINDS}")
    fn = {"lowrank_noise": lowrank_noise, "clustered": clustered, "spectrum": spectrum}[kind]
    try:
        return fn(**params, seed=seed)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from None


def parse_generator(text: str) -> tuple:
    """Parse ``"clustered:clusters=3,dim=2,angle=90"`` into ``(kind, params)``.

    ``sigma`` for the spectrum kind is given as ``sigma=3/2/1``.
    """
    kind, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, (t.strip() for t in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"bad generator parameter {item!r}")
        key = key.strip()
        try:
            if key == "sigma":
                params[key] = [float(x) for x in value.split("/")]
            elif key in ("angle", "noise_sigma", "noise"):
                params["noise_sigma" if key == "noise" else key] = float(value)
            else:
                params[key] = int(value)
        except ValueError:
            raise ParameterError(f"bad value in generator parameter {item!r}") from None
    return kind.strip(), params
