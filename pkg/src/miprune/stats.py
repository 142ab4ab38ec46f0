"""Streaming joint mean/covariance of activations for consecutive layer pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NonFiniteActivation
from .nn import Batch, MaskSet, Network, forward

DEFAULT_RIDGE = 1e-6
DEFAULT_SAMPLE_CAP = 100_000


class LayerPairStats:
    """Merge-able co-moment accumulator over ``[lower dims | upper dims]``.

    ``layer`` is the index of the lower representation; the upper one is
    ``layer + 1``.
    """

    def __init__(self, layer: int, dim_lower: int, dim_upper: int):
        self.layer = int(layer)
        self.dim_lower = int(dim_lower)
        self.dim_upper = int(dim_upper)
        dim = self.dim
        self.n = 0
        self.mean = np.zeros(dim)
        self.comoment = np.zeros((dim, dim))

    @property
    def dim(self) -> int:
        return self.dim_lower + self.dim_upper

    @classmethod
    def from_moments(cls, layer, dim_lower, dim_upper, n, mean, cov) -> "LayerPairStats":
        s = cls(layer, dim_lower, dim_upper)
        s.n = int(n)
        s.mean = np.array(mean, dtype=np.float64)
        s.comoment = np.array(cov, dtype=np.float64) * n
        return s

    def _merge_moments(self, n_b, mean_b, com_b):
        n_a = self.n
        n = n_a + n_b
        if n_b == 0:
            return
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / n)
        com = self.comoment + com_b + np.outer(delta, delta) * (n_a * n_b / n)
        self.comoment = 0.5 * (com + com.T)
        self.n = n

    def update(self, rows) -> "LayerPairStats":
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.dim:
            raise ValueError(f"rows have {rows.shape[1]} columns, accumulator expects {self.dim}")
        if rows.shape[0] == 0:
            return self
        mean_b = rows.mean(axis=0)
        centered = rows - mean_b
        self._merge_moments(rows.shape[0], mean_b, centered.T @ centered)
        return self

    def merge(self, other: "LayerPairStats") -> "LayerPairStats":
        if (other.dim_lower, other.dim_upper) != (self.dim_lower, self.dim_upper):
            raise ValueError("cannot merge accumulators of different shapes")
        self._merge_moments(other.n, other.mean, other.comoment)
        return self

    def covariance(self) -> np.ndarray:
        """Population (1/n) covariance without regularization."""
        if self.n == 0:
            return np.zeros_like(self.comoment)
        return self.comoment / self.n


@dataclass
class CovarianceModel:
    """Regularized joint Gaussian over lower-then-upper representation dims."""

    mean: np.ndarray
    cov: np.ndarray
    split: int
    ridge: float = 0.0
    layer: int | None = None

    def __post_init__(self):
        self.cov = np.asarray(self.cov, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        if self.cov.ndim != 2 or self.cov.shape[0] != self.cov.shape[1]:
            raise ValueError("covariance must be square")
        if not 0 <= self.split <= self.dim:
            raise ValueError("split point outside the covariance")
        self._chol = linalg.cholesky(self.cov, lower=True)

    @classmethod
    def from_matrix(cls, cov, split=None, mean=None) -> "CovarianceModel":
        cov = np.asarray(cov, dtype=np.float64)
        dim = cov.shape[0]
        return cls(
            np.zeros(dim) if mean is None else mean,
            cov,
            dim if split is None else split,
        )

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return np.arange(self.split)

    @property
    def upper(self) -> np.ndarray:
        return np.arange(self.split, self.dim)

    def full_logdet(self) -> float:
        return float(2.0 * np.log(np.diag(self._chol)).sum())


def finalize(stats: LayerPairStats, ridge_scale: float = DEFAULT_RIDGE) -> CovarianceModel:
    """Population covariance plus ``ridge_scale * mean variance`` on the diagonal.

    When every variance is zero the ridge falls back to ``ridge_scale`` itself.
    """
    if stats.n < 2:
        raise ValueError(f"need at least 2 samples to finalize, have {stats.n}")
    raw = stats.covariance()
    lam = ridge_scale * np.trace(raw) / stats.dim
    if lam <= 0:
        lam = ridge_scale
    cov = raw + lam * np.eye(stats.dim)
    return CovarianceModel(stats.mean.copy(), cov, stats.dim_lower, lam, stats.layer)


def _check_index_set(idx, dim):
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ValueError("index set is empty")
    if idx.min() < 0 or idx.max() >= dim:
        raise IndexError(f"index set out of bounds for dimension {dim}")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("index set must be sorted and free of duplicates")
    return idx


def logdet_principal(cov: CovarianceModel, index_set) -> float:
    """Log-determinant of ``cov[index_set][:, index_set]`` via Cholesky."""
    idx = _check_index_set(index_set, cov.dim)
    sub = cov.cov[np.ix_(idx, idx)]
    try:
        chol = linalg.cholesky(sub, lower=True)
    except linalg.LinAlgError as exc:
        raise RuntimeError("principal submatrix of a PD covariance is not PD") from exc
    return float(2.0 * np.log(np.diag(chol)).sum())


def sample_rows(n: int, sample_cap: int, seed: int) -> np.ndarray:
    if n <= sample_cap:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=sample_cap, replace=False))


def collect(
    net: Network,
    data: Batch,
    masks: MaskSet | None = None,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
    seed: int = 0,
    batch_size: int = 4096,
) -> list[LayerPairStats]:
    """One pass over (a capped subsample of) ``data`` for every layer pair.

    Entry ``l`` pairs representation ``l`` with representation ``l + 1``;
    the final pair ends at the logits.
    """
    if len(data) < 1:
        raise ValueError("dataset is empty")
    widths = net.widths
    stats = [LayerPairStats(l, widths[l], widths[l + 1]) for l in range(len(net.layers))]
    rows = sample_rows(len(data), sample_cap, seed)
    inputs = data.inputs
    for start in range(0, len(rows), batch_size):
        chunk = rows[start:start + batch_size]
        acts = forward(net, inputs[chunk], masks).activations
        for l, a in enumerate(acts):
            bad = ~np.isfinite(a).all(axis=1)
            if bad.any():
                raise NonFiniteActivation(l, int(chunk[np.argmax(bad)]))
        for l, s in enumerate(stats):
            s.update(np.hstack([acts[l], acts[l + 1]]))
    return stats
