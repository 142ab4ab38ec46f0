"""Closed-form Gaussian entropy and (conditional) mutual information, in nats.

Index sets address the joint space of a :class:`CovarianceModel`. For
jointly Gaussian variables

    I(A; B)     = 1/2 [logdet S_A + logdet S_B - logdet S_AB]
    I(A; B | Z) = 1/2 [logdet S_AZ + logdet S_BZ - logdet S_Z - logdet S_ABZ]

The conditional form feeds the conditional-redundancy term of the mRMR-style
selector.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import linalg

from .errors import InstanceTooLarge
from .stats import CovarianceModel, logdet_principal

LOG_2PIE = math.log(2.0 * math.pi * math.e)

BRUTE_FORCE_MAX_WIDTH = 16
BRUTE_FORCE_MAX_SUBSETS = 100_000


def _as_set(idx, name, allow_empty=False):
    arr = np.unique(np.asarray(idx, dtype=np.int64).reshape(-1))
    if arr.size != np.asarray(idx).size:
        raise ValueError(f"{name} contains duplicate indices")
    if arr.size == 0 and not allow_empty:
        raise ValueError(f"{name} is empty")
    return arr


def _disjoint(*sets):
    merged = np.concatenate(sets)
    if np.unique(merged).size != merged.size:
        raise ValueError("index sets overlap")
    return np.sort(merged)


def _logdet(cov, idx):
    return 0.0 if idx.size == 0 else logdet_principal(cov, idx)


def entropy(cov: CovarianceModel, index_set) -> float:
    idx = _as_set(index_set, "index set")
    return 0.5 * (idx.size * LOG_2PIE + logdet_principal(cov, idx))


def mutual_information(cov: CovarianceModel, set_a, set_b) -> float:
    """Raw value; may dip a hair below zero from rounding. Use :func:`clamp` for reports."""
    a = _as_set(set_a, "set_a")
    b = _as_set(set_b, "set_b")
    ab = _disjoint(a, b)
    return 0.5 * (_logdet(cov, a) + _logdet(cov, b) - _logdet(cov, ab))


def conditional_mi(cov: CovarianceModel, set_a, set_b, set_z=()) -> float:
    a = _as_set(set_a, "set_a")
    b = _as_set(set_b, "set_b")
    z = _as_set(set_z, "set_z", allow_empty=True)
    if z.size == 0:
        return mutual_information(cov, a, b)
    abz = _disjoint(a, b, z)
    return 0.5 * (
        _logdet(cov, np.sort(np.concatenate([a, z])))
        + _logdet(cov, np.sort(np.concatenate([b, z])))
        - _logdet(cov, z)
        - _logdet(cov, abz)
    )


def clamp(value: float, tol: float = 1e-9) -> float:
    """Reporting-boundary clamp: tiny negatives become 0."""
    if -tol <= value < 0:
        return 0.0
    return value


class _GrowingCholesky:
    """Lower Cholesky factor of ``cov[order][:, order]`` extended one index at a time."""

    def __init__(self, full_cov, order=()):
        self.full = full_cov
        self.order = []
        self.L = np.zeros((0, 0))
        self.logdet = 0.0
        for i in order:
            self.append(int(i))

    def conditional_variances(self, candidates) -> np.ndarray:
        """Schur complements ``var(d | order)`` for every candidate ``d``."""
        candidates = np.asarray(candidates, dtype=np.int64)
        diag = self.full[candidates, candidates]
        if not self.order:
            return diag.copy()
        cross = self.full[np.ix_(self.order, candidates)]
        v = linalg.solve_triangular(self.L, cross, lower=True, check_finite=False)
        return diag - np.einsum("ij,ij->j", v, v)

    def append(self, d: int) -> None:
        k = len(self.order)
        if k:
            c = self.full[self.order, d]
            row = linalg.solve_triangular(self.L, c, lower=True, check_finite=False)
        else:
            row = np.zeros(0)
        s = self.full[d, d] - row @ row
        if not s > 0:
            raise RuntimeError(f"covariance lost positive definiteness adding index {d}")
        L = np.zeros((k + 1, k + 1))
        L[:k, :k] = self.L
        L[k, :k] = row
        L[k, k] = math.sqrt(s)
        self.L = L
        self.order.append(d)
        self.logdet += math.log(s)


class GreedyState:
    """Incremental ``I(A; S)`` for a fixed upper set ``A`` and a growing set ``S``.

    Keeps Cholesky factors of ``Sigma[S]`` and ``Sigma[A + S]``; each extension
    adds one row to both. The gain from adding ``d`` is

        1/2 [log var(d | S) - log var(d | A, S)]
    """

    def __init__(self, cov: CovarianceModel, upper_set):
        self.cov = cov
        self.upper = _as_set(upper_set, "upper set")
        self.selected: list[int] = []
        self._s = _GrowingCholesky(cov.cov)
        self._as = _GrowingCholesky(cov.cov, self.upper)
        self.logdet_upper = self._as.logdet
        self.value = 0.0

    @property
    def logdet_selected(self) -> float:
        return self._s.logdet

    @property
    def logdet_joint(self) -> float:
        return self._as.logdet

    def conditional_variances(self, candidates):
        """``(var(d|S), var(d|A,S))`` arrays for each candidate."""
        return self._s.conditional_variances(candidates), self._as.conditional_variances(candidates)

    def gains(self, candidates) -> np.ndarray:
        given_s, given_as = self.conditional_variances(candidates)
        return 0.5 * (np.log(given_s) - np.log(given_as))

    def extend(self, candidate: int) -> float:
        """Add ``candidate`` to ``S``; returns the change in ``I(A; S)``."""
        d = int(candidate)
        if d in self.selected:
            raise ValueError(f"index {d} already selected")
        if d in set(self.upper.tolist()):
            raise ValueError(f"index {d} belongs to the upper set")
        if not 0 <= d < self.cov.dim:
            raise IndexError(f"index {d} outside the covariance")
        before = self.value
        self._s.append(d)
        self._as.append(d)
        self.selected.append(d)
        self.value = 0.5 * (self.logdet_upper + self._s.logdet - self._as.logdet)
        return self.value - before

    def from_scratch(self) -> float:
        if not self.selected:
            return 0.0
        return mutual_information(self.cov, self.upper, self.selected)


def extend(state: GreedyState, candidate: int):
    """Functional spelling of :meth:`GreedyState.extend`; returns ``(gain, state)``."""
    return state.extend(candidate), state


def brute_force_best_subset(cov: CovarianceModel, set_a, k: int, candidates=None):
    """Exact ``argmax_{|S|=k} I(A; S)`` by enumeration.

    Returns ``(subset, value)``. Candidates default to the lower block; ties
    resolve to the lexicographically smallest subset.
    """
    a = _as_set(set_a, "set_a")
    pool = cov.lower if candidates is None else _as_set(candidates, "candidates")
    if np.intersect1d(pool, a).size:
        raise ValueError("candidates overlap the upper set")
    if not 1 <= k <= pool.size:
        raise ValueError(f"k={k} outside [1, {pool.size}]")
    n_subsets = math.comb(pool.size, k)
    if pool.size > BRUTE_FORCE_MAX_WIDTH or n_subsets > BRUTE_FORCE_MAX_SUBSETS:
        raise InstanceTooLarge(
            f"C({pool.size}, {k}) = {n_subsets} subsets over width {pool.size}; "
            f"limits are width <= {BRUTE_FORCE_MAX_WIDTH} and <= {BRUTE_FORCE_MAX_SUBSETS} subsets"
        )
    ld_a = _logdet(cov, a)
    best, best_val = None, -math.inf
    for combo in itertools.combinations(pool.tolist(), k):
        s = np.array(combo)
        val = 0.5 * (ld_a + _logdet(cov, s) - _logdet(cov, np.sort(np.concatenate([a, s]))))
        if val > best_val:
            best, best_val = list(combo), val
    return best, best_val
