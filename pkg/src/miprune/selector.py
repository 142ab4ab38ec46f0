"""Greedy per-layer dimension selection.

Two scoring rules, both picking one lower-layer dimension per step:

``exact_greedy``
    maximize the set objective ``I(upper; S + {d})``.
``mrmr``
    maximize ``I(upper; d) - alpha * I(d; S) + beta * I(d; S | upper)``, where
    ``S`` is the set chosen so far at the same (lower) layer. With ``beta = 0``
    this is the max-relevance min-redundancy rule.

Ties go to the lowest index.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mi import GreedyState, _GrowingCholesky
from .stats import CovarianceModel

MODES = ("exact_greedy", "mrmr")


@dataclass(frozen=True)
class SelectorConfig:
    """``alpha``/``beta`` only matter in ``mrmr`` mode."""

    mode: str = "exact_greedy"
    alpha: float = 0.4
    beta: float = 0.0
    tie_rule: str = "lowest-index"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown selector mode {self.mode!r}; expected one of {MODES}")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.tie_rule != "lowest-index":
            raise ValueError("only the lowest-index tie rule is supported")


@dataclass
class Selection:
    chosen: list[int]
    trace: list[float]
    mode: str
    alpha: float = 0.0
    beta: float = 0.0
    layer: int | None = None
    # Upper-side indices (in the upper layer's own coordinates) the selection was made against.
    upper: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "mode": self.mode,
            "alpha": self.alpha,
            "beta": self.beta,
            "chosen": list(self.chosen),
            "trace": list(self.trace),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "Selection":
        return cls(
            chosen=[int(i) for i in d["chosen"]],
            trace=[float(v) for v in d["trace"]],
            mode=d["mode"],
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
            layer=d.get("layer"),
        )


def _prepare(cov: CovarianceModel, upper_set, k, candidates):
    upper = np.unique(np.asarray(upper_set, dtype=np.int64))
    if upper.size == 0:
        raise ValueError("upper set is empty")
    pool = cov.lower if candidates is None else np.unique(np.asarray(candidates, dtype=np.int64))
    if np.intersect1d(pool, upper).size:
        raise ValueError("candidates overlap the upper set")
    if not 1 <= k <= pool.size:
        raise ValueError(f"k={k} must lie in [1, {pool.size}] (lower-layer width)")
    return upper, pool


def select_exact(cov: CovarianceModel, upper_set, k: int, candidates=None, layer=None) -> Selection:
    upper, pool = _prepare(cov, upper_set, k, candidates)
    state = GreedyState(cov, upper)
    remaining = pool.copy()
    trace = []
    for _ in range(k):
        gains = state.gains(remaining)
        j = int(np.argmax(gains))
        state.extend(int(remaining[j]))
        remaining = np.delete(remaining, j)
        trace.append(state.value)
    return Selection(list(state.selected), trace, "exact_greedy", layer=layer)


def select_mrmr(
    cov: CovarianceModel,
    upper_set,
    k: int,
    alpha: float = 0.4,
    beta: float = 0.0,
    candidates=None,
    layer=None,
) -> Selection:
    upper, pool = _prepare(cov, upper_set, k, candidates)
    full = cov.cov
    var = full[pool, pool]
    given_upper = _GrowingCholesky(full, upper).conditional_variances(pool)
    relevance = 0.5 * (np.log(var) - np.log(given_upper))
    given_s = _GrowingCholesky(full)
    given_us = _GrowingCholesky(full, upper)
    remaining = np.arange(pool.size)
    chosen, trace = [], []
    for step in range(k):
        cand = pool[remaining]
        score = relevance[remaining].copy()
        if step:
            if alpha:
                redundancy = 0.5 * (np.log(var[remaining]) - np.log(given_s.conditional_variances(cand)))
                score -= alpha * redundancy
            if beta:
                cond = 0.5 * (np.log(given_upper[remaining]) - np.log(given_us.conditional_variances(cand)))
                score += beta * cond
        j = int(np.argmax(score))
        d = int(cand[j])
        chosen.append(d)
        trace.append(float(score[j]))
        if alpha:
            given_s.append(d)
        if beta:
            given_us.append(d)
        remaining = np.delete(remaining, j)
    return Selection(chosen, trace, "mrmr", alpha, beta, layer=layer)


def select(cov: CovarianceModel, upper_set, k: int, cfg: SelectorConfig, candidates=None, layer=None) -> Selection:
    if cfg.mode == "exact_greedy":
        return select_exact(cov, upper_set, k, candidates, layer)
    return select_mrmr(cov, upper_set, k, cfg.alpha, cfg.beta, candidates, layer)


def config_dict(cfg: SelectorConfig) -> dict:
    return asdict(cfg)
