"""Top-down layer-wise pruning, sparsity schedules, retraining and iteration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingStatsError, PruneAborted, ScheduleError, ShapeError, TrainingDiverged
from .nn import (
    Batch,
    FreezeSpec,
    MaskSet,
    Network,
    TrainConfig,
    glorot_uniform,
    squeeze,
    train,
)
from .selector import Selection, SelectorConfig, select
from .stats import DEFAULT_RIDGE, DEFAULT_SAMPLE_CAP, CovarianceModel, LayerPairStats, collect, finalize

SHAPES = ("uniform", "pyramid", "inverted_pyramid", "custom")
DEFAULT_SPREAD = 0.1


def keep_count(ratio: float, width: int) -> int:
    """``round(ratio * width)`` with halves rounded up, never below 1."""
    return max(1, min(width, int(math.floor(ratio * width + 0.5))))


@dataclass(frozen=True)
class SparsitySchedule:
    """Per-representation keep ratios, bottom (input) first."""

    shape: str
    overall_keep: float
    keep_ratios: tuple[float, ...]

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ScheduleError(f"unknown schedule shape {self.shape!r}")
        if not self.keep_ratios:
            raise ScheduleError("schedule needs at least one layer")
        for r in self.keep_ratios:
            if not 0.0 < r <= 1.0:
                raise ScheduleError(f"keep ratio {r} outside (0, 1]")

    @classmethod
    def custom(cls, ratios) -> "SparsitySchedule":
        ratios = tuple(float(r) for r in ratios)
        return cls("custom", float(np.mean(ratios)), ratios)

    @property
    def depth(self) -> int:
        return len(self.keep_ratios)

    def counts(self, widths) -> list[int]:
        """Keep counts for the prunable widths (logit width excluded)."""
        widths = list(widths)
        if len(widths) != self.depth:
            raise ScheduleError(f"schedule covers {self.depth} layers, network has {len(widths)}")
        return [keep_count(r, w) for r, w in zip(self.keep_ratios, widths)]

    def to_dict(self) -> dict:
        return {"shape": self.shape, "overall_keep": self.overall_keep, "keep_ratios": list(self.keep_ratios)}


def make_schedule(shape: str, overall_keep: float, depth: int, spread: float = DEFAULT_SPREAD) -> SparsitySchedule:
    """Arithmetic per-layer keep ratios with mean ``overall_keep``.

    ``spread`` is the offset of the bottom layer from the mean: ``pyramid``
    keeps ``overall + spread`` at the bottom (denser low layers),
    ``inverted_pyramid`` keeps ``overall - spread`` there. The top layer gets
    the mirrored offset.
    """
    shape = {"inverted": "inverted_pyramid"}.get(shape, shape)
    if shape not in SHAPES[:3]:
        raise ScheduleError(f"unknown schedule shape {shape!r}; expected uniform, pyramid or inverted_pyramid")
    if not 0.0 < overall_keep <= 1.0:
        raise ScheduleError(f"overall keep {overall_keep} outside (0, 1]")
    if depth < 1:
        raise ScheduleError("depth must be at least 1")
    if shape == "uniform" or depth == 1:
        return SparsitySchedule(shape, overall_keep, (float(overall_keep),) * depth)
    sign = 1.0 if shape == "pyramid" else -1.0
    bottom = overall_keep + sign * spread
    top = overall_keep - sign * spread
    if min(bottom, top) <= 0.0 or max(bottom, top) > 1.0:
        feasible = min(1.0 - overall_keep, overall_keep * 0.99)
        raise ScheduleError(
            f"{shape} with keep {overall_keep} and spread {spread} leaves (0, 1] "
            f"(bottom {bottom:.4g}, top {top:.4g}); nearest feasible spread is {feasible:.6g}",
            suggested_spread=feasible,
        )
    ratios = tuple(float(bottom + (top - bottom) * i / (depth - 1)) for i in range(depth))
    return SparsitySchedule(shape, overall_keep, ratios)


def resolve_counts(net: Network, schedule: SparsitySchedule) -> list[int]:
    """Keep counts per prunable representation; residual pairs inherit from above."""
    counts = schedule.counts(net.widths[:-1])
    for l in range(len(net.layers) - 1, -1, -1):
        if net.layers[l].residual:
            upper = counts[l + 1] if l + 1 < len(counts) else net.widths[l + 1]
            counts[l] = upper
    return counts


def _as_covariance(item, ridge_scale):
    if isinstance(item, CovarianceModel):
        return item
    if isinstance(item, LayerPairStats):
        return finalize(item, ridge_scale)
    raise TypeError(f"unsupported statistics object {type(item).__name__}")


def layerwise_prune(
    net: Network,
    stats,
    schedule: SparsitySchedule,
    selector_cfg: SelectorConfig | None = None,
    ridge_scale: float = DEFAULT_RIDGE,
    on_select=None,
) -> MaskSet:
    """Select preserved dims from the logits down to the input.

    ``stats[l]`` describes representations ``(l, l + 1)`` (a
    :class:`LayerPairStats` or a finalized :class:`CovarianceModel`). The
    returned MaskSet carries the per-layer :class:`Selection` records in
    ``selections`` (bottom-up, ``None`` for layers tied by a residual link).
    ``on_select(layer, selection)`` fires as each selection is made.
    """
    selector_cfg = selector_cfg or SelectorConfig()
    widths = net.widths
    n = len(net.layers)
    stats = list(stats) if stats is not None else []
    counts = resolve_counts(net, schedule)
    preserved: list = [None] * (n + 1)
    preserved[n] = np.arange(widths[n])
    selections: list = [None] * n
    for l in range(n - 1, -1, -1):
        k = counts[l]
        if net.layers[l].residual:
            preserved[l] = preserved[l + 1]
            continue
        if k >= widths[l]:
            preserved[l] = np.arange(widths[l])
            continue
        if l >= len(stats) or stats[l] is None:
            raise MissingStatsError(l)
        cov = _as_covariance(stats[l], ridge_scale)
        if cov.split != widths[l] or cov.dim != widths[l] + widths[l + 1]:
            raise ShapeError(f"statistics for pair {l} do not match widths {widths[l]}, {widths[l + 1]}")
        upper = cov.split + preserved[l + 1]
        sel = select(cov, upper, k, selector_cfg, layer=l)
        sel.upper = preserved[l + 1].tolist()
        selections[l] = sel
        preserved[l] = np.sort(np.asarray(sel.chosen, dtype=np.int64))
        if on_select is not None:
            on_select(l, sel)
    masks = MaskSet.from_indices(widths, preserved)
    masks.selections = selections
    return masks


def random_prune(net: Network, schedule: SparsitySchedule, seed: int = 0) -> MaskSet:
    """Uniformly random preserved dims with the same per-layer counts."""
    rng = np.random.default_rng(seed)
    widths = net.widths
    n = len(net.layers)
    counts = resolve_counts(net, schedule)
    preserved: list = [None] * (n + 1)
    preserved[n] = np.arange(widths[n])
    for l in range(n - 1, -1, -1):
        if net.layers[l].residual:
            preserved[l] = preserved[l + 1]
        else:
            preserved[l] = np.sort(rng.choice(widths[l], size=counts[l], replace=False))
    return MaskSet.from_indices(widths, preserved)


def retrain_freeze(net: Network, masks: MaskSet) -> FreezeSpec:
    """Freeze parameters whose every touching dimension is preserved."""
    weight, bias = [], []
    for l in range(len(net.layers)):
        rows, cols = masks.masks[l + 1], masks.masks[l]
        weight.append(np.outer(rows, cols))
        bias.append(rows.copy())
    return FreezeSpec(weight, bias)


def reinitialize_pruned(net: Network, masks: MaskSet, seed: int = 0) -> Network:
    """Fresh init for every weight row/column and bias touching a pruned dim."""
    rng = np.random.default_rng(seed)
    net = net.copy()
    for l, layer in enumerate(net.layers):
        fresh = glorot_uniform(rng, layer.out_dim, layer.in_dim)
        touched = ~np.outer(masks.masks[l + 1], masks.masks[l])
        layer.weight[touched] = fresh[touched]
        layer.bias[~masks.masks[l + 1]] = 0.0
    return net


def retrain_pruned(
    net: Network,
    masks: MaskSet,
    data: Batch,
    train_cfg: TrainConfig | None = None,
    seed: int = 0,
) -> Network:
    """Reinitialize the pruned dims of the original network and train only them."""
    masks.validate(net)
    if masks.is_all_ones():
        raise ValueError("masks prune nothing; there are no dimensions to retrain")
    fresh = reinitialize_pruned(net, masks, seed)
    return train(fresh, data, train_cfg or TrainConfig(), freeze=retrain_freeze(net, masks)).net


@dataclass
class IterativePlan:
    target_keep: float
    iterations: int = 1
    train_cfg: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.target_keep <= 1.0:
            raise ValueError("target keep must lie in (0, 1]")

    @property
    def keep_ratios(self) -> list[float]:
        """Linear interpolation from 1.0 down to the target, one value per iteration."""
        t = self.target_keep
        return [1.0 + (t - 1.0) * (i + 1) / self.iterations for i in range(self.iterations)]


def interpolate_schedule(target: SparsitySchedule, fraction: float) -> SparsitySchedule:
    """Move every layer's keep ratio ``fraction`` of the way from 1.0 to its target."""
    ratios = tuple(1.0 + (r - 1.0) * fraction for r in target.keep_ratios)
    overall = 1.0 + (target.overall_keep - 1.0) * fraction
    return SparsitySchedule(target.shape, overall, ratios)


@dataclass
class IterationRecord:
    keep_ratio: float
    schedule: SparsitySchedule
    counts: list[int]
    # Preserved indices in the coordinates of the network pruned at this iteration.
    local: list[list[int]]
    # Same dims expressed in the original network's coordinates.
    original: list[list[int]]
    selections: list
    final_loss: float | None = None

    def to_dict(self) -> dict:
        return {
            "keep_ratio": self.keep_ratio,
            "schedule": self.schedule.to_dict(),
            "counts": self.counts,
            "local": self.local,
            "original": self.original,
            "selections": [None if s is None else s.to_dict() for s in self.selections],
            "final_loss": self.final_loss,
        }


@dataclass
class IterativeResult:
    net: Network
    masks: MaskSet
    history: list[IterationRecord]


def _mask_prune(method, net, stats_fn, schedule, selector_cfg, ridge_scale, seed):
    if method == "random":
        return random_prune(net, schedule, seed)
    return layerwise_prune(net, stats_fn(net), schedule, selector_cfg, ridge_scale)


def iterative_prune(
    net: Network,
    data: Batch,
    plan: IterativePlan,
    schedule: SparsitySchedule | str = "uniform",
    selector_cfg: SelectorConfig | None = None,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
    ridge_scale: float = DEFAULT_RIDGE,
    spread: float = DEFAULT_SPREAD,
    method: str = "mi",
    seed: int = 0,
) -> IterativeResult:
    """Collect -> prune -> squeeze -> retrain, ``plan.iterations`` times.

    Statistics are re-collected on the retrained squeezed model before each
    pruning step. Keep counts always refer to the original widths.
    """
    if isinstance(schedule, str):
        schedule = make_schedule(schedule, plan.target_keep, net.depth, spread)
    if schedule.depth != net.depth:
        raise ScheduleError("schedule depth does not match the network")
    original_widths = net.widths
    orig_index = [np.arange(w) for w in original_widths]
    history: list[IterationRecord] = []
    current = net

    def stats_fn(model):
        return collect(model, data, sample_cap=sample_cap, seed=seed)

    for i, keep in enumerate(plan.keep_ratios):
        step_schedule = interpolate_schedule(schedule, (i + 1) / plan.iterations)
        counts = resolve_counts(net, step_schedule)
        local_schedule = SparsitySchedule.custom(
            [c / w for c, w in zip(counts, current.widths[:-1])]
        )
        masks = _mask_prune(method, current, stats_fn, local_schedule, selector_cfg, ridge_scale, seed + i)
        local = masks.preserved
        orig_index = [orig_index[l][local[l]] for l in range(len(local))]
        pruned = squeeze(current, masks)
        record = IterationRecord(
            keep, step_schedule, masks.counts[:-1],
            [u.tolist() for u in local], [u.tolist() for u in orig_index],
            list(masks.selections or [None] * net.depth),
        )
        if masks.is_all_ones():
            # Nothing removed, so nothing to retrain.
            history.append(record)
            current = pruned
            continue
        try:
            cfg = plan.train_cfg
            result = train(pruned, data, TrainConfig(**{**cfg.__dict__, "seed": cfg.seed + i}))
        except TrainingDiverged as exc:
            history.append(record)
            raise PruneAborted(f"retraining diverged in iteration {i}: {exc}", history) from exc
        record.final_loss = result.final_loss
        history.append(record)
        current = result.net
    final_masks = MaskSet.from_indices(original_widths, orig_index)
    return IterativeResult(current, final_masks, history)


def manifest(history, schedule: SparsitySchedule | None = None, extra=None) -> dict:
    out = {
        "schedule": None if schedule is None else schedule.to_dict(),
        "iterations": [r.to_dict() for r in history],
    }
    if history:
        out["final_counts"] = [len(u) for u in history[-1].original]
    if extra:
        out.update(extra)
    return out


def single_shot_manifest(masks: MaskSet, schedule: SparsitySchedule, extra=None) -> dict:
    sels = masks.selections or [None] * (len(masks.masks) - 1)
    out = {
        "schedule": schedule.to_dict(),
        "counts": masks.counts[:-1],
        "preserved": [u.tolist() for u in masks.preserved],
        "selections": [None if s is None else s.to_dict() for s in sels],
    }
    if extra:
        out.update(extra)
    return out


def write_manifest(path, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))


def selection_from_manifest(entry) -> Selection | None:
    return None if entry is None else Selection.from_dict(entry)
