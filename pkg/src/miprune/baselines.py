"""Weight-level baselines: magnitude and movement pruning, masked-dense eval."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bench import DEFAULT_TRIALS, DEFAULT_WARMUPS, single_thread, time_callable
from .errors import ShapeError
from .nn import Batch, Network, TrainConfig, forward, train


@dataclass(eq=False)
class WeightMaskSet:
    """One boolean mask per weight matrix (``True`` keeps the weight)."""

    masks: list[np.ndarray]
    requested_sparsity: float | None = None
    scores: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def n_total(self) -> int:
        return sum(m.size for m in self.masks)

    @property
    def n_kept(self) -> int:
        return int(sum(m.sum() for m in self.masks))

    @property
    def achieved_sparsity(self) -> float:
        return 1.0 - self.n_kept / self.n_total

    def validate(self, net: Network):
        if len(self.masks) != len(net.layers):
            raise ShapeError("one weight mask per layer expected")
        for l, (m, layer) in enumerate(zip(self.masks, net.layers)):
            if m.shape != layer.weight.shape:
                raise ShapeError(f"weight mask {l} has shape {m.shape}, weight is {layer.weight.shape}")


@dataclass
class MovementScores:
    scores: list[np.ndarray]
    steps: int


def _prune_lowest(scores, sparsity, scope):
    """Mask out the lowest-scoring entries; ties resolve in flat index order."""
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must lie in [0, 1)")
    if scope == "layer":
        return [_prune_lowest([s], sparsity, "global")[0] for s in scores]
    if scope != "global":
        raise ValueError(f"unknown threshold scope {scope!r}")
    flat = np.concatenate([s.ravel() for s in scores])
    n_prune = int(np.floor(sparsity * flat.size + 0.5))
    keep = np.ones(flat.size, dtype=bool)
    keep[np.argsort(flat, kind="stable")[:n_prune]] = False
    out, pos = [], 0
    for s in scores:
        out.append(keep[pos:pos + s.size].reshape(s.shape))
        pos += s.size
    return out


def magnitude_prune(net: Network, sparsity: float, scope: str = "global") -> WeightMaskSet:
    """Zero the smallest ``|w|`` across all weight matrices (biases untouched)."""
    scores = [np.abs(layer.weight) for layer in net.layers]
    return WeightMaskSet(_prune_lowest(scores, sparsity, scope), sparsity)


def accumulate_movement(net: Network, data: Batch, steps: int, cfg: TrainConfig | None = None):
    """Train for ``steps`` while summing ``-(dL/dW) * W`` per weight.

    Returns ``(MovementScores, trained network)``.
    """
    if steps < 1:
        raise ValueError("movement pruning needs at least one step")
    cfg = cfg or TrainConfig()
    scores = [np.zeros_like(layer.weight) for layer in net.layers]

    def record(step, model, grads):
        for s, (dw, _), layer in zip(scores, grads, model.layers):
            s -= dw * layer.weight

    result = train(net, data, TrainConfig(**{**cfg.__dict__, "steps": steps}), callback=record)
    return MovementScores(scores, steps), result.net


def movement_prune(
    net: Network,
    data: Batch,
    sparsity: float,
    steps: int,
    cfg: TrainConfig | None = None,
    scope: str = "global",
) -> WeightMaskSet:
    """Keep the top ``1 - sparsity`` weights by accumulated movement score."""
    mov, _ = accumulate_movement(net, data, steps, cfg)
    return WeightMaskSet(_prune_lowest(mov.scores, sparsity, scope), sparsity, mov.scores)


def apply_weight_masks(net: Network, weight_masks: WeightMaskSet) -> Network:
    weight_masks.validate(net)
    out = net.copy()
    for layer, m in zip(out.layers, weight_masks.masks):
        layer.weight = np.where(m, layer.weight, 0.0)
    return out


@dataclass
class EvalResult:
    accuracy: float
    median_seconds: float | None
    logits: np.ndarray = field(repr=False)


def masked_eval(
    net: Network,
    weight_masks: WeightMaskSet,
    data: Batch,
    trials: int = DEFAULT_TRIALS,
    warmups: int = DEFAULT_WARMUPS,
    time_it: bool = True,
) -> EvalResult:
    """Evaluate with masked weights zeroed inside the full dense matrices."""
    masked = apply_weight_masks(net, weight_masks)
    x = data.inputs
    if masked.input_index is not None and x.shape[1] != masked.input_dim:
        x = np.ascontiguousarray(x[:, masked.input_index])
    logits = forward(masked, x).logits
    acc = float((logits.argmax(axis=1) == data.labels).mean())
    seconds = None
    if time_it:
        with single_thread():
            seconds = time_callable(lambda: forward(masked, x), trials, warmups)
    return EvalResult(acc, seconds, logits)
