"""Small dense network engine: masked forward, backprop, training, squeezing.

Representations are numbered bottom-up. Representation 0 is the input,
representation ``l + 1`` is the output of layer ``l`` and the last one is the
logit vector. A :class:`MaskSet` holds one mask per representation; masks act
on a representation before it enters the next layer, and the logit mask is
always all ones.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingDiverged

ACTIVATIONS = ("identity", "relu", "tanh")


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class LayerSpec:
    """``y = act(W x + b)`` plus ``x`` when ``residual`` is set."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    residual: bool = False

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"weight {self.weight.shape} and bias {self.bias.shape} are incompatible"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.residual and self.in_dim != self.out_dim:
            raise ShapeError(f"residual layer needs in_dim == out_dim, got {self.in_dim} -> {self.out_dim}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Network:
    layers: list[LayerSpec]
    seed: int | None = None
    # Original input columns this network reads, set by squeeze().
    input_index: np.ndarray | None = None

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        for l in range(1, len(self.layers)):
            prev, cur = self.layers[l - 1], self.layers[l]
            if prev.out_dim != cur.in_dim:
                raise ShapeError(
                    f"layer {l - 1} outputs {prev.out_dim} dims but layer {l} expects {cur.in_dim}"
                )
        if self.layers[-1].residual:
            raise ShapeError("the output layer cannot be residual")
        if self.input_index is not None:
            self.input_index = np.asarray(self.input_index, dtype=np.int64)
            if self.input_index.shape != (self.input_dim,):
                raise ShapeError("input_index length must equal input_dim")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    @property
    def depth(self) -> int:
        """Number of prunable representations (input plus hidden)."""
        return len(self.layers)

    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def n_weights(self) -> int:
        return sum(layer.weight.size for layer in self.layers)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the live arrays."""
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out


def init_network(
    widths,
    activation="relu",
    output_activation="identity",
    residual=None,
    seed=0,
) -> Network:
    """Build a network with uniform fan-in/fan-out init and zero biases.

    ``residual`` is an optional per-layer flag sequence.
    """
    rng = np.random.default_rng(seed)
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ShapeError("need at least input and output widths")
    n_layers = len(widths) - 1
    residual = list(residual) if residual is not None else [False] * n_layers
    if len(residual) != n_layers:
        raise ShapeError("residual flags must match the number of layers")
    layers = []
    for l in range(n_layers):
        act = output_activation if l == n_layers - 1 else activation
        layers.append(
            LayerSpec(
                glorot_uniform(rng, widths[l + 1], widths[l]),
                np.zeros(widths[l + 1]),
                act,
                bool(residual[l]),
            )
        )
    return Network(layers, seed=seed)


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.shape[0] < 1:
            raise ShapeError("a batch needs at least one row")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise ShapeError("inputs and labels disagree on the number of rows")
        if self.labels.size and self.labels.min() < 0:
            raise ShapeError("labels must be non-negative class indices")

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, rows) -> "Batch":
        return Batch(self.inputs[rows], self.labels[rows])


@dataclass(eq=False)
class MaskSet:
    """Binary masks per representation, including the (all-ones) logit mask."""

    masks: list[np.ndarray]
    # Selection records from the pruning pass that produced these masks, if any.
    selections: list | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.masks = [np.asarray(m, dtype=bool).reshape(-1) for m in self.masks]

    @classmethod
    def all_ones(cls, net: Network) -> "MaskSet":
        return cls([np.ones(w, dtype=bool) for w in net.widths])

    @classmethod
    def from_indices(cls, widths, preserved) -> "MaskSet":
        masks = []
        for w, idx in zip(widths, preserved):
            m = np.zeros(w, dtype=bool)
            m[np.asarray(idx, dtype=np.int64)] = True
            masks.append(m)
        return cls(masks)

    @property
    def preserved(self) -> list[np.ndarray]:
        return [np.flatnonzero(m) for m in self.masks]

    @property
    def counts(self) -> list[int]:
        return [int(m.sum()) for m in self.masks]

    def is_all_ones(self) -> bool:
        return all(m.all() for m in self.masks)

    def validate(self, net: Network, allow_empty=True):
        widths = net.widths
        if len(self.masks) != len(widths):
            raise ShapeError(f"expected {len(widths)} masks, got {len(self.masks)}")
        for l, (m, w) in enumerate(zip(self.masks, widths)):
            if m.shape != (w,):
                raise ShapeError(f"mask {l} has length {m.shape[0]}, representation width is {w}")
            if not allow_empty and not m.any():
                raise ShapeError(f"mask {l} preserves no dimensions")
        if not self.masks[-1].all():
            raise ShapeError("the logit mask must be all ones")
        for l, layer in enumerate(net.layers):
            if layer.residual and not np.array_equal(self.masks[l], self.masks[l + 1]):
                raise ShapeError(f"residual layer {l} needs identical masks on both sides")


@dataclass
class ForwardPass:
    # Representation entering each layer, after masking.
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    outputs: list[np.ndarray]
    logits: np.ndarray

    @property
    def activations(self) -> list[np.ndarray]:
        """All representations bottom-up; the last entry is the logits."""
        return self.inputs + [self.logits]


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if (
        x.ndim == 2
        and net.input_index is not None
        and x.shape[1] != net.input_dim
        and x.shape[1] > net.input_index.max()
    ):
        # Squeezed network fed the original feature width.
        x = x[:, net.input_index]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"input has shape {x.shape}, network expects (n, {net.input_dim})")
    return x


def forward(net: Network, x, masks: MaskSet | None = None) -> ForwardPass:
    """Run the network, zeroing masked representation entries before each layer.

    A squeezed network (one with ``input_index``) also accepts rows of the
    original input width and picks its columns itself.
    """
    if isinstance(x, Batch):
        x = x.inputs
    h = _check_input(net, x)
    if masks is not None:
        masks.validate(net)
    inputs, pre, outputs = [], [], []
    for l, layer in enumerate(net.layers):
        if masks is not None:
            h = np.where(masks.masks[l], h, 0.0)
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        a = _activate(layer.activation, z)
        out = a + h if layer.residual else a
        pre.append(z)
        outputs.append(a)
        h = out
    return ForwardPass(inputs, pre, outputs, h)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels) -> float:
    lp = log_softmax(logits)
    return float(-lp[np.arange(len(labels)), labels].mean())


def loss_and_grads(net: Network, batch: Batch, masks: MaskSet | None = None):
    """Mean cross-entropy and its gradients as ``[(dW, db), ...]`` per layer."""
    fp = forward(net, batch.inputs, masks)
    labels = batch.labels
    if labels.max() >= net.output_dim:
        raise ShapeError(f"label {labels.max()} out of range for {net.output_dim} outputs")
    n = len(labels)
    lp = log_softmax(fp.logits)
    loss = float(-lp[np.arange(n), labels].mean())
    g = np.exp(lp)
    g[np.arange(n), labels] -= 1.0
    g /= n
    grads = [None] * len(net.layers)
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        dz = g * _activation_grad(layer.activation, fp.pre[l], fp.outputs[l])
        grads[l] = (dz.T @ fp.inputs[l], dz.sum(axis=0))
        gh = dz @ layer.weight
        if layer.residual:
            gh = gh + g
        if masks is not None:
            gh = np.where(masks.masks[l], gh, 0.0)
        g = gh
    return loss, grads


def predict_logits(net: Network, x, masks: MaskSet | None = None) -> np.ndarray:
    """Logits for ``x``; wide inputs are narrowed through ``net.input_index``."""
    return forward(net, x, masks).logits


def accuracy(net: Network, data: Batch, masks: MaskSet | None = None) -> float:
    pred = predict_logits(net, data.inputs, masks).argmax(axis=1)
    return float((pred == data.labels).mean())


@dataclass
class FreezeSpec:
    """Per-layer boolean arrays; ``True`` marks a frozen parameter entry."""

    weight: list[np.ndarray]
    bias: list[np.ndarray]

    @classmethod
    def none(cls, net: Network) -> "FreezeSpec":
        return cls(
            [np.zeros(l.weight.shape, bool) for l in net.layers],
            [np.zeros(l.bias.shape, bool) for l in net.layers],
        )

    @classmethod
    def all(cls, net: Network) -> "FreezeSpec":
        return cls(
            [np.ones(l.weight.shape, bool) for l in net.layers],
            [np.ones(l.bias.shape, bool) for l in net.layers],
        )

    def flat(self):
        out = []
        for w, b in zip(self.weight, self.bias):
            out.extend([w, b])
        return out


@dataclass
class TrainConfig:
    steps: int = 500
    lr: float = 1e-2
    optimizer: str = "adam"
    batch_size: int = 64
    momentum: float = 0.9
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        self.betas = tuple(self.betas)


@dataclass
class TrainResult:
    net: Network
    losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def iterate_minibatches(n, batch_size, steps, seed):
    """Yield ``steps`` index arrays, reshuffling after each full pass."""
    rng = np.random.default_rng(seed)
    batch_size = min(batch_size, n)
    order = rng.permutation(n)
    pos = 0
    for _ in range(steps):
        if pos + batch_size > n:
            order = rng.permutation(n)
            pos = 0
        yield order[pos:pos + batch_size]
        pos += batch_size


class _Optimizer:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def updates(self, params, grads):
        cfg = self.cfg
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            if cfg.weight_decay:
                g = g + cfg.weight_decay * p
            if cfg.optimizer == "sgd":
                self.m[i] = cfg.momentum * self.m[i] + g
                out.append(cfg.lr * self.m[i])
            else:
                b1, b2 = cfg.betas
                self.m[i] = b1 * self.m[i] + (1 - b1) * g
                self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
                mhat = self.m[i] / (1 - b1 ** self.t)
                vhat = self.v[i] / (1 - b2 ** self.t)
                out.append(cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps))
        return out


def train(
    net: Network,
    data: Batch,
    cfg: TrainConfig | None = None,
    freeze: FreezeSpec | None = None,
    masks: MaskSet | None = None,
    callback=None,
) -> TrainResult:
    """Minibatch cross-entropy training on a copy of ``net``.

    Frozen entries are never written. ``callback(step, net, grads)`` runs
    after the gradient is computed and before the update is applied.
    """
    cfg = cfg or TrainConfig()
    if len(data) < 1:
        raise ValueError("training data is empty")
    net = net.copy()
    params = net.parameters()
    trainable = None
    if freeze is not None:
        trainable = [~f for f in freeze.flat()]
        for p, t in zip(params, trainable):
            if t.shape != p.shape:
                raise ShapeError("freeze spec does not match parameter shapes")
    opt = _Optimizer(params, cfg)
    losses = []
    for step, rows in enumerate(iterate_minibatches(len(data), cfg.batch_size, cfg.steps, cfg.seed)):
        loss, grads = loss_and_grads(net, data.subset(rows), masks)
        if not np.isfinite(loss):
            raise TrainingDiverged(step, loss)
        losses.append(loss)
        flat_grads = [g for pair in grads for g in pair]
        if callback is not None:
            callback(step, net, grads)
        for i, (p, u) in enumerate(zip(params, opt.updates(params, flat_grads))):
            if trainable is None:
                p -= u
            else:
                np.subtract(p, u, out=p, where=trainable[i])
        for p in params:
            if not np.all(np.isfinite(p)):
                raise TrainingDiverged(step, float("nan"))
    return TrainResult(net, losses)


def squeeze(net: Network, masks: MaskSet) -> Network:
    """Drop masked rows/columns so the network computes on preserved dims only."""
    masks.validate(net, allow_empty=False)
    keep = masks.preserved
    layers = []
    for l, layer in enumerate(net.layers):
        rows, cols = keep[l + 1], keep[l]
        layers.append(
            LayerSpec(
                layer.weight[np.ix_(rows, cols)].copy(),
                layer.bias[rows].copy(),
                layer.activation,
                layer.residual,
            )
        )
    base = net.input_index if net.input_index is not None else np.arange(net.input_dim)
    return Network(layers, seed=net.seed, input_index=base[keep[0]])


def matmul_flops(net: Network) -> int:
    return sum(2 * layer.in_dim * layer.out_dim for layer in net.layers)


def count_flops(net: Network) -> int:
    """Per-sample FLOPs: 2 per multiply-add, 1 per bias, activation and residual element."""
    total = 0
    for layer in net.layers:
        total += 2 * layer.in_dim * layer.out_dim + 2 * layer.out_dim
        if layer.residual:
            total += layer.out_dim
    return total
