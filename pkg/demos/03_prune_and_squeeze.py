"""Prune a trained MLP layer by layer, then squeeze it into a smaller one.

The task hides the label in 4 of 32 input coordinates. Keeping 4 inputs
should recover exactly those.
"""

# %%
import numpy as np

from miprune.data import make_splits
from miprune.nn import TrainConfig, accuracy, count_flops, forward, init_network, squeeze, train
from miprune.pruner import SparsitySchedule, layerwise_prune
from miprune.stats import collect

task, splits = make_splits("planted-subspace(4,32)", seed=0, n_train=2000, n_dev=500, n_test=1000)
net = init_network([32, 64, 64, 4], "relu", seed=0)
net = train(net, splits["train"], TrainConfig(steps=1500, lr=3e-3, seed=0)).net
print("dense test accuracy", accuracy(net, splits["test"]))

# %% One pass of statistics, then top-down selection.
stats = collect(net, splits["train"])
masks = layerwise_prune(net, stats, SparsitySchedule.custom([4 / 32, 0.5, 0.5]))
print("planted inputs ", sorted(task.planted.tolist()))
print("kept inputs    ", masks.preserved[0].tolist())
print("kept per layer ", masks.counts)

# %% Squeezing drops the masked rows and columns. Outputs do not change.
small = squeeze(net, masks)
x = splits["test"].inputs
diff = np.abs(forward(net, x, masks).logits - forward(small, x).logits).max()
print("max |masked - squeezed| =", diff)
print("FLOPs per example:", count_flops(net), "->", count_flops(small))
print("pruned test accuracy (no retraining)", accuracy(small, splits["test"]))
