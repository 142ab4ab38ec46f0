"""Two ways to recover accuracy after heavy pruning.

Iterative: prune part of the way, retrain, re-measure statistics, repeat.
Retraining pruned dims: put the removed units back with fresh weights and
train only those while the kept sub-network stays frozen.
"""

# %%
from miprune.data import make_splits
from miprune.nn import TrainConfig, accuracy, init_network, squeeze, train
from miprune.pruner import IterativePlan, iterative_prune, layerwise_prune, make_schedule, retrain_pruned
from miprune.stats import collect

_, splits = make_splits("planted-subspace(relevant_dims=4, total_dims=48, classes=8)", seed=0)
net = init_network([48, 64, 64, 64, 8], "relu", seed=0)
net = train(net, splits["train"], TrainConfig(steps=2000, lr=3e-3, seed=0)).net
print("dense", accuracy(net, splits["test"]))

# %% One shot versus two iterations at keep 0.25.
ft = TrainConfig(steps=400, lr=1e-3, seed=0)
for iters in (1, 2):
    res = iterative_prune(net, splits["train"], IterativePlan(0.25, iters, ft))
    print(f"{iters} iteration(s): widths {res.net.widths}  acc {accuracy(res.net, splits['test']):.3f}")
    for rec in res.history:
        print("   keep", round(rec.keep_ratio, 3), "counts", rec.counts)

# %% Remove 60% of hidden units, then grow them back.
masks = layerwise_prune(net, collect(net, splits["train"]), make_schedule("uniform", 0.4, net.depth))
print("pruned         ", accuracy(squeeze(net, masks), splits["test"]))
grown = retrain_pruned(net, masks, splits["train"], ft)
print("pruned dims retrained", accuracy(grown, splits["test"]))
