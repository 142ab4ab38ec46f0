"""Weight-level baselines and why their savings do not show up in wall-clock time.

Magnitude and movement pruning zero individual weights. The matrices keep
their shape, so a dense kernel does the same work as before.
"""

# %%
from miprune.baselines import apply_weight_masks, magnitude_prune, masked_eval, movement_prune
from miprune.bench import single_thread, time_interleaved
from miprune.data import make_splits
from miprune.nn import TrainConfig, accuracy, forward, init_network, train

_, splits = make_splits("planted-subspace(4,32)", seed=0)
net = init_network([32, 512, 512, 4], "relu", seed=0)
net = train(net, splits["train"], TrainConfig(steps=800, lr=3e-3, seed=0)).net
print(f"dense      acc {accuracy(net, splits['test']):.3f}")

# %% Three quarters of the weights removed, two ways.
masks = {
    "magnitude": magnitude_prune(net, 0.75),
    "movement": movement_prune(net, splits["train"], 0.75, steps=100, cfg=TrainConfig(lr=1e-3, seed=0)),
}
for name, wm in masks.items():
    res = masked_eval(net, wm, splits["test"], time_it=False)
    print(f"{name:10s} acc {res.accuracy:.3f}  sparsity {wm.achieved_sparsity:.2f}")

# %% Time dense and masked forwards round-robin so drift hits both alike.
x = splits["test"].inputs
masked = apply_weight_masks(net, masks["magnitude"])
with single_thread():
    t_dense, t_masked = time_interleaved([lambda: forward(net, x), lambda: forward(masked, x)])
print(f"dense {t_dense * 1e3:.2f} ms, masked {t_masked * 1e3:.2f} ms, ratio {t_masked / t_dense:.2f}")
