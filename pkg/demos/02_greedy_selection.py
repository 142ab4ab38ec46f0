"""Greedy subset selection against the exhaustive optimum.

The selector adds one lower-layer dimension at a time, keeping whichever
raises I(kept; upper) the most. On small problems we can compare with the
best subset found by enumerating all of them.
"""

# %%
import numpy as np

from miprune.mi import brute_force_best_subset
from miprune.selector import SelectorConfig, select, select_exact
from miprune.stats import CovarianceModel

rng = np.random.default_rng(1)


def random_pd(n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * rng.uniform(0.05, 3.0, n)) @ q.T


# %% Ten lower dims, three upper dims, keep four.
cov = CovarianceModel.from_matrix(random_pd(13), split=10)
upper = [10, 11, 12]
sel = select_exact(cov, upper, 4)
best_set, best = brute_force_best_subset(cov, upper, 4)
print("greedy picks ", sel.chosen, " trace", np.round(sel.trace, 4))
print("optimum      ", sorted(best_set), " value", round(best, 4))
print("ratio        ", round(sel.trace[-1] / best, 4))

# %% How close is greedy over many instances?
ratios = []
for _ in range(200):
    c = CovarianceModel.from_matrix(random_pd(11), split=8)
    got = select_exact(c, [8, 9, 10], 3).trace[-1]
    ratios.append(got / brute_force_best_subset(c, [8, 9, 10], 3)[1])
ratios = np.array(ratios)
print(f"mean ratio {ratios.mean():.3f}, worst {ratios.min():.3f}, below 0.95: {(ratios < 0.95).mean():.1%}")

# %% The cheaper relevance/redundancy variant, for comparison.
fast = select(cov, upper, 4, SelectorConfig(mode="mrmr", alpha=0.4, beta=0.0))
print("mrmr picks   ", fast.chosen)
