"""Gaussian mutual information from second moments.

Pass correlated pairs through an identity layer, accumulate the co-moments
in one streaming pass and read off the MI of the two coordinates.
"""

# %%
import numpy as np

from miprune.mi import conditional_mi, mutual_information
from miprune.nn import Batch, LayerSpec, Network
from miprune.stats import CovarianceModel, collect, finalize

identity = Network([LayerSpec(np.eye(2), np.zeros(2), "identity")])
rng = np.random.default_rng(0)

# %% Estimated vs closed form for a few correlations.
for rho in (0.0, 0.5, 0.8, 0.95):
    x = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=100_000)
    cov = finalize(collect(identity, Batch(x, np.zeros(len(x), int)))[0])
    est = mutual_information(cov, [0], [1])
    print(f"rho={rho:4.2f}  estimated {est:.4f}  closed form {-0.5 * np.log(1 - rho**2):.4f}")

# %% Conditioning on the middle of a chain X -> Y -> Z leaves nothing behind.
a, b = 0.9, 0.7
chain = np.array([
    [1.0, a, a * b],
    [a, 1.0, b],
    [a * b, b, 1.0],
])
cov = CovarianceModel.from_matrix(chain)
print("I(X;Z)   =", round(mutual_information(cov, [0], [2]), 4))
print("I(X;Z|Y) =", round(conditional_mi(cov, [0], [2], [1]), 10))
