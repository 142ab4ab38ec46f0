"""Dense, squeezed and masked-dense matrix products side by side.

A squeezed K x K product does roughly (K/D)^2 of the dense work. A masked
D x D product with the same nonzeros costs as much as dense.
"""

# %%
from miprune.bench import bench_kernels, methodology

print(methodology())
for t in bench_kernels(sizes=(256, 512, 1024), keep_ratios=(1.0, 0.5, 0.25)):
    print(f"D={t.dim:5d} keep={t.keep:4.2f}  squeezed/dense {t.squeezed_ratio:5.2f}  masked/dense {t.masked_ratio:5.2f}")
