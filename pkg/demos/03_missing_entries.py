"""
Filling in missing entries
==========================

Hide a fifth of the entries, train on what is left (the likelihood only
looks at observed cells), then predict the hidden cells from the learned
latents. Column means are the baseline to beat.
"""

import numpy as np

from ngmvlvm import TrainConfig, impute, mse, synthetic_dataset, train
from ngmvlvm.data import apply_masks, make_missing_masks

full, _, _ = synthetic_dataset("A", N=150, seed=1)
masks = make_missing_masks(full.dims, full.N, 0.2, seed=1)
data = apply_masks(full, masks)
print("hidden entries per view:", [int(m.sum()) for m in masks])

model, trace = train(data, TrainConfig(T=1500, seed=1))
filled = impute(model, data)

for v, (Y, F, m) in enumerate(zip(full.views, filled, masks)):
    col_mean = np.where(m, 0.0, data.views[v]).sum(0) / (~m).sum(0)
    baseline = np.where(m, col_mean, data.views[v])
    print(f"view {v}: model MSE {mse(Y, F, m):.4f}   column-mean MSE {mse(Y, baseline, m):.4f}")
