"""
Labels as an extra view
=======================

Class labels can be one-hot encoded and appended as one more view. The
latent space then has to explain them too, which pulls classes apart; a
1-nearest-neighbour classifier on the latents measures the effect.

The labels of the held-out fold were seen during training, so the "on" score
measures how well the latents encode class structure. It is not an honest
out-of-sample accuracy.
"""

import numpy as np

from ngmvlvm import MultiViewDataset, TrainConfig, append_label_view, knn_cv_accuracy, latent_mean, train

# blobs close enough to overlap a little in the raw features
rng = np.random.default_rng(3)
centres = rng.normal(scale=1.0, size=(3, 5))
labels = np.repeat([0, 1, 2], 40)
Y = centres[labels] + rng.normal(size=(120, 5))

for with_labels in (False, True):
    data = MultiViewDataset([Y], labels=labels)
    if with_labels:
        data = append_label_view(data)
    model, _ = train(data, TrainConfig(T=1000, seed=3))
    acc = knn_cv_accuracy(latent_mean(model), labels, k=1, folds=5, seed=0)
    print(f"label view {'on ' if with_labels else 'off'}: 1-NN accuracy {acc.mean:.3f} "
          f"(per fold {np.round(acc.values, 2).tolist()})")
